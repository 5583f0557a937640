"""Pauli-string algebra for spin-1/2 observables.

Strings are stored in a symplectic encoding: a term with coefficient ``c``
and letters ``ops`` factors as ``c * i**n_Y * prod_i X_i**x_i Z_i**z_i``,
held as two bit masks plus the premultiplied scalar.  Products, commutation
checks, basis-state action and rotation-gate conjugation then reduce to
XOR/AND plus parity counts, which also vectorize over arrays of
configurations.

Conventions, fixed across the package:

* A spin configuration is an integer; site 0 is the most significant bit,
  so dense Kronecker products indexed ``[row, col]`` agree with
  configuration integers.
* ``|0>`` is the Z=+1 eigenstate; a set bit marks a flipped spin.
* In a :class:`BasisTransform` the first-listed gate acts first on states
  (as matrices ``U = G_L @ ... @ G_1``), hence conjugation ``U^dag H U``
  processes the last-listed gate first.
* A sum is Hermitian exactly when every exposed coefficient is real.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_PRUNE_TOL = 1e-12
DENSE_SITE_LIMIT = 12

_PAULI_MATS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "Y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
}

# i**(-k) for k = n_Y mod 4, converting the internal XZ-product coefficient
# back to the standard-convention coefficient (Y = i * X @ Z).
_INV_PHASE = (1.0 + 0.0j, -1.0j, -1.0 + 0.0j, 1.0j)
_PHASE = (1.0 + 0.0j, 1.0j, -1.0 + 0.0j, -1.0j)


def pack_bits(bits) -> int:
    """Pack an iterable of 0/1 site values into a configuration integer."""
    x = 0
    for b in bits:
        x = (x << 1) | (int(b) & 1)
    return x


def unpack_bits(x: int, n_sites: int) -> np.ndarray:
    """Inverse of :func:`pack_bits`; returns an int8 array of length ``n_sites``."""
    return np.array([(x >> (n_sites - 1 - i)) & 1 for i in range(n_sites)], dtype=np.int8)


def pack_rows(bits: np.ndarray) -> np.ndarray:
    """Pack a (batch, n_sites) 0/1 array into configuration integers."""
    n = bits.shape[-1]
    weights = (1 << np.arange(n - 1, -1, -1)).astype(np.int64)
    return bits.astype(np.int64) @ weights


def unpack_rows(configs: np.ndarray, n_sites: int) -> np.ndarray:
    """Unpack configuration integers into a (batch, n_sites) int8 array."""
    shifts = np.arange(n_sites - 1, -1, -1)
    return ((np.asarray(configs, dtype=np.int64)[:, None] >> shifts) & 1).astype(np.int8)


def _parity_signs(values: np.ndarray) -> np.ndarray:
    """(-1)**popcount for an int64 array."""
    return 1.0 - 2.0 * (np.bitwise_count(values) & 1)


class PauliString:
    """A single weighted Pauli string over ``n_sites`` spins."""

    __slots__ = ("n_sites", "x_mask", "z_mask", "w_coeff")

    def __init__(self, n_sites: int, x_mask: int, z_mask: int, w_coeff: complex):
        self.n_sites = int(n_sites)
        self.x_mask = int(x_mask)
        self.z_mask = int(z_mask)
        self.w_coeff = complex(w_coeff)

    @classmethod
    def from_ops(cls, coeff: complex, ops: str) -> "PauliString":
        """Build from a letter string over ``IXYZ`` (site 0 first)."""
        n = len(ops)
        x_mask = z_mask = 0
        n_y = 0
        for i, letter in enumerate(ops):
            bit = 1 << (n - 1 - i)
            if letter == "X":
                x_mask |= bit
            elif letter == "Z":
                z_mask |= bit
            elif letter == "Y":
                x_mask |= bit
                z_mask |= bit
                n_y += 1
            elif letter != "I":
                raise ValueError(f"unknown Pauli letter {letter!r}")
        return cls(n, x_mask, z_mask, complex(coeff) * _PHASE[n_y % 4])

    @property
    def n_y(self) -> int:
        return (self.x_mask & self.z_mask).bit_count()

    @property
    def coeff(self) -> complex:
        """Coefficient in the standard convention (Y = [[0, -i], [i, 0]])."""
        return self.w_coeff * _INV_PHASE[self.n_y % 4]

    @property
    def ops(self) -> str:
        letters = []
        for i in range(self.n_sites):
            bit = 1 << (self.n_sites - 1 - i)
            x, z = bool(self.x_mask & bit), bool(self.z_mask & bit)
            letters.append("Y" if (x and z) else "X" if x else "Z" if z else "I")
        return "".join(letters)

    @property
    def key(self) -> tuple[int, int]:
        return (self.x_mask, self.z_mask)

    def apply(self, x: int) -> tuple[int, complex]:
        """Return ``(y, amp)`` with ``P|x> = amp |y>``."""
        if not 0 <= x < (1 << self.n_sites):
            raise ValueError(f"configuration {x} out of range for {self.n_sites} sites")
        sign = -1.0 if (self.z_mask & x).bit_count() & 1 else 1.0
        return x ^ self.x_mask, self.w_coeff * sign

    def apply_batch(self, configs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized :meth:`apply` over an int64 configuration array."""
        ys = configs ^ self.x_mask
        amps = self.w_coeff * _parity_signs(configs & self.z_mask)
        return ys, amps

    def commutes_with(self, other: "PauliString") -> bool:
        s = (self.z_mask & other.x_mask).bit_count() + (self.x_mask & other.z_mask).bit_count()
        return s % 2 == 0

    def dense(self) -> np.ndarray:
        if self.n_sites > DENSE_SITE_LIMIT:
            raise ValueError(f"dense materialization limited to {DENSE_SITE_LIMIT} sites")
        m = np.array([[1.0 + 0.0j]])
        for letter in self.ops:
            m = np.kron(m, _PAULI_MATS[letter])
        return self.coeff * m

    def __repr__(self) -> str:
        return f"PauliString({self.coeff:+.6g} * {self.ops})"


def string_apply(p: PauliString, x: int) -> tuple[int, complex]:
    """Apply a Pauli string to a basis configuration: ``P|x> = amp |y>``."""
    return p.apply(x)


class PauliSum:
    """Immutable weighted sum of Pauli strings on a common site register."""

    __slots__ = ("n_sites", "terms", "_act")

    def __init__(self, n_sites: int, terms=()):
        self.n_sites = int(n_sites)
        terms = tuple(terms)
        for t in terms:
            if t.n_sites != self.n_sites:
                raise ValueError("term length does not match sum register")
        self.terms = terms
        self._act = None

    @classmethod
    def from_ops(cls, n_sites: int, entries) -> "PauliSum":
        """Build from ``(coeff, letters)`` pairs, e.g. ``(1.0, "ZZI")``."""
        return cls(n_sites, [PauliString.from_ops(c, ops) for c, ops in entries])

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def merged(self, tol: float = DEFAULT_PRUNE_TOL) -> "PauliSum":
        return merge_and_prune(self, tol)

    def dense(self) -> np.ndarray:
        return dense_matrix(self)

    def _action(self):
        """Cached per-term (permutation, phase) arrays for statevector work."""
        if self._act is None:
            dim = 1 << self.n_sites
            idx = np.arange(dim, dtype=np.int64)
            act = []
            for t in self.terms:
                perm = idx ^ t.x_mask
                phases = t.w_coeff * _parity_signs(idx & t.z_mask)
                act.append((perm, phases))
            self._act = act
        return self._act

    def apply_to(self, psi: np.ndarray) -> np.ndarray:
        """Matrix-free ``H @ psi`` for a statevector (last axis is the register)."""
        out = np.zeros_like(psi, dtype=complex)
        for perm, phases in self._action():
            out += phases[..., perm] * psi[..., perm]
        return out

    def expectations(self, states: np.ndarray) -> np.ndarray:
        """``<s|H|s>`` for a batch of statevectors of shape (..., 2**n)."""
        out = np.zeros(states.shape[:-1], dtype=complex)
        conj = states.conj()
        for perm, phases in self._action():
            out += np.sum(conj * (phases[perm] * states[..., perm]), axis=-1)
        return out

    def __repr__(self) -> str:
        inner = ", ".join(repr(t) for t in self.terms[:4])
        if len(self.terms) > 4:
            inner += f", ... ({len(self.terms)} terms)"
        return f"PauliSum({self.n_sites} sites: {inner})"


def merge_and_prune(obs: PauliSum, tol: float = DEFAULT_PRUNE_TOL) -> PauliSum:
    """Combine identical strings and drop terms with |coeff| below ``tol``."""
    if tol < 0:
        raise ValueError("prune tolerance must be non-negative")
    acc: dict[tuple[int, int], complex] = {}
    for t in obs.terms:
        acc[t.key] = acc.get(t.key, 0.0) + t.w_coeff
    kept = [
        PauliString(obs.n_sites, x, z, w)
        for (x, z), w in acc.items()
        if abs(w) >= tol and w != 0.0
    ]
    return PauliSum(obs.n_sites, kept)


def dense_matrix(obs: PauliSum) -> np.ndarray:
    """Kronecker-product materialization (site 0 most significant)."""
    if obs.n_sites > DENSE_SITE_LIMIT:
        raise ValueError(f"dense materialization limited to {DENSE_SITE_LIMIT} sites")
    dim = 1 << obs.n_sites
    m = np.zeros((dim, dim), dtype=complex)
    for t in obs.terms:
        m += t.dense()
    return m


# --- rotation gates and basis transforms ---------------------------------

_GATE_SITES = {"RY": 1, "RX": 1, "RZZ": 2}
_GATE_LETTER = {"RY": "Y", "RX": "X", "RZZ": "Z"}


def ry_matrix(angle: float) -> np.ndarray:
    c, s = math.cos(angle / 2.0), math.sin(angle / 2.0)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rx_matrix(angle: float) -> np.ndarray:
    c, s = math.cos(angle / 2.0), math.sin(angle / 2.0)
    return np.array([[c, -1.0j * s], [-1.0j * s, c]], dtype=complex)


def rzz_matrix(angle: float) -> np.ndarray:
    p = np.exp(-0.5j * angle)
    return np.diag([p, p.conjugate(), p.conjugate(), p]).astype(complex)


@dataclass(frozen=True)
class RotationGate:
    """One of RY/RX/RZZ with its sites and angle (radians)."""

    kind: str
    sites: tuple[int, ...]
    angle: float

    def __post_init__(self):
        if self.kind not in _GATE_SITES:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))
        if len(self.sites) != _GATE_SITES[self.kind]:
            raise ValueError(f"{self.kind} takes {_GATE_SITES[self.kind]} site(s)")
        if len(set(self.sites)) != len(self.sites):
            raise ValueError("gate sites must be distinct")
        if any(s < 0 for s in self.sites):
            raise ValueError("gate sites must be non-negative")

    def with_angle(self, angle: float) -> "RotationGate":
        return RotationGate(self.kind, self.sites, float(angle))

    def generator(self, n_sites: int) -> PauliString:
        """The Hermitian P with gate = exp(-i * angle * P / 2)."""
        if any(s >= n_sites for s in self.sites):
            raise ValueError(f"gate sites {self.sites} exceed register of {n_sites}")
        ops = ["I"] * n_sites
        for s in self.sites:
            ops[s] = _GATE_LETTER[self.kind]
        return PauliString.from_ops(1.0, "".join(ops))

    def dense(self, n_sites: int) -> np.ndarray:
        p = self.generator(n_sites)
        dim = 1 << n_sites
        c, s = math.cos(self.angle / 2.0), math.sin(self.angle / 2.0)
        return c * np.eye(dim, dtype=complex) - 1.0j * s * p.dense()


@dataclass(frozen=True)
class BasisTransform:
    """Ordered rotation-gate list; the first gate acts first on states."""

    n_sites: int
    gates: tuple[RotationGate, ...]

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        for g in self.gates:
            if any(s >= self.n_sites for s in g.sites):
                raise ValueError(f"gate sites {g.sites} exceed register of {self.n_sites}")

    @property
    def n_angles(self) -> int:
        return len(self.gates)

    def angles(self) -> np.ndarray:
        return np.array([g.angle for g in self.gates], dtype=float)

    def with_angles(self, angles) -> "BasisTransform":
        angles = np.asarray(angles, dtype=float)
        if angles.shape != (len(self.gates),):
            raise ValueError("angle vector length does not match gate count")
        return BasisTransform(
            self.n_sites, tuple(g.with_angle(a) for g, a in zip(self.gates, angles))
        )

    def inverse(self) -> "BasisTransform":
        return BasisTransform(
            self.n_sites, tuple(g.with_angle(-g.angle) for g in reversed(self.gates))
        )

    def dense(self) -> np.ndarray:
        if self.n_sites > DENSE_SITE_LIMIT:
            raise ValueError(f"dense materialization limited to {DENSE_SITE_LIMIT} sites")
        u = np.eye(1 << self.n_sites, dtype=complex)
        for g in self.gates:
            u = g.dense(self.n_sites) @ u
        return u


def _conjugate_terms(terms, gen: PauliString, cos_a: float, sin_a: float, derivative: bool):
    """Heisenberg rule for one gate: commuting strings pass through, an
    anticommuting Q maps to cos(a) Q + sin(a) (i P Q).  With ``derivative``
    the trigonometric factors are differentiated and commuting strings drop.
    """
    out = []
    for t in terms:
        anti = (
            (gen.z_mask & t.x_mask).bit_count() + (gen.x_mask & t.z_mask).bit_count()
        ) & 1
        if not anti:
            if not derivative:
                out.append(t)
            continue
        sign = -1.0 if (gen.z_mask & t.x_mask).bit_count() & 1 else 1.0
        w_prod = 1.0j * gen.w_coeff * t.w_coeff * sign
        nx, nz = gen.x_mask ^ t.x_mask, gen.z_mask ^ t.z_mask
        ca, cb = (cos_a, sin_a) if not derivative else (-sin_a, cos_a)
        if ca != 0.0:
            out.append(PauliString(t.n_sites, t.x_mask, t.z_mask, ca * t.w_coeff))
        if cb != 0.0:
            out.append(PauliString(t.n_sites, nx, nz, cb * w_prod))
    return out


def conjugate_gate(obs: PauliSum, gate: RotationGate, tol: float = DEFAULT_PRUNE_TOL) -> PauliSum:
    """Return ``g^dag . obs . g`` expanded in Pauli strings."""
    gen = gate.generator(obs.n_sites)
    cos_a, sin_a = math.cos(gate.angle), math.sin(gate.angle)
    terms = _conjugate_terms(obs.terms, gen, cos_a, sin_a, derivative=False)
    return merge_and_prune(PauliSum(obs.n_sites, terms), tol)


def conjugate_transform(
    obs: PauliSum, transform: BasisTransform, tol: float = DEFAULT_PRUNE_TOL
) -> PauliSum:
    """Return ``U^dag . obs . U`` for the full transform, merged and pruned."""
    if transform.n_sites != obs.n_sites:
        raise ValueError("transform register does not match observable")
    terms = list(obs.terms)
    for gate in reversed(transform.gates):
        gen = gate.generator(obs.n_sites)
        terms = _conjugate_terms(terms, gen, math.cos(gate.angle), math.sin(gate.angle), False)
        if len(terms) > 4 * len(obs.terms):
            terms = list(merge_and_prune(PauliSum(obs.n_sites, terms), tol).terms)
    return merge_and_prune(PauliSum(obs.n_sites, terms), tol)


def d_conjugate_transform(
    obs: PauliSum, transform: BasisTransform, index: int, tol: float = DEFAULT_PRUNE_TOL
) -> PauliSum:
    """Analytic derivative of :func:`conjugate_transform` w.r.t. angle ``index``."""
    if transform.n_sites != obs.n_sites:
        raise ValueError("transform register does not match observable")
    if not 0 <= index < len(transform.gates):
        raise IndexError(f"angle index {index} outside transform of {len(transform.gates)}")
    terms = list(obs.terms)
    for gate_pos in range(len(transform.gates) - 1, -1, -1):
        gate = transform.gates[gate_pos]
        gen = gate.generator(obs.n_sites)
        terms = _conjugate_terms(
            terms, gen, math.cos(gate.angle), math.sin(gate.angle), derivative=(gate_pos == index)
        )
        if len(terms) > 4 * len(obs.terms):
            terms = list(merge_and_prune(PauliSum(obs.n_sites, terms), tol).terms)
    return merge_and_prune(PauliSum(obs.n_sites, terms), tol)
