"""Quantum Ising testbeds and exact reference solutions.

Hamiltonians have the form ``H = -sum_<ij> J_ij Z_i Z_j - h sum_i X_i`` on a
periodic chain, an open square lattice, or a periodic square lattice with
Gaussian random couplings (spin glass).  References come from exact
diagonalization (up to 16 sites) and, for the periodic ferromagnetic chain,
from the free-fermion mode sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .paulis import PauliString, PauliSum

EXACT_DIAG_LIMIT = 16
_DENSE_DIAG_LIMIT = 8

LATTICE_KINDS = ("chain_periodic", "square_open", "square_periodic")


@dataclass(frozen=True)
class LatticeSpec:
    """Lattice geometry, transverse field, and coupling source.

    ``couplings`` overrides per-bond J values explicitly (bond-list order);
    otherwise ``seed`` draws i.i.d. standard normals (spin-glass instances)
    and ``None`` means uniform ferromagnetic J = 1.
    """

    kind: str
    dims: tuple[int, ...]
    h: float
    couplings: tuple[float, ...] | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in LATTICE_KINDS:
            raise ValueError(f"unknown lattice kind {self.kind!r}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if self.h < 0:
            raise ValueError("transverse field must be non-negative")
        if self.couplings is not None:
            object.__setattr__(self, "couplings", tuple(float(j) for j in self.couplings))

    @property
    def n_sites(self) -> int:
        n = 1
        for d in self.dims:
            n *= d
        return n


def lattice_bonds(kind: str, dims: tuple[int, ...]) -> list[tuple[int, int]]:
    """Nearest-neighbor bond list for the supported lattices.

    Counts: periodic chain of N sites has N bonds (the N = 2 wrap bond is
    deduplicated to a single bond); an open Lx x Ly square has
    2 Lx Ly - Lx - Ly; a periodic square has 2 Lx Ly and requires
    Lx, Ly >= 3 so the wrap never duplicates a bond.
    """
    if kind == "chain_periodic":
        (n,) = dims
        if n < 2:
            raise ValueError("periodic chain needs at least 2 sites")
        if n == 2:
            return [(0, 1)]
        return [(i, (i + 1) % n) for i in range(n)]
    if len(dims) != 2:
        raise ValueError("square lattices take dims = (Lx, Ly)")
    lx, ly = dims
    if kind == "square_open":
        if lx * ly < 2:
            raise ValueError("open square needs at least 2 sites")
        bonds = []
        for i in range(lx):
            for j in range(ly):
                s = i * ly + j
                if j + 1 < ly:
                    bonds.append((s, s + 1))
                if i + 1 < lx:
                    bonds.append((s, s + ly))
        return bonds
    # square_periodic
    if lx < 3 or ly < 3:
        raise ValueError("periodic square needs Lx, Ly >= 3 (wrap would duplicate bonds)")
    bonds = []
    for i in range(lx):
        for j in range(ly):
            s = i * ly + j
            bonds.append((s, i * ly + (j + 1) % ly))
            bonds.append((s, ((i + 1) % lx) * ly + j))
    return bonds


def bond_couplings(spec: LatticeSpec) -> np.ndarray:
    """Per-bond couplings in bond-list order.

    Random instances use a Philox counter-based stream keyed by ``seed``,
    one standard-normal draw per bond, so an instance is a pure function of
    (kind, dims, seed).
    """
    bonds = lattice_bonds(spec.kind, spec.dims)
    if spec.couplings is not None:
        if len(spec.couplings) != len(bonds):
            raise ValueError(
                f"expected {len(bonds)} couplings for {spec.kind} {spec.dims}, "
                f"got {len(spec.couplings)}"
            )
        return np.asarray(spec.couplings, dtype=float)
    if spec.seed is not None:
        rng = np.random.Generator(np.random.Philox(key=spec.seed))
        return rng.standard_normal(len(bonds))
    return np.ones(len(bonds))


def build_hamiltonian(spec: LatticeSpec) -> PauliSum:
    """``H = -sum J_ij Z_i Z_j - h sum X_i`` over the spec's bond list."""
    n = spec.n_sites
    bonds = lattice_bonds(spec.kind, spec.dims)
    js = bond_couplings(spec)
    terms = []
    for (i, j), coupling in zip(bonds, js):
        x_mask = 0
        z_mask = (1 << (n - 1 - i)) | (1 << (n - 1 - j))
        terms.append(PauliString(n, x_mask, z_mask, -float(coupling)))
    if spec.h != 0.0:
        for i in range(n):
            terms.append(PauliString(n, 1 << (n - 1 - i), 0, -float(spec.h)))
    return PauliSum(n, terms).merged()


@dataclass
class ExactSolution:
    """Ground-state energy with (optionally) the full amplitude vector."""

    energy: float
    amplitudes: np.ndarray | None = None


def exact_diag(obs: PauliSum, want_vector: bool = True) -> ExactSolution:
    """Lowest eigenpair of the full Hamiltonian, matrix-free above 8 sites.

    Deterministic: dense path uses LAPACK, the Lanczos path a fixed uniform
    start vector; the eigenvector's global sign is fixed by making its
    largest-magnitude amplitude (lowest configuration on ties) positive.
    """
    n = obs.n_sites
    if n > EXACT_DIAG_LIMIT:
        raise ValueError(f"exact diagonalization limited to {EXACT_DIAG_LIMIT} sites")
    dim = 1 << n
    if n <= _DENSE_DIAG_LIMIT:
        m = obs.dense()
        if np.abs(m.imag).max(initial=0.0) < 1e-14:
            m = m.real
        vals, vecs = np.linalg.eigh(m)
        energy, vec = float(vals[0]), vecs[:, 0]
    else:
        op = spla.LinearOperator(
            (dim, dim),
            matvec=lambda v: obs.apply_to(v.astype(complex)),
            dtype=complex,
        )
        v0 = np.full(dim, 1.0 / math.sqrt(dim))
        vals, vecs = spla.eigsh(op, k=1, which="SA", v0=v0, maxiter=50 * dim, tol=1e-13)
        energy, vec = float(vals[0]), vecs[:, 0]
    if not want_vector:
        return ExactSolution(energy=energy, amplitudes=None)
    vec = vec / np.linalg.norm(vec)
    mags = np.abs(vec)
    pivot = int(np.argmax(mags))  # argmax takes the lowest index on ties
    phase = vec[pivot] / mags[pivot]
    vec = vec * phase.conjugate()
    if np.abs(vec.imag).max(initial=0.0) < 1e-12:
        vec = vec.real.astype(float)
    return ExactSolution(energy=energy, amplitudes=vec)


def jw_energy_1d(n_sites: int, h: float) -> float:
    """Exact ground energy of the periodic ferromagnetic chain (J = 1).

    Free-fermion mode sum with dispersion eps(k) = 2 sqrt(1 + h^2 - 2h cos k).
    The even-parity sector fills the antiperiodic momenta; the odd-parity
    sector uses periodic momenta where the unpaired k = 0 mode carries signed
    energy 2(h - 1) and the parity constraint forces its occupation, which
    contributes (h - 1) for every h.  The ground energy is the sector minimum.
    """
    if n_sites < 2:
        raise ValueError("chain needs at least 2 sites")
    if h < 0:
        raise ValueError("transverse field must be non-negative")

    def eps(k: float) -> float:
        return 2.0 * math.sqrt(max(1.0 + h * h - 2.0 * h * math.cos(k), 0.0))

    e_even = -0.5 * math.fsum(eps((2 * m + 1) * math.pi / n_sites) for m in range(n_sites))
    paired = [2.0 * math.pi * m / n_sites for m in range(1, n_sites) if 2 * m != n_sites]
    e_odd = (h - 1.0) - 0.5 * math.fsum(eps(k) for k in paired)
    if n_sites % 2 == 0:
        e_odd -= h + 1.0
    return min(e_even, e_odd)


def ground_state_sample(
    solution: ExactSolution, n_samples: int, rng: np.random.Generator
) -> np.ndarray:
    """I.i.d. configuration draws from the Born distribution |psi0|^2."""
    if solution.amplitudes is None:
        raise ValueError("solution has no amplitude vector to sample from")
    if n_samples == 0:
        return np.empty(0, dtype=np.int64)
    probs = np.abs(solution.amplitudes) ** 2
    probs = probs / probs.sum()
    return rng.choice(len(probs), size=n_samples, p=probs).astype(np.int64)
