"""Subspace Hamiltonians over selected configuration sets.

Projecting an observable onto the span of ``S`` computational-basis
configurations gives an ``S x S`` Hermitian matrix whose lowest eigenvalue
is a variational upper bound on the ground-state energy.  Matrix elements
that connect a kept configuration to one outside the set are discarded
(pure projection).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .paulis import BasisTransform, PauliSum, conjugate_transform

DENSE_EIG_LIMIT = 512
HERMITICITY_TOL = 1e-9
RESIDUAL_TOL = 1e-8


class ConfigSet:
    """Ordered set of unique spin configurations (first-seen order kept)."""

    __slots__ = ("n_sites", "configs", "_sorted", "_order")

    def __init__(self, n_sites: int, configs):
        self.n_sites = int(n_sites)
        arr = np.asarray(configs, dtype=np.int64).ravel()
        if arr.size and (arr.min() < 0 or arr.max() >= (1 << self.n_sites)):
            raise ValueError("configuration out of range for register")
        _, first = np.unique(arr, return_index=True)
        self.configs = arr[np.sort(first)]
        self._order = np.argsort(self.configs, kind="stable")
        self._sorted = self.configs[self._order]

    def __len__(self) -> int:
        return len(self.configs)

    def __contains__(self, x: int) -> bool:
        pos = np.searchsorted(self._sorted, x)
        return pos < len(self._sorted) and self._sorted[pos] == x

    def index_of(self, x: int) -> int:
        pos = np.searchsorted(self._sorted, x)
        if pos >= len(self._sorted) or self._sorted[pos] != x:
            raise KeyError(f"configuration {x} not in set")
        return int(self._order[pos])

    def positions_of(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized lookup: positions plus a validity mask for misses."""
        pos = np.searchsorted(self._sorted, xs)
        pos_clipped = np.minimum(pos, len(self._sorted) - 1)
        valid = self._sorted[pos_clipped] == xs
        return self._order[pos_clipped], valid

    def __repr__(self) -> str:
        return f"ConfigSet({len(self)} of 2**{self.n_sites})"


def full_basis(n_sites: int) -> ConfigSet:
    return ConfigSet(n_sites, np.arange(1 << n_sites, dtype=np.int64))


@dataclass
class SubspaceResult:
    """Projected matrix with its lowest eigenpair."""

    matrix: object  # dense ndarray or scipy sparse matrix
    energy: float
    vector: np.ndarray


def subspace_matrix(obs: PauliSum, config_set: ConfigSet):
    """Assemble ``M[l, m] = <x_l| obs |x_m>`` over the configuration set.

    Dense for small sets, sparse CSR above ``DENSE_EIG_LIMIT``.  A final
    symmetrization pass removes float rounding asymmetry.
    """
    if obs.n_sites != config_set.n_sites:
        raise ValueError("observable and configuration set have different registers")
    s = len(config_set)
    if s == 0:
        raise ValueError("empty configuration set")
    configs = config_set.configs
    cols_all = np.arange(s)
    if s <= DENSE_EIG_LIMIT:
        m = np.zeros((s, s), dtype=complex)
        for t in obs.terms:
            ys, amps = t.apply_batch(configs)
            rows, ok = config_set.positions_of(ys)
            m[rows[ok], cols_all[ok]] += amps[ok]
        m = 0.5 * (m + m.conj().T)
        if np.abs(m.imag).max(initial=0.0) < 1e-14:
            m = np.ascontiguousarray(m.real)
        return m
    rows_acc, cols_acc, vals_acc = [], [], []
    for t in obs.terms:
        ys, amps = t.apply_batch(configs)
        rows, ok = config_set.positions_of(ys)
        rows_acc.append(rows[ok])
        cols_acc.append(cols_all[ok])
        vals_acc.append(amps[ok])
    m = sp.coo_matrix(
        (np.concatenate(vals_acc), (np.concatenate(rows_acc), np.concatenate(cols_acc))),
        shape=(s, s),
    ).tocsr()
    m = 0.5 * (m + m.conj().T)
    if np.abs(m.data.imag).max(initial=0.0) < 1e-14:
        m = m.real
    return m


def lowest_eigenpair(matrix) -> tuple[float, np.ndarray]:
    """Minimal eigenvalue and unit eigenvector of a Hermitian matrix.

    Dense solve up to ``DENSE_EIG_LIMIT``; implicitly restarted Lanczos with
    a fixed start vector above.  Non-Hermitian input is rejected.
    """
    if sp.issparse(matrix):
        defect = abs(matrix - matrix.conj().T).max()
        scale = max(abs(matrix).max(), 1.0)
        if defect > HERMITICITY_TOL * scale:
            raise ValueError(f"matrix is not Hermitian (defect {defect:.3e})")
        n = matrix.shape[0]
        v0 = np.full(n, 1.0 / np.sqrt(n))
        vals, vecs = spla.eigsh(
            matrix, k=1, which="SA", v0=v0, maxiter=10 * n, tol=1e-12
        )
        energy, vector = float(vals[0]), vecs[:, 0]
    else:
        matrix = np.asarray(matrix)
        scale = max(np.abs(matrix).max(initial=0.0), 1.0)
        defect = np.abs(matrix - matrix.conj().T).max(initial=0.0)
        if defect > HERMITICITY_TOL * scale:
            raise ValueError(f"matrix is not Hermitian (defect {defect:.3e})")
        if matrix.shape[0] <= DENSE_EIG_LIMIT:
            vals, vecs = np.linalg.eigh(matrix)
            energy, vector = float(vals[0]), vecs[:, 0]
        else:
            n = matrix.shape[0]
            v0 = np.full(n, 1.0 / np.sqrt(n))
            vals, vecs = spla.eigsh(matrix, k=1, which="SA", v0=v0, maxiter=10 * n, tol=1e-12)
            energy, vector = float(vals[0]), vecs[:, 0]
    residual = np.linalg.norm(matrix @ vector - energy * vector)
    if residual > RESIDUAL_TOL * max(scale, abs(energy)):
        raise ArithmeticError(f"eigensolver residual {residual:.3e} too large")
    vector = vector / np.linalg.norm(vector)
    return energy, vector


def sbd_energy(
    obs: PauliSum, transform: BasisTransform | None, config_set: ConfigSet
) -> SubspaceResult:
    """Rotate (optionally), project onto the set, and take the lowest eigenpair."""
    rotated = conjugate_transform(obs, transform) if transform is not None else obs
    m = subspace_matrix(rotated, config_set)
    energy, vector = lowest_eigenpair(m)
    return SubspaceResult(matrix=m, energy=energy, vector=vector)


def relative_error(energy: float, reference: float) -> float:
    """``|(E - E0) / E0|``; the reference must be nonzero."""
    if reference == 0.0:
        raise ZeroDivisionError("reference energy is zero")
    return abs((energy - reference) / reference)
