"""Solver classes with a scikit-learn-style estimator surface.

Each solver takes its hyperparameters in ``__init__`` (so ``get_params`` /
``set_params`` and cloning work), learns state in ``fit(hamiltonian)`` into
trailing-underscore attributes, and then produces variational energy
estimates for any requested number of unique configurations.  The heavy
lifting lives in :mod:`sbnd.sampler`, :mod:`sbnd.absnd` and
:mod:`sbnd.qcircuit`; these classes wire it together and keep bookkeeping
(draw counts, temperatures, transforms) consistent between fitting and
inference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .absnd import (
    PauliBasisEngine,
    TransformSpec,
    optimize_rotations,
    train_absnd,
)
from .ising import ExactSolution, exact_diag, ground_state_sample
from .paulis import PauliSum, conjugate_transform
from .qcircuit import QUBIT_LIMIT, CircuitBasisEngine, ansatz_sec4
from .sampler import TrainConfig, UniqueSamples, train_snd
from .subspace import ConfigSet, SubspaceResult, lowest_eigenpair, subspace_matrix

PAULI_TRANSFORMS = ("single_spin_ry", "pairwise_blocks")


@dataclass
class EnergyEstimate:
    """One inference evaluation: variational energy plus sampling bookkeeping."""

    energy: float
    s_unique: int
    n_drawn: int
    exhausted: bool


def _require_hamiltonian(obj) -> PauliSum:
    if not isinstance(obj, PauliSum):
        raise TypeError("fit expects a PauliSum observable")
    return obj


def _check_fitted(estimator, attr: str) -> None:
    if not hasattr(estimator, attr):
        raise NotFittedError(
            f"{type(estimator).__name__} must be fitted before this call"
        )


def prefix_set(samples: UniqueSamples, s: int) -> tuple[ConfigSet, int]:
    """First ``s`` uniques (first-seen order) plus the draws spent to get them."""
    cs = samples.config_set
    if s > len(cs):
        raise ValueError(f"only {len(cs)} unique configurations available")
    n_drawn = int(samples.draws_when_found[s - 1])
    return ConfigSet(cs.n_sites, cs.configs[:s]), n_drawn


class _NeuralSolverBase(BaseEstimator):
    """Shared inference plumbing for the neural samplers."""

    def sample_unique(
        self,
        s_target: int,
        temperature: float | None = None,
        rng: np.random.Generator | None = None,
        max_draws: int | None = None,
    ) -> UniqueSamples:
        _check_fitted(self, "model_")
        t = self.temperature if temperature is None else temperature
        return self.model_.sample_unique(
            s_target,
            angles=self._inference_angles(),
            temperature=t,
            rng=rng,
            max_draws=max_draws,
        )

    def energy_for(self, config_set: ConfigSet) -> SubspaceResult:
        _check_fitted(self, "model_")
        matrix = self._matrix_for(config_set)
        energy, vector = lowest_eigenpair(matrix)
        return SubspaceResult(matrix=matrix, energy=energy, vector=vector)

    def estimate_energy(
        self,
        s_unique: int,
        temperature: float | None = None,
        rng: np.random.Generator | None = None,
        max_draws: int | None = None,
    ) -> EnergyEstimate:
        samples = self.sample_unique(s_unique, temperature, rng, max_draws)
        result = self.energy_for(samples.config_set)
        return EnergyEstimate(
            energy=result.energy,
            s_unique=len(samples.config_set),
            n_drawn=samples.n_drawn,
            exhausted=samples.exhausted,
        )

    def _inference_angles(self):
        return None


class SNDSolver(_NeuralSolverBase):
    """Subspace diagonalization with a trained neural configuration sampler.

    ``fit`` trains the autoregressive sampler to minimize the per-batch
    subspace energy of the given observable; estimates then diagonalize the
    observable projected on freshly sampled unique configurations.
    """

    def __init__(
        self,
        steps: int = 300,
        k_batches: int = 16,
        batch_size: int = 128,
        learning_rate: float = 1e-3,
        temperature: float = 1.2,
        seed: int = 0,
    ):
        self.steps = steps
        self.k_batches = k_batches
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.temperature = temperature
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            k_batches=self.k_batches,
            batch_size=self.batch_size,
            steps=self.steps,
            learning_rate=self.learning_rate,
            seed=self.seed,
        )

    def fit(self, hamiltonian: PauliSum, rng: np.random.Generator | None = None):
        obs = _require_hamiltonian(hamiltonian)
        rng = rng if rng is not None else np.random.default_rng(self.seed)
        self.hamiltonian_ = obs
        self.model_, self.trace_ = train_snd(obs, self._train_config(), rng)
        return self

    def _matrix_for(self, config_set: ConfigSet):
        return subspace_matrix(self.hamiltonian_, config_set)

    def save_model(self, path) -> None:
        _check_fitted(self, "model_")
        self.model_.save(path)


class ABSNDSolver(_NeuralSolverBase):
    """Adaptive-basis solver: trains the sampler and a basis transform jointly.

    ``transform`` picks single-spin rotations, the non-overlapping two-spin
    block pattern, or the shallow entangling circuit evaluated on the
    statevector backend; ``variant`` switches between the Hellmann-Feynman
    angle gradient and the sampled-angle (Von Mises) optimizer.
    """

    def __init__(
        self,
        steps: int = 300,
        k_batches: int = 4,
        batch_size: int = 128,
        learning_rate: float = 1e-3,
        theta_learning_rate: float = 1e-2,
        transform: str = "single_spin_ry",
        variant: str = "hf",
        temperature: float = 1.2,
        seed: int = 0,
    ):
        self.steps = steps
        self.k_batches = k_batches
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.theta_learning_rate = theta_learning_rate
        self.transform = transform
        self.variant = variant
        self.temperature = temperature
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            k_batches=self.k_batches,
            batch_size=self.batch_size,
            steps=self.steps,
            learning_rate=self.learning_rate,
            theta_learning_rate=self.theta_learning_rate,
            seed=self.seed,
        )

    def _build_engine(self, obs: PauliSum):
        if self.transform in PAULI_TRANSFORMS:
            return PauliBasisEngine(obs, TransformSpec(self.transform, obs.n_sites))
        if self.transform == "circuit":
            if obs.n_sites > QUBIT_LIMIT:
                raise ValueError(
                    f"circuit transform limited to {QUBIT_LIMIT} sites"
                )
            if self.variant != "hf":
                raise ValueError("circuit transform supports the hf variant only")
            n = obs.n_sites
            template = ansatz_sec4(n, np.zeros(n + 2 * (n + n)))
            return CircuitBasisEngine(obs, template)
        raise ValueError(f"unknown transform {self.transform!r}")

    def fit(self, hamiltonian: PauliSum, rng: np.random.Generator | None = None):
        obs = _require_hamiltonian(hamiltonian)
        if self.variant not in ("hf", "vonmises"):
            raise ValueError(f"unknown variant {self.variant!r}")
        rng = rng if rng is not None else np.random.default_rng(self.seed)
        self.hamiltonian_ = obs
        self.engine_ = self._build_engine(obs)
        self.model_, self.theta_, self.trace_ = train_absnd(
            obs, self._train_config(), self.engine_, rng, variant=self.variant
        )
        self.context_ = self.engine_.prepare(self.theta_)
        return self

    def _inference_angles(self):
        return self.theta_

    def _matrix_for(self, config_set: ConfigSet):
        return self.engine_.matrix(self.context_, config_set)

    def save_model(self, path) -> None:
        _check_fitted(self, "model_")
        self.model_.save(path, extra_tensors={"theta": self.theta_})


class ExactSampleSBD(BaseEstimator):
    """Baseline: configurations drawn from the exact ground-state amplitudes.

    Optionally optimizes single-spin rotation angles on each drawn set
    before diagonalizing, which turns the plain projection into its
    adaptive-basis counterpart at zero sampling cost (small systems only).
    """

    def __init__(
        self,
        rotations: bool = False,
        rotation_steps: int = 300,
        rotation_learning_rate: float = 5e-2,
        seed: int = 0,
    ):
        self.rotations = rotations
        self.rotation_steps = rotation_steps
        self.rotation_learning_rate = rotation_learning_rate
        self.seed = seed

    def fit(self, hamiltonian: PauliSum, rng: np.random.Generator | None = None):
        obs = _require_hamiltonian(hamiltonian)
        self.hamiltonian_ = obs
        self.solution_ = exact_diag(obs, want_vector=True)
        return self

    @property
    def exact_solution(self) -> ExactSolution:
        _check_fitted(self, "solution_")
        return self.solution_

    def sample_unique(
        self,
        s_target: int,
        rng: np.random.Generator | None = None,
        max_draws: int | None = None,
    ) -> UniqueSamples:
        _check_fitted(self, "solution_")
        if s_target < 1:
            raise ValueError("s_target must be at least 1")
        rng = rng if rng is not None else np.random.default_rng(self.seed)
        if max_draws is None:
            max_draws = max(500 * s_target, 10_000)
        seen: set[int] = set()
        order: list[int] = []
        found_at: list[int] = []
        drawn = 0
        while len(order) < s_target and drawn < max_draws:
            chunk = min(4096, max_draws - drawn)
            xs = ground_state_sample(self.solution_, chunk, rng)
            for x in xs.tolist():
                drawn += 1
                if x not in seen:
                    seen.add(x)
                    order.append(x)
                    found_at.append(drawn)
                    if len(order) == s_target:
                        break
        return UniqueSamples(
            config_set=ConfigSet(self.hamiltonian_.n_sites, np.array(order, dtype=np.int64)),
            n_drawn=drawn,
            exhausted=len(order) < s_target,
            draws_when_found=np.array(found_at, dtype=np.int64),
        )

    def energy_for(self, config_set: ConfigSet) -> SubspaceResult:
        _check_fitted(self, "solution_")
        obs = self.hamiltonian_
        if self.rotations:
            tspec = TransformSpec("single_spin_ry", obs.n_sites)
            theta, _ = optimize_rotations(
                obs,
                tspec,
                config_set,
                steps=self.rotation_steps,
                learning_rate=self.rotation_learning_rate,
            )
            matrix = subspace_matrix(conjugate_transform(obs, tspec.build(theta)), config_set)
        else:
            matrix = subspace_matrix(obs, config_set)
        energy, vector = lowest_eigenpair(matrix)
        return SubspaceResult(matrix=matrix, energy=energy, vector=vector)

    def estimate_energy(
        self,
        s_unique: int,
        rng: np.random.Generator | None = None,
        max_draws: int | None = None,
    ) -> EnergyEstimate:
        samples = self.sample_unique(s_unique, rng=rng, max_draws=max_draws)
        result = self.energy_for(samples.config_set)
        return EnergyEstimate(
            energy=result.energy,
            s_unique=len(samples.config_set),
            n_drawn=samples.n_drawn,
            exhausted=samples.exhausted,
        )
