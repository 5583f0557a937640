"""Adaptive-basis training: joint optimization of sampler and rotation angles.

The basis transform ``U(theta)`` rotates the observable before projection,
so the subspace energy depends on the angles two ways: through the rotated
matrix elements (captured exactly by the Hellmann-Feynman term
``psi0^dag dM/dtheta_i psi0``) and through the angle-conditioned sampling
distribution (captured by the score term, which is the sole carrier of the
configuration set's angle dependence).  The per-angle gradient of one
training step is

    (1/K) sum_k [ (sum_x dlogP(x|theta)/dtheta_i) (E_k - Ebar) + HF_i^(k) ]

with the baseline applied to the score term only.

An alternative optimizer samples the angles themselves from a conditional
autoregressive network through Von Mises distributions and trains both
networks by the score function alone, avoiding the per-angle
diagonalizations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import i0e, i1e

from .autoreg import Adam, CausalTransformer, TransformerConfig, VectorAdam
from .paulis import (
    BasisTransform,
    PauliSum,
    RotationGate,
    conjugate_transform,
    d_conjugate_transform,
    pack_rows,
    unpack_rows,
)
from .qcircuit import adjoint_angle_gradient
from .sampler import ArModel, TraceStep, TrainConfig
from .subspace import ConfigSet, lowest_eigenpair, subspace_matrix

TRANSFORM_FAMILIES = ("single_spin_ry", "pairwise_blocks")
_KAPPA_MIN = 1e-3
_KAPPA_INIT = 2.0


@dataclass(frozen=True)
class TransformSpec:
    """Declarative gate pattern with one trainable angle per gate.

    ``single_spin_ry``: one RY per site (N angles).  ``pairwise_blocks``:
    an RY layer, RZZ on the non-overlapping pairs (0,1), (2,3), ..., then
    an RX layer (N + floor(N/2) + N angles).
    """

    family: str
    n_sites: int

    def __post_init__(self):
        if self.family not in TRANSFORM_FAMILIES:
            raise ValueError(f"unknown transform family {self.family!r}")
        if self.n_sites < 1:
            raise ValueError("transform needs at least one site")

    @property
    def gate_pattern(self) -> tuple[tuple[str, tuple[int, ...]], ...]:
        n = self.n_sites
        if self.family == "single_spin_ry":
            return tuple(("RY", (i,)) for i in range(n))
        layers = [("RY", (i,)) for i in range(n)]
        layers += [("RZZ", (2 * p, 2 * p + 1)) for p in range(n // 2)]
        layers += [("RX", (i,)) for i in range(n)]
        return tuple(layers)

    @property
    def n_angles(self) -> int:
        return len(self.gate_pattern)

    def build(self, angles) -> BasisTransform:
        angles = np.asarray(angles, dtype=float)
        if angles.shape != (self.n_angles,):
            raise ValueError(f"expected {self.n_angles} angles, got {angles.shape}")
        gates = tuple(
            RotationGate(kind, sites, float(a))
            for (kind, sites), a in zip(self.gate_pattern, angles)
        )
        return BasisTransform(self.n_sites, gates)


def hf_angle_gradient(
    obs: PauliSum, transform: BasisTransform, config_set: ConfigSet, psi0: np.ndarray
) -> np.ndarray:
    """Operator-path energy derivative per angle at a fixed configuration set."""
    psi0 = np.asarray(psi0)
    if len(psi0) != len(config_set):
        raise ValueError("eigenvector length does not match configuration set")
    grad = np.empty(transform.n_angles)
    for i in range(transform.n_angles):
        deriv = d_conjugate_transform(obs, transform, i)
        if len(deriv) == 0:
            grad[i] = 0.0
            continue
        m = subspace_matrix(deriv, config_set)
        grad[i] = float(np.real(psi0.conj() @ (m @ psi0)))
    return grad


def _score_theta_gradient(dfeats: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Chain per-row (cos, sin) feature gradients back to shared angles."""
    return (
        dfeats[:, :, 0].sum(axis=0) * (-np.sin(angles))
        + dfeats[:, :, 1].sum(axis=0) * np.cos(angles)
    )




def absnd_gradient(
    obs: PauliSum,
    model: ArModel,
    transform: BasisTransform,
    batches: list[ConfigSet],
    energies,
    eigvecs,
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Joint (weights, angles) gradient over K already-diagonalized batches."""
    k = len(batches)
    energies = np.asarray(energies, dtype=float)
    if energies.shape != (k,) or len(eigvecs) != k:
        raise ValueError("need one energy and eigenvector per batch")
    theta = transform.angles()
    weights = (energies - energies.mean()) / k
    rows = np.concatenate([unpack_rows(c.configs, model.n_sites) for c in batches])
    row_weights = np.concatenate([np.full(len(c), w) for c, w in zip(batches, weights)])
    grads_w, dfeats = model.score_backward(rows, row_weights, angles=theta)
    grad_theta = _score_theta_gradient(dfeats.astype(float), theta)
    hf = np.zeros_like(theta)
    for cset, psi in zip(batches, eigvecs):
        hf += hf_angle_gradient(obs, transform, cset, psi)
    grad_theta += hf / k
    return grads_w, grad_theta


class PauliBasisEngine:
    """Classical rotated-observable backend for adaptive-basis training.

    Matrices come from the rotated Pauli expansion; the per-angle energy
    derivative is evaluated by an adjoint statevector sweep, which gives
    every component of ``psi^dag dM/dtheta psi`` in one forward pass plus
    one backward pass over the gate list (all derivatives at the cost of
    O(gates) kernel applications).  It equals :func:`hf_angle_gradient`
    exactly; the term-expansion route stays available as the checkable
    reference.
    """

    def __init__(self, obs: PauliSum, tspec: TransformSpec):
        if tspec.n_sites != obs.n_sites:
            raise ValueError("transform register does not match observable")
        self.obs = obs
        self.tspec = tspec
        self.n_angles = tspec.n_angles
        self._generators = [
            PauliSum(obs.n_sites, [RotationGate(kind, sites, 0.0).generator(obs.n_sites)])
            for kind, sites in tspec.gate_pattern
        ]

    def prepare(self, theta: np.ndarray):
        transform = self.tspec.build(theta)
        return {"transform": transform, "rotated": conjugate_transform(self.obs, transform)}

    def matrix(self, ctx, config_set: ConfigSet):
        return subspace_matrix(ctx["rotated"], config_set)

    def hf_gradient(self, ctx, config_set: ConfigSet, psi: np.ndarray) -> np.ndarray:
        transform = ctx["transform"]
        return adjoint_angle_gradient(
            self.obs,
            transform.gates,
            self._generators,
            range(self.n_angles),
            config_set,
            psi,
        )


def _prepare_batches(
    obs_engine, ctx, model: ArModel, bits: np.ndarray, k: int, bs: int
):
    """Split sampled rows into batches, deduplicate, and diagonalize each."""
    configs = pack_rows(bits)
    batches, energies, eigvecs = [], np.empty(k), []
    for j in range(k):
        cset = ConfigSet(model.n_sites, configs[j * bs : (j + 1) * bs])
        e, psi = lowest_eigenpair(obs_engine.matrix(ctx, cset))
        batches.append(cset)
        energies[j] = e
        eigvecs.append(psi)
    return batches, energies, eigvecs


def train_absnd(
    obs: PauliSum,
    cfg: TrainConfig,
    engine,
    rng: np.random.Generator | None = None,
    *,
    variant: str = "hf",
    theta0: np.ndarray | None = None,
) -> tuple[ArModel, np.ndarray, list[TraceStep]]:
    """Jointly train the sampler and the basis-transform angles.

    ``engine`` is a :class:`PauliBasisEngine` (or a :class:`TransformSpec`,
    wrapped automatically) for classically rotated observables, or a circuit
    backend exposing the same ``prepare``/``matrix``/``hf_gradient`` surface.
    ``variant`` selects the Hellmann-Feynman path ("hf") or the sampled-angle
    path ("vonmises"); angles start at zero (identity transform) unless
    ``theta0`` is given.
    """
    if isinstance(engine, TransformSpec):
        engine = PauliBasisEngine(obs, engine)
    if variant == "vonmises":
        return _train_absnd_vonmises(obs, cfg, engine, rng)
    if variant != "hf":
        raise ValueError(f"unknown training variant {variant!r}")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    n_angles = engine.n_angles
    model = ArModel.create(obs.n_sites, n_angles, rng)
    adam_w = Adam(model.params, cfg.learning_rate)
    adam_t = VectorAdam(n_angles, cfg.theta_learning_rate)
    theta = np.zeros(n_angles) if theta0 is None else np.asarray(theta0, dtype=float).copy()
    k, bs = cfg.k_batches, cfg.batch_size
    trace: list[TraceStep] = []
    for step in range(cfg.steps):
        ctx = engine.prepare(theta)
        bits = model.sample_bits(k * bs, angles=theta, temperature=cfg.temperature, rng=rng)
        batches, energies, eigvecs = _prepare_batches(engine, ctx, model, bits, k, bs)
        weights = np.repeat((energies - energies.mean()) / k, bs)
        grads_w, dfeats = model.score_backward(
            bits, weights, angles=theta, temperature=cfg.temperature
        )
        grad_theta = _score_theta_gradient(dfeats.astype(float), theta)
        hf = np.zeros(n_angles)
        for cset, psi in zip(batches, eigvecs):
            hf += engine.hf_gradient(ctx, cset, psi)
        grad_theta += hf / k
        adam_w.step(model.params, grads_w)
        theta = adam_t.step(theta, grad_theta)
        trace.append(TraceStep(step, float(energies.mean()), tuple(energies), theta.copy()))
    return model, theta, trace


def optimize_rotations(
    obs: PauliSum,
    tspec: TransformSpec,
    config_set: ConfigSet,
    *,
    steps: int = 300,
    learning_rate: float = 5e-2,
    theta0: np.ndarray | None = None,
) -> tuple[np.ndarray, list[float]]:
    """Deterministic angle optimization at a fixed configuration set.

    With the set held fixed the Hellmann-Feynman term is the exact energy
    gradient, so this is plain gradient descent on the lowest eigenvalue of
    the rotated projected matrix.  (With a single configuration this is
    exactly a variational-circuit energy minimization.)
    """
    theta = np.zeros(tspec.n_angles) if theta0 is None else np.asarray(theta0, dtype=float).copy()
    adam = VectorAdam(tspec.n_angles, learning_rate)
    energies = []
    for _ in range(steps):
        transform = tspec.build(theta)
        m = subspace_matrix(conjugate_transform(obs, transform), config_set)
        energy, psi = lowest_eigenpair(m)
        energies.append(energy)
        grad = hf_angle_gradient(obs, transform, config_set, psi)
        theta = adam.step(theta, grad)
    return theta, energies


# -- Von Mises angle sampler -------------------------------------------------


class VonMisesNet:
    """Autoregressive location/concentration network over rotation angles.

    Position ``i`` reads angles ``j < i`` (cos/sin features behind a constant
    start token) and emits three outputs: a 2-vector whose atan2 is the Von
    Mises location ``mu_i`` and a raw value mapped through softplus (plus a
    floor) to the concentration ``kappa_i > 0``.
    """

    def __init__(self, n_angles: int, net: CausalTransformer):
        self.n_angles = n_angles
        self.net = net

    @classmethod
    def create(
        cls, n_angles: int, rng: np.random.Generator | None = None, *, dtype: str = "float64"
    ) -> "VonMisesNet":
        rng = rng if rng is not None else np.random.default_rng(0)
        cfg = TransformerConfig(
            n_vocab=1,
            n_outputs=3,
            max_len=n_angles,
            n_prefix=n_angles,
            prefix_dim=2,
            dtype=dtype,
        )
        net = CausalTransformer.create(cfg, rng)
        # zeroed head would make atan2(0, 0) ill-defined: bias the location
        # vector to (1, 0) (mu = 0) and the raw concentration to a moderate
        # starting kappa, so sampling begins near the identity transform
        raw0 = float(np.log(np.expm1(_KAPPA_INIT - _KAPPA_MIN)))
        net.params["head_b"][:] = np.array([1.0, 0.0, raw0], dtype=net.cfg.np_dtype)
        return cls(n_angles, net)

    @property
    def params(self) -> dict[str, np.ndarray]:
        return self.net.params

    def _feats(self, thetas: np.ndarray) -> np.ndarray:
        """Shift angles one slot right behind a constant (0, 0) start token."""
        b = thetas.shape[0]
        feats = np.zeros((b, self.n_angles, 2))
        if self.n_angles > 1:
            feats[:, 1:, 0] = np.cos(thetas[:, :-1])
            feats[:, 1:, 1] = np.sin(thetas[:, :-1])
        return feats

    def _params_from_logits(self, logits: np.ndarray):
        a, bb, raw = logits[..., 0], logits[..., 1], logits[..., 2]
        mu = np.arctan2(bb, a)
        kappa = np.logaddexp(0.0, raw) + _KAPPA_MIN
        return mu, kappa

    def distribution_params(self, thetas: np.ndarray):
        """Per-position (mu, kappa) conditioned on the earlier angles."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        empty = np.zeros((thetas.shape[0], 0), dtype=np.int64)
        logits, _ = self.net.forward(empty, self._feats(thetas))
        mu, kappa = self._params_from_logits(logits.astype(float))
        return mu, kappa

    def log_prob(self, thetas) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        mu, kappa = self.distribution_params(thetas)
        return self._log_density(thetas, mu, kappa).sum(axis=-1)

    @staticmethod
    def _log_density(theta, mu, kappa):
        # log I0(kappa) = kappa + log(i0e(kappa)) stays finite for large kappa
        return kappa * np.cos(theta - mu) - np.log(2.0 * np.pi) - (kappa + np.log(i0e(kappa)))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """Sequential draw; numpy's Von Mises generator is the standard
        Best-Fisher wrapped-Cauchy rejection sampler."""
        theta = np.zeros((1, self.n_angles))
        for i in range(self.n_angles):
            mu, kappa = self.distribution_params(theta)
            theta[0, i] = rng.vonmises(mu[0, i], kappa[0, i])
        return theta[0]

    def mode(self) -> np.ndarray:
        """Deterministic greedy angles: follow the locations position by position."""
        theta = np.zeros((1, self.n_angles))
        for i in range(self.n_angles):
            mu, _ = self.distribution_params(theta)
            theta[0, i] = mu[0, i]
        return theta[0]

    def score_backward(self, thetas: np.ndarray, weights: np.ndarray) -> dict[str, np.ndarray]:
        """Gradient of ``sum_k w_k log P(theta_k)`` w.r.t. the network weights."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        empty = np.zeros((thetas.shape[0], 0), dtype=np.int64)
        logits, tape = self.net.forward(empty, self._feats(thetas))
        logits64 = logits.astype(float)
        a, bb, raw = logits64[..., 0], logits64[..., 1], logits64[..., 2]
        mu = np.arctan2(bb, a)
        kappa = np.logaddexp(0.0, raw) + _KAPPA_MIN
        delta = thetas - mu
        dmu = kappa * np.sin(delta)
        dkappa = np.cos(delta) - i1e(kappa) / i0e(kappa)
        r2 = a * a + bb * bb
        dlogits = np.empty_like(logits64)
        dlogits[..., 0] = dmu * (-bb / r2)
        dlogits[..., 1] = dmu * (a / r2)
        dlogits[..., 2] = dkappa / (1.0 + np.exp(-raw))
        dlogits *= np.asarray(weights)[:, None, None]
        grads, _ = self.net.backward(tape, dlogits.astype(logits.dtype))
        return grads


def sample_angles(net: VonMisesNet, rng: np.random.Generator) -> np.ndarray:
    """Draw one angle vector from the conditional Von Mises chain."""
    return net.sample(rng)


def vonmises_gradients(
    net: VonMisesNet,
    model: ArModel,
    thetas: np.ndarray,
    batches: list[ConfigSet],
    energies,
    temperature: float = 1.0,
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Score-function gradients for the angle net and the conditioned sampler."""
    k = len(batches)
    energies = np.asarray(energies, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    if energies.shape != (k,) or thetas.shape != (k, net.n_angles):
        raise ValueError("need one energy and one angle vector per batch")
    weights = (energies - energies.mean()) / k
    grads_nu = net.score_backward(thetas, weights)
    rows = np.concatenate([unpack_rows(c.configs, model.n_sites) for c in batches])
    row_weights = np.concatenate([np.full(len(c), w) for c, w in zip(batches, weights)])
    row_thetas = np.concatenate(
        [np.broadcast_to(t, (len(c), net.n_angles)) for c, t in zip(batches, thetas)]
    )
    grads_w, _ = model.score_backward(
        rows, row_weights, angles=row_thetas, temperature=temperature
    )
    return grads_nu, grads_w


def _train_absnd_vonmises(obs, cfg, engine, rng):
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    n_angles = engine.n_angles
    model = ArModel.create(obs.n_sites, n_angles, rng)
    vm = VonMisesNet.create(n_angles, rng, dtype="float32")
    adam_w = Adam(model.params, cfg.learning_rate)
    adam_nu = Adam(vm.params, cfg.theta_learning_rate)
    k, bs = cfg.k_batches, cfg.batch_size
    trace: list[TraceStep] = []
    for step in range(cfg.steps):
        thetas = np.stack([vm.sample(rng) for _ in range(k)])
        row_thetas = np.repeat(thetas, bs, axis=0)
        bits = model.sample_bits(k * bs, angles=row_thetas, temperature=cfg.temperature, rng=rng)
        configs = pack_rows(bits)
        batches, energies = [], np.empty(k)
        for j in range(k):
            ctx = engine.prepare(thetas[j])
            cset = ConfigSet(model.n_sites, configs[j * bs : (j + 1) * bs])
            energies[j], _ = lowest_eigenpair(engine.matrix(ctx, cset))
            batches.append(cset)
        grads_nu, grads_w = vonmises_gradients(
            vm, model, thetas, batches, energies, temperature=cfg.temperature
        )
        adam_w.step(model.params, grads_w)
        adam_nu.step(vm.params, grads_nu)
        trace.append(
            TraceStep(step, float(energies.mean()), tuple(energies), vm.mode())
        )
    theta_final = vm.mode()
    model.vonmises_net = vm  # kept for checkpointing/inspection
    return model, theta_final, trace
