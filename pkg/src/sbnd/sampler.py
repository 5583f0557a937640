"""Autoregressive configuration sampler and its score-function training.

An :class:`ArModel` factorizes a distribution over spin configurations as a
product of per-site conditionals produced by a causal transformer.  Rotation
angles may condition the distribution as continuous prefix tokens, each
embedded from ``(cos theta_i, sin theta_i)``.  The final softmax takes an
effective temperature ``T``: training always runs at ``T = 1`` while
inference may raise ``T`` to broaden the distribution and speed up the
collection of unique configurations.

Training minimizes the expected subspace energy through the score-function
surrogate ``(1/K) sum_k (sum_x log P(x)) (E_k - Ebar)`` with the mean batch
energy as a variance-reducing baseline; within-batch duplicates are dropped
for matrix assembly but each sampled bitstring still contributes its
log-probability to the score term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autoreg import (
    Adam,
    CausalTransformer,
    TransformerConfig,
    load_checkpoint,
    save_checkpoint,
)
from .paulis import PauliSum, pack_rows, unpack_rows
from .subspace import ConfigSet, lowest_eigenpair, subspace_matrix

BEGIN_TOKEN = 2
_CHUNK = 4096


@dataclass
class TrainConfig:
    """Batching and optimization knobs shared by the training loops."""

    k_batches: int = 16
    batch_size: int = 128
    steps: int = 200
    learning_rate: float = 1e-3
    theta_learning_rate: float = 1e-2
    seed: int = 0
    temperature: float = 1.0  # training-time softmax temperature

    def __post_init__(self):
        if self.k_batches < 1 or self.batch_size < 1:
            raise ValueError("k_batches and batch_size must be at least 1")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")


@dataclass
class TraceStep:
    """One optimization step: mean batch energy plus per-batch energies."""

    step: int
    energy_mean: float
    energies: tuple[float, ...]
    theta: np.ndarray | None = None


@dataclass
class UniqueSamples:
    """Unique configurations in first-seen order with draw bookkeeping."""

    config_set: ConfigSet
    n_drawn: int
    exhausted: bool
    draws_when_found: np.ndarray = field(repr=False, default=None)

    @property
    def unique_ratio(self) -> float:
        return len(self.config_set) / max(self.n_drawn, 1)


class ArModel:
    """Autoregressive distribution over length-``n_sites`` bitstrings."""

    def __init__(self, n_sites: int, net: CausalTransformer, n_angles: int = 0):
        self.n_sites = int(n_sites)
        self.n_angles = int(n_angles)
        self.net = net

    @classmethod
    def create(
        cls,
        n_sites: int,
        n_angles: int = 0,
        rng: np.random.Generator | None = None,
        *,
        d_model: int = 64,
        n_heads: int = 4,
        n_layers: int = 2,
        d_ff: int = 256,
        dtype: str = "float32",
    ) -> "ArModel":
        rng = rng if rng is not None else np.random.default_rng(0)
        cfg = TransformerConfig(
            n_vocab=3,
            n_outputs=2,
            max_len=n_angles + n_sites,
            n_prefix=n_angles,
            prefix_dim=2,
            d_model=d_model,
            n_heads=n_heads,
            n_layers=n_layers,
            d_ff=d_ff,
            dtype=dtype,
        )
        return cls(n_sites, CausalTransformer.create(cfg, rng), n_angles)

    @property
    def params(self) -> dict[str, np.ndarray]:
        return self.net.params

    # -- conditioning -------------------------------------------------------

    def angle_feats(self, angles, batch: int) -> np.ndarray | None:
        """Broadcast angles to (batch, n_angles, 2) cos/sin features."""
        if self.n_angles == 0:
            if angles is not None:
                raise ValueError("model is unconditioned but angles were given")
            return None
        angles = np.asarray(angles, dtype=float)
        if angles.ndim == 1:
            if angles.shape != (self.n_angles,):
                raise ValueError("angle vector length mismatch")
            angles = np.broadcast_to(angles, (batch, self.n_angles))
        elif angles.shape != (batch, self.n_angles):
            raise ValueError("angle batch shape mismatch")
        return np.stack([np.cos(angles), np.sin(angles)], axis=-1)

    def _input_tokens(self, bits: np.ndarray) -> np.ndarray:
        begin = np.full((bits.shape[0], 1), BEGIN_TOKEN, dtype=np.int64)
        return np.concatenate([begin, bits[:, :-1].astype(np.int64)], axis=1)

    # -- probabilities ------------------------------------------------------

    def spin_logits(self, bits: np.ndarray, angles=None):
        """Teacher-forced logits (batch, n_sites, 2) plus the backward tape."""
        feats = self.angle_feats(angles, bits.shape[0])
        logits, tape = self.net.forward(self._input_tokens(bits), feats)
        return logits[:, self.n_angles :, :], tape

    def log_probs(self, configs, angles=None, temperature: float = 1.0) -> np.ndarray:
        """Log-probability of each configuration at softmax temperature T."""
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        configs = np.asarray(configs, dtype=np.int64).ravel()
        bits = unpack_rows(configs, self.n_sites)
        logits, _ = self.spin_logits(bits, angles)
        # log-softmax in float64 keeps autoregressive normalization exact
        logits = logits.astype(np.float64) / temperature
        logz = np.log(np.exp(logits - logits.max(axis=-1, keepdims=True)).sum(axis=-1))
        logz += logits.max(axis=-1)
        picked = np.take_along_axis(logits, bits[..., None].astype(np.int64), axis=-1)[..., 0]
        return (picked - logz).sum(axis=-1)

    def log_prob(self, x: int, angles=None, temperature: float = 1.0) -> float:
        return float(self.log_probs(np.array([x]), angles, temperature)[0])

    # -- sampling -----------------------------------------------------------

    def sample_bits(
        self, batch: int, angles=None, temperature: float = 1.0,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        """Ancestral sampling; returns a (batch, n_sites) 0/1 array."""
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        rng = rng if rng is not None else np.random.default_rng(0)
        feats = self.angle_feats(angles, batch)
        cache = self.net.start_cache(batch)
        begin = np.full((batch, 1), BEGIN_TOKEN, dtype=np.int64)
        logits = self.net.forward_block(cache, begin, feats)[:, -1, :]
        bits = np.empty((batch, self.n_sites), dtype=np.int64)
        for i in range(self.n_sites):
            z = logits.astype(np.float64) / temperature
            z = z - z.max(axis=-1, keepdims=True)
            p1 = np.exp(z[:, 1]) / (np.exp(z[:, 0]) + np.exp(z[:, 1]))
            bits[:, i] = (rng.random(batch) < p1).astype(np.int64)
            if i + 1 < self.n_sites:
                logits = self.net.forward_block(cache, bits[:, i : i + 1])[:, -1, :]
        return bits

    def sample_batch(
        self, batch: int, angles=None, temperature: float = 1.0,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        """Ancestral sampling; returns configuration integers."""
        return pack_rows(self.sample_bits(batch, angles, temperature, rng))

    def sample_unique(
        self,
        s_target: int,
        angles=None,
        temperature: float = 1.0,
        rng: np.random.Generator | None = None,
        max_draws: int | None = None,
    ) -> UniqueSamples:
        """Draw until ``s_target`` unique configurations or ``max_draws``.

        First-seen order is kept and the total-draw count at which each
        unique configuration appeared is recorded, so nested prefixes of the
        result reproduce smaller subsets along with their sampling cost.
        """
        if s_target < 1:
            raise ValueError("s_target must be at least 1")
        if s_target > (1 << self.n_sites):
            raise ValueError("s_target exceeds the basis size")
        if max_draws is None:
            max_draws = max(500 * s_target, 10_000)
        rng = rng if rng is not None else np.random.default_rng(0)
        seen: set[int] = set()
        order: list[int] = []
        found_at: list[int] = []
        drawn = 0
        while len(order) < s_target and drawn < max_draws:
            chunk = min(_CHUNK, max_draws - drawn)
            xs = self.sample_batch(chunk, angles, temperature, rng)
            for x in xs.tolist():
                drawn += 1
                if x not in seen:
                    seen.add(x)
                    order.append(x)
                    found_at.append(drawn)
                    if len(order) == s_target:
                        break
        return UniqueSamples(
            config_set=ConfigSet(self.n_sites, np.array(order, dtype=np.int64)),
            n_drawn=drawn,
            exhausted=len(order) < s_target,
            draws_when_found=np.array(found_at, dtype=np.int64),
        )

    # -- gradients ----------------------------------------------------------

    def score_backward(
        self, bits: np.ndarray, row_weights: np.ndarray, angles=None,
        temperature: float = 1.0,
    ):
        """Gradient of ``sum_rows w_row * log P(row)`` for every parameter,
        with log-probabilities taken at the given softmax temperature.

        Returns ``(grads, dangle_feats)``; the latter is per-row gradients
        w.r.t. the (cos, sin) conditioning features, or None.
        """
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        feats = self.angle_feats(angles, bits.shape[0])
        logits, tape = self.net.forward(self._input_tokens(bits), feats)
        z = logits[:, self.n_angles :, :] / temperature
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        probs = e / e.sum(axis=-1, keepdims=True)
        onehot = np.zeros_like(probs)
        np.put_along_axis(onehot, bits[..., None].astype(np.int64), 1.0, axis=-1)
        dlogits = np.zeros_like(logits)
        weights = np.asarray(row_weights).astype(logits.dtype) / temperature
        dlogits[:, self.n_angles :, :] = (onehot - probs) * weights[:, None, None]
        return self.net.backward(tape, dlogits)

    # -- serialization ------------------------------------------------------

    def save(self, path, extra_tensors: dict | None = None, extra_header: dict | None = None):
        header = {
            "kind": "ar_model",
            "n_sites": self.n_sites,
            "n_angles": self.n_angles,
            "d_model": self.net.cfg.d_model,
            "n_heads": self.net.cfg.n_heads,
            "n_layers": self.net.cfg.n_layers,
            "d_ff": self.net.cfg.d_ff,
            "n_outputs": self.net.cfg.n_outputs,
            "dtype": self.net.cfg.dtype,
        }
        if extra_header:
            header.update(extra_header)
        tensors = dict(self.net.params)
        if extra_tensors:
            for name, arr in extra_tensors.items():
                tensors[f"extra.{name}"] = np.asarray(arr, dtype=float)
        save_checkpoint(path, header, tensors)

    @classmethod
    def load(cls, path) -> tuple["ArModel", dict, dict[str, np.ndarray]]:
        header, tensors = load_checkpoint(path)
        if header.get("kind") != "ar_model":
            raise ValueError("checkpoint does not hold a sampler model")
        extra = {
            name[len("extra.") :]: arr
            for name, arr in tensors.items()
            if name.startswith("extra.")
        }
        cfg = TransformerConfig(
            n_vocab=3,
            n_outputs=int(header["n_outputs"]),
            max_len=int(header["n_angles"]) + int(header["n_sites"]),
            n_prefix=int(header["n_angles"]),
            prefix_dim=2,
            d_model=int(header["d_model"]),
            n_heads=int(header["n_heads"]),
            n_layers=int(header["n_layers"]),
            d_ff=int(header["d_ff"]),
            dtype=header.get("dtype", "float32"),
        )
        params = {
            k: v.astype(cfg.np_dtype)
            for k, v in tensors.items()
            if not k.startswith("extra.")
        }
        model = cls(int(header["n_sites"]), CausalTransformer(cfg, params), int(header["n_angles"]))
        return model, header, extra


def batch_energy(obs: PauliSum, config_set: ConfigSet) -> tuple[float, np.ndarray]:
    """Lowest eigenpair of the observable projected on one sampled batch."""
    return lowest_eigenpair(subspace_matrix(obs, config_set))


def snd_gradient(
    model: ArModel, batches: list[ConfigSet], energies, angles=None
) -> dict[str, np.ndarray]:
    """Score-function gradient of the surrogate loss over K batches.

    ``(1/K) sum_k (sum_x dlogP(x)) (E_k - Ebar)`` with the self-inclusive
    mean-energy baseline; K = 1 or equal energies give an exactly zero
    gradient.
    """
    k = len(batches)
    energies = np.asarray(energies, dtype=float)
    if energies.shape != (k,):
        raise ValueError("one energy per batch required")
    weights = (energies - energies.mean()) / k
    rows = np.concatenate([unpack_rows(c.configs, model.n_sites) for c in batches], axis=0)
    row_weights = np.concatenate(
        [np.full(len(c), w) for c, w in zip(batches, weights)]
    )
    grads, _ = model.score_backward(rows, row_weights, angles)
    return grads


def train_snd(
    obs: PauliSum,
    cfg: TrainConfig,
    rng: np.random.Generator | None = None,
) -> tuple[ArModel, list[TraceStep]]:
    """Train the sampler to minimize the per-batch subspace energy."""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    model = ArModel.create(obs.n_sites, 0, rng)
    adam = Adam(model.params, cfg.learning_rate)
    k, bs = cfg.k_batches, cfg.batch_size
    trace: list[TraceStep] = []
    for step in range(cfg.steps):
        bits = model.sample_bits(k * bs, temperature=cfg.temperature, rng=rng)
        configs = pack_rows(bits)
        energies = np.empty(k)
        for j in range(k):
            cset = ConfigSet(obs.n_sites, configs[j * bs : (j + 1) * bs])
            energies[j], _ = batch_energy(obs, cset)
        weights = np.repeat((energies - energies.mean()) / k, bs)
        grads, _ = model.score_backward(bits, weights, temperature=cfg.temperature)
        adam.step(model.params, grads)
        trace.append(TraceStep(step, float(energies.mean()), tuple(energies)))
    return model, trace
