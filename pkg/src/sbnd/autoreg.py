"""Causal transformer with hand-written reverse-mode gradients.

A small fixed architecture (pre-norm attention blocks, learned positional
embeddings, optional continuous prefix tokens) implemented directly on numpy
arrays.  The forward pass records the activations needed by ``backward``,
which returns gradients for every parameter and, when a continuous prefix is
present, for the prefix features themselves — the hook used to differentiate
conditional log-probabilities with respect to conditioning angles.

Sampling uses an incremental forward with per-layer key/value caches, so a
batch of sequences costs one effective forward pass.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

_LN_EPS = 1e-5
_INIT_STD = 0.02


@dataclass(frozen=True)
class TransformerConfig:
    n_vocab: int
    n_outputs: int
    max_len: int
    n_prefix: int = 0  # continuous prefix tokens, each from prefix_dim features
    prefix_dim: int = 2
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 256
    dtype: str = "float32"  # "float64" for finite-difference gradient checks

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)


def init_params(cfg: TransformerConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Small-variance normal init; the output head starts at zero so the
    initial conditional distribution is exactly uniform."""
    d, f, dt = cfg.d_model, cfg.d_ff, cfg.np_dtype
    p: dict[str, np.ndarray] = {
        "tok_emb": rng.normal(0.0, _INIT_STD, (cfg.n_vocab, d)),
        "pos_emb": rng.normal(0.0, _INIT_STD, (cfg.max_len, d)),
        "head_w": np.zeros((d, cfg.n_outputs)),
        "head_b": np.zeros(cfg.n_outputs),
        "lnf_g": np.ones(d),
        "lnf_b": np.zeros(d),
    }
    if cfg.n_prefix:
        p["prefix_w"] = rng.normal(0.0, _INIT_STD, (cfg.prefix_dim, d))
        p["prefix_b"] = np.zeros(d)
    for i in range(cfg.n_layers):
        for name in ("wq", "wk", "wv", "wo"):
            p[f"l{i}.{name}"] = rng.normal(0.0, _INIT_STD, (d, d))
        for name in ("bq", "bk", "bv", "bo"):
            p[f"l{i}.{name}"] = np.zeros(d)
        p[f"l{i}.ln1_g"] = np.ones(d)
        p[f"l{i}.ln1_b"] = np.zeros(d)
        p[f"l{i}.ln2_g"] = np.ones(d)
        p[f"l{i}.ln2_b"] = np.zeros(d)
        p[f"l{i}.w1"] = rng.normal(0.0, _INIT_STD, (d, f))
        p[f"l{i}.b1"] = np.zeros(f)
        p[f"l{i}.w2"] = rng.normal(0.0, _INIT_STD, (f, d))
        p[f"l{i}.b2"] = np.zeros(d)
    return {k: v.astype(dt) for k, v in p.items()}


def _gate_act(x):
    """Smooth gated-linear activation ``0.5 x (1 + x / sqrt(1 + x^2))``.

    Shaped like x*sigmoid(x) but built from arithmetic only: analytic
    everywhere (clean finite-difference checks) and much cheaper than a
    transcendental on large activations.  Returns the value plus the
    factors the backward pass needs.
    """
    inv_r = 1.0 / np.sqrt(1.0 + x * x)
    g = x * inv_r
    return 0.5 * x * (1.0 + g), g, inv_r


def _gate_grad(g, inv_r):
    return 0.5 + 0.5 * g * (1.0 + inv_r * inv_r)


def _layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + _LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)


def _layer_norm_grad(dy, cache, g):
    xhat, inv = cache
    dg = np.sum(dy * xhat, axis=tuple(range(dy.ndim - 1)))
    db = np.sum(dy, axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * g
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _softmax(scores):
    scores = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    return e / e.sum(axis=-1, keepdims=True)


def _split_heads(x, n_heads):
    b, l, d = x.shape
    return x.reshape(b, l, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, l, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, l, h * dh)


class CausalTransformer:
    """Fixed-architecture decoder over spin/angle sequences."""

    def __init__(self, cfg: TransformerConfig, params: dict[str, np.ndarray]):
        self.cfg = cfg
        self.params = params

    @classmethod
    def create(cls, cfg: TransformerConfig, rng: np.random.Generator) -> "CausalTransformer":
        return cls(cfg, init_params(cfg, rng))

    # -- embedding ---------------------------------------------------------

    def _embed(self, tokens: np.ndarray, prefix_feats: np.ndarray | None):
        p = self.params
        parts = []
        if self.cfg.n_prefix:
            if prefix_feats is None:
                raise ValueError("model expects prefix features")
            if prefix_feats.shape[1] != self.cfg.n_prefix:
                raise ValueError("wrong number of prefix tokens")
            prefix_feats = prefix_feats.astype(self.cfg.np_dtype, copy=False)
            parts.append(prefix_feats @ p["prefix_w"] + p["prefix_b"])
        elif prefix_feats is not None:
            raise ValueError("model takes no prefix features")
        parts.append(p["tok_emb"][tokens])
        emb = np.concatenate(parts, axis=1) if len(parts) > 1 else parts[0]
        length = emb.shape[1]
        if length > self.cfg.max_len:
            raise ValueError(f"sequence of {length} exceeds max_len {self.cfg.max_len}")
        return emb + p["pos_emb"][:length]

    # -- full forward/backward (training path) ------------------------------

    def forward(self, tokens: np.ndarray, prefix_feats: np.ndarray | None = None):
        """Teacher-forced logits at every position, plus a backward tape."""
        p, cfg = self.params, self.cfg
        if prefix_feats is not None:
            prefix_feats = np.asarray(prefix_feats).astype(cfg.np_dtype, copy=False)
        x = self._embed(tokens, prefix_feats)
        length = x.shape[1]
        mask = np.triu(np.full((length, length), -np.inf, dtype=cfg.np_dtype), k=1)
        scale = 1.0 / math.sqrt(cfg.d_head)
        tape = {"tokens": tokens, "prefix_feats": prefix_feats, "layers": []}
        for i in range(cfg.n_layers):
            n1, ln1c = _layer_norm(x, p[f"l{i}.ln1_g"], p[f"l{i}.ln1_b"])
            q = _split_heads(n1 @ p[f"l{i}.wq"] + p[f"l{i}.bq"], cfg.n_heads)
            k = _split_heads(n1 @ p[f"l{i}.wk"] + p[f"l{i}.bk"], cfg.n_heads)
            v = _split_heads(n1 @ p[f"l{i}.wv"] + p[f"l{i}.bv"], cfg.n_heads)
            att = _softmax(q @ k.swapaxes(-1, -2) * scale + mask)
            ctx = _merge_heads(att @ v)
            x1 = x + ctx @ p[f"l{i}.wo"] + p[f"l{i}.bo"]
            n2, ln2c = _layer_norm(x1, p[f"l{i}.ln2_g"], p[f"l{i}.ln2_b"])
            h1 = n2 @ p[f"l{i}.w1"] + p[f"l{i}.b1"]
            a1, gate, inv_r = _gate_act(h1)
            x2 = x1 + a1 @ p[f"l{i}.w2"] + p[f"l{i}.b2"]
            tape["layers"].append((ln1c, n1, q, k, v, att, ctx, ln2c, n2, gate, inv_r, a1))
            x = x2
        nf, lnfc = _layer_norm(x, p["lnf_g"], p["lnf_b"])
        logits = nf @ p["head_w"] + p["head_b"]
        tape["lnfc"] = lnfc
        tape["nf"] = nf
        return logits, tape

    def backward(self, tape, dlogits: np.ndarray):
        """Gradients of a scalar with given ``dlogits`` w.r.t. all parameters,
        and w.r.t. the continuous prefix features when present."""
        p, cfg = self.params, self.cfg
        grads = {name: np.zeros_like(val) for name, val in p.items()}
        scale = 1.0 / math.sqrt(cfg.d_head)
        nf = tape["nf"]
        flat = lambda a: a.reshape(-1, a.shape[-1])
        grads["head_w"] += flat(nf).T @ flat(dlogits)
        grads["head_b"] += dlogits.sum(axis=(0, 1))
        dnf = dlogits @ p["head_w"].T
        dx, dg, db = _layer_norm_grad(dnf, tape["lnfc"], p["lnf_g"])
        grads["lnf_g"] += dg
        grads["lnf_b"] += db
        for i in range(cfg.n_layers - 1, -1, -1):
            ln1c, n1, q, k, v, att, ctx, ln2c, n2, gate, inv_r, a1 = tape["layers"][i]
            # feed-forward block
            dz = dx
            grads[f"l{i}.w2"] += flat(a1).T @ flat(dz)
            grads[f"l{i}.b2"] += dz.sum(axis=(0, 1))
            dh1 = (dz @ p[f"l{i}.w2"].T) * _gate_grad(gate, inv_r)
            grads[f"l{i}.w1"] += flat(n2).T @ flat(dh1)
            grads[f"l{i}.b1"] += dh1.sum(axis=(0, 1))
            dn2 = dh1 @ p[f"l{i}.w1"].T
            dx1, dg, db = _layer_norm_grad(dn2, ln2c, p[f"l{i}.ln2_g"])
            grads[f"l{i}.ln2_g"] += dg
            grads[f"l{i}.ln2_b"] += db
            dx1 = dx1 + dz
            # attention block
            dy = dx1
            grads[f"l{i}.wo"] += flat(ctx).T @ flat(dy)
            grads[f"l{i}.bo"] += dy.sum(axis=(0, 1))
            dctx = _split_heads(dy @ p[f"l{i}.wo"].T, cfg.n_heads)
            datt = dctx @ v.swapaxes(-1, -2)
            dv = att.swapaxes(-1, -2) @ dctx
            dscores = att * (datt - (datt * att).sum(axis=-1, keepdims=True))
            dq = dscores @ k * scale
            dk = dscores.swapaxes(-1, -2) @ q * scale
            dn1 = np.zeros_like(n1)
            for name, grad_heads in (("wq", dq), ("wk", dk), ("wv", dv)):
                g2 = _merge_heads(grad_heads)
                grads[f"l{i}.{name}"] += flat(n1).T @ flat(g2)
                grads[f"l{i}.b{name[1]}"] += g2.sum(axis=(0, 1))
                dn1 += g2 @ p[f"l{i}.{name}"].T
            dx0, dg, db = _layer_norm_grad(dn1, ln1c, p[f"l{i}.ln1_g"])
            grads[f"l{i}.ln1_g"] += dg
            grads[f"l{i}.ln1_b"] += db
            dx = dx1 + dx0
        # embeddings
        length = dx.shape[1]
        grads["pos_emb"][:length] += dx.sum(axis=0)
        n_prefix = self.cfg.n_prefix
        tokens = tape["tokens"]
        np.add.at(grads["tok_emb"], tokens.reshape(-1), flat(dx[:, n_prefix:]))
        dprefix_feats = None
        if n_prefix:
            demb = dx[:, :n_prefix]
            feats = tape["prefix_feats"]
            grads["prefix_w"] += flat(feats).T @ flat(demb)
            grads["prefix_b"] += demb.sum(axis=(0, 1))
            dprefix_feats = demb @ p["prefix_w"].T
        return grads, dprefix_feats

    # -- incremental forward (sampling path) ---------------------------------

    def start_cache(self, batch: int):
        shape = (batch, self.cfg.n_heads, self.cfg.max_len, self.cfg.d_head)
        dt = self.cfg.np_dtype
        return {
            "t": 0,
            "layers": [
                {"k": np.zeros(shape, dtype=dt), "v": np.zeros(shape, dtype=dt)}
                for _ in range(self.cfg.n_layers)
            ],
        }

    def forward_block(self, cache, tokens: np.ndarray | None, prefix_feats: np.ndarray | None = None):
        """Run a block of new positions against the cache; returns block logits."""
        p, cfg = self.params, self.cfg
        parts = []
        if prefix_feats is not None:
            feats = np.asarray(prefix_feats).astype(cfg.np_dtype, copy=False)
            parts.append(feats @ p["prefix_w"] + p["prefix_b"])
        if tokens is not None:
            parts.append(p["tok_emb"][tokens])
        x = np.concatenate(parts, axis=1) if len(parts) > 1 else parts[0]
        t0, lb = cache["t"], x.shape[1]
        x = x + p["pos_emb"][t0 : t0 + lb]
        scale = 1.0 / math.sqrt(cfg.d_head)
        if lb > 1:
            mask = np.zeros((lb, t0 + lb), dtype=cfg.np_dtype)
            mask[:, t0:] = np.triu(np.full((lb, lb), -np.inf, dtype=cfg.np_dtype), k=1)
        else:
            mask = None
        for i in range(cfg.n_layers):
            layer_cache = cache["layers"][i]
            n1, _ = _layer_norm(x, p[f"l{i}.ln1_g"], p[f"l{i}.ln1_b"])
            q = _split_heads(n1 @ p[f"l{i}.wq"] + p[f"l{i}.bq"], cfg.n_heads)
            layer_cache["k"][:, :, t0 : t0 + lb] = _split_heads(
                n1 @ p[f"l{i}.wk"] + p[f"l{i}.bk"], cfg.n_heads
            )
            layer_cache["v"][:, :, t0 : t0 + lb] = _split_heads(
                n1 @ p[f"l{i}.wv"] + p[f"l{i}.bv"], cfg.n_heads
            )
            k = layer_cache["k"][:, :, : t0 + lb]
            v = layer_cache["v"][:, :, : t0 + lb]
            scores = q @ k.swapaxes(-1, -2) * scale
            if mask is not None:
                scores = scores + mask
            ctx = _merge_heads(_softmax(scores) @ v)
            x1 = x + ctx @ p[f"l{i}.wo"] + p[f"l{i}.bo"]
            n2, _ = _layer_norm(x1, p[f"l{i}.ln2_g"], p[f"l{i}.ln2_b"])
            a1, _, _ = _gate_act(n2 @ p[f"l{i}.w1"] + p[f"l{i}.b1"])
            x = x1 + a1 @ p[f"l{i}.w2"] + p[f"l{i}.b2"]
        cache["t"] = t0 + lb
        nf, _ = _layer_norm(x, p["lnf_g"], p["lnf_b"])
        return nf @ p["head_w"] + p["head_b"]


class Adam:
    """Moment-based update with bias correction, applied in place."""

    def __init__(self, params: dict[str, np.ndarray], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for key, g in grads.items():
            m = self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * g
            v = self.v[key] = self.beta2 * self.v[key] + (1.0 - self.beta2) * (g * g)
            params[key] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class VectorAdam:
    """Adam for a single flat parameter vector (rotation angles)."""

    def __init__(self, size: int, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, values: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * (grad * grad)
        mhat = self.m / (1.0 - self.beta1**self.t)
        vhat = self.v / (1.0 - self.beta2**self.t)
        return values - self.lr * mhat / (np.sqrt(vhat) + self.eps)


# -- checkpoint serialization: one JSON header line, then raw tensors --------

_CKPT_MAGIC = b"SBNDCKPT1\n"


def save_checkpoint(path, header: dict, tensors: dict[str, np.ndarray]) -> None:
    """Write a flat binary/JSON hybrid: magic, JSON header (with the tensor
    manifest in fixed name order), then contiguous little-endian payloads."""
    names = sorted(tensors)
    manifest = []
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(tensors[name])
        if arr.dtype == np.float32:
            dtype = "<f4"
        elif arr.dtype == np.int64:
            dtype = "<i8"
        else:
            arr = arr.astype(np.float64)
            dtype = "<f8"
        manifest.append({"name": name, "shape": list(arr.shape), "dtype": dtype})
        blobs.append(arr.astype(dtype).tobytes())
    doc = dict(header)
    doc["tensors"] = manifest
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(json.dumps(doc).encode() + b"\n")
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        if fh.read(len(_CKPT_MAGIC)) != _CKPT_MAGIC:
            raise ValueError("not a checkpoint file")
        doc = json.loads(fh.readline().decode())
        tensors = {}
        for entry in doc.pop("tensors"):
            shape = tuple(entry["shape"])
            dt = np.dtype(entry["dtype"])
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(count * dt.itemsize), dtype=dt).reshape(shape)
            tensors[entry["name"]] = data.copy()
    return doc, tensors
