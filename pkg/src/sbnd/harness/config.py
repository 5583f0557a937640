"""TOML run configuration: schema, parsing, validation.

A run document looks like::

    method = "absnd_hf"        # sbd_gs | snd | absnd_hf | absnd_vm | absnd_circuit
    seed = 7                   # master seed (CLI --seed overrides)

    [model]
    kind = "chain_periodic"    # chain_periodic | square_open | square_periodic
    dims = [12]                # [N] or [Lx, Ly]
    h = 0.5
    # couplings = [ ... ]      # explicit per-bond J values (bond-list order)
    # coupling_seed = 3        # or: draw J ~ Normal(0, 1) from this seed

    [train]
    steps = 300
    k_batches = 4
    batch_size = 128
    learning_rate = 1e-3
    theta_learning_rate = 1e-2

    [transform]
    family = "single_spin_ry"  # or pairwise_blocks; ignored by snd/sbd_gs

    [inference]
    s_values = [10, 32, 100]
    temperature = 1.2
    max_draws = 200000

    [scan]                     # consumed by scan-h / required-s / temp-sweep /
    h_values = [0.5, 1.0]      # circuit-demo; unused keys are allowed
    temperatures = [1.0, 1.3]
    n_seeds = 1
    target_error = 0.01
    s_cap = 1024
    rotations = false
"""

from __future__ import annotations

from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from ..ising import LATTICE_KINDS, LatticeSpec
from ..qcircuit import QUBIT_LIMIT
from ..sampler import TrainConfig

METHODS = ("sbd_gs", "snd", "absnd_hf", "absnd_vm", "absnd_circuit")


class ConfigError(Exception):
    """Malformed or inconsistent run configuration (exit code 2)."""


@dataclass
class RunConfig:
    method: str
    lattice: LatticeSpec
    train: TrainConfig
    transform_family: str
    s_values: list[int]
    temperature: float
    max_draws: int | None
    h_values: list[float] = field(default_factory=list)
    temperatures: list[float] = field(default_factory=list)
    n_seeds: int = 1
    target_error: float = 0.01
    s_cap: int = 1024
    rotations: bool = False
    master_seed: int = 0
    raw: dict = field(default_factory=dict, repr=False)

    def with_lattice_h(self, h: float) -> LatticeSpec:
        base = self.lattice
        return LatticeSpec(base.kind, base.dims, h, base.couplings, base.seed)


def _expect(doc: dict, key: str, types, default=None, required=False):
    if key not in doc:
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default
    val = doc[key]
    if not isinstance(val, types):
        raise ConfigError(f"key {key!r} has wrong type {type(val).__name__}")
    return val


def parse_config(path, seed_override: int | None = None) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    return build_config(doc, seed_override)


def build_config(doc: dict, seed_override: int | None = None) -> RunConfig:
    method = _expect(doc, "method", str, required=True)
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
    master_seed = _expect(doc, "seed", int, default=0)
    if seed_override is not None:
        master_seed = seed_override

    model = _expect(doc, "model", dict, required=True)
    kind = _expect(model, "kind", str, required=True)
    if kind not in LATTICE_KINDS:
        raise ConfigError(f"unknown lattice kind {kind!r}")
    dims = _expect(model, "dims", list, required=True)
    if not dims or not all(isinstance(d, int) and d > 0 for d in dims):
        raise ConfigError("model.dims must be positive integers")
    h = float(_expect(model, "h", (int, float), required=True))
    if h < 0:
        raise ConfigError("model.h must be non-negative")
    couplings = _expect(model, "couplings", list, default=None)
    coupling_seed = _expect(model, "coupling_seed", int, default=None)
    try:
        lattice = LatticeSpec(
            kind,
            tuple(dims),
            h,
            tuple(float(j) for j in couplings) if couplings is not None else None,
            coupling_seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    n_sites = lattice.n_sites
    if method == "absnd_circuit" and n_sites > QUBIT_LIMIT:
        raise ConfigError(f"absnd_circuit requires at most {QUBIT_LIMIT} sites")
    if method == "sbd_gs" and n_sites > 16:
        raise ConfigError("sbd_gs requires at most 16 sites (exact reference)")

    train_doc = _expect(doc, "train", dict, default={})
    try:
        train = TrainConfig(
            k_batches=_expect(train_doc, "k_batches", int,
                              default=4 if method.startswith("absnd") else 16),
            batch_size=_expect(train_doc, "batch_size", int, default=128),
            steps=_expect(train_doc, "steps", int, default=300),
            learning_rate=float(
                _expect(train_doc, "learning_rate", (int, float), default=1e-3)
            ),
            theta_learning_rate=float(
                _expect(train_doc, "theta_learning_rate", (int, float), default=1e-2)
            ),
            seed=master_seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    transform_doc = _expect(doc, "transform", dict, default={})
    family = _expect(transform_doc, "family", str, default="single_spin_ry")
    if method in ("absnd_hf", "absnd_vm") and family not in (
        "single_spin_ry",
        "pairwise_blocks",
    ):
        raise ConfigError(f"unknown transform family {family!r}")

    inference = _expect(doc, "inference", dict, default={})
    s_values = _expect(inference, "s_values", list, default=[32])
    if not all(isinstance(s, int) and 1 <= s <= (1 << n_sites) for s in s_values):
        raise ConfigError("inference.s_values must be integers within the basis size")
    temperature = float(_expect(inference, "temperature", (int, float), default=1.2))
    if temperature <= 0:
        raise ConfigError("inference.temperature must be positive")
    max_draws = _expect(inference, "max_draws", int, default=None)

    scan = _expect(doc, "scan", dict, default={})
    h_values = [float(v) for v in _expect(scan, "h_values", list, default=[])]
    if any(v < 0 for v in h_values):
        raise ConfigError("scan.h_values must be non-negative")
    temperatures = [
        float(v) for v in _expect(scan, "temperatures", list, default=[1.0, 1.3])
    ]
    n_seeds = _expect(scan, "n_seeds", int, default=1)
    if n_seeds < 1:
        raise ConfigError("scan.n_seeds must be at least 1")
    target_error = float(_expect(scan, "target_error", (int, float), default=0.01))
    s_cap = _expect(scan, "s_cap", int, default=1024)
    rotations = _expect(scan, "rotations", bool, default=False)

    return RunConfig(
        method=method,
        lattice=lattice,
        train=train,
        transform_family=family,
        s_values=sorted(set(s_values)),
        temperature=temperature,
        max_draws=max_draws,
        h_values=h_values,
        temperatures=temperatures,
        n_seeds=n_seeds,
        target_error=target_error,
        s_cap=s_cap,
        rotations=rotations,
        master_seed=master_seed,
        raw=doc,
    )
