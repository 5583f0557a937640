"""Seeded end-to-end pipelines behind the CLI subcommands.

Every command builds the testbed observable, fits the configured solver
(once per requested seed), evaluates it over the requested unique-set
sizes, and returns plain result rows.  All randomness flows through named
sub-streams of the master seed, so repeated runs reproduce identical rows
apart from wall-time fields.
"""

from __future__ import annotations

import time

from ..estimators import ABSNDSolver, ExactSampleSBD, SNDSolver, prefix_set
from ..ising import build_hamiltonian, exact_diag, jw_energy_1d
from ..paulis import PauliSum
from .config import ConfigError, RunConfig
from .records import RunRecord, make_record
from .seeds import substream

_METHOD_LABELS = {
    "sbd_gs": "sbd_gs",
    "snd": "snd",
    "absnd_hf": "absnd_hf",
    "absnd_vm": "absnd_vm",
    "absnd_circuit": "absnd_circuit",
}


def reference_energy(obs: PauliSum, lattice) -> tuple[float, str]:
    """Exact reference: free-fermion sum for the ferromagnetic chain,
    exact diagonalization otherwise."""
    if lattice.kind == "chain_periodic" and lattice.couplings is None and lattice.seed is None:
        return jw_energy_1d(lattice.n_sites, lattice.h), "jw_1d"
    return exact_diag(obs, want_vector=False).energy, "exact_diag"


def _make_solver(cfg: RunConfig, method: str, seed: int):
    if method == "snd":
        return SNDSolver(
            steps=cfg.train.steps,
            k_batches=cfg.train.k_batches,
            batch_size=cfg.train.batch_size,
            learning_rate=cfg.train.learning_rate,
            temperature=cfg.temperature,
            seed=seed,
        )
    if method in ("absnd_hf", "absnd_vm", "absnd_circuit"):
        transform = "circuit" if method == "absnd_circuit" else cfg.transform_family
        return ABSNDSolver(
            steps=cfg.train.steps,
            k_batches=cfg.train.k_batches,
            batch_size=cfg.train.batch_size,
            learning_rate=cfg.train.learning_rate,
            theta_learning_rate=cfg.train.theta_learning_rate,
            transform=transform,
            variant="vonmises" if method == "absnd_vm" else "hf",
            temperature=cfg.temperature,
            seed=seed,
        )
    if method == "sbd_gs":
        return ExactSampleSBD(rotations=cfg.rotations, seed=seed)
    raise ConfigError(f"unknown method {method!r}")


def _fit(solver, obs, cfg: RunConfig, method: str, h: float, seed_idx: int):
    rng = substream(cfg.master_seed, f"fit:{method}:h={h!r}:seed={seed_idx}")
    return solver.fit(obs, rng=rng)


def _solver_theta(solver):
    return getattr(solver, "theta_", None)


def _evaluate_rows(
    solver,
    cfg: RunConfig,
    method: str,
    lattice,
    e0: float,
    e0_source: str,
    seed_idx: int,
    s_values: list[int],
    *,
    stream_tag: str = "inference",
    temperature: float | None = None,
) -> list[RunRecord]:
    rng = substream(
        cfg.master_seed, f"{stream_tag}:{method}:h={lattice.h!r}:seed={seed_idx}"
    )
    t0 = time.perf_counter()
    kwargs = {"rng": rng, "max_draws": cfg.max_draws}
    if temperature is not None:
        kwargs["temperature"] = temperature
    samples = solver.sample_unique(max(s_values), **kwargs)
    rows = []
    for s in s_values:
        if s <= len(samples.config_set):
            cset, n_at = prefix_set(samples, s)
            censored = False
        else:
            cset, n_at = samples.config_set, samples.n_drawn
            censored = True
        result = solver.energy_for(cset)
        rows.append(
            make_record(
                method=method,
                kind=lattice.kind,
                n_sites=lattice.n_sites,
                h=lattice.h,
                seed=seed_idx,
                s_unique=len(cset),
                n_drawn=n_at,
                energy=result.energy,
                reference=e0,
                reference_source=e0_source,
                wall_time=time.perf_counter() - t0,
                theta=_solver_theta(solver),
                censored=censored,
            )
        )
    return rows


def cmd_sbd_gs(cfg: RunConfig) -> list[RunRecord]:
    """Baseline projection with configurations drawn from the exact ground
    state, optionally with adaptive single-spin rotations per drawn set."""
    obs = build_hamiltonian(cfg.lattice)
    records = []
    for seed_idx in range(cfg.n_seeds):
        solver = _make_solver(cfg, "sbd_gs", cfg.master_seed)
        _fit(solver, obs, cfg, "sbd_gs", cfg.lattice.h, seed_idx)
        e0 = solver.solution_.energy
        records += _evaluate_rows(
            solver, cfg, "sbd_gs", cfg.lattice, e0, "exact_diag", seed_idx, cfg.s_values
        )
    return records


def _train_eval(cfg: RunConfig, method: str, lattice, obs, seed_idx: int):
    e0, source = reference_energy(obs, lattice)
    solver = _make_solver(cfg, method, cfg.master_seed + seed_idx)
    _fit(solver, obs, cfg, method, lattice.h, seed_idx)
    rows = _evaluate_rows(
        solver, cfg, method, lattice, e0, source, seed_idx, cfg.s_values
    )
    return solver, rows


def cmd_snd_train(cfg: RunConfig, out_dir=None) -> list[RunRecord]:
    obs = build_hamiltonian(cfg.lattice)
    records = []
    for seed_idx in range(cfg.n_seeds):
        solver, rows = _train_eval(cfg, "snd", cfg.lattice, obs, seed_idx)
        records += rows
        if out_dir is not None:
            solver.save_model(f"{out_dir}/snd_seed{seed_idx}.ckpt")
    return records


def cmd_absnd_train(cfg: RunConfig, out_dir=None) -> list[RunRecord]:
    if not cfg.method.startswith("absnd"):
        raise ConfigError("absnd-train requires an absnd_* method")
    obs = build_hamiltonian(cfg.lattice)
    records = []
    for seed_idx in range(cfg.n_seeds):
        solver, rows = _train_eval(cfg, cfg.method, cfg.lattice, obs, seed_idx)
        records += rows
        if out_dir is not None:
            solver.save_model(f"{out_dir}/{cfg.method}_seed{seed_idx}.ckpt")
    return records


def cmd_scan_h(cfg: RunConfig) -> list[RunRecord]:
    """Retrain at every field value on the grid and evaluate the S list."""
    if not cfg.h_values:
        raise ConfigError("scan-h needs scan.h_values")
    records = []
    for h in cfg.h_values:
        lattice = cfg.with_lattice_h(h)
        obs = build_hamiltonian(lattice)
        for seed_idx in range(cfg.n_seeds):
            if cfg.method == "sbd_gs":
                solver = _make_solver(cfg, "sbd_gs", cfg.master_seed)
                _fit(solver, obs, cfg, "sbd_gs", h, seed_idx)
                e0 = solver.solution_.energy
                records += _evaluate_rows(
                    solver, cfg, "sbd_gs", lattice, e0, "exact_diag", seed_idx, cfg.s_values
                )
            else:
                _, rows = _train_eval(cfg, cfg.method, lattice, obs, seed_idx)
                records += rows
    return records


def _doubling_values(cap: int) -> list[int]:
    out, s = [], 1
    while s <= cap:
        out.append(s)
        s *= 2
    return out


def cmd_required_s(cfg: RunConfig) -> list[RunRecord]:
    """Smallest S (stepping upward by doubling) reaching the target error;
    a row at the cap is marked censored when the target is never met."""
    h_values = cfg.h_values or [cfg.lattice.h]
    records = []
    for h in h_values:
        lattice = cfg.with_lattice_h(h)
        obs = build_hamiltonian(lattice)
        for seed_idx in range(cfg.n_seeds):
            if cfg.method == "sbd_gs":
                solver = _make_solver(cfg, "sbd_gs", cfg.master_seed)
                _fit(solver, obs, cfg, "sbd_gs", h, seed_idx)
                e0, source = solver.solution_.energy, "exact_diag"
            else:
                e0, source = reference_energy(obs, lattice)
                solver = _make_solver(cfg, cfg.method, cfg.master_seed + seed_idx)
                _fit(solver, obs, cfg, cfg.method, h, seed_idx)
            rng = substream(
                cfg.master_seed, f"required_s:{cfg.method}:h={h!r}:seed={seed_idx}"
            )
            t0 = time.perf_counter()
            s_cap = min(cfg.s_cap, 1 << lattice.n_sites)
            samples = solver.sample_unique(s_cap, rng=rng, max_draws=cfg.max_draws)
            hit = None
            for s in _doubling_values(s_cap):
                if s > len(samples.config_set):
                    break
                cset, n_at = prefix_set(samples, s)
                result = solver.energy_for(cset)
                rel = abs((result.energy - e0) / e0)
                if rel <= cfg.target_error:
                    hit = (s, n_at, result.energy)
                    break
            if hit is None:
                cset = samples.config_set
                result = solver.energy_for(cset)
                hit = (len(cset), samples.n_drawn, result.energy)
                censored = True
            else:
                censored = False
            records.append(
                make_record(
                    method=cfg.method,
                    kind=lattice.kind,
                    n_sites=lattice.n_sites,
                    h=h,
                    seed=seed_idx,
                    s_unique=hit[0],
                    n_drawn=hit[1],
                    energy=hit[2],
                    reference=e0,
                    reference_source=source,
                    wall_time=time.perf_counter() - t0,
                    theta=_solver_theta(solver),
                    censored=censored,
                )
            )
    return records


def cmd_temp_sweep(cfg: RunConfig) -> list[RunRecord]:
    """Fix one trained model; per temperature, record the unique-draw yield
    over the full draw budget plus energies at the configured S values."""
    if cfg.method == "sbd_gs":
        raise ConfigError("temp-sweep needs a neural method")
    obs = build_hamiltonian(cfg.lattice)
    lattice = cfg.lattice
    e0, source = reference_energy(obs, lattice)
    records = []
    budget = cfg.max_draws if cfg.max_draws is not None else 10_000
    for seed_idx in range(cfg.n_seeds):
        solver = _make_solver(cfg, cfg.method, cfg.master_seed + seed_idx)
        _fit(solver, obs, cfg, cfg.method, lattice.h, seed_idx)
        for temp in cfg.temperatures:
            rng = substream(
                cfg.master_seed,
                f"temp_sweep:{cfg.method}:T={temp!r}:seed={seed_idx}",
            )
            t0 = time.perf_counter()
            ratio_samples = solver.sample_unique(
                1 << lattice.n_sites, temperature=temp, rng=rng, max_draws=budget
            )
            records.append(
                make_record(
                    method=f"{cfg.method}@T={temp:g}",
                    kind=lattice.kind,
                    n_sites=lattice.n_sites,
                    h=lattice.h,
                    seed=seed_idx,
                    s_unique=len(ratio_samples.config_set),
                    n_drawn=ratio_samples.n_drawn,
                    energy=solver.energy_for(ratio_samples.config_set).energy,
                    reference=e0,
                    reference_source=source,
                    wall_time=time.perf_counter() - t0,
                    theta=_solver_theta(solver),
                    censored=ratio_samples.exhausted,
                )
            )
            for s in cfg.s_values:
                if s > len(ratio_samples.config_set):
                    continue
                cset, n_at = prefix_set(ratio_samples, s)
                result = solver.energy_for(cset)
                records.append(
                    make_record(
                        method=f"{cfg.method}@T={temp:g}",
                        kind=lattice.kind,
                        n_sites=lattice.n_sites,
                        h=lattice.h,
                        seed=seed_idx,
                        s_unique=s,
                        n_drawn=n_at,
                        energy=result.energy,
                        reference=e0,
                        reference_source=source,
                        wall_time=time.perf_counter() - t0,
                        theta=_solver_theta(solver),
                    )
                )
    return records


def cmd_circuit_demo(cfg: RunConfig) -> list[RunRecord]:
    """Three-way comparison at small size: plain neural sampling, adaptive
    single-spin rotations, and the circuit basis change."""
    if cfg.lattice.n_sites > 8:
        raise ConfigError("circuit-demo is limited to 8 sites")
    h_values = cfg.h_values or [cfg.lattice.h]
    records = []
    for h in h_values:
        lattice = cfg.with_lattice_h(h)
        obs = build_hamiltonian(lattice)
        for seed_idx in range(cfg.n_seeds):
            for method in ("snd", "absnd_hf", "absnd_circuit"):
                _, rows = _train_eval(cfg, method, lattice, obs, seed_idx)
                records += rows
    return records


COMMANDS = {
    "sbd-gs": cmd_sbd_gs,
    "snd-train": cmd_snd_train,
    "absnd-train": cmd_absnd_train,
    "scan-h": cmd_scan_h,
    "required-s": cmd_required_s,
    "temp-sweep": cmd_temp_sweep,
    "circuit-demo": cmd_circuit_demo,
}
