"""Result rows and their CSV/JSON persistence."""

from __future__ import annotations

import csv
import hashlib
import json
import platform
from dataclasses import asdict, dataclass

import numpy as np

VARIATIONAL_SLACK = 1e-9


class NumericalFailure(RuntimeError):
    """Eigensolver breakdown or a violated variational bound (exit code 3)."""


@dataclass
class RunRecord:
    """One evaluation row; ``wall_time`` is the only non-reproducible field."""

    method: str
    kind: str
    n_sites: int
    h: float
    seed: int
    s_unique: int
    n_drawn: int
    energy: float
    reference: float
    reference_source: str
    rel_error: float
    censored: bool
    wall_time: float
    theta_hash: str


def theta_digest(theta) -> str:
    """Short stable hash of an angle vector ('-' when no transform is used)."""
    if theta is None:
        return "-"
    data = np.ascontiguousarray(np.asarray(theta, dtype=np.float64))
    return hashlib.sha256(data.tobytes()).hexdigest()[:16]


def make_record(
    *,
    method: str,
    kind: str,
    n_sites: int,
    h: float,
    seed: int,
    s_unique: int,
    n_drawn: int,
    energy: float,
    reference: float,
    reference_source: str,
    wall_time: float,
    theta=None,
    censored: bool = False,
) -> RunRecord:
    """Assemble a row, recomputing the relative error and enforcing the
    variational bound ``E >= E0 - 1e-9``."""
    if energy < reference - VARIATIONAL_SLACK:
        raise NumericalFailure(
            f"energy {energy!r} fell below reference {reference!r}"
        )
    if reference == 0.0:
        raise NumericalFailure("reference energy is zero; relative error undefined")
    rel = abs((energy - reference) / reference)
    return RunRecord(
        method=method,
        kind=kind,
        n_sites=n_sites,
        h=h,
        seed=seed,
        s_unique=s_unique,
        n_drawn=n_drawn,
        energy=energy,
        reference=reference,
        reference_source=reference_source,
        rel_error=rel,
        censored=censored,
        wall_time=wall_time,
        theta_hash=theta_digest(theta),
    )


_FIELDS = list(RunRecord.__dataclass_fields__)


def write_csv(path, records: list[RunRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_FIELDS)
        for rec in records:
            row = asdict(rec)
            writer.writerow([_format(row[name]) for name in _FIELDS])


def _format(value):
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return value


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_manifest(path, config_doc: dict, master_seed: int, command: str) -> None:
    """Echo the configuration plus environment versions next to the results."""
    import scipy

    import sbnd

    doc = {
        "command": command,
        "master_seed": master_seed,
        "config": config_doc,
        "versions": {
            "sbnd": sbnd.__version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
