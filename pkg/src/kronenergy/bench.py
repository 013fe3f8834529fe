"""Timing runs of the energy computation on the heat model."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import astuple, dataclass, fields

import numpy as np

from .energy import compute_energy
from .models import HeatModelConfig, build_heat_fem

__all__ = ["BenchRecord", "CSV_FIELDS", "default_reps", "run_bench", "write_csv", "read_csv", "loglog_slope"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BenchRecord:
    n: int
    d: int
    eta: float
    kind: str
    energy_x0: float
    wall_s: float
    riccati_res: float
    kway_res_max: float
    reps: int

    def __post_init__(self):
        if not self.wall_s > 0:
            raise ValueError("wall_s must be positive")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")


CSV_FIELDS = tuple(f.name for f in fields(BenchRecord))


def default_reps(n):
    return 10 if n <= 63 else 1


def run_one(model, d, eta=0.5, kind="future", reps=1):
    """Mean wall time of ``reps`` energy computations (compute call only)."""
    walls = []
    for _ in range(reps):
        t0 = time.perf_counter()
        E = compute_energy(model.sys, eta, d, kind)
        walls.append(time.perf_counter() - t0)
    kres = E.info["kway_residuals"]
    rec = BenchRecord(
        n=model.n, d=d, eta=float(eta), kind=kind, energy_x0=float(E(model.x0)),
        wall_s=float(np.mean(walls)), riccati_res=float(E.info["riccati_residual"]),
        kway_res_max=float(max(kres.values(), default=0.0)), reps=reps,
    )
    log.info("bench n=%d d=%d: %.4fs over %d reps, E(x0)=%.10g", rec.n, d, rec.wall_s, reps, rec.energy_x0)
    return rec


def run_bench(degrees, sizes, reps=None, eta=0.5, kind="future", lumped=False):
    """One :class:`BenchRecord` per ``(d, n)``, sorted by ``(d, n)``.

    ``sizes`` are state dimensions ``n``; the heat model is built with
    ``N = n + 1`` elements, so ``n + 1`` must be a multiple of 4.
    ``reps=None`` uses 10 repetitions for ``n <= 63`` and 1 otherwise.
    """
    records = []
    models = {n: build_heat_fem(HeatModelConfig(N=n + 1, lumped=lumped)) for n in sorted(set(sizes))}
    for d in sorted(set(degrees)):
        for n, model in models.items():
            r = default_reps(n) if reps is None else reps
            records.append(run_one(model, d, eta, kind, r))
    return records


def write_csv(records, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in sorted(records, key=lambda r: (r.d, r.n)):
        w.writerow([repr(v) if isinstance(v, float) else v for v in astuple(r)])


def read_csv(fh):
    rd = csv.DictReader(fh)
    if tuple(rd.fieldnames or ()) != CSV_FIELDS:
        raise ValueError(f"unexpected CSV header {rd.fieldnames}")
    types = {f.name: f.type for f in fields(BenchRecord)}
    conv = {"int": int, "float": float, "str": str}
    return [BenchRecord(**{k: conv[types[k]](v) for k, v in row.items()}) for row in rd]


def loglog_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])
