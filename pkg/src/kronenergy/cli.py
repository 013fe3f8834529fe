"""Command-line interface.

    kronenergy model build --N 16 --out heat15.json
    kronenergy energy compute --model heat15.json --kind future --eta 0.5 --degree 4 --out w.json
    kronenergy energy eval --coeffs w.json --x0-model heat15.json
    kronenergy residual check --model heat15.json --coeffs w.json --eps-grid 1e-3:1e-1:9
    kronenergy bench --degrees 3 --sizes 7,15,31 --out bench.csv

Set ``KRONENERGY_NUM_THREADS`` to cap the BLAS/LAPACK thread pool.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__
from .bench import loglog_slope, run_bench, write_csv
from .energy import compute_energy, hjb_residual
from .errors import KronEnergyError
from .fileio import load_coeffs, load_model, save_coeffs, save_model
from .kronpoly import poly_eval
from .models import HeatModelConfig, build_heat_fem

log = logging.getLogger("kronenergy")

THREADS_ENV = "KRONENERGY_NUM_THREADS"
SLOPE_TOL = 0.3


def _int_list(s):
    return [int(v) for v in s.split(",") if v.strip()]


def parse_eps_grid(s):
    """``lo:hi:num`` (geometric) or a comma-separated list of positive values."""
    if ":" in s:
        lo, hi, num = s.split(":")
        grid = np.geomspace(float(lo), float(hi), int(num))
    else:
        grid = np.array([float(v) for v in s.split(",") if v.strip()])
    if grid.size < 2 or np.any(grid <= 0):
        raise argparse.ArgumentTypeError("eps grid needs at least two positive values")
    return grid


def _load_vector(path):
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path).ravel()
    if path.suffix == ".json":
        with open(path) as fh:
            return np.asarray(json.load(fh), dtype=float).ravel()
    return np.loadtxt(path, delimiter="," if "," in path.read_text() else None).ravel()


def cmd_model_build(args):
    model = build_heat_fem(HeatModelConfig(N=args.N, ell=args.ell, m=args.m, p_out=args.p, lumped=args.lumped))
    save_model(args.out, model)
    log.info("wrote heat model n=%d (N=%d, h=%g) to %s", model.n, args.N, model.h, args.out)
    print(f"n={model.n}")
    return 0


def cmd_energy_compute(args):
    sys_, _, _ = load_model(args.model)
    E = compute_energy(sys_, args.eta, args.degree, args.kind, schur_output=args.schur)
    paths = save_coeffs(args.out, E)
    for k, t in E.info["timings"].items():
        log.info("degree %s: %.4fs", k, t)
    log.info("wrote %s", ", ".join(map(str, paths)))
    return 0


def cmd_energy_eval(args):
    E = load_coeffs(args.coeffs)
    if args.x0 is not None:
        x0 = _load_vector(args.x0)
    else:
        _, x0, _ = load_model(args.x0_model)
        if x0 is None:
            raise ValueError(f"{args.x0_model} has no stored initial condition")
    if x0.size != E.n:
        raise ValueError(f"x0 has length {x0.size}, coefficients are for n={E.n}")
    if args.degree is not None:
        E = E.truncated(args.degree)
    value = poly_eval(E, x0)
    print(f"{value:.17g}")
    doc = {"kind": E.kind, "eta": E.eta, "n": E.n, "d": E.degree, "value": value}
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(doc, fh, indent=2)
    else:
        print(json.dumps(doc))
    return 0


def residual_report(sys_, E, x0, eps):
    r = np.array([abs(hjb_residual(sys_, E, e * x0)) for e in eps])
    scale = np.array([abs(poly_eval(E, e * x0)) for e in eps])
    expected = E.degree + 1
    report = {"kind": E.kind, "d": E.degree, "eps": eps.tolist(), "residual": r.tolist(), "expected_slope": expected}
    if np.all(r <= 1e-10 * np.maximum(scale, np.finfo(float).tiny)):
        report.update(slope=None, status="skipped", note="residual at machine precision")
        return report
    slope = loglog_slope(eps, np.maximum(r, np.finfo(float).tiny))
    ok = abs(slope - expected) <= SLOPE_TOL
    report.update(slope=slope, status="pass" if ok else "fail")
    return report


def cmd_residual_check(args):
    sys_, x0, _ = load_model(args.model)
    if args.x0 is not None:
        x0 = _load_vector(args.x0)
    if x0 is None:
        raise ValueError("no initial condition: pass --x0")
    E = load_coeffs(args.coeffs)
    if E.n != sys_.n:
        raise ValueError(f"coefficients are for n={E.n}, model has n={sys_.n}")
    report = residual_report(sys_, E, x0, args.eps_grid)
    for e, r in zip(report["eps"], report["residual"]):
        print(f"eps={e:.3e}  |residual|={r:.3e}")
    if report["slope"] is None:
        print(f"slope check skipped ({report['note']})")
    else:
        print(f"slope={report['slope']:.3f} expected={report['expected_slope']}+-{SLOPE_TOL} {report['status'].upper()}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(report, fh, indent=2)
    return 1 if args.strict and report["status"] == "fail" else 0


def cmd_bench(args):
    records = run_bench(args.degrees, args.sizes, reps=args.reps, eta=args.eta, kind=args.kind)
    if args.out == "-":
        write_csv(records, sys.stdout)
    else:
        with open(args.out, "w") as fh:
            write_csv(records, fh)
        log.info("wrote %d records to %s", len(records), args.out)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="kronenergy", description="Polynomial energy functions of polynomial-drift systems.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    model = sub.add_parser("model", help="model files").add_subparsers(dest="action", required=True)
    mb = model.add_parser("build", help="assemble the finite-element heat model")
    mb.add_argument("--N", type=int, required=True, help="number of elements (n = N - 1)")
    mb.add_argument("--ell", type=float, default=30.0)
    mb.add_argument("--m", type=int, default=4, help="input subdomains")
    mb.add_argument("--p", type=int, default=4, help="output subdomains")
    mb.add_argument("--lumped", action="store_true", help="lumped instead of consistent mass")
    mb.add_argument("--out", required=True)
    mb.set_defaults(func=cmd_model_build)

    energy = sub.add_parser("energy", help="energy coefficients").add_subparsers(dest="action", required=True)
    ec = energy.add_parser("compute", help="compute past or future energy coefficients")
    ec.add_argument("--model", required=True)
    ec.add_argument("--kind", choices=("past", "future"), required=True)
    ec.add_argument("--eta", type=float, required=True)
    ec.add_argument("--degree", type=int, required=True)
    ec.add_argument("--schur", choices=("real", "complex"), default="real")
    ec.add_argument("--out", required=True)
    ec.set_defaults(func=cmd_energy_compute)

    ev = energy.add_parser("eval", help="evaluate an energy at a state")
    ev.add_argument("--coeffs", required=True)
    src = ev.add_mutually_exclusive_group(required=True)
    src.add_argument("--x0", help="state vector file (.npy, .json or text)")
    src.add_argument("--x0-model", help="use the initial condition stored in a model file")
    ev.add_argument("--degree", type=int, help="truncate to this degree")
    ev.add_argument("--json", help="write the result as JSON here instead of stdout")
    ev.set_defaults(func=cmd_energy_eval)

    res = sub.add_parser("residual", help="HJB residual checks").add_subparsers(dest="action", required=True)
    rc = res.add_parser("check", help="log-log order of the HJB residual along eps * x0")
    rc.add_argument("--model", required=True)
    rc.add_argument("--coeffs", required=True)
    rc.add_argument("--eps-grid", type=parse_eps_grid, default=parse_eps_grid("1e-3:1e-1:9"))
    rc.add_argument("--x0", help="state vector file; defaults to the model's initial condition")
    rc.add_argument("--json")
    rc.add_argument("--strict", action="store_true", help="exit 1 when the slope check fails")
    rc.set_defaults(func=cmd_residual_check)

    b = sub.add_parser("bench", help="time energy computations on the heat model")
    b.add_argument("--degrees", type=_int_list, required=True)
    b.add_argument("--sizes", type=_int_list, required=True, help="state dimensions n (n + 1 divisible by 4)")
    b.add_argument("--reps", type=int, help="repetitions (default 10 for n <= 63, else 1)")
    b.add_argument("--eta", type=float, default=0.5)
    b.add_argument("--kind", choices=("past", "future"), default="future")
    b.add_argument("--out", default="-")
    b.set_defaults(func=cmd_bench)
    return p


def _thread_limit():
    value = os.environ.get(THREADS_ENV)
    if not value:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=int(value))


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        with _thread_limit():
            return args.func(args)
    except KronEnergyError as exc:
        log.error("solver error: %s", exc)
        return 3
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
