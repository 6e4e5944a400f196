"""Command-line driver: ``plan`` → ``measure`` → ``answer``, plus ``report``.

Only ``measure`` reads data. ``plan`` writes ``plan.json`` (deterministic) and
``timings.json`` into ``--out``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import assemble, bundle
from .data import load_csv
from .privacy import to_approx_dp, to_gaussian_dp
from .schema import Schema
from .solvers import SolverConfig
from .workload import Workload, WorkloadSpec, build_workload


def load_workload(path, schema: Schema | None) -> Workload:
    """Either a workload spec (has ``family``) or a serialized workload (has ``coeffs``)."""
    obj = json.loads(Path(path).read_text())
    if "family" in obj:
        if schema is None:
            raise ValueError("a workload spec needs --schema")
        return build_workload(schema, WorkloadSpec.from_dict(obj))
    wl = Workload.from_dict(obj)
    if schema is not None and wl.schema != schema:
        raise ValueError("workload file's schema differs from --schema")
    return wl


def _config(args, kind) -> SolverConfig:
    return SolverConfig(kind=kind, basis=args.basis, cell_cap=args.cell_cap, fallback=args.fallback, tol=args.tol)


def cmd_plan(args) -> int:
    if args.rho <= 0:
        raise ValueError("--rho must be > 0")
    schema = Schema.load(args.schema)
    wl = load_workload(args.workload, schema)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mech, subs = assemble.plan_workload(wl, _config(args, args.solver), args.rho, args.jobs)
    t = time.perf_counter()
    ev = assemble.evaluate(wl, mech, subs)
    mech.timings["assemble"] += time.perf_counter() - t
    mech.timings["total"] += time.perf_counter() - t
    extra = {
        "solver": SolverConfig(kind=args.solver).kind,
        "mu": to_gaussian_dp(args.rho),
        "queries": len(wl),
        "predicted": {"rmse": ev["rmse"], "wrmse": ev["wrmse"]},
    }
    bundle.save_bundle(out / "plan.json", mech, extra)
    timings = dict(mech.timings, peak_mb=assemble.peak_memory_mb(), subworkloads=len(subs))
    (out / "timings.json").write_text(bundle.dumps(timings))
    rows = [(extra["solver"], ev["rmse"], ev["wrmse"])]
    for other in args.compare or []:
        m2, _ = assemble.plan_workload(wl, _config(args, other), args.rho, args.jobs)
        e2 = assemble.evaluate(wl, m2, subs)
        rows.append((SolverConfig(kind=other).kind, e2["rmse"], e2["wrmse"]))
    print(f"queries {len(wl)}  subworkloads {len(subs)}  rho {args.rho:g}")
    print(f"{'solver':<12} {'RMSE':>14} {'WRMSE':>14}")
    for name, r, w in rows:
        print(f"{name:<12} {r:>14.6g} {w:>14.6g}")
    if args.compare:
        (out / "compare.json").write_text(bundle.dumps({n: {"rmse": r, "wrmse": w} for n, r, w in rows}))
    return 0


def cmd_measure(args) -> int:
    mech, _ = bundle.load_bundle(args.bundle)
    data = load_csv(args.data, mech.schema, args.categories)
    meas = assemble.measure(mech, data, args.seed)
    bundle.save_measurements(args.out, meas, args.seed)
    print(f"measured {sum(len(m.z) for m in meas.values())} strategy queries over {len(meas)} subworkloads")
    return 0


def cmd_answer(args) -> int:
    mech, _ = bundle.load_bundle(args.bundle)
    meas = bundle.load_measurements(args.measurements)
    wl = load_workload(args.workload, mech.schema)
    answers, var = assemble.answer_workload(wl, mech, meas)
    bundle.save_answers(args.out, answers, var)
    print(f"answered {len(wl)} queries -> {args.out}")
    return 0


def build_report(obj: dict, timings: dict | None, eps_list) -> dict:
    rho = obj["rho"]
    return {
        "rho": rho,
        "mu": to_gaussian_dp(rho),
        "approx_dp": [{"epsilon": e, "delta": to_approx_dp(rho, e)} for e in eps_list],
        "rmse": obj.get("predicted", {}).get("rmse"),
        "wrmse": obj.get("predicted", {}).get("wrmse"),
        "solver": obj.get("solver"),
        "subworkloads": len(obj["plans"]),
        "timings": timings,
    }


def format_report(rep: dict) -> str:
    lines = [f"rho  {rep['rho']:g}", f"mu   {rep['mu']:.6g}"]
    for r in rep["approx_dp"]:
        lines.append(f"eps  {r['epsilon']:<8g} delta {r['delta']:.6e}")
    if rep["rmse"] is not None:
        lines.append(f"RMSE {rep['rmse']:.6g}  WRMSE {rep['wrmse']:.6g}")
    t = rep["timings"]
    if t:
        lines.append(f"{'Decomp':>9} {'Solve':>9} {'Assem':>9} {'Total':>9} {'Mem':>10}")
        lines.append(
            f"{t['decompose']:>8.2f}s {t['solve']:>8.2f}s {t['assemble']:>8.2f}s {t['total']:>8.2f}s {t['peak_mb']:>7.0f} MB"
        )
    return "\n".join(lines)


def cmd_report(args) -> int:
    _, obj = bundle.load_bundle(args.bundle)
    tpath = Path(args.bundle).with_name("timings.json")
    timings = json.loads(tpath.read_text()) if tpath.exists() else None
    rep = build_report(obj, timings, args.eps or [])
    print(json.dumps(rep, sort_keys=True, indent=1) if args.json else format_report(rep))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dcmm", description="Residual-decomposed gaussian matrix mechanism")
    p.add_argument("-v", "--verbose", action="store_true")
    sp = p.add_subparsers(dest="cmd", required=True)

    pl = sp.add_parser("plan", help="decompose, solve and rescale (no data access)")
    pl.add_argument("--schema", required=True)
    pl.add_argument("--workload", required=True, help="workload spec JSON or serialized workload")
    pl.add_argument("--rho", type=float, default=1.0)
    solvers = ["optimal", "fourier", "fixed-basis"]
    pl.add_argument("--solver", choices=solvers, default="optimal")
    pl.add_argument("--compare", nargs="*", choices=solvers, help="also predict RMSE under these solvers")
    pl.add_argument("--basis", choices=["sub", "fourier", "residual"], default="sub")
    pl.add_argument("--cell-cap", type=int, default=4000)
    pl.add_argument("--fallback", choices=solvers, default=None, help="solver for marginals over --cell-cap")
    pl.add_argument("--tol", type=float, default=1e-10)
    pl.add_argument("--jobs", type=int, default=1)
    pl.add_argument("--out", required=True, help="output directory")
    pl.set_defaults(func=cmd_plan)

    me = sp.add_parser("measure", help="run the mechanism on a dataset")
    me.add_argument("--bundle", required=True)
    me.add_argument("--data", required=True, help="CSV file")
    me.add_argument("--categories", default=None, help="JSON label dictionary for categorical columns")
    me.add_argument("--seed", type=int, required=True)
    me.add_argument("--out", required=True)
    me.set_defaults(func=cmd_measure)

    an = sp.add_parser("answer", help="reconstruct workload answers from measurements")
    an.add_argument("--bundle", required=True)
    an.add_argument("--measurements", required=True)
    an.add_argument("--workload", required=True)
    an.add_argument("--out", required=True)
    an.set_defaults(func=cmd_answer)

    rp = sp.add_parser("report", help="privacy parameters, predicted error and timings")
    rp.add_argument("--bundle", required=True)
    rp.add_argument("--eps", type=float, nargs="*", default=[])
    rp.add_argument("--json", action="store_true")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
