"""Plan + measure + answer a 1-way and 2-way prefix workload on [n]^d; print phase timings.

    python scripts/scaling_smoke.py --n 10 --d 20 [--json]
"""
from __future__ import annotations

import argparse
import json
import time
from dataclasses import asdict, dataclass

from dcmm import SolverConfig, Schema, WorkloadSpec, answer_workload, build_workload, measure, plan_workload, synth
from dcmm.assemble import evaluate, peak_memory_mb


@dataclass
class SmokeConfig:
    n: int = 10
    d: int = 20
    family: str = "prefix"
    solver: str = "optimal"
    records: int = 10_000
    rho: float = 1.0
    seed: int = 0


def run(cfg: SmokeConfig) -> dict:
    t0 = time.perf_counter()
    schema = Schema.uniform(cfg.n, cfg.d)
    wl = build_workload(schema, WorkloadSpec(cfg.family, (1, 2)))
    t_build = time.perf_counter() - t0
    mech, subs = plan_workload(wl, SolverConfig(kind=cfg.solver), cfg.rho)
    t1 = time.perf_counter()
    ev = evaluate(wl, mech, subs)
    data = synth(schema, cfg.records, cfg.seed)
    meas = measure(mech, data, cfg.seed)
    answer_workload(wl, mech, meas, subs)
    t_answer = time.perf_counter() - t1
    total = time.perf_counter() - t0
    return {
        "config": asdict(cfg),
        "queries": len(wl),
        "views": sum(1 for k in subs if k),
        "subworkloads": len(subs),
        "rmse": ev["rmse"],
        "build": t_build,
        "decompose": mech.timings["decompose"],
        "solve": mech.timings["solve"],
        "assemble": mech.timings["assemble"] + t_answer,
        "total": total,
        "peak_mb": peak_memory_mb(),
    }


def table(r: dict) -> str:
    head = f"{'Decomp':>9} {'Solve':>9} {'Assem':>9} {'Total':>9} {'Mem':>10}"
    row = f"{r['decompose']:>8.2f}s {r['solve']:>8.2f}s {r['assemble']:>8.2f}s {r['total']:>8.2f}s {r['peak_mb']:>7.0f} MB"
    return head + "\n" + row


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    for f, v in asdict(SmokeConfig()).items():
        ap.add_argument(f"--{f}", type=type(v), default=v)
    ap.add_argument("--json", action="store_true")
    args = vars(ap.parse_args())
    as_json = args.pop("json")
    r = run(SmokeConfig(**args))
    if as_json:
        print(json.dumps(r))
    else:
        print(f"[{r['config']['n']}]^{r['config']['d']} {r['config']['family']}: {r['queries']} queries, "
              f"{r['views']} views, RMSE {r['rmse']:.4g}")
        print(table(r))


if __name__ == "__main__":
    main()
