"""Desk-scale RMSE comparison of the three solvers across workload families.

Prints one row per family with RMSE under the optimal, Fourier and fixed-basis
solvers at privacy cost rho, in the layout of a results table.

    python scripts/solver_comparison.py --n 10 --d 3
"""
from __future__ import annotations

import argparse
import json
import time
from dataclasses import asdict, dataclass, field

from dcmm import Schema, SolverConfig, WorkloadSpec, build_workload, plan_workload
from dcmm.assemble import evaluate

FAMILIES = ["marginal", "prefix", "range", "circular", "affine", "abs", "random"]


@dataclass
class ComparisonConfig:
    n: int = 10
    d: int = 3
    rho: float = 1.0
    families: list = field(default_factory=lambda: list(FAMILIES))
    solvers: list = field(default_factory=lambda: ["optimal", "fourier", "fixed_basis"])
    basis: str = "sub"


def compare(cfg: ComparisonConfig) -> list[dict]:
    schema = Schema.uniform(cfg.n, cfg.d)
    rows = []
    for fam in cfg.families:
        wl = build_workload(schema, WorkloadSpec(fam, (1, 2)))
        rec = {"family": fam, "queries": len(wl)}
        for s in cfg.solvers:
            t = time.perf_counter()
            mech, subs = plan_workload(wl, SolverConfig(kind=s, basis=cfg.basis), cfg.rho)
            rec[s] = evaluate(wl, mech, subs)["rmse"]
            rec[f"{s}_s"] = time.perf_counter() - t
        rows.append(rec)
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--d", type=int, default=3)
    ap.add_argument("--rho", type=float, default=1.0)
    ap.add_argument("--families", nargs="*", default=FAMILIES)
    ap.add_argument("--basis", default="sub")
    ap.add_argument("--json", action="store_true")
    a = ap.parse_args()
    cfg = ComparisonConfig(a.n, a.d, a.rho, a.families, basis=a.basis)
    rows = compare(cfg)
    if a.json:
        print(json.dumps({"config": asdict(cfg), "rows": rows}, indent=1))
        return
    print(f"schema [{cfg.n}]^{cfg.d}, rho={cfg.rho}")
    print(f"{'family':<10} {'#queries':>9} {'optimal':>10} {'fourier':>10} {'fixed':>10} {'gain':>7}")
    for r in rows:
        gain = 1 - r["optimal"] / r["fourier"]
        print(f"{r['family']:<10} {r['queries']:>9} {r['optimal']:>10.4f} {r['fourier']:>10.4f} {r['fixed_basis']:>10.4f} {gain:>6.1%}")


if __name__ == "__main__":
    main()
