"""On-disk formats: plan bundle, measurements and answers.

The plan bundle is deterministic JSON (sorted keys, fixed float formatting via
``repr``) so identical plans produce byte-identical files. Strategy matrices
are stored as base64 of little-endian float64 in row-major order.
"""
from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .assemble import AssembledMechanism, NoisyMeasurement
from .schema import Schema, parse_subset_key, subset_key
from .solvers import FourierPlan, MechanismPlan

FORMAT = "dcmm-plan/1"


def encode_array(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def decode_array(s: str, shape) -> np.ndarray:
    return np.frombuffer(base64.b64decode(s), dtype="<f8").reshape(shape).astype(np.float64)


def plan_to_dict(plan: MechanismPlan, sigma2: float) -> dict:
    out = {
        "subset": subset_key(plan.subset),
        "shape": list(plan.shape),
        "kind": plan.kind,
        "rows": plan.rows,
        "strategy": encode_array(plan.strategy),
        "noise": encode_array(plan.noise),
        "noise_is_diagonal": True,
        "loss": plan.loss,
        "sigma2": sigma2,
        "iterations": plan.iterations,
        "gap": plan.gap,
        "rcond": plan.rcond,
    }
    if isinstance(plan, FourierPlan):
        out["fourier"] = {"frequencies": plan.frequencies.tolist(), "theta": encode_array(plan.theta)}
    return out


def plan_from_dict(obj: dict) -> tuple[MechanismPlan, float]:
    shape = tuple(obj["shape"])
    cells = int(np.prod(shape)) if shape else 1
    B = decode_array(obj["strategy"], (obj["rows"], cells))
    noise = decode_array(obj["noise"], (obj["rows"],))
    args = dict(
        subset=parse_subset_key(obj["subset"]), shape=shape, strategy=B, noise=noise, loss=obj["loss"],
        kind=obj["kind"], iterations=obj["iterations"], gap=obj["gap"], rcond=obj["rcond"],
    )
    if "fourier" in obj:
        freqs = np.array(obj["fourier"]["frequencies"], dtype=np.int64).reshape(-1, len(shape))
        theta = decode_array(obj["fourier"]["theta"], (len(freqs),))
        return FourierPlan(**args, frequencies=freqs, theta=theta), obj["sigma2"]
    return MechanismPlan(**args), obj["sigma2"]


def mechanism_to_dict(mech: AssembledMechanism, extra: dict | None = None) -> dict:
    out = {
        "format": FORMAT,
        "schema": mech.schema.to_dict(),
        "rho": mech.rho,
        "plans": [plan_to_dict(p, mech.sigma2[k]) for k, p in mech.plans.items()],
    }
    out.update(extra or {})
    return out


def mechanism_from_dict(obj: dict) -> AssembledMechanism:
    if obj.get("format") != FORMAT:
        raise ValueError(f"not a plan bundle (format {obj.get('format')!r})")
    plans, sigma2 = {}, {}
    for p in obj["plans"]:
        plan, s2 = plan_from_dict(p)
        plans[plan.subset] = plan
        sigma2[plan.subset] = s2
    return AssembledMechanism(Schema.from_dict(obj["schema"]), plans, sigma2, obj["rho"])


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def save_bundle(path, mech: AssembledMechanism, extra: dict | None = None):
    Path(path).write_text(dumps(mechanism_to_dict(mech, extra)))


def load_bundle(path) -> tuple[AssembledMechanism, dict]:
    obj = json.loads(Path(path).read_text())
    return mechanism_from_dict(obj), obj


def save_measurements(path, measurements: dict, seed: int):
    recs = [
        {"subset": subset_key(k), "sigma2": m.sigma2, "z": np.asarray(m.z).tolist()}
        for k, m in measurements.items()
    ]
    Path(path).write_text(dumps({"seed": seed, "measurements": recs}))


def load_measurements(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"measurements file {path} does not exist; run `measure` first")
    obj = json.loads(path.read_text())
    out = {}
    for r in obj["measurements"]:
        key = parse_subset_key(r["subset"])
        out[key] = NoisyMeasurement(key, np.array(r["z"], dtype=np.float64), r["sigma2"])
    return out


def save_answers(path, answers, variances):
    with open(path, "w") as fh:
        for i, (a, v) in enumerate(zip(answers, variances)):
            fh.write(json.dumps({"query_id": i, "answer": float(a), "variance": float(v)}) + "\n")


def load_answers(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
