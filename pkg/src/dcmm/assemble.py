"""Planning, noise rescaling, measurement and reconstruction for a whole workload."""
from __future__ import annotations

import dataclasses
import hashlib
import logging
import resource
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import DatasetHandle, marginal
from .decompose import ZERO_TOL, Subworkload, build_subworkloads, decompose_query
from .schema import Schema
from .solvers import MechanismPlan, SolverConfig, solve, solver_weights
from .workload import LinearQuery, Workload

log = logging.getLogger(__name__)


@dataclass
class AssembledMechanism:
    schema: Schema
    plans: dict[tuple[int, ...], MechanismPlan]
    sigma2: dict[tuple[int, ...], float]
    rho: float
    timings: dict = field(default_factory=dict)

    def keys(self):
        return list(self.plans)

    def noise(self, key) -> np.ndarray:
        """Diagonal of the noise covariance actually added for ``key``."""
        return self.sigma2[key] * self.plans[key].noise

    @property
    def strategy_rows(self) -> int:
        return sum(p.rows for p in self.plans.values())


@dataclass(frozen=True)
class NoisyMeasurement:
    subset: tuple[int, ...]
    z: np.ndarray
    sigma2: float


def rescale(losses: dict, rho: float) -> dict:
    """Noise multipliers minimizing ``Σ σ²_A L_A`` subject to ``Σ 1/σ²_A = ρ``."""
    if rho <= 0:
        raise ValueError(f"rho must be > 0, got {rho}")
    bad = {k: v for k, v in losses.items() if not v > 0}
    if bad:
        raise ValueError(f"subworkload losses must be > 0, got {bad}")
    roots = {k: np.sqrt(v) for k, v in losses.items()}
    gamma = sum(roots.values()) / rho
    return {k: float(gamma / r) for k, r in roots.items()}


def _gram_digest(sub: Subworkload) -> str:
    G = np.ascontiguousarray(sub.gram(solver_weights(sub.weights)))
    h = hashlib.sha256(repr(sub.shape).encode())
    h.update(G.tobytes())
    return h.hexdigest()


def _relabel(plan: MechanismPlan, key, shape) -> MechanismPlan:
    out = dataclasses.replace(plan, subset=key, shape=shape)
    if "recon_map" in plan.__dict__:
        out.__dict__["recon_map"] = plan.recon_map
    return out


def solve_all(subs: dict[tuple[int, ...], Subworkload], config: SolverConfig, jobs: int = 1) -> dict:
    """Solve every subworkload once per distinct ``(shape, WᵀDW)``.

    The plan depends on a subworkload only through its weighted Gram matrix,
    so e.g. every 2-way prefix table of a uniform schema is solved once.
    """
    digests = {k: _gram_digest(s) for k, s in subs.items()}
    unique = {}
    for k, dg in digests.items():
        unique.setdefault(dg, k)
    todo = list(unique.items())
    if jobs > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            solved = list(ex.map(lambda item: solve(subs[item[1]], config), todo))
    else:
        solved = [solve(subs[k], config) for _, k in todo]
    by_digest = {dg: p for (dg, _), p in zip(todo, solved)}
    log.info("solved %d distinct subworkloads for %d keys", len(todo), len(subs))
    return {k: _relabel(by_digest[dg], k, subs[k].shape) for k, dg in digests.items()}


def peak_memory_mb() -> float:
    """Peak resident set size of this process in MB.

    ``VmHWM`` resets on exec; ``ru_maxrss`` can carry over the parent's peak
    from before the fork, so it is only the fallback.
    """
    try:
        with open("/proc/self/status") as fh:
            for line in fh:
                if line.startswith("VmHWM:"):
                    return int(line.split()[1]) / 1024.0
    except OSError:
        pass
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


def plan_workload(workload: Workload, config: SolverConfig | None = None, rho: float = 1.0, jobs: int = 1):
    """Decompose, solve and rescale. Never touches data.

    Returns ``(mechanism, subworkloads)``; phase timings land in ``mechanism.timings``.
    """
    config = config or SolverConfig()
    t0 = time.perf_counter()
    subs = build_subworkloads(workload)
    t1 = time.perf_counter()
    plans = solve_all(subs, config, jobs)
    t2 = time.perf_counter()
    sigma2 = rescale({k: p.loss for k, p in plans.items()}, rho)
    mech = AssembledMechanism(workload.schema, plans, sigma2, float(rho))
    t3 = time.perf_counter()
    mech.timings = {"decompose": t1 - t0, "solve": t2 - t1, "assemble": t3 - t2, "total": t3 - t0}
    return mech, subs


def _rng(seed: int, key: tuple[int, ...]) -> np.random.Generator:
    # one stream per residual key, independent of which other keys exist
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(len(key), *key)))


def measure(mech: AssembledMechanism, data: DatasetHandle, seed: int, trials: int | None = None) -> dict:
    """Noisy strategy answers ``B x_A + N(0, σ²_A Σ_A)`` for every key.

    With ``trials`` set, each ``z`` has shape ``(rows, trials)``: independent
    repetitions that share the data but not the noise.
    """
    if data.schema != mech.schema:
        raise ValueError("dataset schema does not match the mechanism's schema")
    out = {}
    for key, plan in mech.plans.items():
        x = marginal(data, key).values
        clean = plan.apply(x)
        size = (plan.rows,) if trials is None else (plan.rows, trials)
        noise = _rng(seed, key).standard_normal(size)
        scale = np.sqrt(mech.noise(key))
        z = (clean if trials is None else clean[:, None]) + (scale if trials is None else scale[:, None]) * noise
        out[key] = NoisyMeasurement(key, z, mech.sigma2[key])
    return out


def _plan_for(mech: AssembledMechanism, key, coeffs) -> MechanismPlan:
    if key not in mech.plans:
        raise ValueError(f"query has a nonzero component on {key}, which the mechanism never measured")
    plan = mech.plans[key]
    if not plan.spans(coeffs):
        raise ValueError(f"query component on {key} is outside the span of the measured strategy")
    return plan


def reconstruct(q: LinearQuery, mech: AssembledMechanism, measurements: dict) -> tuple[float, float]:
    """Unbiased answer and its variance, summed over the query's residual components."""
    answer, var = 0.0, 0.0
    for key, sq in decompose_query(q, mech.schema).items():
        if np.abs(sq.coeffs).max() <= ZERO_TOL:
            continue
        plan = _plan_for(mech, key, sq.coeffs)
        if key not in measurements:
            raise KeyError(f"missing measurement for subset {key}")
        answer += float(plan.reconstruct(sq.coeffs, measurements[key].z)[0])
        var += mech.sigma2[key] * float(plan.variance(sq.coeffs)[0])
    return answer, var


def _batched(workload: Workload, mech: AssembledMechanism, subs=None):
    subs = build_subworkloads(workload) if subs is None else subs
    for key, sub in subs.items():
        yield key, sub, _plan_for(mech, key, sub.rows)


def workload_variances(workload: Workload, mech: AssembledMechanism, subs=None) -> np.ndarray:
    var = np.zeros(len(workload))
    for key, sub, plan in _batched(workload, mech, subs):
        np.add.at(var, sub.origins, mech.sigma2[key] * plan.variance(sub.rows))
    return var


def answer_workload(workload: Workload, mech: AssembledMechanism, measurements: dict, subs=None):
    """Answers and variances of every query; ``z`` may carry a trailing trials axis."""
    answers = None
    var = np.zeros(len(workload))
    for key, sub, plan in _batched(workload, mech, subs):
        if key not in measurements:
            raise KeyError(f"missing measurement for subset {key}")
        a = plan.reconstruct(sub.rows, measurements[key].z)
        if answers is None:
            answers = np.zeros((len(workload),) + a.shape[1:])
        np.add.at(answers, sub.origins, a)
        np.add.at(var, sub.origins, mech.sigma2[key] * plan.variance(sub.rows))
    if answers is None:
        answers = np.zeros(len(workload))
    return answers, var


def evaluate(workload: Workload, mech: AssembledMechanism, subs=None) -> dict:
    """Data-independent error summary: RMSE, weighted RMSE and per-query variances."""
    if len(workload) == 0:
        raise ValueError("cannot evaluate an empty workload")
    var = workload_variances(workload, mech, subs)
    n = len(workload)
    return {
        "rmse": float(np.sqrt(var.sum() / n)),
        "wrmse": float(np.sqrt((workload.weights * var).sum() / n)),
        "per_query": var,
    }


def true_answers(workload: Workload, data: DatasetHandle) -> np.ndarray:
    out = np.zeros(len(workload))
    for subset, idx in workload.groups().items():
        x = marginal(data, subset).values
        out[idx] = np.stack([workload.queries[i].coeffs for i in idx]) @ x
    return out

