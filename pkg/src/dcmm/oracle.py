"""Dense full-domain reference implementation for tests (domains of at most 4096 cells).

Everything here materializes Kronecker products on purpose; it is the slow,
obviously-correct path the production code is checked against.
"""
from __future__ import annotations

import numpy as np

from .privacy import total_cost
from .schema import Schema
from .solvers import MechanismPlan
from .workload import LinearQuery

MAX_CELLS = 4096


def _check(schema: Schema):
    if schema.domain_size > MAX_CELLS:
        raise ValueError(f"dense oracle is limited to {MAX_CELLS} cells, schema has {schema.domain_size}")


def _kron(factors) -> np.ndarray:
    out = np.ones((1, 1))
    for f in factors:
        out = np.kron(out, f)
    return out


def lift_matrix(schema: Schema, subset) -> np.ndarray:
    """``Q_A``: maps the full data vector to the marginal vector on ``subset``."""
    _check(schema)
    subset = set(schema.check_subset(subset))
    return _kron(np.eye(d) if i in subset else np.ones((1, d)) for i, d in enumerate(schema.sizes))


def lift_query(q: LinearQuery, schema: Schema) -> np.ndarray:
    return q.coeffs @ lift_matrix(schema, q.subset)


def residual_projector(schema: Schema, subset) -> np.ndarray:
    """Orthogonal projector of the full domain onto the residual space of ``subset``."""
    _check(schema)
    subset = set(schema.check_subset(subset))
    return _kron(np.eye(d) - 1.0 / d if i in subset else np.full((d, d), 1.0 / d) for i, d in enumerate(schema.sizes))


def residual_lifting(schema: Schema, subset) -> np.ndarray:
    """``cells(A') x N`` map from the full data vector to the residual part of the marginal on ``subset``.

    Kept attributes get the centering factor, dropped ones the averaging row
    ``1ᵀ/d``; for ``A' ≠ A''`` the lifted maps have orthogonal row spaces.
    """
    _check(schema)
    subset = set(schema.check_subset(subset))
    return _kron(np.eye(d) - 1.0 / d if i in subset else np.full((1, d), 1.0 / d) for i, d in enumerate(schema.sizes))


def kron_project(q: LinearQuery, target, schema: Schema) -> np.ndarray:
    """Subquery via the explicit product of averaging and centering factors."""
    target = set(target)
    factors = []
    for i in q.subset:
        d = schema.attributes[i].size
        factors.append(np.eye(d) - 1.0 / d if i in target else np.full((d, 1), 1.0 / d))
    return q.coeffs @ _kron(factors)


def full_vector(schema: Schema, records: np.ndarray) -> np.ndarray:
    _check(schema)
    x = np.zeros(schema.domain_size)
    if len(records):
        np.add.at(x, np.ravel_multi_index(tuple(np.asarray(records).T), schema.sizes), 1.0)
    return x


def lift_plan(plan: MechanismPlan, sigma2: float, schema: Schema) -> tuple[np.ndarray, np.ndarray]:
    """Full-domain ``(B Q_A, σ² Σ)`` of one plan."""
    return plan.strategy @ lift_matrix(schema, plan.subset), sigma2 * plan.noise


def lift_mechanism(mech, schema: Schema | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
    schema = schema or mech.schema
    return [lift_plan(p, mech.sigma2[k], schema) for k, p in mech.plans.items()]


def dense_cost(lifted) -> float:
    return total_cost(lifted)


def _stack(lifted):
    B = np.vstack([b for b, _ in lifted])
    noise = np.concatenate([np.broadcast_to(s, (b.shape[0],)) for b, s in lifted])
    return B, noise


def dense_variance(lifted, q_full: np.ndarray) -> float:
    """Variance of ``q B⁺ z`` with ``B`` the stacked full-domain strategy."""
    B, noise = _stack(lifted)
    y = np.asarray(q_full) @ np.linalg.pinv(B, rcond=1e-10)
    return float((y * y) @ noise)


def dense_answer(lifted, z: np.ndarray, q_full: np.ndarray) -> float:
    B, _ = _stack(lifted)
    return float(np.asarray(q_full) @ np.linalg.pinv(B, rcond=1e-10) @ z)


def dense_gls_variance(lifted, q_full: np.ndarray) -> float:
    """Generalized-least-squares variance ``q (Bᵀ Σ⁻¹ B)⁺ qᵀ``; a lower bound for any linear unbiased estimate."""
    B, noise = _stack(lifted)
    M = B.T @ (B / noise[:, None])
    return float(q_full @ np.linalg.pinv(M, rcond=1e-10, hermitian=True) @ q_full)
