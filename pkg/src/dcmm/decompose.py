"""Projection of queries onto residual spaces and grouping into subworkloads.

Projecting a query on subset ``A`` onto ``A' ⊆ A`` averages the query tensor
over the axes in ``A \\ A'`` and then centers it along every axis of ``A'``.
That is the same as right-multiplying the flat query by the Kronecker product
of ``1/d·1`` (dropped axes) and ``I - 1/d·11ᵀ`` (kept axes), but never forms
the Kronecker product.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .schema import Schema, canonical_subset, subsets_of
from .workload import LinearQuery, Workload

ZERO_TOL = 1e-12


@dataclass(frozen=True)
class Subquery:
    origin: int
    subset: tuple[int, ...]
    coeffs: np.ndarray
    weight: float


@dataclass
class Subworkload:
    subset: tuple[int, ...]
    shape: tuple[int, ...]
    rows: np.ndarray
    weights: np.ndarray
    origins: np.ndarray

    def __len__(self):
        return self.rows.shape[0]

    @property
    def cells(self) -> int:
        return self.rows.shape[1]

    def gram(self, weights=None) -> np.ndarray:
        """``Wᵀ D W`` for the given (default: own) row weights."""
        w = self.weights if weights is None else weights
        return self.rows.T @ (self.rows * w[:, None])


def project_batch(tensors: np.ndarray, keep: tuple[bool, ...]) -> np.ndarray:
    """Project a stack of query tensors (batch axis first) onto one residual space.

    ``keep[k]`` says whether tensor axis ``k`` survives. Returns a stack of
    tensors over the kept axes only.
    """
    drop = tuple(k + 1 for k, kept in enumerate(keep) if not kept)
    x = tensors.mean(axis=drop) if drop else np.array(tensors, dtype=np.float64, copy=True)
    for ax in range(1, x.ndim):
        x -= x.mean(axis=ax, keepdims=True)
    return x


def _keep_mask(subset, target) -> tuple[bool, ...]:
    target = set(target)
    return tuple(a in target for a in subset)


def project_query(q: LinearQuery, target, schema: Schema) -> Subquery:
    target = canonical_subset(target)
    if not set(target) <= set(q.subset):
        raise ValueError(f"target {target} is not a subset of the query's attributes {q.subset}")
    t = q.coeffs.reshape((1,) + schema.shape(q.subset))
    out = project_batch(t, _keep_mask(q.subset, target))
    return Subquery(-1, target, out.ravel(), q.weight)


def decompose_query(q: LinearQuery, schema: Schema, origin: int = -1) -> dict[tuple[int, ...], Subquery]:
    """One subquery per subset of the query's attributes, weights inherited."""
    out = {}
    for target in subsets_of(q.subset):
        sq = project_query(q, target, schema)
        out[target] = Subquery(origin, target, sq.coeffs, q.weight)
    return out


def build_subworkloads(workload: Workload, zero_tol: float = ZERO_TOL) -> dict[tuple[int, ...], Subworkload]:
    """Group every query's projections by residual key, dropping identically-zero rows.

    Keys come out sorted by (size, indices) so iteration order is deterministic.
    """
    schema = workload.schema
    parts: dict[tuple[int, ...], list[tuple[np.ndarray, np.ndarray, np.ndarray]]] = {}
    weights = workload.weights
    for subset, idx in workload.groups().items():
        shape = schema.shape(subset)
        tensors = np.stack([workload.queries[i].coeffs for i in idx]).reshape((len(idx),) + shape)
        for target in subsets_of(subset):
            proj = project_batch(tensors, _keep_mask(subset, target)).reshape(len(idx), -1)
            nz = np.abs(proj).max(axis=1) > zero_tol
            if nz.any():
                parts.setdefault(target, []).append((proj[nz], weights[idx[nz]], idx[nz]))
    out = {}
    for key in sorted(parts, key=lambda k: (len(k), k)):
        rows, w, o = zip(*parts[key])
        order = np.argsort(np.concatenate(o), kind="stable")
        out[key] = Subworkload(
            subset=key,
            shape=schema.shape(key),
            rows=np.concatenate(rows)[order],
            weights=np.concatenate(w)[order],
            origins=np.concatenate(o)[order],
        )
    return out
