"""Privacy cost of gaussian linear mechanisms and conversions to DP parameters.

A mechanism ``z = B x + N(0, Σ)`` has privacy cost ``max diag(Bᵀ Σ⁻¹ B)``.
Running several independently is equivalent to one mechanism whose cost
matrix is the sum of theirs. Cost ``ρ`` gives ``√ρ``-Gaussian DP.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr


def cost_matrix(B: np.ndarray, Sigma: np.ndarray) -> np.ndarray:
    """``Bᵀ Σ⁻¹ B``; ``Sigma`` may be a full matrix or the vector of its diagonal."""
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    Sigma = np.asarray(Sigma, dtype=np.float64)
    if Sigma.ndim <= 1:
        Sigma = np.broadcast_to(Sigma, (B.shape[0],))
        if np.any(Sigma <= 0):
            raise np.linalg.LinAlgError("noise covariance is singular")
        return B.T @ (B / Sigma[:, None])
    try:
        L = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError as e:
        raise np.linalg.LinAlgError("noise covariance must be symmetric positive definite") from e
    Y = np.linalg.solve(L, B)
    return Y.T @ Y


def cost_diagonal(B, Sigma) -> np.ndarray:
    """``diag(Bᵀ Σ⁻¹ B)`` without forming the full matrix."""
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    Sigma = np.asarray(Sigma, dtype=np.float64)
    if Sigma.ndim <= 1:
        Sigma = np.broadcast_to(Sigma, (B.shape[0],))
        if np.any(Sigma <= 0):
            raise np.linalg.LinAlgError("noise covariance is singular")
        return ((B * B) / Sigma[:, None]).sum(axis=0)
    try:
        L = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError as e:
        raise np.linalg.LinAlgError("noise covariance must be symmetric positive definite") from e
    Y = np.linalg.solve(L, B)
    return (Y * Y).sum(axis=0)


def mechanism_cost(B, Sigma) -> float:
    return float(cost_diagonal(B, Sigma).max())


def total_cost(mechanisms) -> float:
    """Cost of running every ``(B, Σ)`` pair on the same data vector.

    The max diagonal of ``Σ_j B_jᵀ Σ_j⁻¹ B_j`` only needs the diagonals.
    """
    total = None
    for B, Sigma in mechanisms:
        dg = cost_diagonal(B, Sigma)
        if total is not None and total.shape != dg.shape:
            raise ValueError(f"mechanisms act on different domains: {total.shape[0]} vs {dg.shape[0]} cells")
        total = dg if total is None else total + dg
    if total is None:
        return 0.0
    return float(total.max())


def to_gaussian_dp(rho: float) -> float:
    if rho < 0:
        raise ValueError("privacy cost must be >= 0")
    return math.sqrt(rho)


def to_approx_dp(rho: float, epsilon: float) -> float:
    """Smallest ``δ`` such that privacy cost ``rho`` implies ``(ε, δ)``-DP."""
    if rho < 0 or epsilon < 0:
        raise ValueError("need rho >= 0 and epsilon >= 0")
    if rho == 0:
        return 0.0
    mu = math.sqrt(rho)
    a = mu / 2 - epsilon / mu
    b = -mu / 2 - epsilon / mu
    # e^ε Φ(b) can overflow into inf·0 for huge ε; δ is 0 there
    second = math.exp(epsilon + math.log(ndtr(b))) if ndtr(b) > 0 else 0.0
    return float(min(max(ndtr(a) - second, 0.0), 1.0))
