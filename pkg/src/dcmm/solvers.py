"""Matrix-mechanism constructors for a single subworkload at privacy cost 1.

Every solver returns a :class:`MechanismPlan`: strategy ``B``, diagonal noise
covariance ``Σ`` (so ``max diag(Bᵀ Σ⁻¹ B) = 1``), a pseudoinverse
reconstruction and the weighted sum of query variances.

The optimal constructor minimizes ``tr(G V⁺)`` with ``G = Wᵀ D W`` over PSD
``V`` with ``diag(V) <= 1``. It works on the Lagrange dual

    max_{μ ∈ simplex}  tr((Ĉ D_μ Ĉᵀ)^{1/2})²,      ĈᵀĈ = G,

whose maximizer gives the primal ``V = Ĉᵀ T^{-1/2} Ĉ`` with ``T = Ĉ D_μ Ĉᵀ``.
Writing ``f`` for the dual trace and ``m = max_i V_ii``, the primal loss is
``f·m`` and the dual bound is ``f²``; iteration stops once the relative gap
``(m - f)/f`` is below tolerance. ``V`` has the row space of ``W``, so the
strategy ``B = T^{-1/4} Ĉ`` lies in the residual space of centered
subworkloads without a full-rank workaround.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .decompose import Subworkload

log = logging.getLogger(__name__)

SOLVERS = ("optimal", "fourier", "fixed_basis")
BASES = ("sub", "fourier", "residual")


class SolverError(RuntimeError):
    """The iteration did not certify optimality; ``objective`` is the last primal loss."""

    def __init__(self, msg, objective=float("nan")):
        super().__init__(msg)
        self.objective = objective


class CellCapExceeded(ValueError):
    pass


@dataclass
class SolverConfig:
    kind: str = "optimal"
    basis: str = "sub"  # fixed_basis only
    diagonal: bool = True  # fixed_basis only: V = Uᵀ diag(h) U
    tol: float = 1e-10  # relative duality gap
    max_iter: int = 5000
    rank_rtol: float = 1e-10
    cell_cap: int = 4000
    fallback: str | None = None  # solver for marginals over cell_cap
    newton_limit: float = 4e7  # max entries of the n x k² Hessian workspace

    def __post_init__(self):
        self.kind = self.kind.replace("-", "_")
        if self.kind not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.kind!r}")
        if self.basis not in BASES:
            raise ValueError(f"basis must be one of {BASES}, got {self.basis!r}")
        if self.fallback is not None:
            self.fallback = self.fallback.replace("-", "_")
            if self.fallback not in SOLVERS:
                raise ValueError(f"fallback must be one of {SOLVERS}, got {self.fallback!r}")


# ---------------------------------------------------------------- plans

@dataclass
class MechanismPlan:
    subset: tuple[int, ...]
    shape: tuple[int, ...]
    strategy: np.ndarray
    noise: np.ndarray
    loss: float
    kind: str = "optimal"
    iterations: int = 0
    gap: float = 0.0
    rcond: float = field(default=1e-10, repr=False)

    @property
    def cells(self) -> int:
        return self.strategy.shape[1]

    @property
    def rows(self) -> int:
        return self.strategy.shape[0]

    @cached_property
    def recon_map(self) -> np.ndarray:
        """``B⁺``: maps noisy strategy answers to an estimate of the marginal's residual part."""
        return np.linalg.pinv(self.strategy, rcond=self.rcond)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Noise-free strategy answers ``B x``."""
        return self.strategy @ x

    def reconstruct(self, rows: np.ndarray, z: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(rows)
        return rows @ (self.recon_map @ z)

    def variance(self, rows: np.ndarray) -> np.ndarray:
        """Reconstruction variance of each row at privacy cost 1."""
        y = np.atleast_2d(rows) @ self.recon_map
        return (y * y) @ self.noise

    def covariance(self) -> np.ndarray:
        return np.diag(self.noise)

    def privacy_cost(self) -> float:
        return float(((self.strategy**2) / self.noise[:, None]).sum(axis=0).max())

    def spans(self, rows: np.ndarray, rtol: float = 1e-8) -> bool:
        rows = np.atleast_2d(rows)
        resid = rows - (rows @ self.recon_map) @ self.strategy
        scale = max(np.abs(rows).max(), 1.0)
        return bool(np.abs(resid).max() <= rtol * scale)


@dataclass
class FourierPlan(MechanismPlan):
    """Independent noise on the real and imaginary parts of kept Fourier coefficients.

    ``frequencies[p]`` is a frequency tuple ``j`` from the lexicographic half of
    the all-nonzero frequency grid. Strategy rows come in that order: the
    cosine row, then (unless ``j`` is its own conjugate) the negated sine row,
    so that ``B x`` lists the real and imaginary parts of ``fftn(x)[j]``.
    """

    frequencies: np.ndarray = None
    theta: np.ndarray = None

    @cached_property
    def self_conjugate(self) -> np.ndarray:
        d = np.array(self.shape)
        return np.all(2 * self.frequencies == d, axis=1)

    def apply(self, x: np.ndarray) -> np.ndarray:
        F = np.fft.fftn(np.asarray(x, dtype=np.float64).reshape(self.shape))
        vals = F[tuple(self.frequencies.T)]
        out = []
        for v, sc in zip(vals, self.self_conjugate):
            out.append(v.real)
            if not sc:
                out.append(v.imag)
        return np.array(out)

    def noisy_marginal(self, z: np.ndarray) -> np.ndarray:
        """Inverse transform of the noisy coefficients with Hermitian mirroring.

        ``z`` may carry a trailing batch axis; the result is ``(cells,)`` or ``(cells, batch)``.
        """
        d = np.array(self.shape)
        z = np.asarray(z, dtype=np.float64)
        batch = z.shape[1:]
        Z = np.zeros(self.shape + batch, dtype=np.complex128)
        pos = 0
        for j, sc in zip(self.frequencies, self.self_conjugate):
            if sc:
                Z[tuple(j)] = z[pos]
                pos += 1
            else:
                Z[tuple(j)] = z[pos] + 1j * z[pos + 1]
                Z[tuple((d - j) % d)] = z[pos] - 1j * z[pos + 1]
                pos += 2
        x = np.fft.ifftn(Z, axes=tuple(range(len(self.shape)))).real
        return x.reshape((self.cells,) + batch)

    def reconstruct(self, rows: np.ndarray, z: np.ndarray) -> np.ndarray:
        return np.atleast_2d(rows) @ self.noisy_marginal(z)

    def variance(self, rows: np.ndarray) -> np.ndarray:
        coef = fourier_coefficients(np.atleast_2d(rows), self.shape, self.frequencies)
        return coef @ self.theta


# ---------------------------------------------------------------- helpers

def psd_factor(G: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """``Ĉ`` (k x n, full row rank) with ``ĈᵀĈ = G``; eigenvalues below ``rtol·max`` are dropped."""
    lam, E = np.linalg.eigh((G + G.T) / 2)
    if lam.size == 0 or lam[-1] <= 0:
        return np.zeros((0, G.shape[0]))
    keep = lam > rtol * lam[-1]
    return np.sqrt(lam[keep])[:, None] * E[:, keep].T


def row_factor(rows: np.ndarray, w: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """``Ĉ`` with ``ĈᵀĈ = Wᵀ D W`` from an SVD of ``D^{1/2} W``.

    Going through the rows rather than the Gram matrix keeps directions with
    tiny weight accurate; singular values below ``rtol·max`` are dropped.
    """
    _, sv, Vt = np.linalg.svd(np.sqrt(w)[:, None] * rows, full_matrices=False)
    if sv.size == 0 or sv[0] <= 0:
        return np.zeros((0, rows.shape[1]))
    keep = sv > rtol * sv[0]
    return sv[keep, None] * Vt[keep]


def solver_weights(weights: np.ndarray) -> np.ndarray:
    """Weights the solvers optimize for.

    Zero-weight rows still have to be answerable, so they get a tiny floor
    (all-zero subworkloads are solved as if unit-weighted).
    """
    weights = np.asarray(weights, dtype=np.float64)
    top = weights.max(initial=0.0)
    if top <= 0:
        return np.ones_like(weights)
    return np.where(weights > 0, weights, 1e-9 * top)


def _trivial_plan(sub: Subworkload, w: np.ndarray) -> MechanismPlan:
    # one-cell marginal: measure the count itself
    loss = float((w * sub.rows[:, 0] ** 2).sum())
    return MechanismPlan(sub.subset, sub.shape, np.ones((1, 1)), np.ones(1), loss, "optimal")


# ---------------------------------------------------------------- dual ascent on the simplex

def _full_oracle(C: np.ndarray):
    """Dual trace ``f(μ) = tr((C D_μ Cᵀ)^{1/2})``, its gradient ``½ diag(V)`` and Hessian."""

    def oracle(mu, need_hess):
        T = (C * mu) @ C.T
        lam, E = np.linalg.eigh((T + T.T) / 2)
        lam = np.maximum(lam, np.finfo(float).tiny)
        r = np.sqrt(lam)
        f = r.sum()
        Ch = C.T @ E
        g = 0.5 * (Ch * Ch) @ (1 / r)
        if not need_hess:
            return f, g, None
        # divided difference of λ^{-1/2}
        gam = -1.0 / (r[:, None] * r[None, :] * (r[:, None] + r[None, :]))
        n, k = Ch.shape
        Z = (Ch[:, :, None] * Ch[:, None, :]).reshape(n, k * k)
        H = 0.5 * (Z * gam.ravel()) @ Z.T
        return f, g, H

    return oracle


def _diag_oracle(A: np.ndarray, h2: np.ndarray):
    """Dual of the diagonal fixed-basis problem: ``f(μ) = Σ_k sqrt(h2_k (Aμ)_k)``."""
    sh = np.sqrt(h2)

    def oracle(mu, need_hess):
        s = A @ mu
        f = float(sh @ np.sqrt(s))
        g = 0.5 * A.T @ (sh / np.sqrt(s))
        if not need_hess:
            return f, g, None
        H = -0.25 * (A.T * (sh * s**-1.5)) @ A
        return f, g, H

    return oracle


def _gap(f, g):
    m = float((2 * g).max())
    return m, (m - f) / f


def maximize_dual(oracle, n: int, tol: float = 1e-10, max_iter: int = 5000, use_newton: bool = True, warm: int = 100):
    """Maximize a concave, ½-homogeneous ``f`` over the probability simplex.

    Returns ``(mu, f, m, iterations)`` where ``f·m`` is the primal loss of the
    recovered mechanism and ``f²`` a lower bound on every feasible loss.

    Multiplicative updates ``μ ← μ∘∇f / Σ`` come first; they settle interior
    optima in a few dozen steps. Optima on a low-dimensional face are finished
    with a log-barrier Newton method (scaled variables, equality-constrained
    KKT solve, backtracking).
    """
    mu = np.full(n, 1.0 / n)
    it = 0
    f, g, _ = oracle(mu, False)
    m, gap = _gap(f, g)
    prev = np.inf
    while gap > tol and it < max_iter:
        if use_newton and it >= warm and gap > 0.5 * prev:
            break
        if it % 10 == 0:
            prev = gap
        mu = mu * g
        mu /= mu.sum()
        f, g, _ = oracle(mu, False)
        m, gap = _gap(f, g)
        it += 1
    if gap <= tol or not use_newton:
        if gap > tol:
            raise SolverError(f"no convergence after {it} iterations (gap {gap:.3e})", f * m)
        return mu, f, m, it

    t = n / (f * max(m - f, 1e-300))
    kkt = np.zeros((n + 1, n + 1))
    while it < max_iter:
        for _ in range(50):
            it += 1
            f, g, H = oracle(mu, True)
            r = (t * g + 1 / mu) * mu
            kkt[:n, :n] = np.eye(n) - t * H * mu[:, None] * mu[None, :]
            kkt[:n, n] = mu
            kkt[n, :n] = mu
            kkt[n, n] = 0.0
            d = np.linalg.solve(kkt, np.concatenate([r, [0.0]]))[:n]
            dec = d @ kkt[:n, :n] @ d
            if dec < 1e-12:
                break
            step = 1.0
            while np.any(1 + step * d <= 0.01):
                step *= 0.5
            phi = t * f + np.log(mu).sum()
            slope = r @ d
            while True:
                trial = mu * (1 + step * d)
                trial /= trial.sum()
                f2, _, _ = oracle(trial, False)
                if t * f2 + np.log(trial).sum() >= phi + 0.25 * step * slope or step < 1e-12:
                    break
                step *= 0.5
            mu = trial
            if dec < 1e-9 or it >= max_iter:
                break
        f, g, _ = oracle(mu, False)
        m, gap = _gap(f, g)
        if gap <= tol:
            return mu, f, m, it
        t *= 10
    raise SolverError(f"no convergence after {it} iterations (gap {gap:.3e})", f * m)


# ---------------------------------------------------------------- solvers

def solve_optimal(sub: Subworkload, config: SolverConfig | None = None) -> MechanismPlan:
    config = config or SolverConfig()
    w = solver_weights(sub.weights)
    if sub.cells == 1:
        return _trivial_plan(sub, w)
    if sub.cells > config.cell_cap:
        raise CellCapExceeded(
            f"marginal on {sub.subset} has {sub.cells} cells > cap {config.cell_cap}; use an approximate solver"
        )
    C = row_factor(sub.rows, w, config.rank_rtol)
    k, n = C.shape
    if k == 0:
        raise ValueError(f"subworkload {sub.subset} is identically zero")
    use_newton = n * k * k <= config.newton_limit
    mu, f, m, iters = maximize_dual(_full_oracle(C), n, config.tol, config.max_iter, use_newton)

    lam, E = np.linalg.eigh((C * mu) @ C.T)
    B = (E * lam**-0.25) @ E.T @ C
    # rows of B onto rowspan(W); C has orthogonal rows spanning it
    B = B @ (C.T @ np.linalg.solve(C @ C.T, C))
    sigma2 = float((B * B).sum(axis=0).max())
    plan = MechanismPlan(sub.subset, sub.shape, B, np.full(k, sigma2), 0.0, "optimal", iters, (m - f) / f, config.rank_rtol)
    plan.loss = float(plan.variance(sub.rows) @ w)
    log.debug("optimal %s: n=%d rank=%d loss=%.6g bound=%.6g iters=%d", sub.subset, n, k, plan.loss, f * f, iters)
    return plan


def fourier_frequencies(shape) -> np.ndarray:
    """Half of the all-nonzero frequency grid: ``j <= d - j`` lexicographically."""
    d = tuple(shape)
    out = [j for j in itertools.product(*(range(1, dk) for dk in d)) if j <= tuple(dk - jk for dk, jk in zip(d, j))]
    return np.array(out, dtype=np.int64).reshape(-1, len(d))


def fourier_coefficients(rows: np.ndarray, shape, freqs: np.ndarray) -> np.ndarray:
    """Per-row variance coefficient of every parameter in ``freqs``.

    ``|F̃[j]|²`` for self-conjugate ``j`` and ``4|F̃[j]|²`` otherwise, where
    ``F̃`` is the inverse DFT of the query tensor.
    """
    shape = tuple(shape)
    Ft = np.fft.ifftn(rows.reshape((-1,) + shape), axes=tuple(range(1, len(shape) + 1)))
    vals = Ft[(slice(None),) + tuple(freqs.T)]
    sc = np.all(2 * freqs == np.array(shape), axis=1)
    return np.abs(vals) ** 2 * np.where(sc, 1.0, 4.0)


def fourier_basis(shape) -> np.ndarray:
    """Real strategy rows (cosine, negated sine) of every half-grid frequency."""
    shape = tuple(shape)
    freqs = fourier_frequencies(shape)
    grids = np.meshgrid(*(np.arange(d) for d in shape), indexing="ij")
    rows = []
    for j in freqs:
        ang = 2 * np.pi * sum(jk * g / dk for jk, g, dk in zip(j, grids, shape))
        rows.append(np.cos(ang).ravel())
        if not np.all(2 * j == np.array(shape)):
            rows.append(-np.sin(ang).ravel())
    return np.array(rows).reshape(-1, int(np.prod(shape)))


def solve_fourier(sub: Subworkload, config: SolverConfig | None = None) -> FourierPlan:
    config = config or SolverConfig()
    if not sub.subset:
        raise ValueError("the empty-subset subworkload is solved in closed form, not with the Fourier basis")
    w = solver_weights(sub.weights)
    freqs = fourier_frequencies(sub.shape)
    c = w @ fourier_coefficients(sub.rows, sub.shape, freqs)
    # structural zeros from centering are ~1e-32; keep genuine parameters only
    keep = c > config.rank_rtol**2 * c.max()
    freqs, c = freqs[keep], c[keep]
    root = np.sqrt(c)
    gamma = root.sum()
    theta = gamma / root
    sc = np.all(2 * freqs == np.array(sub.shape), axis=1)
    basis_rows, noise = [], []
    grids = np.meshgrid(*(np.arange(d) for d in sub.shape), indexing="ij")
    for j, s, th in zip(freqs, sc, theta):
        ang = 2 * np.pi * sum(jk * g / dk for jk, g, dk in zip(j, grids, sub.shape))
        basis_rows.append(np.cos(ang).ravel())
        noise.append(th)
        if not s:
            basis_rows.append(-np.sin(ang).ravel())
            noise.append(th)
    B = np.array(basis_rows).reshape(-1, sub.cells)
    return FourierPlan(
        sub.subset, sub.shape, B, np.array(noise), float(gamma**2), "fourier",
        rcond=config.rank_rtol, frequencies=freqs, theta=theta,
    )


def sub_matrix(d: int) -> np.ndarray:
    """``[1 | -I]``: ``(d-1) x d`` with ones in column 0 and -1 at ``(i, i+1)``."""
    return np.hstack([np.ones((d - 1, 1)), -np.eye(d - 1)])


def sub_basis(shape) -> np.ndarray:
    out = np.ones((1, 1))
    for d in shape:
        out = np.kron(out, sub_matrix(d))
    return out


def residual_basis(shape) -> np.ndarray:
    """Orthonormal basis of the residual space (Kronecker product of per-axis bases)."""
    out = np.ones((1, 1))
    for d in shape:
        lam, E = np.linalg.eigh(np.eye(d) - 1.0 / d)
        out = np.kron(out, E[:, lam > 0.5].T)
    return out


def make_basis(name: str, shape) -> np.ndarray:
    return {"sub": sub_basis, "fourier": fourier_basis, "residual": residual_basis}[name](shape)


def solve_fixed_basis(sub: Subworkload, basis: np.ndarray | str | None = None, config: SolverConfig | None = None) -> MechanismPlan:
    """Strategy restricted to ``V = Uᵀ X U`` for a fixed basis ``U``.

    With ``config.diagonal`` (the default) ``X`` is diagonal, i.e. every basis
    row gets its own noise scale. A full ``X`` reaches the unrestricted optimum
    whenever ``U`` spans the workload, so that case defers to the optimal
    constructor.
    """
    config = config or SolverConfig(kind="fixed_basis")
    w = solver_weights(sub.weights)
    if sub.cells == 1:
        return _trivial_plan(sub, w)
    if basis is None or isinstance(basis, str):
        U = make_basis(basis or config.basis, sub.shape)
    else:
        U = np.atleast_2d(np.asarray(basis, dtype=np.float64))
    if U.shape[1] != sub.cells:
        raise ValueError(f"basis has {U.shape[1]} columns, marginal has {sub.cells} cells")
    if np.linalg.matrix_rank(U) != U.shape[0]:
        raise ValueError("basis must have full row rank")
    Up = np.linalg.pinv(U, rcond=config.rank_rtol)
    Y = sub.rows @ Up
    if np.abs(sub.rows - Y @ U).max() > 1e-8 * max(np.abs(sub.rows).max(), 1.0):
        raise ValueError(f"basis does not span the rows of subworkload {sub.subset}")

    if not config.diagonal:
        plan = solve_optimal(sub, config)
        plan.kind = "fixed_basis"
        return plan

    h2 = w @ (Y * Y)  # diagonal of (U⁺)ᵀ G U⁺
    used = h2 > config.rank_rtol**2 * h2.max()
    U, h2 = U[used], h2[used]
    A = U * U
    n = sub.cells
    mu, f, m, iters = maximize_dual(_diag_oracle(A, h2), n, config.tol, config.max_iter, True)
    h = np.sqrt(h2 / (A @ mu))
    B = np.sqrt(h)[:, None] * U
    sigma2 = float((B * B).sum(axis=0).max())
    plan = MechanismPlan(sub.subset, sub.shape, B, np.full(B.shape[0], sigma2), 0.0, "fixed_basis", iters, (m - f) / f, config.rank_rtol)
    plan.loss = float(plan.variance(sub.rows) @ w)
    return plan


def solve(sub: Subworkload, config: SolverConfig) -> MechanismPlan:
    """Dispatch on ``config.kind``; the empty subset is always solved in closed form."""
    if sub.cells == 1:
        return _trivial_plan(sub, solver_weights(sub.weights))
    kind = config.kind
    if kind == "optimal" and sub.cells > config.cell_cap and config.fallback:
        kind = config.fallback
    if kind == "optimal":
        return solve_optimal(sub, config)
    if kind == "fourier":
        return solve_fourier(sub, config)
    return solve_fixed_basis(sub, None, config)
