"""Label propagation solvers: quadratic (GSS), l1 and capped-lp smoothness.

All three minimise

    sum_{i<j} w_hat_ij * phi(||f_i - f_j||) + sum_i u_i d_hat_i ||f_i - y_i||^2

with phi(t) = t^2, t, or min(t^p, theta). Each graph edge is counted once,
which makes ``(L + U D_hat) F = U D_hat Y`` the exact stationarity condition
of every reweighted subproblem. The robust variants are instances of a
generic majorize-minimize loop over a concave wrapper of squared edge
distances (:func:`solve_reweighted_generic`).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import cg

from .core import Method, NumericalError, SimilarityGraph, SolverConfig

logger = logging.getLogger(__name__)

DENSE_LIMIT = 500
CG_RTOL = 1e-10
REFINE_STEPS = 3
REFINE_RTOL = 1e-13


@dataclass(frozen=True)
class SolveResult:
    f: np.ndarray
    assignments: np.ndarray
    objective_trace: tuple
    iterations: int
    converged: bool
    method: Method
    all_capped: bool = False

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]


@dataclass(frozen=True)
class ConcaveWrapper:
    """A concave, nondecreasing h on [0, inf) together with a supergradient."""
    value: Callable[[np.ndarray], np.ndarray]
    supergradient: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ReweightedResult:
    x: object
    multipliers: np.ndarray
    objective_trace: tuple
    iterations: int
    converged: bool
    any_all_zero: bool


@dataclass(frozen=True)
class Edges:
    """Upper-triangular view of the normalized weights: one entry per edge."""
    i: np.ndarray
    j: np.ndarray
    w: np.ndarray
    n: int

    @classmethod
    def from_graph(cls, g: SimilarityGraph) -> "Edges":
        upper = sparse.triu(g.w_hat, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return cls(upper.row[order].astype(int), upper.col[order].astype(int),
                   upper.data[order].astype(float), g.n)

    def sq_lengths(self, f: np.ndarray) -> np.ndarray:
        diff = f[self.i] - f[self.j]
        return np.einsum("ij,ij->i", diff, diff)

    def weight_matrix(self, s: Optional[np.ndarray] = None) -> sparse.csr_matrix:
        vals = self.w if s is None else self.w * s
        upper = sparse.csr_matrix((vals, (self.i, self.j)), shape=(self.n, self.n))
        return (upper + upper.T).tocsr()


# -- concave wrappers of the squared edge length -------------------------------
#
# Supergradients above 1/eps are reported as +inf: the edge is then fused
# (its endpoints share one row) in the next solve, which is the exact limit
# of an unbounded multiplier on a vanishing edge.

def identity_wrapper() -> ConcaveWrapper:
    return ConcaveWrapper(lambda x: np.asarray(x, dtype=float),
                          lambda x: np.ones_like(np.asarray(x, dtype=float)))


def _fuse_large(s, eps):
    return np.where(s > 1.0 / eps, np.inf, s)


def sqrt_wrapper(eps: float = 1e-8) -> ConcaveWrapper:
    def grad(x):
        root = np.sqrt(np.asarray(x, dtype=float))
        with np.errstate(divide="ignore"):
            return _fuse_large(0.5 / root, eps)
    return ConcaveWrapper(np.sqrt, grad)


def capped_wrapper(p_exp: float, theta: float, eps: float = 1e-8) -> ConcaveWrapper:
    half = p_exp / 2.0

    def value(x):
        return np.minimum(np.power(x, half), theta)

    def grad(x):
        x = np.asarray(x, dtype=float)
        if p_exp == 2.0:
            s = np.ones_like(x)
        else:
            with np.errstate(divide="ignore"):
                s = _fuse_large(half * np.power(np.sqrt(x), p_exp - 2.0), eps)
        return np.where(np.power(x, half) <= theta, s, 0.0)

    return ConcaveWrapper(value, grad)


def wrapper_for(cfg: SolverConfig) -> ConcaveWrapper:
    if cfg.method is Method.GSS:
        return identity_wrapper()
    if cfg.method is Method.L1:
        return sqrt_wrapper(cfg.eps)
    return capped_wrapper(cfg.p_exp, cfg.theta, cfg.eps)


# -- objective -------------------------------------------------------------------

def fitting_term(g: SimilarityGraph, f, y, u) -> float:
    r = np.asarray(f) - np.asarray(y)
    return float(np.sum(u * g.d_hat * np.einsum("ij,ij->i", r, r)))


def evaluate_objective(method, g: SimilarityGraph, f, y, u, cfg: Optional[SolverConfig] = None) -> float:
    """Exact objective value of ``method`` at soft labels ``f``."""
    method = Method.parse(method)
    if cfg is None:
        cfg = SolverConfig(method=method)
    elif cfg.method is not method:
        cfg = cfg.replace(method=method)
    f = np.asarray(f, dtype=float)
    edges = Edges.from_graph(g)
    smooth = float(np.dot(edges.w, wrapper_for(cfg).value(edges.sq_lengths(f))))
    return smooth + fitting_term(g, f, y, u)


def assign_labels(f) -> np.ndarray:
    """Row-wise argmax as 1-based class ids; ties go to the lowest index."""
    return np.argmax(np.asarray(f), axis=1) + 1


# -- linear algebra --------------------------------------------------------------

def system_matrix(edges: Edges, s, fit_diag) -> sparse.csr_matrix:
    w = edges.weight_matrix(s)
    deg = np.asarray(w.sum(axis=1)).ravel()
    return (sparse.diags(deg + fit_diag) - w).tocsr()


def _check_components(w: sparse.csr_matrix, fit_diag: np.ndarray) -> None:
    ncomp, comp = connected_components(w, directed=False)
    anchored = np.zeros(ncomp, dtype=bool)
    np.logical_or.at(anchored, comp, fit_diag > 0)
    if not anchored.all():
        bad = int(np.flatnonzero(~anchored)[0])
        members = np.flatnonzero(comp == bad).tolist()
        raise NumericalError(f"singular system: component {members} has zero fitting "
                             f"weight on every item")


def spd_solver(a: sparse.spmatrix) -> Callable[[np.ndarray], np.ndarray]:
    """Return ``b -> A^{-1} b`` for a symmetric positive definite ``a``.

    Below ``DENSE_LIMIT`` rows ``a`` is Cholesky-factored once; above it each
    column is solved by Jacobi-preconditioned CG, falling back to a sparse
    direct solve when CG stalls.
    """
    n = a.shape[0]
    if n < DENSE_LIMIT:
        try:
            factor = scipy.linalg.cho_factor(a.toarray(), check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"dense factorization failed: {exc}") from None
        return lambda b: scipy.linalg.cho_solve(factor, b, check_finite=False)

    precond = sparse.diags(1.0 / a.diagonal())

    def run(b):
        x = np.empty_like(b, dtype=float)
        for col in range(b.shape[1]):
            if not np.any(b[:, col]):
                x[:, col] = 0.0
                continue
            sol, info = cg(a, b[:, col], rtol=CG_RTOL, atol=0.0, maxiter=20 * n, M=precond)
            if info != 0:
                logger.warning("CG did not converge on column %d; using sparse direct solve", col)
                sol = sparse.linalg.spsolve(a.tocsc(), b[:, col])
            x[:, col] = sol
        return x

    return run


def solve_spd(a: sparse.spmatrix, b: np.ndarray) -> np.ndarray:
    """Solve a symmetric positive definite system for every column of ``b``."""
    x = spd_solver(a)(b)
    if not np.all(np.isfinite(x)):
        raise NumericalError("linear solve produced non-finite values")
    return x


def system_residual(edges: Edges, s, fit_diag, f, y) -> np.ndarray:
    """``(L_{w s} + diag(fit)) F - diag(fit) Y`` evaluated edge by edge.

    Forming ``f_i - f_j`` before scaling keeps the residual accurate when
    multipliers are huge, where a matrix product would lose the small
    differences to cancellation.
    """
    coef = edges.w if s is None else edges.w * s
    flow = coef[:, None] * (f[edges.i] - f[edges.j])
    r = fit_diag[:, None] * (f - y)
    np.add.at(r, edges.i, flow)
    np.add.at(r, edges.j, -flow)
    return r


def fused_groups(edges: Edges, s) -> tuple:
    """Group labels of items joined by infinite multipliers: ``(count, labels)``."""
    n = edges.n
    if s is None or not np.isinf(s).any():
        return n, np.arange(n)
    hard = np.isinf(s)
    adj = sparse.csr_matrix((np.ones(hard.sum()), (edges.i[hard], edges.j[hard])), shape=(n, n))
    return connected_components(adj, directed=False)


def weighted_solve(g: SimilarityGraph, y, u, s=None, edges: Optional[Edges] = None,
                   refine: int = REFINE_STEPS) -> np.ndarray:
    """Solve ``(L_{w_hat * s} + U D_hat) F = U D_hat Y``.

    Edges with ``s = inf`` are fused: their endpoints are contracted to one
    unknown, i.e. the system is solved on ``F = P G`` with P the group
    membership matrix and both sides multiplied by ``P^T``. Up to ``refine``
    steps of iterative refinement follow, driven by the edgewise residual.
    """
    edges = edges or Edges.from_graph(g)
    y = np.asarray(y, dtype=float)
    fit_diag = u * g.d_hat
    rhs = fit_diag[:, None] * y
    ngroups, groups = fused_groups(edges, s)
    finite = None if s is None else np.where(np.isinf(s), 0.0, s)
    if ngroups == edges.n:
        a = system_matrix(edges, finite, fit_diag)
        _check_components(edges.weight_matrix(finite), fit_diag)
        p = None
    else:
        p = sparse.csr_matrix((np.ones(edges.n), (np.arange(edges.n), groups)), shape=(edges.n, ngroups))
        a = (p.T @ system_matrix(edges, finite, fit_diag) @ p).tocsr()
        w_red = (p.T @ edges.weight_matrix(finite) @ p).tolil()
        w_red.setdiag(0.0)
        _check_components(w_red.tocsr(), np.asarray(p.T @ fit_diag).ravel())
    lift = (lambda v: v) if p is None else (lambda v: p @ v)
    reduce = (lambda v: v) if p is None else (lambda v: p.T @ v)

    inverse = spd_solver(a)
    b = reduce(rhs)
    bnorm = np.linalg.norm(b)
    x = inverse(b)
    for _ in range(refine):
        r = reduce(system_residual(edges, finite, fit_diag, lift(x), y))
        if not np.all(np.isfinite(r)) or np.linalg.norm(r) <= REFINE_RTOL * bnorm:
            break
        x = x - inverse(r)
    x = lift(x)
    if not np.all(np.isfinite(x)):
        raise NumericalError("linear solve produced non-finite values")
    return x


# -- solvers -------------------------------------------------------------------

def solve_reweighted_generic(smooth_objective, concave_wrapper: ConcaveWrapper, initial, *,
                             solve_weighted, terms, coef=None, max_iter: int = 50,
                             tol: float = 1e-6, callback=None) -> ReweightedResult:
    """Minimise ``smooth_objective(x) + sum_i coef_i h(g_i(x))`` for concave h.

    Each pass fixes multipliers ``D`` and calls ``solve_weighted(D)``, which must
    return the minimiser of ``smooth_objective(x) + sum_i coef_i D_i g_i(x)``;
    the multipliers are then refreshed as ``D = h'(g(x))``. ``initial`` gives
    the multipliers for the first pass. Stops when the relative objective
    change drops below ``tol`` or the multipliers stop changing.

    ``callback(iteration, multipliers, x)`` is invoked after every solve.
    """
    mult = np.asarray(initial, dtype=float)
    coef = np.ones_like(mult) if coef is None else np.asarray(coef, dtype=float)
    trace = []
    converged = False
    any_all_zero = not np.any(mult)
    x = None
    iterations = 0
    for iterations in range(1, max_iter + 1):
        x = solve_weighted(mult)
        gx = terms(x)
        obj = float(smooth_objective(x) + np.dot(coef, concave_wrapper.value(gx)))
        if not np.isfinite(obj):
            raise NumericalError(f"non-finite objective at iteration {iterations}; "
                                 f"check the reweighting floor eps")
        trace.append(obj)
        if callback is not None:
            callback(iterations, mult, x)
        new_mult = concave_wrapper.supergradient(gx)
        if len(trace) > 1 and abs(trace[-2] - obj) <= tol * max(abs(trace[-2]), 1e-300):
            converged = True
            break
        if np.array_equal(new_mult, mult):
            converged = True
            break
        mult = new_mult
        any_all_zero = any_all_zero or not np.any(mult)
    return ReweightedResult(x, mult, tuple(trace), iterations, converged, any_all_zero)


def _solve_reweighted(g, y, u, cfg: SolverConfig, callback=None) -> SolveResult:
    """Run the reweighting loop from one or both starting points.

    ``"quadratic"`` starts from unit multipliers (the first pass is the GSS
    solve); ``"indicator"`` starts from the multipliers of ``F = Y``. With
    ``"best"`` both runs are made and the lower final objective wins, ties
    going to the quadratic start. Each run is monotone on its own.
    """
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    edges = Edges.from_graph(g)
    wrapper = wrapper_for(cfg)
    starts = {"quadratic": np.ones(edges.w.size),
              "indicator": wrapper.supergradient(edges.sq_lengths(y))}
    names = ("quadratic", "indicator") if cfg.init == "best" else (cfg.init,)
    best = None
    for name in names:
        res = solve_reweighted_generic(
            lambda f: fitting_term(g, f, y, u),
            wrapper,
            starts[name],
            solve_weighted=lambda s: weighted_solve(g, y, u, s, edges),
            terms=edges.sq_lengths,
            coef=edges.w,
            max_iter=cfg.max_iter,
            tol=cfg.tol,
            callback=callback,
        )
        if best is None or res.objective_trace[-1] < best.objective_trace[-1]:
            best = res
    if best.any_all_zero:
        logger.warning("every edge was capped; a solve used the fitting term only")
    return SolveResult(f=best.x, assignments=assign_labels(best.x),
                       objective_trace=best.objective_trace, iterations=best.iterations,
                       converged=best.converged, method=cfg.method,
                       all_capped=best.any_all_zero)


def solve_gss(g: SimilarityGraph, y, u) -> SolveResult:
    """Quadratic propagation: one solve of ``(L_hat + U D_hat) F = U D_hat Y``."""
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    f = weighted_solve(g, y, u)
    obj = evaluate_objective(Method.GSS, g, f, y, u)
    return SolveResult(f=f, assignments=assign_labels(f), objective_trace=(obj,),
                       iterations=1, converged=True, method=Method.GSS)


def solve_l1(g: SimilarityGraph, y, u, cfg: Optional[SolverConfig] = None, callback=None) -> SolveResult:
    """l1 smoothness by reweighting: edge multipliers ``1 / (2 ||f_i - f_j||)``.

    The first pass uses unit multipliers, so it starts from the quadratic
    solution. Multipliers beyond ``1 / cfg.eps`` fuse their edge.
    """
    cfg = (cfg or SolverConfig()).replace(method=Method.L1)
    return _solve_reweighted(g, y, u, cfg, callback)


def solve_capped(g: SimilarityGraph, y, u, cfg: Optional[SolverConfig] = None, callback=None) -> SolveResult:
    """Capped-lp smoothness ``min(||f_i - f_j||^p, theta)`` by reweighting.

    Edge multipliers are ``(p/2) ||f_i - f_j||^(p-2)`` while the edge is below
    the cap and 0 once ``||f_i - f_j||^p`` exceeds ``theta``; they start at 1.
    For p < 2 multipliers beyond ``1 / cfg.eps`` fuse their edge.
    """
    cfg = (cfg or SolverConfig()).replace(method=Method.CAPPED)
    return _solve_reweighted(g, y, u, cfg, callback)


def solve(g: SimilarityGraph, y, u, cfg: SolverConfig, callback=None) -> SolveResult:
    if cfg.method is Method.GSS:
        return solve_gss(g, y, u)
    if cfg.method is Method.L1:
        return solve_l1(g, y, u, cfg, callback)
    return solve_capped(g, y, u, cfg, callback)
