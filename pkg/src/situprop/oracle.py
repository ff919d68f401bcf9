"""Slow dense reference computations used to validate the solvers at desk scale.

Nothing here shares code paths with :mod:`situprop.solvers` or
:mod:`situprop.graph` beyond the data containers.
"""
from __future__ import annotations

import numpy as np
from scipy import optimize

from .core import DataError, Method, NumericalError, SimilarityGraph, SolverConfig

SMOOTHING = 1e-6


def dense_fixed_point(g: SimilarityGraph, y, u, reweights=None) -> np.ndarray:
    """``F = (L + U D_hat)^{-1} U D_hat Y`` by dense LU, with L built from
    ``w_hat * reweights`` (an n x n symmetric array, or None for all ones)."""
    n = g.n
    if n > 200:
        raise DataError("dense oracle is limited to n <= 200")
    w = g.w_hat.toarray()
    if reweights is not None:
        w = w * np.asarray(reweights, dtype=float)
    d_hat = g.w_hat.toarray().sum(axis=1)
    lap = np.diag(w.sum(axis=1)) - w
    fit = np.diag(np.asarray(u, dtype=float) * d_hat)
    a = lap + fit
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > 1e15:
        raise NumericalError(f"system matrix is singular (condition estimate {cond:.3g})")
    return np.linalg.solve(a, fit @ np.asarray(y, dtype=float))


def _edge_phi(method: Method, cfg: SolverConfig, smooth: float):
    """Per-edge penalty of the squared length and its derivative in that argument."""
    if method is Method.GSS:
        return (lambda t2: t2), (lambda t2: np.ones_like(t2))
    if method is Method.L1:
        return ((lambda t2: np.sqrt(t2 + smooth ** 2)),
                (lambda t2: 0.5 / np.sqrt(t2 + smooth ** 2)))
    p, theta = cfg.p_exp, cfg.theta

    def phi(t2):
        return np.minimum((t2 + smooth ** 2) ** (p / 2), theta)

    def dphi(t2):
        base = t2 + smooth ** 2
        return np.where(base ** (p / 2) < theta, (p / 2) * base ** (p / 2 - 1), 0.0)

    return phi, dphi


def dense_objective(method, g: SimilarityGraph, f, y, u, cfg=None, smooth: float = 0.0) -> float:
    """Objective over all pairs i < j of the dense normalized weights."""
    method = Method.parse(method)
    cfg = cfg or SolverConfig(method=method)
    w = np.triu(g.w_hat.toarray(), 1)
    d_hat = g.w_hat.toarray().sum(axis=1)
    f = np.asarray(f, dtype=float)
    total = 0.0
    phi, _ = _edge_phi(method, cfg, smooth)
    ii, jj = np.nonzero(w)
    for i, j in zip(ii, jj):
        t2 = float(np.sum((f[i] - f[j]) ** 2))
        total += w[i, j] * float(phi(np.array(t2)))
    r = f - np.asarray(y, dtype=float)
    total += float(np.sum(np.asarray(u) * d_hat * np.sum(r * r, axis=1)))
    return total


def brute_force_objective_min(method, g: SimilarityGraph, y, u, cfg=None,
                              restarts: int = 20, seed: int = 0) -> float:
    """Best exact objective reached by L-BFGS on a smoothed objective from
    many random starts. An upper bound on the true minimum."""
    method = Method.parse(method)
    cfg = cfg or SolverConfig(method=method)
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    n, cols = y.shape
    if n * cols > 60:
        raise DataError(f"too many free variables for brute force ({n * cols} > 60)")
    w = np.triu(g.w_hat.toarray(), 1)
    d_hat = g.w_hat.toarray().sum(axis=1)
    ii, jj = np.nonzero(w)
    we = w[ii, jj]
    smooth = 0.0 if method is Method.GSS else SMOOTHING
    phi, dphi = _edge_phi(method, cfg, smooth)
    fit = u * d_hat

    def fun(z):
        f = z.reshape(n, cols)
        diff = f[ii] - f[jj]
        t2 = np.sum(diff * diff, axis=1)
        r = f - y
        val = np.dot(we, phi(t2)) + np.sum(fit * np.sum(r * r, axis=1))
        coef = (2.0 * we * dphi(t2))[:, None] * diff
        grad = 2.0 * fit[:, None] * r
        np.add.at(grad, ii, coef)
        np.add.at(grad, jj, -coef)
        return val, grad.ravel()

    rng = np.random.default_rng(seed)
    starts = [y, np.full_like(y, 1.0 / cols)]
    while len(starts) < restarts:
        starts.append(rng.uniform(-0.5, 1.5, size=y.shape))
    best = np.inf
    for start in starts:
        res = optimize.minimize(fun, start.ravel(), jac=True, method="L-BFGS-B",
                                options={"maxiter": 20000, "ftol": 1e-15, "gtol": 1e-12})
        best = min(best, dense_objective(method, g, res.x.reshape(n, cols), y, u, cfg))
    return best


def absorption_oracle(g: SimilarityGraph, labeled: dict, c: int) -> np.ndarray:
    """Absorption probabilities of a random walk on the normalized weights.

    ``labeled`` maps node index to 1-based class id. Returns an n x c array;
    labeled rows are their own one-hot class.
    """
    n = g.n
    if n > 12:
        raise DataError("absorption oracle is limited to n <= 12")
    w = g.w_hat.toarray()
    p = w / w.sum(axis=1, keepdims=True)
    lab = sorted(labeled)
    unl = [i for i in range(n) if i not in labeled]
    reach = _reachable(w, lab)
    if any(i not in reach for i in unl):
        raise DataError("an unlabeled component has no labeled node")
    r = np.zeros((n, c))
    for i in lab:
        r[i, labeled[i] - 1] = 1.0
    if not unl:
        return r
    q = p[np.ix_(unl, unl)]
    to_abs = p[np.ix_(unl, lab)] @ r[lab]
    fundamental = np.linalg.inv(np.eye(len(unl)) - q)
    r[unl] = fundamental @ to_abs
    return r


def _reachable(w, sources):
    seen = set(sources)
    stack = list(sources)
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(w[i]):
            if j not in seen:
                seen.add(int(j))
                stack.append(int(j))
    return seen


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex by bisection on the shift."""
    v = np.asarray(v, dtype=float)
    lo, hi = v.min() - 1.0, v.max()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.maximum(v - mid, 0.0).sum() > 1.0:
            lo = mid
        else:
            hi = mid
    x = np.maximum(v - 0.5 * (lo + hi), 0.0)
    return x / x.sum()


def simplex_qp_oracle(row: np.ndarray, k: int, iters: int = 400) -> np.ndarray:
    """Solve ``min_w e.w + lam ||w||^2`` over the simplex by projected gradient.

    ``lam`` is the regularization that yields exactly k neighbors,
    ``(k e_(k+1) - sum_{m<=k} e_(m)) / 2`` from the sorted row.
    """
    e = np.asarray(row, dtype=float)
    srt = np.sort(e)
    lam = 0.5 * (k * srt[k] - srt[:k].sum())
    if lam <= 0:
        raise DataError("degenerate row: no positive regularization yields k neighbors")
    w = np.full(e.size, 1.0 / e.size)
    step = 0.25 / lam
    for _ in range(iters):
        w = project_simplex(w - step * (e + 2.0 * lam * w))
    return w


def brute_force_knn(x, k: int) -> list:
    """k nearest non-self neighbors per item by exhaustive scan; ties to lower index."""
    x = np.asarray(x, dtype=float)
    out = []
    for i in range(x.shape[0]):
        cand = sorted((float(np.sum((x[i] - x[j]) ** 2)), j)
                      for j in range(x.shape[0]) if j != i)
        out.append(sorted(j for _, j in cand[:k]))
    return out


def component_count(w) -> int:
    """Connected components of the nonzero pattern by union-find."""
    w = np.asarray(w.toarray() if hasattr(w, "toarray") else w)
    parent = list(range(w.shape[0]))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in zip(*np.nonzero(w)):
        ri, rj = find(int(i)), find(int(j))
        if ri != rj:
            parent[ri] = rj
    return len({find(i) for i in range(w.shape[0])})
