"""Similarity graph construction, degree normalization and Laplacians."""
from __future__ import annotations

import logging

import numpy as np
from scipy import sparse
from scipy.spatial.distance import cdist

from .core import DataError, ConfigError, FeatureMatrix, SimilarityGraph

logger = logging.getLogger(__name__)

DEFAULT_K = 10


def _features(x):
    return x.x if isinstance(x, FeatureMatrix) else np.asarray(x, dtype=float)


def pairwise_sq_distances(x) -> np.ndarray:
    """Dense matrix of squared Euclidean distances, exact zeros on the diagonal."""
    x = _features(x)
    e = cdist(x, x, "sqeuclidean")
    np.fill_diagonal(e, 0.0)
    return e


def nearest_neighbors(e: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest non-self items per row of a distance matrix.

    Ties are broken toward the lower index.
    """
    n = e.shape[0]
    if not 1 <= k <= n - 1:
        raise ConfigError(f"k must satisfy 1 <= k <= n-1 (k={k}, n={n})")
    masked = e.astype(float, copy=True)
    np.fill_diagonal(masked, np.inf)
    # stable sort keeps equal distances in index order
    return np.argsort(masked, axis=1, kind="stable")[:, :k]


def median_bandwidths(x, k: int = DEFAULT_K) -> np.ndarray:
    """Per-feature bandwidths from the median absolute difference over k-NN pairs.

    Scaled by sqrt(p) so that a typical neighbor pair contributes an O(1)
    exponent in total. Features that never vary across neighbors get 1.
    """
    x = _features(x)
    n, p = x.shape
    nbrs = nearest_neighbors(pairwise_sq_distances(x), min(k, n - 1))
    diffs = np.abs(x[:, None, :] - x[nbrs]).reshape(-1, p)
    sigma = np.empty(p)
    for z in range(p):
        col = diffs[:, z]
        col = col[col > 0]
        sigma[z] = np.median(col) if col.size else 1.0
    return sigma * np.sqrt(p)


def gaussian_graph(x, k: int = DEFAULT_K, sigma=None) -> SimilarityGraph:
    """Gaussian-kernel weights on the symmetric k-NN pattern.

    ``w_ij = exp(-sum_z (x_iz - x_jz)^2 / sigma_z^2)`` whenever j is among the k
    nearest neighbors of i or i among those of j.
    """
    x = _features(x)
    n, p = x.shape
    if k >= n:
        raise ConfigError(f"k={k} must be smaller than n={n}")
    if sigma is None:
        sigma = median_bandwidths(x, k)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (p,))
    if np.any(sigma <= 0):
        raise ConfigError("all bandwidths sigma_z must be positive")
    nbrs = nearest_neighbors(pairwise_sq_distances(x), k)
    rows = np.repeat(np.arange(n), k)
    cols = nbrs.ravel()
    pattern = sparse.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    pattern = ((pattern + pattern.T) > 0).tocoo()
    scaled = x / sigma
    r, c = pattern.row, pattern.col
    vals = np.exp(-np.sum((scaled[r] - scaled[c]) ** 2, axis=1))
    w = sparse.csr_matrix((vals, (r, c)), shape=(n, n))
    return _finish(w)


def can_weights(row: np.ndarray, k: int):
    """Adaptive-neighbor weights for one row of non-self squared distances.

    Returns ``(indices, weights, degenerate)`` where ``indices`` point into
    ``row``. The k nearest entries receive
    ``(e_(k+1) - e_j) / (k e_(k+1) - sum_{m<=k} e_(m))``; a zero denominator
    (all k+1 nearest distances equal) falls back to uniform ``1/k``.
    """
    row = np.asarray(row, dtype=float)
    if not 1 <= k <= row.size - 1:
        raise ConfigError(f"k must satisfy 1 <= k <= n-2 (k={k}, row length {row.size})")
    order = np.argsort(row, kind="stable")
    nearest = order[:k]
    e_next = row[order[k]]
    denom = k * e_next - row[nearest].sum()
    if denom <= 0:
        return nearest, np.full(k, 1.0 / k), True
    weights = (e_next - row[nearest]) / denom
    return nearest, weights, False


def can_graph(dist, k: int = DEFAULT_K, symmetrize: bool = True) -> SimilarityGraph:
    """Closed-form adaptive-neighbor graph from a squared-distance matrix.

    Each row of the raw matrix has exactly k stored entries summing to one.
    With ``symmetrize`` the result is ``(W + W^T) / 2``; passing ``False``
    returns the raw row-stochastic matrix only (as ``w``), without
    normalization.
    """
    e = np.asarray(dist, dtype=float)
    if e.ndim != 2 or e.shape[0] != e.shape[1]:
        raise DataError("distance matrix must be square")
    if np.any(e < 0) or not np.all(np.isfinite(e)):
        raise DataError("distances must be finite and nonnegative")
    n = e.shape[0]
    if not 1 <= k <= n - 2:
        raise ConfigError(f"k must satisfy 1 <= k <= n-2 (k={k}, n={n})")
    rows, cols, vals, degenerate = [], [], [], []
    others = np.arange(n)
    for i in range(n):
        idx = np.delete(others, i)
        local, weights, degen = can_weights(e[i, idx], k)
        rows.append(np.full(k, i))
        cols.append(idx[local])
        vals.append(weights)
        if degen:
            degenerate.append(i)
    if degenerate:
        logger.warning("adaptive-neighbor rows with tied distances fell back to "
                       "uniform weights: %s", degenerate)
    raw = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                            shape=(n, n))
    if not symmetrize:
        return raw
    w = ((raw + raw.T) * 0.5).tocsr()
    return _finish(w, tuple(degenerate))


def build_graph(x, kind: str = "can", k: int = DEFAULT_K, sigma=None) -> SimilarityGraph:
    if kind == "can":
        return can_graph(pairwise_sq_distances(x), k)
    if kind == "gaussian":
        return gaussian_graph(x, k, sigma)
    raise ConfigError(f"unknown graph kind {kind!r}; expected 'can' or 'gaussian'")


def normalize(w):
    """Symmetric degree normalization.

    Returns ``(w_hat, d, d_hat)`` with ``w_hat_ij = w_ij / sqrt(d_i d_j)``.
    Raises DataError naming the first isolated vertex.
    """
    w = sparse.csr_matrix(w, dtype=float)
    d = np.asarray(w.sum(axis=1)).ravel()
    isolated = np.flatnonzero(d <= 0)
    if isolated.size:
        raise DataError(f"vertex {isolated[0]} is isolated (zero degree)")
    coo = w.tocoo()
    vals = coo.data / np.sqrt(d[coo.row] * d[coo.col])
    w_hat = sparse.csr_matrix((vals, (coo.row, coo.col)), shape=w.shape)
    d_hat = np.asarray(w_hat.sum(axis=1)).ravel()
    return w_hat, d, d_hat


def laplacian(w) -> sparse.csr_matrix:
    """Combinatorial Laplacian ``D - W`` of a symmetric nonnegative weight matrix."""
    w = sparse.csr_matrix(w, dtype=float)
    if w.shape[0] != w.shape[1]:
        raise DataError("weight matrix must be square")
    if w.nnz and w.data.min() < 0:
        raise DataError("weights must be nonnegative")
    asym = abs(w - w.T)
    scale = abs(w).max() if w.nnz else 0.0
    if asym.nnz and asym.max() > 1e-12 * max(scale, 1.0):
        raise DataError("weight matrix is not symmetric")
    deg = np.asarray(w.sum(axis=1)).ravel()
    return (sparse.diags(deg) - w).tocsr()


def _finish(w, degenerate=()) -> SimilarityGraph:
    w = sparse.csr_matrix(w)
    w.setdiag(0.0)
    w.eliminate_zeros()
    w.sort_indices()
    w_hat, d, d_hat = normalize(w)
    return SimilarityGraph(w=w, w_hat=w_hat, d=d, d_hat=d_hat, degenerate_rows=degenerate)
