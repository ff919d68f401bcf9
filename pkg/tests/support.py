"""Instance factories shared by the test modules."""
import numpy as np
from scipy import sparse

from situprop.core import GeoTime, PriorLabels, build_fitting_weights, build_indicator
from situprop.graph import _finish, build_graph
from situprop.spacetime import MONTH_SECONDS


def random_weights(n, rng, density=0.3):
    """Random symmetric nonnegative weights on a connected pattern (path + extras)."""
    w = np.zeros((n, n))
    for i in range(n - 1):
        w[i, i + 1] = rng.uniform(0.1, 1.0)
    mask = np.triu(rng.random((n, n)) < density, 2)
    w[mask] = rng.uniform(0.05, 1.0, mask.sum())
    w = w + w.T
    perm = rng.permutation(n)
    return w[np.ix_(perm, perm)]


def random_graph(n, rng, density=0.3):
    return _finish(sparse.csr_matrix(random_weights(n, rng, density)))


def random_problem(rng, n=None, c=None, u_unlabeled=0.01, labeled_per_class=1, graph="random"):
    """A (graph, Y, u, prior) tuple with every class labeled at least once."""
    n = n or int(rng.integers(8, 51))
    c = c or int(rng.integers(1, 4))
    if graph == "random":
        g = random_graph(n, rng)
    else:
        x = rng.normal(size=(n, 3))
        g = build_graph(x, "can", k=min(5, n - 2))
    idx = rng.permutation(n)[: c * labeled_per_class]
    assignments = {int(i): int(pos % c) + 1 for pos, i in enumerate(idx)}
    prior = PriorLabels(assignments, c, u_labeled=float(rng.choice([1.0, 10.0, 100.0])),
                        u_unlabeled=u_unlabeled)
    return g, build_indicator(prior, n), build_fitting_weights(prior, n), prior


def two_blobs(rng, per_blob=10, dim=2, gap=10.0):
    x = np.vstack([rng.normal(size=(per_blob, dim)), rng.normal(size=(per_blob, dim)) + gap])
    truth = np.repeat([1, 2], per_blob)
    return x, truth


def contracted_residual(g, y, u, edges, s, f):
    """Relative residual of one reweighted solve, ``||P^T r|| / ||P^T b||``.

    ``r`` is evaluated edge by edge; P merges items joined by infinite
    multipliers (fused edges), and is the identity when there are none.
    """
    from scipy.sparse.csgraph import connected_components
    finite = np.where(np.isinf(s), 0.0, s)
    fit = u * g.d_hat
    flow = (edges.w * finite)[:, None] * (f[edges.i] - f[edges.j])
    r = fit[:, None] * (f - y)
    np.add.at(r, edges.i, flow)
    np.add.at(r, edges.j, -flow)
    b = fit[:, None] * y
    hard = np.isinf(s)
    if hard.any():
        adj = sparse.csr_matrix((np.ones(hard.sum()), (edges.i[hard], edges.j[hard])), shape=(g.n, g.n))
        _, comp = connected_components(adj, directed=False)
        p = sparse.csr_matrix((np.ones(g.n), (np.arange(g.n), comp)))
        r, b = p.T @ r, p.T @ b
    return np.linalg.norm(r) / np.linalg.norm(b)


def seasonal_stream(seed=0):
    """Label 1 concentrated in March-April at three cells; label 2 is background."""
    rng = np.random.default_rng(seed)
    places = {(35.6, 139.7): 60, (34.5, 135.5): 40, (43.0, 141.3): 25}
    year = 12 * MONTH_SECONDS
    lat, lon, ts, lab = [], [], [], []
    for (a, b), count in places.items():
        for _ in range(count):
            lat.append(a + rng.uniform(0, 0.3))
            lon.append(b + rng.uniform(0, 0.2))
            month = rng.choice([2, 3], p=[0.4, 0.6])
            ts.append(10 * year + (month + rng.uniform(0.05, 0.95)) * MONTH_SECONDS)
            lab.append(1)
    for _ in range(20):   # scattered sightings elsewhere and other months
        lat.append(rng.uniform(-40, 60))
        lon.append(rng.uniform(-100, 100))
        ts.append(10 * year + rng.uniform(0, 12) * MONTH_SECONDS)
        lab.append(1)
    for _ in range(200):
        lat.append(rng.uniform(-60, 60))
        lon.append(rng.uniform(-180, 180))
        ts.append(10 * year + rng.uniform(0, 12) * MONTH_SECONDS)
        lab.append(2)
    return np.array(lab), GeoTime(lat, lon, ts)
