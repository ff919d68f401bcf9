import numpy as np
import pytest
from scipy import sparse

from situprop.core import DataError, Method, NumericalError, PriorLabels, SolverConfig
from situprop.graph import _finish
from situprop.oracle import (absorption_oracle, brute_force_objective_min, dense_fixed_point,
                             dense_objective, project_simplex, simplex_qp_oracle)
from situprop.solvers import Edges, evaluate_objective, solve_capped, solve_gss, solve_l1

from support import random_graph, random_problem


def graph_of(w):
    return _finish(sparse.csr_matrix(np.asarray(w, dtype=float)))


def test_dense_matches_sparse_two_nodes():
    g = graph_of([[0, 1], [1, 0]])
    y = np.array([[1.0, 0.0], [0.0, 1.0]])
    u = np.array([10.0, 0.01])
    assert np.allclose(dense_fixed_point(g, y, u), solve_gss(g, y, u).f, atol=1e-10)


def test_positive_fit_weights_make_system_definite():
    rng = np.random.default_rng(0)
    g = random_graph(15, rng)
    u = rng.uniform(0.1, 1.0, 15)
    a = np.diag(g.w_hat.toarray().sum(1)) - g.w_hat.toarray() + np.diag(u * g.d_hat)
    assert np.linalg.eigvalsh(a).min() > 0
    dense_fixed_point(g, np.eye(15)[:, :3], u)


def test_dense_matches_gss_on_fifty_nodes():
    rng = np.random.default_rng(1)
    g, y, u, _ = random_problem(rng, n=50, c=3)
    assert np.max(np.abs(dense_fixed_point(g, y, u) - solve_gss(g, y, u).f)) <= 1e-8


def test_dense_reweights_match_weighted_solve():
    rng = np.random.default_rng(2)
    g, y, u, _ = random_problem(rng, n=20, c=2)
    edges = Edges.from_graph(g)
    s = rng.uniform(0.1, 3.0, edges.w.size)
    r = np.zeros((g.n, g.n))
    r[edges.i, edges.j] = s
    r = r + r.T
    from situprop.solvers import weighted_solve
    assert np.allclose(dense_fixed_point(g, y, u, r), weighted_solve(g, y, u, s, edges), atol=1e-9)


def test_dense_singular_reports_condition():
    w = np.zeros((4, 4))
    w[0, 1] = w[1, 0] = w[2, 3] = w[3, 2] = 1.0
    with pytest.raises(NumericalError, match="condition"):
        dense_fixed_point(graph_of(w), np.eye(4)[:, :2], np.array([1.0, 0.0, 0.0, 0.0]))


def test_dense_objective_agrees_with_evaluate_objective():
    rng = np.random.default_rng(3)
    g, y, u, _ = random_problem(rng, n=12, c=2)
    f = rng.normal(size=y.shape)
    for m in Method:
        cfg = SolverConfig(method=m, p_exp=0.7, theta=0.8)
        assert dense_objective(m, g, f, y, u, cfg) == pytest.approx(
            evaluate_objective(m, g, f, y, u, cfg), rel=1e-12)


def test_brute_force_matches_gss():
    rng = np.random.default_rng(4)
    g, y, u, _ = random_problem(rng, n=10, c=2)
    best = brute_force_objective_min("gss", g, y, u, restarts=5)
    assert best == pytest.approx(solve_gss(g, y, u).objective, abs=1e-6)


def test_l1_reaches_descent_objective_on_six_nodes():
    rng = np.random.default_rng(5)
    g, y, u, _ = random_problem(rng, n=6, c=2, u_unlabeled=0.1)
    best = brute_force_objective_min("l1", g, y, u, restarts=10)
    assert solve_l1(g, y, u).objective <= best + 1e-4


def test_capped_tiny_theta_decouples():
    rng = np.random.default_rng(6)
    g, y, u, _ = random_problem(rng, n=8, c=2, u_unlabeled=0.5)
    cfg = SolverConfig(p_exp=1.0, theta=1e-9)
    res = solve_capped(g, y, u, cfg)
    assert np.allclose(res.f, y, atol=1e-12)
    edges = Edges.from_graph(g)
    differing = np.any(y[edges.i] != y[edges.j], axis=1)
    assert res.objective == pytest.approx(1e-9 * edges.w[differing].sum(), rel=1e-9, abs=1e-20)
    assert brute_force_objective_min("capped", g, y, u, cfg, restarts=3) <= 1e-9 * edges.w.sum() + 1e-12


def test_brute_force_size_limit():
    rng = np.random.default_rng(0)
    g, y, u, _ = random_problem(rng, n=40, c=2)
    with pytest.raises(DataError):
        brute_force_objective_min("gss", g, y, u)


def test_brute_force_is_deterministic():
    rng = np.random.default_rng(8)
    g, y, u, _ = random_problem(rng, n=6, c=1)
    a = brute_force_objective_min("l1", g, y, u, restarts=4, seed=3)
    b = brute_force_objective_min("l1", g, y, u, restarts=4, seed=3)
    assert a == b


def test_absorption_path_middle_is_split():
    g = graph_of([[0, 1, 0], [1, 0, 1], [0, 1, 0]])
    r = absorption_oracle(g, {0: 1, 2: 2}, 2)
    assert np.allclose(r[1], [0.5, 0.5], atol=1e-14)


def test_absorption_star_center():
    w = np.zeros((5, 5))
    w[0, 1:] = w[1:, 0] = 1.0
    r = absorption_oracle(graph_of(w), {0: 2}, 2)
    assert np.allclose(r[1:], [[0.0, 1.0]] * 4)


def test_absorption_matches_harmonic_gss():
    rng = np.random.default_rng(9)
    g = random_graph(8, rng, 0.4)
    labeled = {0: 1, 5: 2}
    prior = PriorLabels(labeled, 2, 1e6, 0.0)
    from situprop.core import build_fitting_weights, build_indicator
    res = solve_gss(g, build_indicator(prior, 8), build_fitting_weights(prior, 8))
    probs = absorption_oracle(g, labeled, 2)
    srt = np.sort(probs, axis=1)
    untied = srt[:, -1] - srt[:, -2] > 1e-6
    assert np.array_equal(res.assignments[untied], probs.argmax(axis=1)[untied] + 1)


def test_absorption_rejects_unanchored_component():
    w = np.zeros((4, 4))
    w[0, 1] = w[1, 0] = w[2, 3] = w[3, 2] = 1.0
    with pytest.raises(DataError):
        absorption_oracle(graph_of(w), {0: 1}, 1)


def test_simplex_projection_and_qp_oracle():
    v = np.array([0.3, 1.2, -0.5])
    x = project_simplex(v)
    assert x.sum() == pytest.approx(1.0) and np.all(x >= 0)
    assert np.allclose(x, [0.05, 0.95, 0.0], atol=1e-12)
    assert np.allclose(simplex_qp_oracle(np.array([1.0, 2.0, 4.0]), 2), [0.6, 0.4, 0.0], atol=1e-10)
    with pytest.raises(DataError):
        simplex_qp_oracle(np.array([1.0, 1.0, 1.0]), 2)
