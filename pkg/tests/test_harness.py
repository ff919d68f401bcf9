import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from situprop.core import Method, PriorLabels, SolverConfig
from situprop.harness import (NOISE, OUTLIER_MODES, SyntheticSpec, Truth, evaluate, generate, grid_configs,
                              grid_search, robustness_comparison, run_method, stratified_folds)


def test_spec_validation():
    for bad in ({"separation": 0.0}, {"outlier_fraction": 1.5}, {"labels_per_class": 50},
                {"noise_points": -1}, {"outlier_mode": "nowhere"}, {"dim": 0}):
        with pytest.raises(ValueError):
            SyntheticSpec(**bad)


def test_generate_shapes_and_labels():
    spec = SyntheticSpec(noise_points=10, seed=3)
    x, truth, prior = generate(spec)
    assert x.n == 3 * 40 + 40 + 10 and x.p == 8
    assert np.sum(truth.classes == NOISE) == 10
    assert prior.c == 3 and prior.m == 15
    for k in (1, 2, 3):
        assert sum(v == k for v in prior.assignments.values()) == 5
    assert all(truth.classes[i] == k for i, k in prior.assignments.items())


def test_generate_is_deterministic():
    a = generate(SyntheticSpec(seed=11, outlier_fraction=0.1))
    b = generate(SyntheticSpec(seed=11, outlier_fraction=0.1))
    assert a[0].x.tobytes() == b[0].x.tobytes()
    assert a[2].assignments == b[2].assignments


@pytest.mark.parametrize("mode", OUTLIER_MODES)
def test_outliers_only_change_injected_rows(mode):
    clean = generate(SyntheticSpec(seed=2))
    dirty = generate(SyntheticSpec(seed=2, outlier_fraction=0.1, outlier_mode=mode))
    changed = np.any(clean[0].x != dirty[0].x, axis=1)
    assert np.array_equal(changed, dirty[1].outliers)
    assert dirty[1].outliers.sum() == 3 * 4
    assert clean[2].assignments == dirty[2].assignments


def test_separated_blobs_without_novel_are_perfect():
    spec = SyntheticSpec(novel_points=0, labels_per_class=1, separation=20.0, seed=5)
    x, truth, prior = generate(spec)
    for method in Method:
        rep = evaluate(run_method(x, prior, SolverConfig(method=method)), truth)
        assert rep.acc_known == 100.0


def simple_truth(classes, c, labeled=None):
    classes = np.asarray(classes)
    labeled = np.zeros(classes.size, bool) if labeled is None else np.asarray(labeled)
    return Truth(classes, c, labeled, np.zeros(classes.size, bool))


def test_evaluate_perfect_and_constant():
    truth = simple_truth([1, 1, 2, 2, 3, 3], 2)
    rep = evaluate(np.array([1, 1, 2, 2, 3, 3]), truth)
    assert (rep.acc_known, rep.acc_unknown) == (100.0, 100.0)
    rep = evaluate(np.array([1, 1, 1, 1]), simple_truth([1, 1, 2, 2], 2))
    assert rep.acc_known == 50.0


def test_evaluate_noise_excluded_but_in_confusion():
    truth = simple_truth([1, 2, 3, NOISE, NOISE], 2)
    rep = evaluate(np.array([1, 2, 3, 1, 3]), truth)
    assert (rep.acc_known, rep.acc_unknown) == (100.0, 100.0)
    assert rep.confusion.shape == (4, 3)
    assert rep.confusion[3].tolist() == [1, 0, 1]
    assert rep.confusion.sum(axis=1).tolist() == [1, 1, 1, 2]


def test_evaluate_skips_labeled_items():
    truth = simple_truth([1, 1, 2], 2, labeled=[True, False, False])
    rep = evaluate(np.array([2, 1, 2]), truth)
    assert rep.acc_known == 100.0 and rep.n_known == 2


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_evaluate_invariant_under_relabeling(seed):
    rng = np.random.default_rng(seed)
    c = 3
    classes = rng.integers(1, c + 2, 30)
    assigned = rng.integers(1, c + 2, 30)
    perm = np.append(rng.permutation(c) + 1, c + 1)   # known ids shuffled, novel fixed
    a = evaluate(assigned, simple_truth(classes, c))
    b = evaluate(perm[assigned - 1], simple_truth(perm[classes - 1], c))
    assert (a.acc_known, a.acc_unknown) == (b.acc_known, b.acc_unknown)
    assert 0 <= a.acc_known <= 100 and 0 <= a.acc_unknown <= 100


def test_stratified_folds_partition_labels():
    prior = PriorLabels({i: (i % 3) + 1 for i in range(15)}, 3)
    folds = stratified_folds(prior, 5, seed=1)
    flat = sorted(i for f in folds for i in f)
    assert flat == list(range(15))
    for f in folds:
        assert sorted(prior.assignments[i] for i in f) == [1, 2, 3]


def test_full_grid_enumeration():
    assert len(list(grid_configs("capped"))) == 11 * 4 * 6
    assert len(list(grid_configs("gss"))) == 11
    assert len(list(grid_configs("l1"))) == 11


def test_single_point_grid_returns_it():
    x, truth, prior = generate(SyntheticSpec(points_per_class=15, novel_points=10, seed=1))
    res = grid_search(x, prior, methods=(Method.CAPPED,), u_grid=(50,), theta_grid=(0.1,), p_grid=(1.5,))
    best = res[Method.CAPPED].best
    assert (best["u_labeled"], best["theta"], best["p_exp"]) == (50, 0.1, 1.5)
    assert len(res[Method.CAPPED].table) == 1


def test_dominant_config_selected():
    # A cap so small that every edge is cut leaves hidden labeled items on
    # the novel class, so the uncapped config wins on every fold.
    x, truth, prior = generate(SyntheticSpec(points_per_class=15, novel_points=10,
                                             labels_per_class=4, seed=4))
    res = grid_search(x, prior, methods=(Method.CAPPED,), n_folds=2, u_grid=(100,),
                      theta_grid=(1e-12, 10.0), p_grid=(2,))
    table = res[Method.CAPPED].table
    assert all(a < b for a, b in zip(table[0]["fold_accs"], table[1]["fold_accs"]))
    assert res[Method.CAPPED].best["theta"] == 10.0


def test_fold_missing_class_is_skipped(caplog):
    x, truth, prior = generate(SyntheticSpec(points_per_class=15, novel_points=10,
                                             labels_per_class=1, seed=0))
    with caplog.at_level(logging.WARNING):
        with pytest.raises(ValueError):
            grid_search(x, prior, methods=(Method.GSS,), n_folds=3, u_grid=(10,))
    assert "skipping fold" in caplog.text


def test_robustness_comparison_structure():
    spec = SyntheticSpec(points_per_class=15, novel_points=10, outlier_fraction=0.1)
    configs = {"gss": SolverConfig(method="gss"), "l1": SolverConfig(method="l1")}
    out = robustness_comparison(spec, range(3), configs)
    assert [r["seed"] for r in out["per_seed"]] == [0, 1, 2]
    assert set(out["means"]) == {"gss", "l1"}
    mean_gss = np.mean([r["gss"][0] for r in out["per_seed"]])
    assert out["means"]["gss"][0] == pytest.approx(mean_gss)
