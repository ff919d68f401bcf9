"""Synthetic benchmarks: blob generation, outlier injection, scoring and grid search."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

from .core import FeatureMatrix, Method, PriorLabels, SolverConfig, build_fitting_weights, build_indicator
from .graph import build_graph
from .solvers import SolveResult, solve

logger = logging.getLogger(__name__)

NOISE = -1

U_GRID = (1, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100)
THETA_GRID = (0.01, 0.1, 1, 10)
P_GRID = (0.5, 0.7, 1, 1.5, 1.7, 2)

OUTLIER_MODES = ("foreign", "far", "uniform")


@dataclass(frozen=True)
class SyntheticSpec:
    n_known_classes: int = 3
    points_per_class: int = 40
    novel_points: int = 40
    noise_points: int = 0
    dim: int = 8
    separation: float = 10.0
    spread: float = 1.0
    labels_per_class: int = 5
    outlier_fraction: float = 0.0
    outlier_distance: float = 3.0
    outlier_mode: str = "foreign"
    seed: int = 0

    def __post_init__(self):
        counts = (self.n_known_classes, self.points_per_class, self.novel_points,
                  self.noise_points, self.labels_per_class)
        if min(counts) < 0 or self.n_known_classes < 1:
            raise ValueError("counts must be nonnegative and n_known_classes >= 1")
        if self.labels_per_class > self.points_per_class:
            raise ValueError("labels_per_class exceeds points_per_class")
        if not self.separation > 0 or not self.spread > 0:
            raise ValueError("separation and spread must be positive")
        if not 0 <= self.outlier_fraction <= 1:
            raise ValueError("outlier_fraction must lie in [0, 1]")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.outlier_mode not in OUTLIER_MODES:
            raise ValueError(f"outlier_mode must be one of {OUTLIER_MODES}")


@dataclass(frozen=True)
class Truth:
    """Ground truth for a synthetic set.

    ``classes`` holds 1..c for known classes, c+1 for the novel blob and
    ``NOISE`` (-1) for background noise. ``labeled`` marks items given to the
    solver as prior labels; ``outliers`` marks rows whose features were
    replaced.
    """
    classes: np.ndarray
    c: int
    labeled: np.ndarray
    outliers: np.ndarray


@dataclass
class EvalReport:
    acc_known: float
    acc_unknown: float
    confusion: np.ndarray
    params: Optional[dict] = None
    n_known: int = 0
    n_unknown: int = 0

    def to_dict(self) -> dict:
        return {"acc_known": self.acc_known, "acc_unknown": self.acc_unknown,
                "n_known": self.n_known, "n_unknown": self.n_unknown,
                "confusion": self.confusion.tolist(), "params": self.params}


def _centroids(c_total: int, dim: int, separation: float, rng) -> np.ndarray:
    if dim >= c_total:
        # scaled simplex vertices: every pair sits exactly `separation` apart
        return np.eye(c_total, dim) * separation / np.sqrt(2.0)
    centers = [rng.normal(size=dim)]
    while len(centers) < c_total:
        cand = rng.normal(size=dim) * separation * c_total
        if min(np.linalg.norm(cand - q) for q in centers) >= separation:
            centers.append(cand)
    return np.array(centers)


def generate(spec: SyntheticSpec):
    """Draw a labeled synthetic set: ``(FeatureMatrix, Truth, PriorLabels)``.

    Known classes and one novel class are isotropic Gaussian blobs with
    standard deviation ``spread`` whose centroids sit ``separation`` apart.
    Noise is uniform over the blobs' bounding box.

    Outlier injection replaces ``outlier_fraction`` of each known class's
    feature vectors (labeled members included) with points far from their own
    class; the item keeps its true class. ``outlier_mode`` picks where they go:

    ``"foreign"``
        inside the blob of another randomly chosen class (known or novel)
    ``"far"``
        at ``outlier_distance * separation`` from the origin, random direction
    ``"uniform"``
        uniform over the bounding box of the data
    """
    rng = np.random.default_rng(spec.seed)
    c = spec.n_known_classes
    centers = _centroids(c + 1, spec.dim, spec.separation, rng)
    blocks, classes = [], []
    for k in range(c):
        blocks.append(centers[k] + spec.spread * rng.normal(size=(spec.points_per_class, spec.dim)))
        classes.append(np.full(spec.points_per_class, k + 1))
    blocks.append(centers[c] + spec.spread * rng.normal(size=(spec.novel_points, spec.dim)))
    classes.append(np.full(spec.novel_points, c + 1))
    x = np.vstack(blocks)
    if spec.noise_points:
        lo, hi = x.min(axis=0), x.max(axis=0)
        x = np.vstack([x, rng.uniform(lo, hi, size=(spec.noise_points, spec.dim))])
        classes.append(np.full(spec.noise_points, NOISE))
    classes = np.concatenate(classes)
    n = classes.size

    labeled = np.zeros(n, dtype=bool)
    for k in range(c):
        members = np.flatnonzero(classes == k + 1)
        labeled[rng.choice(members, size=spec.labels_per_class, replace=False)] = True

    outliers = np.zeros(n, dtype=bool)
    if spec.outlier_fraction > 0:
        for k in range(c):
            members = np.flatnonzero(classes == k + 1)
            count = int(round(spec.outlier_fraction * members.size))
            if count:
                picked = rng.choice(members, size=count, replace=False)
                if spec.outlier_mode == "far":
                    direction = rng.normal(size=(count, spec.dim))
                    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
                    x[picked] = direction * spec.outlier_distance * spec.separation
                elif spec.outlier_mode == "foreign":
                    other = rng.choice([j for j in range(c + 1) if j != k], size=count)
                    x[picked] = centers[other] + spec.spread * rng.normal(size=(count, spec.dim))
                else:
                    lo, hi = x.min(axis=0), x.max(axis=0)  # uniform
                    x[picked] = rng.uniform(lo, hi, size=(count, spec.dim))
                outliers[picked] = True

    prior = PriorLabels({int(i): int(classes[i]) for i in np.flatnonzero(labeled)}, c)
    truth = Truth(classes=classes, c=c, labeled=labeled, outliers=outliers)
    return FeatureMatrix(x), truth, prior


def evaluate(result, truth: Truth, params=None, mask=None) -> EvalReport:
    """Score assignments against ground truth.

    Known accuracy is over non-labeled items whose true class is in 1..c; a
    novel item counts as correct iff assigned c+1. Noise items appear only in
    the confusion matrix, as an extra last row. ``mask`` restricts scoring to
    a subset of items.
    """
    assigned = np.asarray(result.assignments if isinstance(result, SolveResult) else result)
    c = truth.c
    scored = ~truth.labeled if mask is None else np.asarray(mask, dtype=bool)
    known = scored & (truth.classes >= 1) & (truth.classes <= c)
    unknown = scored & (truth.classes == c + 1)
    acc_known = 100.0 * np.mean(assigned[known] == truth.classes[known]) if known.any() else float("nan")
    acc_unknown = 100.0 * np.mean(assigned[unknown] == c + 1) if unknown.any() else float("nan")
    confusion = np.zeros((c + 2, c + 1), dtype=int)
    for t, a in zip(truth.classes[scored], assigned[scored]):
        row = c + 1 if t == NOISE else t - 1
        confusion[row, a - 1] += 1
    return EvalReport(float(acc_known), float(acc_unknown), confusion, params,
                      int(known.sum()), int(unknown.sum()))


def config_params(cfg: SolverConfig, prior: PriorLabels) -> dict:
    params = {"method": cfg.method.value, "u_labeled": prior.u_labeled,
              "u_unlabeled": prior.u_unlabeled, "k": cfg.k}
    if cfg.method is Method.CAPPED:
        params.update(p_exp=cfg.p_exp, theta=cfg.theta)
    return params


def run_method(x: FeatureMatrix, prior: PriorLabels, cfg: SolverConfig, graph=None,
               graph_kind: str = "can") -> SolveResult:
    g = graph if graph is not None else build_graph(x, graph_kind, cfg.k, cfg.sigma)
    y = build_indicator(prior, x.n)
    u = build_fitting_weights(prior, x.n)
    return solve(g, y, u, cfg)


def stratified_folds(prior: PriorLabels, n_folds: int, seed: int = 0) -> list:
    """Split labeled indices into folds, dealing each class round-robin."""
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(n_folds)]
    by_class = {}
    for i, k in sorted(prior.assignments.items()):
        by_class.setdefault(k, []).append(i)
    offset = 0
    for k in sorted(by_class):
        members = rng.permutation(by_class[k])
        for pos, i in enumerate(members):
            folds[(pos + offset) % n_folds].append(int(i))
        offset += len(members)
    return [sorted(f) for f in folds]


@dataclass
class GridResult:
    best: dict
    table: list = field(default_factory=list)


def grid_configs(method, u_grid=U_GRID, theta_grid=THETA_GRID, p_grid=P_GRID, base=None):
    """Enumerate (u_labeled, SolverConfig) pairs for one method."""
    base = base or SolverConfig()
    method = Method.parse(method)
    if method is Method.CAPPED:
        for u, theta, p in itertools.product(u_grid, theta_grid, p_grid):
            yield u, base.replace(method=method, theta=theta, p_exp=p)
    else:
        for u in u_grid:
            yield u, base.replace(method=method)


def grid_search(x: FeatureMatrix, prior: PriorLabels, methods=tuple(Method), n_folds: int = 5,
                u_grid=U_GRID, theta_grid=THETA_GRID, p_grid=P_GRID, base=None,
                graph=None, graph_kind: str = "can", seed: int = 0) -> dict:
    """Cross-validate parameter grids over the labeled items.

    Each fold hides its labeled items, solves, and scores the hidden items'
    known-class accuracy. Returns ``{method: GridResult}`` where ``best`` is
    the first grid row with the highest mean accuracy.
    """
    base = base or SolverConfig()
    g = graph if graph is not None else build_graph(x, graph_kind, base.k, base.sigma)
    folds = stratified_folds(prior, n_folds, seed)
    all_classes = set(range(1, prior.c + 1))
    usable = []
    for f_idx, fold in enumerate(folds):
        train = {i: k for i, k in prior.assignments.items() if i not in set(fold)}
        if not fold or set(train.values()) != all_classes:
            logger.warning("skipping fold %d: a class has no training labels", f_idx)
            continue
        usable.append((fold, train))
    if not usable:
        raise ValueError("no usable cross-validation fold")

    out = {}
    for method in methods:
        rows = []
        for u, cfg in grid_configs(method, u_grid, theta_grid, p_grid, base):
            accs = []
            for fold, train in usable:
                fold_prior = PriorLabels(train, prior.c, u, prior.u_unlabeled)
                res = run_method(x, fold_prior, cfg, graph=g)
                hidden = np.array(fold)
                truth = np.array([prior.assignments[i] for i in fold])
                accs.append(100.0 * np.mean(res.assignments[hidden] == truth))
            row = config_params(cfg, PriorLabels(prior.assignments, prior.c, u, prior.u_unlabeled))
            row.update(mean_acc=float(np.mean(accs)), fold_accs=[float(a) for a in accs])
            rows.append(row)
        best = max(rows, key=lambda r: r["mean_acc"])
        out[Method.parse(method)] = GridResult(best=best, table=rows)
    return out


def robustness_comparison(spec: SyntheticSpec, seeds: Sequence[int], configs: dict,
                          prior_weights=(100.0, 0.01), graph_kind: str = "can") -> dict:
    """Per-seed known/unknown accuracy of each method on freshly drawn data.

    ``configs`` maps a display name to a SolverConfig. Returns
    ``{"per_seed": [...], "means": {name: (acc_known, acc_unknown)}}``.
    """
    per_seed = []
    for seed in seeds:
        x, truth, prior = generate(SyntheticSpec(**{**asdict(spec), "seed": int(seed)}))
        prior = prior.with_weights(*prior_weights)
        g = None
        row = {"seed": int(seed)}
        for name, cfg in configs.items():
            if g is None:
                g = build_graph(x, graph_kind, cfg.k, cfg.sigma)
            rep = evaluate(run_method(x, prior, cfg, graph=g), truth)
            row[name] = (rep.acc_known, rep.acc_unknown)
        per_seed.append(row)
    means = {name: (float(np.mean([r[name][0] for r in per_seed])),
                    float(np.mean([r[name][1] for r in per_seed])))
             for name in configs}
    return {"per_seed": per_seed, "means": means}
