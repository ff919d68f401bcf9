"""Shared domain types: feature matrices, prior labels, graphs and solver settings.

Class ids are 1-based at every public boundary (``1..c`` for known classes and
``c + 1`` for the novel class) and 0-based only inside matrices.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional

import numpy as np
from scipy import sparse


class SituError(Exception):
    """Base class for errors raised by this package."""


class DataError(SituError, ValueError):
    """Input data violates a structural invariant."""


class ConfigError(SituError, ValueError):
    """Invalid solver or pipeline configuration."""


class NumericalError(SituError, ArithmeticError):
    """A solve produced a singular system or a non-finite value."""


class Method(str, Enum):
    GSS = "gss"
    L1 = "l1"
    CAPPED = "capped"

    @classmethod
    def parse(cls, value) -> "Method":
        if isinstance(value, Method):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(f"unknown method {value!r}; expected one of "
                              f"{[m.value for m in cls]}") from None


@dataclass(frozen=True)
class GeoTime:
    """Per-item latitude/longitude in degrees and a UTC epoch timestamp.

    Missing values are stored as NaN.
    """
    lat: np.ndarray
    lon: np.ndarray
    timestamp: np.ndarray

    def __post_init__(self):
        for name in ("lat", "lon", "timestamp"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (self.lat.shape == self.lon.shape == self.timestamp.shape) or self.lat.ndim != 1:
            raise DataError("lat, lon and timestamp must be 1-d arrays of equal length")

    def __len__(self):
        return self.lat.shape[0]


@dataclass(frozen=True)
class FeatureMatrix:
    """n items by p concept-score features, with optional geo-time metadata."""
    x: np.ndarray
    meta: Optional[GeoTime] = None

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim != 2:
            raise DataError(f"features must be a 2-d array, got shape {x.shape}")
        if x.shape[0] < 2 or x.shape[1] < 1:
            raise DataError(f"need n >= 2 items and p >= 1 features, got shape {x.shape}")
        bad = ~np.isfinite(x)
        if bad.any():
            row = int(np.argwhere(bad)[0][0])
            raise DataError(f"non-finite feature value in item {row}")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        if self.meta is not None and len(self.meta) != x.shape[0]:
            raise DataError("metadata length does not match number of items")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class PriorLabels:
    """Known-class assignments for the labeled subset of items.

    ``assignments`` maps item index (0-based) to class id in ``1..c``.
    ``u_labeled`` and ``u_unlabeled`` are the fitting weights of the two item
    groups.
    """
    assignments: Mapping[int, int]
    c: int
    u_labeled: float = 100.0
    u_unlabeled: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "assignments",
                           {int(i): int(k) for i, k in dict(self.assignments).items()})
        if self.c < 1:
            raise ConfigError(f"class count c must be >= 1, got {self.c}")
        if not self.u_labeled > 0:
            raise ConfigError("u_labeled must be positive")
        if not self.u_unlabeled >= 0:
            raise ConfigError("u_unlabeled must be nonnegative")
        if not self.assignments:
            raise DataError("at least one labeled item is required")

    @property
    def m(self) -> int:
        return len(self.assignments)

    def labeled_indices(self) -> np.ndarray:
        return np.array(sorted(self.assignments), dtype=int)

    def validate(self, n: int) -> None:
        if self.m >= n:
            raise DataError(f"need fewer labeled items than items (m={self.m}, n={n})")
        for i, k in self.assignments.items():
            if not 0 <= i < n:
                raise DataError(f"labeled index {i} out of range for n={n}")
            if not 1 <= k <= self.c:
                raise DataError(f"class id {k} of item {i} outside 1..{self.c}")

    def with_weights(self, u_labeled=None, u_unlabeled=None) -> "PriorLabels":
        return PriorLabels(self.assignments, self.c,
                           self.u_labeled if u_labeled is None else u_labeled,
                           self.u_unlabeled if u_unlabeled is None else u_unlabeled)


@dataclass(frozen=True)
class SimilarityGraph:
    """Symmetric sparse weights with their symmetric degree normalization.

    ``w_hat[i, j] = w[i, j] / sqrt(d[i] * d[j])`` and ``d_hat`` holds the row
    sums of ``w_hat``. ``degenerate_rows`` lists rows where adaptive-neighbor
    construction fell back to uniform weights.
    """
    w: sparse.csr_matrix
    w_hat: sparse.csr_matrix
    d: np.ndarray
    d_hat: np.ndarray
    degenerate_rows: tuple = ()

    @property
    def n(self) -> int:
        return self.w.shape[0]


INIT_MODES = ("quadratic", "indicator", "best")


@dataclass(frozen=True)
class SolverConfig:
    method: Method = Method.CAPPED
    p_exp: float = 1.0
    theta: float = 1.0
    k: int = 10
    sigma: Optional[tuple] = None
    max_iter: int = 50
    tol: float = 1e-6
    eps: float = 1e-8
    init: str = "best"      # "quadratic", "indicator" or "best" of the two

    def __post_init__(self):
        object.__setattr__(self, "method", Method.parse(self.method))
        if self.init not in INIT_MODES:
            raise ConfigError(f"init must be one of {INIT_MODES}, got {self.init!r}")
        if self.sigma is not None:
            object.__setattr__(self, "sigma", tuple(float(s) for s in np.ravel(self.sigma)))
        if self.method is Method.CAPPED:
            if not 0 < self.p_exp <= 2:
                raise ConfigError(f"p_exp must lie in (0, 2], got {self.p_exp}")
            if not self.theta > 0:
                raise ConfigError(f"theta must be positive, got {self.theta}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be a positive integer")
        if not self.tol >= 0 or not self.eps > 0:
            raise ConfigError("tol must be >= 0 and eps > 0")

    def replace(self, **changes) -> "SolverConfig":
        fields_ = {f: getattr(self, f) for f in self.__dataclass_fields__}
        fields_.update(changes)
        return SolverConfig(**fields_)


def build_indicator(labels: PriorLabels, n: int) -> np.ndarray:
    """Encode prior labels as an n x (c+1) one-hot matrix.

    Unlabeled rows carry their single 1 in the last (novel-class) column.
    """
    labels.validate(n)
    y = np.zeros((n, labels.c + 1))
    y[:, labels.c] = 1.0
    for i, k in labels.assignments.items():
        y[i, labels.c] = 0.0
        y[i, k - 1] = 1.0
    return y


def decode_indicator(y: np.ndarray) -> PriorLabels:
    """Inverse of :func:`build_indicator` (fitting weights take their defaults)."""
    y = np.asarray(y)
    if y.ndim != 2 or y.shape[1] < 2:
        raise DataError("indicator must be n x (c+1) with c >= 1")
    if not np.all((y == 0) | (y == 1)) or not np.all(y.sum(axis=1) == 1):
        raise DataError("indicator rows must be one-hot")
    c = y.shape[1] - 1
    cols = y.argmax(axis=1)
    return PriorLabels({i: int(k) + 1 for i, k in enumerate(cols) if k < c}, c)


def build_fitting_weights(labels: PriorLabels, n: int) -> np.ndarray:
    """Per-item fitting weights: ``u_labeled`` on labeled items, ``u_unlabeled`` elsewhere."""
    labels.validate(n)
    u = np.full(n, float(labels.u_unlabeled))
    u[labels.labeled_indices()] = labels.u_labeled
    return u
