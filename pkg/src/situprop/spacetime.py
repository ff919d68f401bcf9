"""Space-time aggregation of per-item labels into situation summaries."""
from __future__ import annotations

import csv
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

MONTH_SECONDS = 2_629_800  # mean Gregorian month


@dataclass(frozen=True)
class Resolution:
    lat_deg: float = 1.0
    lon_deg: float = 1.0
    time_s: float = MONTH_SECONDS

    def __post_init__(self):
        if min(self.lat_deg, self.lon_deg, self.time_s) <= 0:
            raise ValueError("bin resolutions must be positive")


@dataclass(frozen=True, order=True)
class SpaceTimeCell:
    lat_bin: int
    lon_bin: int
    time_bin: int

    @classmethod
    def of(cls, lat, lon, ts, res: Resolution) -> "SpaceTimeCell":
        return cls(math.floor(lat / res.lat_deg), math.floor(lon / res.lon_deg),
                   math.floor(ts / res.time_s))


@dataclass
class SituationSummary:
    counts: dict                                    # (cell, label) -> count
    resolution: Resolution
    skipped_missing: int = 0
    skipped_invalid: list = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def time_marginal(self) -> dict:
        """``{label: {time_bin: count}}``"""
        out = defaultdict(Counter)
        for (cell, label), n in self.counts.items():
            out[label][cell.time_bin] += n
        return {k: dict(sorted(v.items())) for k, v in sorted(out.items())}

    def space_marginal(self) -> dict:
        """``{label: {(lat_bin, lon_bin): count}}``"""
        out = defaultdict(Counter)
        for (cell, label), n in self.counts.items():
            out[label][(cell.lat_bin, cell.lon_bin)] += n
        return {k: dict(sorted(v.items())) for k, v in sorted(out.items())}

    def top_places(self, label, n: int = 3) -> list:
        """Most populated spatial cells for ``label``; ties in cell order."""
        places = self.space_marginal().get(label, {})
        return sorted(places, key=lambda c: (-places[c], c))[:n]

    def peak_time(self, label):
        series = self.time_marginal().get(label, {})
        return max(series, key=lambda t: (series[t], -t)) if series else None

    def series(self, label) -> tuple:
        """Dense time series for ``label``: ``(first_bin, counts)``."""
        marg = self.time_marginal().get(label, {})
        if not marg:
            return 0, np.zeros(0)
        lo, hi = min(marg), max(marg)
        vals = np.zeros(hi - lo + 1)
        for t, n in marg.items():
            vals[t - lo] = n
        return lo, vals

    def rows(self):
        for (cell, label), n in sorted(self.counts.items(), key=lambda kv: (kv[0][0], str(kv[0][1]))):
            yield cell.lat_bin, cell.lon_bin, cell.time_bin, label, n

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["lat_bin", "lon_bin", "time_bin", "label", "count"])
            out.writerows(self.rows())

    def to_json(self) -> dict:
        return {
            "resolution": {"lat_deg": self.resolution.lat_deg, "lon_deg": self.resolution.lon_deg,
                           "time_s": self.resolution.time_s},
            "total": self.total,
            "skipped_missing": self.skipped_missing,
            "skipped_invalid": list(self.skipped_invalid),
            "time_marginal": {str(k): {str(t): n for t, n in v.items()}
                              for k, v in self.time_marginal().items()},
            "space_marginal": {str(k): {f"{a},{b}": n for (a, b), n in v.items()}
                               for k, v in self.space_marginal().items()},
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def aggregate(assignments, meta, resolution: Resolution = Resolution()) -> SituationSummary:
    """Histogram item labels over fixed lat/lon/time bins.

    ``meta`` is a :class:`~situprop.core.GeoTime` or a ``(lat, lon, timestamp)``
    triple of arrays. Items with any missing (NaN) coordinate are counted in
    ``skipped_missing``; items outside [-90, 90] x [-180, 180] are listed in
    ``skipped_invalid``. Bins use floor division, so a value exactly on a
    boundary belongs to the later bin.
    """
    if hasattr(meta, "lat"):
        lat, lon, ts = meta.lat, meta.lon, meta.timestamp
    else:
        lat, lon, ts = meta
    lat, lon, ts = (np.asarray(a, dtype=float) for a in (lat, lon, ts))
    labels = list(np.asarray(assignments).tolist())
    if not (len(labels) == lat.size == lon.size == ts.size):
        raise ValueError("assignments and metadata must have equal length")
    counts = Counter()
    missing = 0
    invalid = []
    for i, label in enumerate(labels):
        if np.isnan(lat[i]) or np.isnan(lon[i]) or np.isnan(ts[i]):
            missing += 1
            continue
        if not (-90 <= lat[i] <= 90 and -180 <= lon[i] <= 180):
            invalid.append(i)
            continue
        counts[(SpaceTimeCell.of(lat[i], lon[i], ts[i], resolution), label)] += 1
    return SituationSummary(dict(counts), resolution, missing, invalid)


def trend(series, window: int) -> np.ndarray:
    """Centered moving average; near the ends the window is cut to the bins
    that exist, so the output has the same length as the input."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        return x.copy()
    before = (window - 1) // 2
    after = window // 2
    csum = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(x.size)
    lo = np.maximum(idx - before, 0)
    hi = np.minimum(idx + after + 1, x.size)
    return (csum[hi] - csum[lo]) / (hi - lo)
