import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from situprop.core import GeoTime
from situprop.spacetime import MONTH_SECONDS, Resolution, SpaceTimeCell, aggregate, trend

from support import seasonal_stream


def test_same_cell_counts_together():
    meta = GeoTime([35.2, 35.7, 35.9], [139.1, 139.5, 139.99], [10.0, 20.0, 30.0])
    s = aggregate([1, 1, 1], meta)
    assert s.counts == {(SpaceTimeCell(35, 139, 0), 1): 3}


def test_month_boundary_floor_rule():
    ts = [MONTH_SECONDS - 1, MONTH_SECONDS, -1.0]
    s = aggregate([1, 1, 1], ([0.5] * 3, [0.5] * 3, ts))
    bins = sorted(cell.time_bin for cell, _ in s.counts)
    assert bins == [-1, 0, 1]


def test_negative_coordinates_floor_down():
    assert SpaceTimeCell.of(-0.5, -179.5, 0.0, Resolution()) == SpaceTimeCell(-1, -180, 0)


def test_missing_and_invalid_items_skipped():
    meta = GeoTime([10.0, np.nan, 91.0, 5.0], [10.0, 1.0, 0.0, 181.0], [0.0, 0.0, 0.0, 0.0])
    s = aggregate([1, 2, 3, 4], meta)
    assert s.total == 1 and s.skipped_missing == 1 and s.skipped_invalid == [2, 3]


def test_resolution_must_be_positive():
    with pytest.raises(ValueError):
        Resolution(lat_deg=0.0)


def test_seasonal_stream_recovers_places_and_peak():
    lab, meta = seasonal_stream()
    s = aggregate(lab, meta)
    assert s.top_places(1, 3) == [(35, 139), (34, 135), (43, 141)]
    assert s.peak_time(1) == 120 + 3
    first, series = s.series(1)
    top_two = set((np.argsort(series)[-2:] + first).tolist())
    assert top_two == {122, 123}


def test_marginals_sum_to_cell_counts():
    lab, meta = seasonal_stream(1)
    s = aggregate(lab, meta)
    for label, series in s.time_marginal().items():
        assert sum(series.values()) == sum(n for (c, k), n in s.counts.items() if k == label)
    assert sum(sum(v.values()) for v in s.space_marginal().values()) == s.total == len(lab)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_permutation_invariance_and_refinement(seed):
    rng = np.random.default_rng(seed)
    n = 50
    lat, lon = rng.uniform(-80, 80, n), rng.uniform(-170, 170, n)
    ts = rng.uniform(0, 1e8, n)
    lab = rng.integers(1, 4, n)
    s = aggregate(lab, (lat, lon, ts))
    perm = rng.permutation(n)
    assert aggregate(lab[perm], (lat[perm], lon[perm], ts[perm])).counts == s.counts
    fine = aggregate(lab, (lat, lon, ts), Resolution(0.5, 0.5, MONTH_SECONDS / 2))
    assert len(fine.counts) >= len(s.counts)
    assert fine.total == s.total
    for label in s.time_marginal():
        assert sum(fine.time_marginal()[label].values()) == sum(s.time_marginal()[label].values())


def test_outputs(tmp_path):
    lab, meta = seasonal_stream()
    s = aggregate(lab, meta)
    s.to_csv(tmp_path / "st.csv")
    lines = (tmp_path / "st.csv").read_text().splitlines()
    assert lines[0] == "lat_bin,lon_bin,time_bin,label,count"
    assert sum(int(line.rsplit(",", 1)[1]) for line in lines[1:]) == s.total
    s.write_json(tmp_path / "st.json")
    data = json.loads((tmp_path / "st.json").read_text())
    assert data["total"] == s.total and "1" in data["time_marginal"]


def test_trend_examples():
    assert trend([4.0] * 6, 3).tolist() == [4.0] * 6
    assert np.allclose(trend([0, 0, 3, 0, 0], 3), [0, 1, 1, 1, 0])
    assert trend([], 3).size == 0
    with pytest.raises(ValueError):
        trend([1.0], 0)


def test_trend_keeps_two_seasonal_peaks():
    t = np.arange(24)
    series = 10 * np.exp(-0.5 * ((t - 5) / 1.2) ** 2) + 6 * np.exp(-0.5 * ((t - 17) / 1.2) ** 2)
    smooth = trend(series, 3)
    peaks = [i for i in range(1, 23) if smooth[i] > smooth[i - 1] and smooth[i] > smooth[i + 1]]
    assert peaks == [5, 17]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40), st.integers(1, 9))
def test_trend_length_and_bounds(xs, window):
    out = trend(xs, window)
    assert out.shape == (len(xs),)
    assert np.all(out >= min(xs) - 1e-9) and np.all(out <= max(xs) + 1e-9)
