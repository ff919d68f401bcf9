"""Where and when does a situation happen?

A synthetic stream of geotagged, timestamped items: one label clusters at
three places in two spring months, a second label is scattered everywhere.
Binning into 1-degree cells and 30-day months recovers both. Run:

    python demos/03_spacetime.py
"""
import numpy as np

from situprop import GeoTime, aggregate, trend
from situprop.spacetime import MONTH_SECONDS

rng = np.random.default_rng(0)
year = 12 * MONTH_SECONDS
places = {(35.6, 139.7): 60, (34.5, 135.5): 40, (43.0, 141.3): 25}
lat, lon, ts, labels = [], [], [], []
for (a, b), count in places.items():
    lat += list(a + rng.uniform(0, 0.3, count))
    lon += list(b + rng.uniform(0, 0.2, count))
    month = rng.choice([2, 3], size=count, p=[0.4, 0.6])
    ts += list(10 * year + (month + rng.uniform(0.05, 0.95, count)) * MONTH_SECONDS)
    labels += [1] * count
lat += list(rng.uniform(-60, 60, 200))
lon += list(rng.uniform(-180, 180, 200))
ts += list(10 * year + rng.uniform(0, 12, 200) * MONTH_SECONDS)
labels += [2] * 200

summary = aggregate(np.array(labels), GeoTime(lat, lon, ts))
print(f"{summary.total} items binned, {summary.skipped_missing} without coordinates")
print("label 1 top cells (lat_bin, lon_bin):", summary.top_places(1))
print("label 1 peak month bin:", summary.peak_time(1), "(month index since epoch)")
start, counts = summary.series(1)
print("label 1 monthly counts from bin", start, ":", counts.astype(int).tolist())
print("3-month trend:", np.round(trend(counts, 3), 1).tolist())
