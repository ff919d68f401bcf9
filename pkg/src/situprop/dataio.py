"""Delimited-text input and output for feature tables and solver results."""
from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass

import numpy as np

from .core import DataError, FeatureMatrix, GeoTime, PriorLabels

FEATURE_COLUMN = re.compile(r"^f_\d+$")
NOVEL_NAME = "<novel>"


@dataclass(frozen=True)
class Dataset:
    features: FeatureMatrix
    prior: PriorLabels
    ids: tuple
    label_names: tuple      # index k-1 holds the name of class k


def _num(v: float) -> str:
    return repr(float(v))


def _parse_float(text, line, column, allow_empty=False):
    if allow_empty and text.strip() == "":
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"line {line}: column {column!r} is not numeric: {text!r}") from None
    if not math.isfinite(value):
        raise DataError(f"line {line}: column {column!r} is not finite: {text!r}")
    return value


def ingest(path, label_column="label", lat_column="lat", lon_column="lon",
           time_column="timestamp", u_labeled=100.0, u_unlabeled=0.01) -> Dataset:
    """Read a comma-separated feature table.

    Expected header: ``id``, feature columns ``f_1 .. f_p`` (any columns named
    ``f_<int>``, in file order), and optionally the label and lat/lon/time
    columns. Labels are mapped to class ids 1..c by first appearance; an
    empty label means unlabeled. Errors cite the 1-based file line.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if "id" not in header:
            raise DataError("line 1: missing 'id' column")
        feat_cols = [i for i, h in enumerate(header) if FEATURE_COLUMN.match(h)]
        if not feat_cols:
            raise DataError("line 1: no feature columns named f_<n>")
        id_col = header.index("id")
        lab_col = header.index(label_column) if label_column in header else None
        geo_names = (lat_column, lon_column, time_column)
        geo_present = [name in header for name in geo_names]
        if any(geo_present) and not all(geo_present):
            missing = [n for n, ok in zip(geo_names, geo_present) if not ok]
            raise DataError(f"line 1: incomplete geo-time columns, missing {missing}")
        geo_cols = [header.index(n) for n in geo_names] if all(geo_present) else None

        ids, rows, raw_labels, geo = [], [], [], []
        seen = {}
        for line, rec in enumerate(reader, start=2):
            if not rec or all(not cell.strip() for cell in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"line {line}: expected {len(header)} fields, got {len(rec)}")
            item_id = rec[id_col].strip()
            if item_id in seen:
                raise DataError(f"line {line}: duplicate id {item_id!r} (first on line {seen[item_id]})")
            seen[item_id] = line
            ids.append(item_id)
            rows.append([_parse_float(rec[c], line, header[c]) for c in feat_cols])
            raw_labels.append(rec[lab_col].strip() if lab_col is not None else "")
            if geo_cols is not None:
                geo.append([_parse_float(rec[c], line, header[c], allow_empty=True) for c in geo_cols])

    names = []
    assignments = {}
    for i, name in enumerate(raw_labels):
        if not name:
            continue
        if name not in names:
            names.append(name)
        assignments[i] = names.index(name) + 1
    if not assignments:
        raise DataError(f"{path}: no labeled rows")
    meta = None
    if geo_cols is not None:
        g = np.array(geo, dtype=float).reshape(-1, 3)
        meta = GeoTime(g[:, 0], g[:, 1], g[:, 2])
    features = FeatureMatrix(np.array(rows, dtype=float), meta)
    prior = PriorLabels(assignments, len(names), u_labeled, u_unlabeled)
    prior.validate(features.n)
    return Dataset(features, prior, tuple(ids), tuple(names))


def export(path, dataset: Dataset) -> None:
    """Write a dataset in the format read by :func:`ingest`."""
    x = dataset.features.x
    meta = dataset.features.meta
    header = ["id"] + [f"f_{z + 1}" for z in range(x.shape[1])] + ["label"]
    if meta is not None:
        header += ["lat", "lon", "timestamp"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for i, item_id in enumerate(dataset.ids):
            k = dataset.prior.assignments.get(i)
            row = [item_id] + [_num(v) for v in x[i]] + ["" if k is None else dataset.label_names[k - 1]]
            if meta is not None:
                row += ["" if math.isnan(v) else _num(v)
                        for v in (meta.lat[i], meta.lon[i], meta.timestamp[i])]
            out.writerow(row)


def label_dictionary(label_names) -> dict:
    out = {str(k): name for k, name in enumerate(label_names, start=1)}
    out[str(len(label_names) + 1)] = NOVEL_NAME
    return out


def write_assignments(path, ids, result, label_names) -> None:
    c = len(label_names)
    names = list(label_names) + [NOVEL_NAME]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["id", "assigned_label", "label_name", "is_novel", "max_score"])
        for i, item_id in enumerate(ids):
            k = int(result.assignments[i])
            out.writerow([item_id, k, names[k - 1], int(k == c + 1), _num(result.f[i, k - 1])])


def write_softlabels(path, ids, f) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["id"] + [f"f_{j + 1}" for j in range(f.shape[1])])
        for i, item_id in enumerate(ids):
            out.writerow([item_id] + [_num(v) for v in f[i]])


def read_table(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
