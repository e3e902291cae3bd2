"""Single-observation retrieval, +-10 m judging and weather-pair matrices.

Matrices put the testing weather on rows and the reference weather on
columns, in the order S, C, S/C, AR, SS, VC. Marginal and overall means are
weighted by location counts (total correct / total judged).
"""

from dataclasses import dataclass
from enum import Enum
import csv
import io
import json
import math

import numpy as np

from . import kernels
from .errors import ConfigError, EmptyIndexError, StructuralError
from .geo import HEADING_GATE, heading_difference

JUDGE_RADIUS = 10.0


class WeatherCategory(str, Enum):
    S = "S"
    C = "C"
    SC = "S/C"
    AR = "AR"
    SS = "SS"
    VC = "VC"


CATEGORIES = [c.value for c in WeatherCategory]


def weather_category(label):
    try:
        return WeatherCategory(label)
    except ValueError:
        raise ConfigError(f"unknown weather category {label!r}; expected one of {CATEGORIES}") from None


@dataclass
class RunManifest:
    run_id: str
    weather: object  # WeatherCategory or None when unlabeled
    sample_ids: np.ndarray
    east: np.ndarray
    north: np.ndarray
    heading: np.ndarray
    zone: str = ""

    def __post_init__(self):
        self.sample_ids = np.asarray(self.sample_ids, dtype=np.int64)
        self.east = np.asarray(self.east, dtype=float)
        self.north = np.asarray(self.north, dtype=float)
        self.heading = np.asarray(self.heading, dtype=float)
        if len(np.unique(self.sample_ids)) != len(self.sample_ids):
            raise StructuralError(f"run {self.run_id}: duplicate sample ids")
        if self.weather is not None and not isinstance(self.weather, WeatherCategory):
            self.weather = weather_category(self.weather)

    def __len__(self):
        return len(self.sample_ids)

    def subset(self, mask):
        return RunManifest(self.run_id, self.weather, self.sample_ids[mask], self.east[mask],
                           self.north[mask], self.heading[mask], self.zone)


def _lookup(descriptors, ids):
    try:
        return np.array([descriptors[int(s)] for s in ids], dtype=np.float64)
    except KeyError as exc:
        raise StructuralError(f"no descriptor for sample {exc.args[0]}") from None


@dataclass(frozen=True)
class ReferenceIndex:
    """Immutable reference set, kept sorted by sample id so the first minimum is the lowest id."""

    sample_ids: np.ndarray
    descriptors: np.ndarray
    east: np.ndarray
    north: np.ndarray
    heading: np.ndarray
    zone: str = ""

    def __len__(self):
        return len(self.sample_ids)


def build_index(run, descriptors):
    """``descriptors`` maps sample id -> vector for every sample of ``run``."""
    order = np.argsort(run.sample_ids, kind="stable")
    ids = run.sample_ids[order]
    if len(ids) == 0:
        desc = np.zeros((0, 0))
    else:
        try:
            desc = _lookup(descriptors, ids)
        except ValueError:
            raise StructuralError("descriptor lengths differ within the index") from None
        desc = desc.reshape(len(ids), -1)
    arrs = [a.copy() for a in (ids, desc, run.east[order], run.north[order], run.heading[order])]
    for a in arrs:
        a.setflags(write=False)
    return ReferenceIndex(*arrs, run.zone)


def _exact_distance(index, row, q):
    d = index.descriptors[row] - q
    return float(np.sqrt(np.dot(d, d)))


def query_many(index, queries):
    """Nearest reference row for each query; returns (rows, distances)."""
    if len(index) == 0:
        raise EmptyIndexError("query against an empty reference index")
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if q.shape[1] != index.descriptors.shape[1]:
        raise StructuralError(
            f"query length {q.shape[1]} does not match index length {index.descriptors.shape[1]}")
    rows, _ = kernels.nearest_rows(index.descriptors, q)
    dist = np.array([_exact_distance(index, r, qq) for r, qq in zip(rows, q)])
    return rows, dist


def query_nearest(index, q):
    """(sample_id, distance) of the L2-nearest entry; ties -> lowest sample id."""
    rows, dist = query_many(index, q)
    return int(index.sample_ids[rows[0]]), float(dist[0])


def linear_scan(index, q):
    """Reference exhaustive search (slow path the accelerated one must match)."""
    if len(index) == 0:
        raise EmptyIndexError("query against an empty reference index")
    q = np.asarray(q, dtype=np.float64)
    best, best_row = math.inf, -1
    for row in range(len(index)):
        d = _exact_distance(index, row, q)
        if d < best:
            best, best_row = d, row
    return int(index.sample_ids[best_row]), best


def judge(match_pose, truth_pose, radius=JUDGE_RADIUS, heading_gate=HEADING_GATE):
    """Correct iff within ``radius`` metres and (unless the gate is None) heading-compatible."""
    if match_pose.zone != truth_pose.zone:
        raise StructuralError(f"UTM zone mismatch: {match_pose.zone} vs {truth_pose.zone}")
    if match_pose.distance_to(truth_pose) > radius:
        return False
    if heading_gate is None:
        return True
    return bool(heading_difference(match_pose.heading, truth_pose.heading) < heading_gate)


@dataclass(frozen=True)
class AccuracyResult:
    correct: int
    total: int

    @property
    def percent(self):
        return 100.0 * self.correct / self.total if self.total else float("nan")


def accuracy_over(test_run, reference_run, descriptors, radius=JUDGE_RADIUS, heading_gate=HEADING_GATE):
    """Query each test sample against the reference run and judge the top match."""
    if len(test_run) == 0 or len(reference_run) == 0:
        raise EmptyIndexError("accuracy needs non-empty test and reference runs")
    if test_run.zone != reference_run.zone:
        raise StructuralError(f"UTM zone mismatch: {test_run.zone} vs {reference_run.zone}")
    index = build_index(reference_run, descriptors)
    rows, _ = query_many(index, _lookup(descriptors, test_run.sample_ids))
    d = np.hypot(index.east[rows] - test_run.east, index.north[rows] - test_run.north)
    ok = d <= radius
    if heading_gate is not None:
        ok &= heading_difference(index.heading[rows], test_run.heading) < heading_gate
    return AccuracyResult(int(ok.sum()), len(ok))


@dataclass
class AccuracyMatrix:
    correct: np.ndarray
    total: np.ndarray
    kind: str = "accuracy"

    @classmethod
    def empty(cls, kind="accuracy"):
        n = len(CATEGORIES)
        return cls(np.zeros((n, n), dtype=np.int64), np.zeros((n, n), dtype=np.int64), kind)

    def percent(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.total > 0, 100.0 * self.correct / self.total, np.nan)

    def _ratio(self, c, t):
        return 100.0 * c / t if t else float("nan")

    def row_means(self):
        return [self._ratio(c, t) for c, t in zip(self.correct.sum(1), self.total.sum(1))]

    def col_means(self):
        return [self._ratio(c, t) for c, t in zip(self.correct.sum(0), self.total.sum(0))]

    def overall(self):
        return self._ratio(self.correct.sum(), self.total.sum())

    def overall_cell_mean(self):
        p = self.percent()
        return float(np.nanmean(p)) if np.any(self.total > 0) else float("nan")

    def cell(self, test, reference):
        i, j = CATEGORIES.index(test), CATEGORIES.index(reference)
        return int(self.correct[i, j]), int(self.total[i, j])


def weather_matrix(pairs, kind="accuracy"):
    """Aggregate (test_run, reference_run, AccuracyResult) triples by weather pair."""
    if kind not in ("accuracy", "counts"):
        raise ConfigError(f"unknown matrix kind {kind!r}")
    m = AccuracyMatrix.empty(kind)
    for test_run, ref_run, result in pairs:
        for run in (test_run, ref_run):
            if run.weather is None:
                raise ConfigError(f"run {run.run_id} has no weather label")
        i = CATEGORIES.index(weather_category(test_run.weather).value)
        j = CATEGORIES.index(weather_category(ref_run.weather).value)
        m.correct[i, j] += result.correct
        m.total[i, j] += result.total
    return m


def _fmt(v):
    return "-" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.2f}"


def matrix_rows(m):
    """Table rows (header first) in the printed layout."""
    if m.kind == "counts":
        header = ["test\\reference"] + CATEGORIES + ["Total"]
        rows = [header]
        for i, cat in enumerate(CATEGORIES):
            cells = [str(t) if t else "-" for t in m.total[i]]
            rows.append([cat] + cells + [str(int(m.total[i].sum()))])
        foot = [str(int(t)) if t else "-" for t in m.total.sum(0)]
        rows.append(["Total"] + foot + [str(int(m.total.sum()))])
        return rows
    header = ["test\\reference"] + CATEGORIES + ["Mean"]
    rows = [header]
    p = m.percent()
    rm = m.row_means()
    for i, cat in enumerate(CATEGORIES):
        rows.append([cat] + [_fmt(v) for v in p[i]] + [_fmt(rm[i])])
    rows.append(["Mean"] + [_fmt(v) for v in m.col_means()] + [_fmt(m.overall())])
    return rows


def matrix_to_dict(m):
    p = m.percent()

    def num(v):
        return None if math.isnan(v) else round(float(v), 6)

    return {
        "kind": m.kind,
        "rows": "test",
        "columns": "reference",
        "categories": CATEGORIES,
        "cells": [[{"correct": int(m.correct[i, j]), "total": int(m.total[i, j]), "percent": num(p[i, j])}
                   for j in range(len(CATEGORIES))] for i in range(len(CATEGORIES))],
        "row_means": [num(v) for v in m.row_means()],
        "col_means": [num(v) for v in m.col_means()],
        "overall_weighted": num(m.overall()),
        "overall_cell_mean": num(m.overall_cell_mean()),
        "total_judged": int(m.total.sum()),
    }


def render_csv(m):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    rows = matrix_rows(m)
    w.writerows(rows[:1] if m.total.sum() == 0 else rows)
    return buf.getvalue()


def emit_report(matrix, path, fmt="csv"):
    """Write one matrix as CSV (table layout) or JSON (same structure plus counts)."""
    if fmt == "csv":
        text = render_csv(matrix)
    elif fmt == "json":
        text = json.dumps(matrix_to_dict(matrix), indent=2, sort_keys=True) + "\n"
    else:
        raise ConfigError(f"unknown report format {fmt!r}")
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path
