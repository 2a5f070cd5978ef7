"""Geometry and accuracy metrics.

The dilution measure used here sums the distances of the anchor positions
from their centroid: a spread-out anchor set scores high, a collapsed one
scores zero.  Compactness is the population spread of anchor-to-user
distances, zero exactly when the anchors sit on a sphere around the user.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scene import Position3

__all__ = [
    "tpdop",
    "compactness_rmse",
    "ErrorStats",
    "error_stats",
    "GeometryReport",
    "geometry_report",
    "geometry_reports_to_csv",
    "geometry_reports_from_csv",
]


def _points(positions) -> np.ndarray:
    rows = [
        p.as_array() if isinstance(p, Position3) else np.asarray(p, dtype=float)
        for p in positions
    ]
    if not rows:
        raise ValueError("no positions")
    pts = np.stack(rows)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("positions must be 3-vectors")
    return pts


def tpdop(positions: Sequence) -> tuple[float, Position3]:
    """Summed distance of the anchor positions from their centroid.

    Returns the sum together with the centroid itself, since callers that
    track constellation motion need both.
    """
    pts = _points(positions)
    centroid = pts.mean(axis=0)
    total = float(np.linalg.norm(pts - centroid, axis=1).sum())
    return total, Position3.from_iterable(centroid)


def compactness_rmse(positions: Sequence, reference) -> float:
    """Population standard deviation of the anchor-to-reference distances."""
    pts = _points(positions)
    ref = (
        reference.as_array()
        if isinstance(reference, Position3)
        else np.asarray(reference, dtype=float)
    )
    distances = np.linalg.norm(pts - ref, axis=1)
    return float(np.std(distances))


@dataclass(frozen=True)
class ErrorStats:
    """Summary of positioning error magnitudes."""

    mean_m: float
    std_m: float
    p95_m: float
    count: int


def error_stats(estimates, truths) -> ErrorStats:
    """Mean, population spread, and 95th percentile of error magnitudes.

    Args:
        estimates: ``(n, 3)`` estimated positions.
        truths: Matching ``(n, 3)`` truths, or a single 3-vector shared by
            every estimate.
    """
    est = _points(estimates)
    if isinstance(truths, Position3):
        ref = truths.as_array()
    else:
        ref = np.asarray(
            [t.as_array() if isinstance(t, Position3) else t for t in truths],
            dtype=float,
        )
    if ref.ndim == 1:
        ref = np.broadcast_to(ref, est.shape)
    if ref.shape != est.shape:
        raise ValueError("estimates and truths must align")
    errors = np.linalg.norm(est - ref, axis=1)
    return ErrorStats(
        mean_m=float(errors.mean()),
        std_m=float(errors.std()),
        p95_m=float(np.percentile(errors, 95.0)),
        count=int(errors.size),
    )


@dataclass(frozen=True)
class GeometryReport:
    """Anchor-geometry summary for one experiment condition."""

    label: str
    method: str
    tpdop_m: float
    rmse_m: float
    centroid: Position3
    per_tis_distance_m: tuple[float, ...]
    mean_distance_m: float
    samples: int


def geometry_report(
    label: str,
    method: str,
    positions: Sequence,
    user,
    samples: int = 1,
) -> GeometryReport:
    """Build a report from one anchor constellation and the user position."""
    total, centroid = tpdop(positions)
    pts = _points(positions)
    ref = user.as_array() if isinstance(user, Position3) else np.asarray(user, float)
    distances = np.linalg.norm(pts - ref, axis=1)
    return GeometryReport(
        label=label,
        method=method,
        tpdop_m=total,
        rmse_m=float(np.std(distances)),
        centroid=centroid,
        per_tis_distance_m=tuple(float(d) for d in distances),
        mean_distance_m=float(distances.mean()),
        samples=samples,
    )


_CSV_FIELDS = (
    "label",
    "method",
    "tpdop_m",
    "rmse_m",
    "cx_m",
    "cy_m",
    "cz_m",
    "mean_distance_m",
    "per_tis_distance_m",
    "samples",
)


def geometry_reports_to_csv(reports: Sequence[GeometryReport], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_FIELDS)
        for r in reports:
            writer.writerow(
                [
                    r.label,
                    r.method,
                    repr(r.tpdop_m),
                    repr(r.rmse_m),
                    repr(r.centroid.x_m),
                    repr(r.centroid.y_m),
                    repr(r.centroid.z_m),
                    repr(r.mean_distance_m),
                    ";".join(repr(d) for d in r.per_tis_distance_m),
                    r.samples,
                ]
            )


def geometry_reports_from_csv(path) -> tuple:
    reports = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != _CSV_FIELDS:
            raise ValueError(f"{path}: expected columns {_CSV_FIELDS}")
        for row in reader:
            per = row["per_tis_distance_m"]
            reports.append(
                GeometryReport(
                    label=row["label"],
                    method=row["method"],
                    tpdop_m=float(row["tpdop_m"]),
                    rmse_m=float(row["rmse_m"]),
                    centroid=Position3(
                        float(row["cx_m"]), float(row["cy_m"]), float(row["cz_m"])
                    ),
                    per_tis_distance_m=tuple(
                        float(d) for d in per.split(";") if d
                    ),
                    mean_distance_m=float(row["mean_distance_m"]),
                    samples=int(row["samples"]),
                )
            )
    return tuple(reports)
