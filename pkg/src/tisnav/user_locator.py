"""User position fixes from bearing rays.

Stage three of the pipeline: every surface array contributes a ray from
its estimated position toward the user, and the user sits where the summed
point-to-ray distance is smallest.  Four estimators are provided:

* "mvm": mean of the pairwise horizontal intersections, lifted to 3-D;
* "lsm": closed-form minimiser of the summed squared line distance;
* "gdm": subgradient descent on the summed distance itself;
* "nuom": derivative-free downhill simplex on the same objective.

The descent and simplex loops run in the compiled kernels when available.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .aoa import RayEstimate
from .errors import GeometryError, UnderdeterminedError
from .scene import Position3

__all__ = [
    "OPTIMIZERS",
    "SolverOptions",
    "UserFix",
    "point_to_ray_distance",
    "objective",
    "solve_mvm",
    "solve_lsm",
    "solve_gdm",
    "solve_nuom",
    "locate_user",
    "user_fixes_to_csv",
    "user_fixes_from_csv",
]

OPTIMIZERS = ("mvm", "nuom", "lsm", "gdm")


@dataclass(frozen=True)
class SolverOptions:
    """Tuning knobs for the iterative estimators.

    ``gdm_backtracking=False`` freezes the descent step length, a crude
    variant used by some reference experiments; the default halves the
    step until it improves the objective.
    """

    gdm_step_m: float = 0.1
    gdm_tol_m: float = 1e-4
    gdm_max_iterations: int = 1000
    gdm_backtracking: bool = True
    nuom_edge_m: float = 0.5
    nuom_tol_m: float = 1e-5
    nuom_max_evaluations: int = 2000
    parallel_sin_threshold: float = 1e-6


@dataclass(frozen=True)
class UserFix:
    """One user position estimate and its diagnostics.

    ``objective_m`` is the summed point-to-ray distance at the estimate and
    ``objective_sq_m2`` the summed squared distance, reported for both
    since the estimators optimise different ones.
    """

    optimizer: str
    position_est: Position3
    objective_m: float
    objective_sq_m2: float
    iterations: int
    converged: bool
    error_vs_truth_m: Optional[float] = None


def point_to_ray_distance(point, origin, direction) -> float:
    """Distance from a point to a forward half-line.

    Points behind the origin measure their distance to the origin itself.
    ``direction`` must have unit norm.
    """
    point = np.asarray(point, dtype=float)
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    if abs(float(np.linalg.norm(direction)) - 1.0) > 1e-9:
        raise ValueError("direction must have unit norm")
    v = point - origin
    t = float(np.dot(v, direction))
    if t > 0.0:
        v = v - t * direction
    return float(np.linalg.norm(v))


def _ray_arrays(rays: Sequence[RayEstimate]):
    origins = np.array([r.origin for r in rays], dtype=float)
    directions = np.array([r.direction for r in rays], dtype=float)
    return origins, directions


def objective(point, rays: Sequence[RayEstimate]) -> float:
    """Summed distance from ``point`` to every ray."""
    if not rays:
        raise ValueError("no rays")
    origins, directions = _ray_arrays(rays)
    return kernels.ray_objective(np.asarray(point, dtype=float), origins, directions)


def _objective_sq(point, origins, directions) -> float:
    p = np.asarray(point, dtype=float)
    total = 0.0
    for o, d in zip(origins, directions):
        v = p - o
        t = float(np.dot(v, d))
        if t > 0.0:
            v = v - t * d
        total += float(np.dot(v, v))
    return total


def _require_rays(rays: Sequence[RayEstimate]) -> None:
    if len(rays) < 2:
        raise UnderdeterminedError(
            f"{len(rays)} ray(s); a user fix needs at least two"
        )


def _finish(
    optimizer: str,
    point: np.ndarray,
    iterations: int,
    converged: bool,
    rays: Sequence[RayEstimate],
    truth,
) -> UserFix:
    origins, directions = _ray_arrays(rays)
    err = None
    if truth is not None:
        t = truth.as_array() if isinstance(truth, Position3) else np.asarray(truth, dtype=float)
        err = float(np.linalg.norm(point - t))
    return UserFix(
        optimizer=optimizer,
        position_est=Position3.from_iterable(point),
        objective_m=kernels.ray_objective(point, origins, directions),
        objective_sq_m2=_objective_sq(point, origins, directions),
        iterations=iterations,
        converged=converged,
        error_vs_truth_m=err,
    )


def solve_mvm(
    rays: Sequence[RayEstimate],
    options: Optional[SolverOptions] = None,
    truth=None,
) -> UserFix:
    """Mean of the pairwise horizontal ray intersections, lifted to 3-D.

    Every non-parallel pair of rays, projected to the horizontal plane,
    intersects in one point; their mean gives the horizontal estimate.
    The height is the mean of each ray's height at its closest forward
    approach to that horizontal point.

    Raises:
        GeometryError: When no ray pair intersects, e.g. all rays parallel.
    """
    _require_rays(rays)
    opts = options if options is not None else SolverOptions()

    planar = []
    for r in rays:
        px, py = float(r.direction[0]), float(r.direction[1])
        n = (px * px + py * py) ** 0.5
        planar.append((px / n, py / n) if n > 1e-12 else None)

    points = []
    for i, j in combinations(range(len(rays)), 2):
        if planar[i] is None or planar[j] is None:
            continue
        uxi, uyi = planar[i]
        uxj, uyj = planar[j]
        sin_ij = uxi * uyj - uyi * uxj
        if abs(sin_ij) <= opts.parallel_sin_threshold:
            continue
        dx = float(rays[j].origin[0] - rays[i].origin[0])
        dy = float(rays[j].origin[1] - rays[i].origin[1])
        t_i = (dx * uyj - dy * uxj) / sin_ij
        points.append(
            (
                float(rays[i].origin[0]) + t_i * uxi,
                float(rays[i].origin[1]) + t_i * uyi,
            )
        )
    if not points:
        raise GeometryError(
            "no horizontal ray pair intersects; rays are parallel or vertical"
        )
    x = sum(p[0] for p in points) / len(points)
    y = sum(p[1] for p in points) / len(points)

    heights = []
    for r in rays:
        dxy = r.direction[:2]
        nsq = float(np.dot(dxy, dxy))
        if nsq <= 1e-24:
            continue
        s = (
            (x - float(r.origin[0])) * float(r.direction[0])
            + (y - float(r.origin[1])) * float(r.direction[1])
        ) / nsq
        if s < 0.0:
            s = 0.0
        heights.append(float(r.origin[2]) + s * float(r.direction[2]))
    z = (
        sum(heights) / len(heights)
        if heights
        else float(np.mean([r.origin[2] for r in rays]))
    )
    return _finish("mvm", np.array([x, y, z]), 0, True, rays, truth)


def solve_lsm(
    rays: Sequence[RayEstimate],
    options: Optional[SolverOptions] = None,
    truth=None,
) -> UserFix:
    """Closed-form minimiser of the summed squared distance to the lines.

    Solves ``sum(I - d d^T) p = sum(I - d d^T) o`` over the full lines
    carrying the rays.  This is the unique least-squares point whenever the
    directions span more than one line.

    Raises:
        GeometryError: Near-singular normal matrix (parallel rays).
    """
    _require_rays(rays)
    origins, directions = _ray_arrays(rays)
    m = np.zeros((3, 3))
    b = np.zeros(3)
    eye = np.eye(3)
    for o, d in zip(origins, directions):
        proj = eye - np.outer(d, d)
        m += proj
        b += proj @ o
    cond = float(np.linalg.cond(m))
    if not np.isfinite(cond) or cond > 1e10:
        raise GeometryError(
            "summed projector is numerically singular; ray directions are"
            " parallel or nearly so",
            condition_number=cond,
        )
    point = np.linalg.solve(m, b)
    return _finish("lsm", point, 0, True, rays, truth)


def _start_point(rays, options) -> np.ndarray:
    try:
        return solve_mvm(rays, options).position_est.as_array()
    except GeometryError:
        origins, _ = _ray_arrays(rays)
        return origins.mean(axis=0)


def solve_gdm(
    rays: Sequence[RayEstimate],
    options: Optional[SolverOptions] = None,
    truth=None,
) -> UserFix:
    """Subgradient descent on the summed ray distance.

    Starts from the horizontal-intersection estimate and takes fixed-length
    steps along the negative normalised subgradient, halving on failure to
    improve unless backtracking is disabled.
    """
    _require_rays(rays)
    opts = options if options is not None else SolverOptions()
    origins, directions = _ray_arrays(rays)
    start = _start_point(rays, opts)
    point, iterations, converged, _ = kernels.gradient_descent(
        origins,
        directions,
        start,
        opts.gdm_step_m,
        opts.gdm_tol_m,
        opts.gdm_max_iterations,
        opts.gdm_backtracking,
    )
    return _finish("gdm", point, iterations, converged, rays, truth)


def solve_nuom(
    rays: Sequence[RayEstimate],
    options: Optional[SolverOptions] = None,
    truth=None,
) -> UserFix:
    """Downhill simplex on the summed ray distance.

    Starts from the horizontal-intersection estimate with an axis-aligned
    initial simplex; ``iterations`` on the result counts objective
    evaluations.
    """
    _require_rays(rays)
    opts = options if options is not None else SolverOptions()
    origins, directions = _ray_arrays(rays)
    start = _start_point(rays, opts)
    point, evaluations, converged, _ = kernels.nelder_mead(
        origins,
        directions,
        start,
        opts.nuom_edge_m,
        opts.nuom_tol_m,
        opts.nuom_max_evaluations,
    )
    return _finish("nuom", point, evaluations, converged, rays, truth)


_SOLVERS = {
    "mvm": solve_mvm,
    "lsm": solve_lsm,
    "gdm": solve_gdm,
    "nuom": solve_nuom,
}


def locate_user(
    rays: Sequence[RayEstimate],
    optimizer: str = "lsm",
    options: Optional[SolverOptions] = None,
    truth=None,
) -> UserFix:
    """Run one of the four estimators on a set of rays."""
    if optimizer not in _SOLVERS:
        raise ValueError(
            f"unknown optimizer {optimizer!r}; expected one of {OPTIMIZERS}"
        )
    return _SOLVERS[optimizer](rays, options, truth)


_CSV_FIELDS = (
    "optimizer", "x_m", "y_m", "z_m", "objective_m", "objective_sq_m2",
    "iterations", "converged", "err_m",
)


def user_fixes_to_csv(fixes: Sequence[UserFix], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_FIELDS)
        for f in fixes:
            writer.writerow(
                [
                    f.optimizer,
                    repr(f.position_est.x_m),
                    repr(f.position_est.y_m),
                    repr(f.position_est.z_m),
                    repr(f.objective_m),
                    repr(f.objective_sq_m2),
                    f.iterations,
                    int(f.converged),
                    "" if f.error_vs_truth_m is None else repr(f.error_vs_truth_m),
                ]
            )


def user_fixes_from_csv(path) -> tuple:
    fixes = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != _CSV_FIELDS:
            raise ValueError(f"{path}: expected columns {_CSV_FIELDS}")
        for row in reader:
            fixes.append(
                UserFix(
                    optimizer=row["optimizer"],
                    position_est=Position3(
                        float(row["x_m"]), float(row["y_m"]), float(row["z_m"])
                    ),
                    objective_m=float(row["objective_m"]),
                    objective_sq_m2=float(row["objective_sq_m2"]),
                    iterations=int(row["iterations"]),
                    converged=bool(int(row["converged"])),
                    error_vs_truth_m=(
                        float(row["err_m"]) if row["err_m"] else None
                    ),
                )
            )
    return tuple(fixes)
