"""Surface-array positioning from corrected pseudo-ranges.

Stage one of the pipeline.  Each corrected range to array ``r`` measures
``|satellite - array| + e`` where ``e`` bundles the array-to-user distance
and the user clock term, both common to every satellite seen by that
array.  Gauss-Newton iterations on (position, e) solve the weighted
least-squares problem per array.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import (
    DivergenceError,
    GeometryError,
    PositioningError,
    UnderdeterminedError,
)
from .pseudorange import PseudorangeObservation, PseudorangeSet
from .scene import Position3, SatelliteEphemeris, Scene

__all__ = [
    "LinearizedSystem",
    "TisFix",
    "linearize",
    "solve_wls",
    "locate_tis",
    "locate_all_tis",
    "tis_fixes_to_csv",
    "tis_fixes_from_csv",
]


@dataclass(frozen=True)
class LinearizedSystem:
    """One Gauss-Newton linearisation.

    ``matrix`` rows hold the unit direction cosines from the trial point
    toward each satellite plus a constant one for the bias; ``residuals``
    are measured minus predicted ranges; ``weights`` is the diagonal of the
    weighting matrix.
    """

    matrix: np.ndarray
    residuals: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class TisFix:
    """Converged (or not) position solution for one surface array."""

    tis_id: int
    position_est: Position3
    range_bias_m: float
    iterations_used: int
    converged: bool
    final_update_norm_m: float
    error_vs_truth_m: Optional[float] = None


def _satellite_map(satellites) -> Mapping[int, SatelliteEphemeris]:
    if isinstance(satellites, Scene):
        return {s.id: s for s in satellites.satellites}
    if isinstance(satellites, Mapping):
        return satellites
    return {s.id: s for s in satellites}


def linearize(
    observations: Sequence[PseudorangeObservation],
    satellites,
    point: np.ndarray,
    bias_m: float,
    weights: Optional[np.ndarray] = None,
) -> LinearizedSystem:
    """Linearise the range equations around a trial (point, bias).

    Raises:
        UnderdeterminedError: Fewer than four distinct satellites.
        GeometryError: Trial point coincides with a satellite.
    """
    sats = _satellite_map(satellites)
    distinct = {o.satellite_id for o in observations}
    if len(distinct) < 4:
        raise UnderdeterminedError(
            f"{len(distinct)} distinct satellite(s); the four unknowns need"
            " at least four"
        )
    n = len(observations)
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n,):
            raise ValueError(f"weights must have shape ({n},)")
        if np.any(w <= 0.0):
            raise ValueError("weights must be positive")

    point = np.asarray(point, dtype=float)
    a = np.empty((n, 4))
    b = np.empty(n)
    for i, obs in enumerate(observations):
        try:
            sat = sats[obs.satellite_id]
        except KeyError:
            raise ValueError(f"no ephemeris for satellite {obs.satellite_id}")
        diff = sat.position.as_array() - point
        dist = float(np.linalg.norm(diff))
        if dist < 1e-6:
            raise GeometryError(
                f"trial point coincides with satellite {sat.id}"
            )
        a[i, :3] = diff / dist
        a[i, 3] = 1.0
        b[i] = obs.corrected_range_m - (dist + bias_m)
    return LinearizedSystem(matrix=a, residuals=b, weights=w)


def solve_wls(system: LinearizedSystem) -> np.ndarray:
    """Weighted least-squares update from one linearisation.

    Returns:
        Length-4 update; subtract the first three components from the
        position and add the last to the bias.

    Raises:
        GeometryError: Normal matrix condition number above 1e12.
    """
    a = system.matrix
    w = system.weights
    normal = a.T @ (w[:, None] * a)
    cond = float(np.linalg.cond(normal))
    if not np.isfinite(cond) or cond > 1e12:
        raise GeometryError(
            "normal matrix is ill-conditioned; satellite geometry is"
            " degenerate",
            condition_number=cond,
        )
    rhs = a.T @ (w * system.residuals)
    return np.linalg.solve(normal, rhs)


def locate_tis(
    observations: Sequence[PseudorangeObservation],
    satellites,
    *,
    initial_position=None,
    initial_bias_m: float = 0.0,
    tolerance_m: float = 1e-4,
    max_iterations: int = 50,
    weights: Optional[np.ndarray] = None,
    truth_position: Optional[Position3] = None,
) -> TisFix:
    """Iterate linearise-and-solve for one surface array.

    Convergence is declared when the full update norm (position and bias
    components, all in metres) drops below ``tolerance_m``.  Hitting the
    iteration cap leaves ``converged`` False on the result; three
    consecutive increases of the update norm abort instead.

    Args:
        observations: Corrected ranges, all for the same array.
        satellites: Scene, mapping, or sequence of ephemerides.
        initial_position: Trial point, default the origin.
        initial_bias_m: Trial combined bias (array-to-user distance plus
            the user clock term, metres).
        truth_position: When given, the result carries its distance to the
            estimate.

    Raises:
        DivergenceError: Update norms grew three times in a row.
    """
    if not observations:
        raise UnderdeterminedError("no observations")
    ids = {o.tis_id for o in observations}
    if len(ids) != 1:
        raise ValueError(f"observations mix surface arrays {sorted(ids)}")
    tis_id = observations[0].tis_id

    point = (
        np.zeros(3)
        if initial_position is None
        else np.asarray(initial_position, dtype=float).copy()
    )
    bias = float(initial_bias_m)
    norms = []
    growth = 0
    converged = False
    iterations = 0
    for k in range(1, max_iterations + 1):
        system = linearize(observations, satellites, point, bias, weights)
        delta = solve_wls(system)
        point = point - delta[:3]
        bias = float(bias + delta[3])
        norm = float(np.linalg.norm(delta))
        iterations = k
        if norms and norm > norms[-1]:
            growth += 1
            if growth >= 3:
                raise DivergenceError(
                    f"surface array {tis_id}: update norm grew three times"
                    f" in a row (last {norm:.3e} m)"
                )
        else:
            growth = 0
        norms.append(norm)
        if norm < tolerance_m:
            converged = True
            break

    err = None
    if truth_position is not None:
        err = float(np.linalg.norm(point - truth_position.as_array()))
    return TisFix(
        tis_id=tis_id,
        position_est=Position3.from_iterable(point),
        range_bias_m=bias,
        iterations_used=iterations,
        converged=converged,
        final_update_norm_m=norms[-1] if norms else float("inf"),
        error_vs_truth_m=err,
    )


def locate_all_tis(
    obs_set: PseudorangeSet,
    satellites,
    *,
    truth_positions: Optional[Mapping[int, Position3]] = None,
    **solver_kwargs,
):
    """Solve stage one for every surface array in an observation set.

    When ``satellites`` is a :class:`Scene` and no explicit truth mapping
    is given, the scene's array positions score the estimates.

    Returns:
        ``(fixes, failures)``: fixes in first-appearance order of the
        arrays, failures as a mapping from array id to the raised error.
    """
    if truth_positions is None and isinstance(satellites, Scene):
        truth_positions = {t.id: t.position for t in satellites.tis_arrays}
    fixes = []
    failures = {}
    for tis_id in obs_set.tis_ids():
        truth = None if truth_positions is None else truth_positions.get(tis_id)
        try:
            fixes.append(
                locate_tis(
                    obs_set.for_tis(tis_id),
                    satellites,
                    truth_position=truth,
                    **solver_kwargs,
                )
            )
        except PositioningError as exc:
            failures[tis_id] = exc
    return tuple(fixes), failures


_CSV_FIELDS = (
    "tis", "x_m", "y_m", "z_m", "bias_m", "iterations", "converged",
    "final_update_m", "err_m",
)


def tis_fixes_to_csv(fixes: Sequence[TisFix], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_FIELDS)
        for f in fixes:
            writer.writerow(
                [
                    f.tis_id,
                    repr(f.position_est.x_m),
                    repr(f.position_est.y_m),
                    repr(f.position_est.z_m),
                    repr(f.range_bias_m),
                    f.iterations_used,
                    int(f.converged),
                    repr(f.final_update_norm_m),
                    "" if f.error_vs_truth_m is None else repr(f.error_vs_truth_m),
                ]
            )


def tis_fixes_from_csv(path) -> tuple:
    fixes = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != _CSV_FIELDS:
            raise ValueError(f"{path}: expected columns {_CSV_FIELDS}")
        for row in reader:
            fixes.append(
                TisFix(
                    tis_id=int(row["tis"]),
                    position_est=Position3(
                        float(row["x_m"]), float(row["y_m"]), float(row["z_m"])
                    ),
                    range_bias_m=float(row["bias_m"]),
                    iterations_used=int(row["iterations"]),
                    converged=bool(int(row["converged"])),
                    final_update_norm_m=float(row["final_update_m"]),
                    error_vs_truth_m=(
                        float(row["err_m"]) if row["err_m"] else None
                    ),
                )
            )
    return tuple(fixes)
