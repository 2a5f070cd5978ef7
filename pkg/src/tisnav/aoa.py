"""Angle estimation at the surface arrays and ray construction.

The receiver scans a dictionary of hypothesised (satellite-side angle,
user-side angle) pairs on a finite grid.  Every dictionary column factors
as a user-side basis vector times a complex scalar carrying both angles, so
the projection residual identifies only the user-side angle; the
satellite-side angle is then recovered by a matched full-model residual at
the chosen user angle.  Estimated user-side angles, widened by a uniform
ambiguity bounded by the serving beamwidth, become rays for the final
position fix.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .channel import (
    array_axis,
    array_factor,
    large_scale,
    satellite_offset_angle,
    user_offset_angle,
)
from .pseudorange import NoiseModel
from .scene import Position3, Scene, TisArray

__all__ = [
    "AngleGrid",
    "AoaSignalModel",
    "AoaEstimate",
    "default_codebook",
    "dictionary_column",
    "projection_residual",
    "estimate_aoa",
    "hpbw_upa",
    "hpbw_planar",
    "ambiguity_halfwidth_rad",
    "perturb_direction",
    "apply_ambiguity",
    "RayEstimate",
    "ray_from_user_angle",
    "rays_to_csv",
    "rays_from_csv",
]

_QUARTER_TURN = math.pi / 2.0


@dataclass(frozen=True)
class AngleGrid:
    """Strictly increasing angles in [0, pi/2], radians."""

    values_rad: tuple

    def __post_init__(self):
        if not self.values_rad:
            raise ValueError("empty angle grid")
        prev = None
        for v in self.values_rad:
            if v < -1e-12 or v > _QUARTER_TURN + 1e-12:
                raise ValueError(f"grid angle {v!r} outside [0, pi/2]")
            if prev is not None and v <= prev:
                raise ValueError("grid angles must strictly increase")
            prev = v

    @classmethod
    def uniform(cls, step_deg: float = 1.0) -> "AngleGrid":
        """Grid from 0 to 90 degrees inclusive with the given step."""
        if step_deg <= 0.0:
            raise ValueError("step must be positive")
        n = int(math.floor(90.0 / step_deg + 1e-9))
        values = [math.radians(k * step_deg) for k in range(n + 1)]
        if values[-1] > _QUARTER_TURN:
            values[-1] = _QUARTER_TURN
        return cls(values_rad=tuple(values))

    def __len__(self) -> int:
        return len(self.values_rad)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values_rad)


def default_codebook(
    antennas: int, spacing_m: float, wavelength_m: float, grid: AngleGrid
) -> np.ndarray:
    """Steering-vector codebook, one unit-norm column per grid angle."""
    cols = [
        array_factor(antennas, spacing_m, wavelength_m, b)
        for b in grid.values_rad
    ]
    return np.stack(cols, axis=1)


@dataclass
class AoaSignalModel:
    """Everything the dictionary needs about one serving link.

    ``amplitude`` carries the known large-scale amplitude and pilot symbol
    so the matched residual vanishes at the true angles on-grid.
    """

    wavelength_m: float
    combiner: np.ndarray
    user_antennas: int
    user_spacing_m: float
    tis_elements: int
    tis_spacing_m: float
    transmission: np.ndarray
    tx_antennas: int
    tx_spacing_m: float
    precoder: np.ndarray
    amplitude: float = 1.0

    def __post_init__(self):
        self.combiner = np.asarray(self.combiner, dtype=complex)
        self.transmission = np.asarray(self.transmission, dtype=complex)
        self.precoder = np.asarray(self.precoder, dtype=complex)
        if self.combiner.shape[0] != self.user_antennas:
            raise ValueError("combiner row count must match user antennas")
        if self.transmission.shape != (self.tis_elements,):
            raise ValueError("transmission must be one coefficient per element")
        if self.precoder.shape != (self.tx_antennas,):
            raise ValueError("precoder length must match transmit antennas")

    @classmethod
    def from_scene(
        cls,
        scene: Scene,
        tis_id: int,
        satellite_id: Optional[int] = None,
        *,
        combiner: Optional[np.ndarray] = None,
        grid: Optional[AngleGrid] = None,
        tx_power_w: float = 1.0,
        antenna_gain: float = 1.0,
        tis_position: Optional[Position3] = None,
    ) -> "AoaSignalModel":
        """Model for one surface array serving one satellite.

        Args:
            scene: Source of array and link parameters.
            tis_id: Serving surface array.
            satellite_id: Satellite whose beam the dictionary assumes;
                defaults to the first in the scene.
            combiner: Receive codebook; defaults to steering vectors on
                ``grid`` (or the one-degree grid).
            grid: Grid for the default codebook.
            tx_power_w, antenna_gain: Power terms folded into ``amplitude``.
            tis_position: Override the array position, e.g. with a stage-1
                estimate, when computing the large-scale amplitude.
        """
        tis = scene.tis_by_id(tis_id)
        sat = (
            scene.satellites[0]
            if satellite_id is None
            else scene.satellite_by_id(satellite_id)
        )
        lam = sat.wavelength_m
        if combiner is None:
            g = grid if grid is not None else AngleGrid.uniform(1.0)
            combiner = default_codebook(
                scene.user.rx_antennas, scene.user.antenna_spacing_m, lam, g
            )
        ref = tis_position if tis_position is not None else tis.position
        sat_angle = satellite_offset_angle(tis, sat.position)
        precoder = array_factor(
            sat.tx_antennas,
            sat.antenna_spacing_m,
            lam,
            _QUARTER_TURN - sat_angle,
        )
        d_ir = float(np.linalg.norm(sat.position.as_array() - ref.as_array()))
        d_ru = float(
            np.linalg.norm(scene.user.position.as_array() - ref.as_array())
        )
        g_ir = large_scale(antenna_gain, lam, d_ir, link="sat_to_tis")
        g_ru = large_scale(antenna_gain, lam, d_ru, link="tis_to_user")
        return cls(
            wavelength_m=lam,
            combiner=combiner,
            user_antennas=scene.user.rx_antennas,
            user_spacing_m=scene.user.antenna_spacing_m,
            tis_elements=tis.elements,
            tis_spacing_m=tis.element_spacing_m,
            transmission=tis.transmission_diagonal(),
            tx_antennas=sat.tx_antennas,
            tx_spacing_m=sat.antenna_spacing_m,
            precoder=precoder,
            amplitude=math.sqrt(g_ir.value * g_ru.value * tx_power_w),
        )

    # ------------------------------------------------------------------
    # cached grid sweeps

    def user_basis(self, user_grid: AngleGrid) -> np.ndarray:
        """(D, n_b) combined user-side vectors, one column per user angle."""
        u = _steering_matrix(
            self.user_antennas,
            self.user_spacing_m,
            self.wavelength_m,
            user_grid.as_array(),
        )
        return self.combiner.conj().T @ u

    def through_scalars(
        self, sat_grid: AngleGrid, user_grid: AngleGrid
    ) -> np.ndarray:
        """(n_a, n_b) complex scalars carrying both angles.

        Entry (a, b) is the surface passthrough ``t_K(pi/2-b)^H Psi r_K(a)``
        times the satellite-side inner product ``t_M(pi/2-a)^H p``.
        """
        a = sat_grid.as_array()
        b = user_grid.as_array()
        t_k = _steering_matrix(
            self.tis_elements,
            self.tis_spacing_m,
            self.wavelength_m,
            _QUARTER_TURN - b,
        )
        r_k = _steering_matrix(
            self.tis_elements, self.tis_spacing_m, self.wavelength_m, a
        )
        t_m = _steering_matrix(
            self.tx_antennas, self.tx_spacing_m, self.wavelength_m,
            _QUARTER_TURN - a,
        )
        passthrough = t_k.conj().T @ (self.transmission[:, None] * r_k)
        sat_side = t_m.conj().T @ self.precoder
        return passthrough.T * sat_side[:, None]


def _steering_matrix(
    elements: int, spacing_m: float, wavelength_m: float, angles_rad: np.ndarray
) -> np.ndarray:
    """Stack of unit-norm steering vectors, one column per angle."""
    q = np.arange(elements)[:, None]
    phase = -2.0 * math.pi * spacing_m / wavelength_m * np.sin(angles_rad)[None, :]
    return np.exp(1j * q * phase) / math.sqrt(elements)


def _check_angle(angle_rad: float, name: str) -> None:
    if angle_rad < -1e-12 or angle_rad > _QUARTER_TURN + 1e-12:
        raise ValueError(f"{name} {angle_rad!r} outside [0, pi/2]")


def dictionary_column(
    model: AoaSignalModel, sat_angle_rad: float, user_angle_rad: float
) -> np.ndarray:
    """Noise-free combined signal for one hypothesised angle pair."""
    _check_angle(sat_angle_rad, "satellite-side angle")
    _check_angle(user_angle_rad, "user-side angle")
    u_b = array_factor(
        model.user_antennas, model.user_spacing_m, model.wavelength_m,
        user_angle_rad,
    )
    t_k = array_factor(
        model.tis_elements, model.tis_spacing_m, model.wavelength_m,
        _QUARTER_TURN - user_angle_rad,
    )
    r_k = array_factor(
        model.tis_elements, model.tis_spacing_m, model.wavelength_m,
        sat_angle_rad,
    )
    t_m = array_factor(
        model.tx_antennas, model.tx_spacing_m, model.wavelength_m,
        _QUARTER_TURN - sat_angle_rad,
    )
    through = (t_k.conj() @ (model.transmission * r_k)) * (
        t_m.conj() @ model.precoder
    )
    return model.amplitude * through * (model.combiner.conj().T @ u_b)


def projection_residual(y: np.ndarray, column: np.ndarray) -> float:
    """Energy of ``y`` outside the span of one dictionary column.

    A zero column spans nothing, so the full energy of ``y`` is returned.
    """
    y = np.asarray(y, dtype=complex)
    column = np.asarray(column, dtype=complex)
    if y.shape != column.shape:
        raise ValueError("signal and column shapes differ")
    den = float(np.vdot(column, column).real)
    yy = float(np.vdot(y, y).real)
    if den <= 0.0:
        return yy
    num = abs(np.vdot(column, y)) ** 2
    return max(0.0, yy - num / den)


@dataclass(frozen=True)
class AoaEstimate:
    """Grid-search result for one surface array."""

    sat_angle_rad: float
    user_angle_rad: float
    sat_index: int
    user_index: int
    residual: float


def estimate_aoa(
    y: np.ndarray,
    model: AoaSignalModel,
    sat_grid: AngleGrid,
    user_grid: AngleGrid,
) -> AoaEstimate:
    """Exhaustive dictionary search over the angle grids.

    The user-side angle minimises the projection residual, which is
    constant along the satellite-side axis because every column with the
    same user angle points in the same direction.  The satellite-side
    angle then minimises the matched residual ``|y - column|^2`` along the
    chosen user angle, which is informative because the column amplitude is
    known.  Ties resolve to the lowest grid index.

    Returns:
        :class:`AoaEstimate` whose ``residual`` is the final matched value.
    """
    y = np.asarray(y, dtype=complex)
    basis = model.user_basis(user_grid)
    if y.shape != (basis.shape[0],):
        raise ValueError(
            f"signal length {y.shape} does not match codebook size"
            f" {basis.shape[0]}"
        )
    scal = model.through_scalars(sat_grid, user_grid)

    yy = float(np.vdot(y, y).real)
    den = np.einsum("db,db->b", basis.conj(), basis).real
    cross = basis.conj().T @ y
    with np.errstate(divide="ignore", invalid="ignore"):
        proj = yy - np.abs(cross) ** 2 / den
    # Columns that vanish for every satellite angle cannot explain any
    # energy; a vanishing basis vector is the same situation.
    usable = (den > 0.0) & np.any(np.abs(scal) > 0.0, axis=0)
    proj = np.where(usable, np.maximum(proj, 0.0), yy)
    user_index = int(np.argmin(proj))

    coef = model.amplitude * scal[:, user_index]
    matched = (
        yy
        - 2.0 * (np.conj(coef) * cross[user_index]).real
        + np.abs(coef) ** 2 * den[user_index]
    )
    sat_index = int(np.argmin(matched))
    return AoaEstimate(
        sat_angle_rad=float(sat_grid.values_rad[sat_index]),
        user_angle_rad=float(user_grid.values_rad[user_index]),
        sat_index=sat_index,
        user_index=user_index,
        residual=float(max(0.0, matched[sat_index])),
    )


# --------------------------------------------------------------------------
# beamwidth and ambiguity


def hpbw_upa(
    elements: int,
    spacing_over_wavelength: float,
    steer_angle_rad: float = 0.0,
) -> float:
    """Half-power beamwidth of a square planar array, degrees.

    Empirical aperture rule: 102 degrees divided by the aperture side in
    wavelengths, widened by the scan cosine.  Spacing is given as a
    fraction of the wavelength (0.5 for the usual half-wave pitch).
    """
    if elements < 1:
        raise ValueError("need at least one element")
    if spacing_over_wavelength <= 0.0:
        raise ValueError("spacing ratio must be positive")
    c = math.cos(steer_angle_rad)
    if abs(c) < 1e-9:
        raise ValueError("beamwidth undefined at endfire steering")
    side = math.sqrt(elements)
    return 102.0 / (side * spacing_over_wavelength * c)


def hpbw_planar(
    width_x_deg: float,
    width_y_deg: float,
    steer_theta_rad: float,
    steer_azimuth_rad: float,
) -> float:
    """Beamwidth of a rectangular aperture steered off broadside, degrees.

    Combines the principal-plane widths by the azimuth of the steering
    direction and divides by the elevation cosine.
    """
    if width_x_deg <= 0.0 or width_y_deg <= 0.0:
        raise ValueError("principal-plane widths must be positive")
    c = math.cos(steer_theta_rad)
    if abs(c) < 1e-9:
        raise ValueError("beamwidth undefined at endfire steering")
    mix = math.sqrt(
        (math.cos(steer_azimuth_rad) / width_x_deg) ** 2
        + (math.sin(steer_azimuth_rad) / width_y_deg) ** 2
    )
    return 1.0 / (c * mix)


def ambiguity_halfwidth_rad(
    noise: NoiseModel, tis: TisArray, wavelength_m: float
) -> float:
    """Half-width of the uniform angular error interval, radians.

    The configured width (fixed degrees, or the broadside beamwidth of the
    serving array) is a full width; draws span plus or minus half of it.
    """
    mode = noise.aoa_ambiguity_mode
    if mode == "none":
        return 0.0
    if mode == "fixed_deg":
        if noise.aoa_ambiguity_deg is None or noise.aoa_ambiguity_deg < 0.0:
            raise ValueError("fixed_deg mode needs a non-negative width")
        return math.radians(noise.aoa_ambiguity_deg) / 2.0
    if mode == "hpbw_uniform":
        width = hpbw_upa(tis.elements, tis.element_spacing_m / wavelength_m)
        return math.radians(width) / 2.0
    raise ValueError(f"unknown ambiguity mode {mode!r}")


def perturb_direction(
    direction: np.ndarray, raw, halfwidth_rad: float
) -> np.ndarray:
    """Shift elevation and azimuth by ``raw * halfwidth`` and rebuild.

    ``raw`` holds two unit-interval draws (elevation first).  Separating
    the draws from the width lets sweeps reuse one set of draws across
    ambiguity levels, which pairs the levels for variance reduction.
    """
    z = max(-1.0, min(1.0, float(direction[2])))
    el = math.asin(z) + float(raw[0]) * halfwidth_rad
    az = math.atan2(float(direction[1]), float(direction[0]))
    az += float(raw[1]) * halfwidth_rad
    el = max(-_QUARTER_TURN, min(_QUARTER_TURN, el))
    c = math.cos(el)
    return np.array([c * math.cos(az), c * math.sin(az), math.sin(el)])


def apply_ambiguity(
    direction: np.ndarray, halfwidth_rad: float, rng: np.random.Generator
) -> np.ndarray:
    """Perturb a unit direction by independent uniform angular errors.

    Elevation and azimuth each receive an independent draw from
    ``U(-halfwidth, +halfwidth)``; the result is re-normalised by
    construction.  The elevation draw comes first, which fixes the stream
    layout for reproducibility.
    """
    direction = np.asarray(direction, dtype=float)
    if direction.shape != (3,):
        raise ValueError("direction must be a 3-vector")
    norm = float(np.linalg.norm(direction))
    if abs(norm - 1.0) > 1e-9:
        raise ValueError("direction must have unit norm")
    if halfwidth_rad < 0.0:
        raise ValueError("halfwidth must be non-negative")
    if halfwidth_rad == 0.0:
        return direction.copy()
    raw = rng.uniform(-1.0, 1.0, 2)
    return perturb_direction(direction, raw, halfwidth_rad)


# --------------------------------------------------------------------------
# rays


@dataclass(frozen=True, eq=False)
class RayEstimate:
    """Half-line from an estimated array position toward the user."""

    tis_id: int
    origin: np.ndarray
    direction: np.ndarray
    ambiguity_halfwidth_rad: float
    elevation_rad: float
    azimuth_rad: float

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=float)
        direction = np.asarray(self.direction, dtype=float)
        if origin.shape != (3,) or direction.shape != (3,):
            raise ValueError("origin and direction must be 3-vectors")
        norm = float(np.linalg.norm(direction))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError("ray direction must have unit norm")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "direction", direction)

    @classmethod
    def from_direction(
        cls,
        tis_id: int,
        origin,
        direction,
        ambiguity_halfwidth_rad: float = 0.0,
    ) -> "RayEstimate":
        direction = np.asarray(direction, dtype=float)
        norm = float(np.linalg.norm(direction))
        if norm < 1e-12:
            raise ValueError("ray direction must be nonzero")
        d = direction / norm
        z = max(-1.0, min(1.0, float(d[2])))
        return cls(
            tis_id=tis_id,
            origin=np.asarray(origin, dtype=float),
            direction=d,
            ambiguity_halfwidth_rad=ambiguity_halfwidth_rad,
            elevation_rad=math.asin(z),
            azimuth_rad=math.atan2(float(d[1]), float(d[0])),
        )


def ray_from_user_angle(
    tis: TisArray,
    user_angle_rad: float,
    origin=None,
    ambiguity_halfwidth_rad: float = 0.0,
) -> RayEstimate:
    """Horizontal ray at the estimated user-side offset from the array axis.

    The grid search resolves only the offset magnitude from the reference
    axis; the ray is laid out counter-clockwise from that axis in the
    horizontal plane, which matches how the fan scenes are built.
    """
    _check_angle(user_angle_rad, "user-side angle")
    axis = array_axis(tis.position)
    base_az = math.atan2(float(axis[1]), float(axis[0]))
    az = base_az + user_angle_rad
    direction = np.array([math.cos(az), math.sin(az), 0.0])
    o = tis.position.as_array() if origin is None else origin
    return RayEstimate.from_direction(
        tis.id, o, direction, ambiguity_halfwidth_rad
    )


_RAY_FIELDS = (
    "tis", "ox_m", "oy_m", "oz_m", "dx", "dy", "dz",
    "elev_deg", "azim_deg", "halfwidth_deg",
)


def rays_to_csv(rays: Sequence[RayEstimate], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_RAY_FIELDS)
        for r in rays:
            writer.writerow(
                [
                    r.tis_id,
                    repr(float(r.origin[0])),
                    repr(float(r.origin[1])),
                    repr(float(r.origin[2])),
                    repr(float(r.direction[0])),
                    repr(float(r.direction[1])),
                    repr(float(r.direction[2])),
                    repr(math.degrees(r.elevation_rad)),
                    repr(math.degrees(r.azimuth_rad)),
                    repr(math.degrees(r.ambiguity_halfwidth_rad)),
                ]
            )


def rays_from_csv(path) -> tuple:
    rays = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != _RAY_FIELDS:
            raise ValueError(f"{path}: expected columns {_RAY_FIELDS}")
        for row in reader:
            rays.append(
                RayEstimate(
                    tis_id=int(row["tis"]),
                    origin=np.array(
                        [float(row["ox_m"]), float(row["oy_m"]), float(row["oz_m"])]
                    ),
                    direction=np.array(
                        [float(row["dx"]), float(row["dy"]), float(row["dz"])]
                    ),
                    ambiguity_halfwidth_rad=math.radians(
                        float(row["halfwidth_deg"])
                    ),
                    elevation_rad=math.radians(float(row["elev_deg"])),
                    azimuth_rad=math.radians(float(row["azim_deg"])),
                )
            )
    return tuple(rays)
