"""Scene description for indoor positioning through transmitting surfaces.

A scene is a local Cartesian frame with the user near the origin, wall or
window mounted transmitting surface arrays a few metres away, and navigation
satellites at orbital range (around 2e7 m). All lengths are metres, all
times seconds, all angles in field names tagged with their unit.

Scene files are YAML with one key per field; floats are written with
``repr`` precision so that write -> read round-trips bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np
import yaml

from .errors import SceneError

__all__ = [
    "Position3",
    "SatelliteEphemeris",
    "TisArray",
    "UserConfig",
    "Scene",
    "euclidean_distance",
    "validate_scene",
    "require_valid",
    "scene_to_dict",
    "scene_from_dict",
    "save_scene",
    "load_scene",
    "rotation_scenario",
    "fan_scene",
    "demo_constellation",
]


@dataclass(frozen=True)
class Position3:
    """A point in the local Cartesian frame, metres."""

    x_m: float
    y_m: float
    z_m: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x_m, self.y_m, self.z_m], dtype=float)

    @classmethod
    def from_iterable(cls, xyz: Iterable[float]) -> "Position3":
        x, y, z = (float(v) for v in xyz)
        return cls(x, y, z)


@dataclass(frozen=True)
class SatelliteEphemeris:
    """Broadcast state of one navigation satellite.

    Attributes:
        id: Positive integer satellite identifier, unique within a scene.
        position: Satellite position at emission time.
        clock_offset_s: Satellite clock offset from system time, known to
            receivers from the broadcast message.
        emit_time_s: Emission timestamp as read on the satellite clock.
        wavelength_m: Carrier wavelength.
        tx_antennas: Number of transmit antennas (uniform linear array).
        antenna_spacing_m: Transmit element spacing.
    """

    id: int
    position: Position3
    clock_offset_s: float
    emit_time_s: float
    wavelength_m: float
    tx_antennas: int
    antenna_spacing_m: float


@dataclass(frozen=True)
class TisArray:
    """One transmitting intelligent surface array.

    Attributes:
        id: Positive integer identifier, unique within a scene.
        position: Array reference point.
        elements: Element count, a perfect square (square panel).
        element_spacing_m: Element pitch.
        transmission_coeffs: Per-element (amplitude, phase_rad) pairs with
            amplitude in [0, 1] and phase in [0, 2*pi).
        time_slot: Slot index in the transmission schedule; the slots of a
            scene form a permutation of 1..R.
    """

    id: int
    position: Position3
    elements: int
    element_spacing_m: float
    transmission_coeffs: tuple
    time_slot: int

    def transmission_diagonal(self) -> np.ndarray:
        """Complex diagonal of the transmission matrix, shape (elements,)."""
        amp = np.array([c[0] for c in self.transmission_coeffs], dtype=float)
        phase = np.array([c[1] for c in self.transmission_coeffs], dtype=float)
        return amp * np.exp(1j * phase)


@dataclass(frozen=True)
class UserConfig:
    """Receiver to be positioned.

    The clock offset is an unknown of the positioning problem; it is stored
    here as ground truth for synthesis and scoring only.
    """

    position: Position3
    clock_offset_s: float
    rx_antennas: int
    antenna_spacing_m: float


@dataclass(frozen=True)
class Scene:
    """Full synthesis input: satellites, surface arrays, user, noise, seed.

    ``noise`` is a :class:`tisnav.pseudorange.NoiseModel`. A single seed
    drives every random draw made for the scene.
    """

    satellites: tuple
    tis_arrays: tuple
    user: UserConfig
    noise: object
    rng_seed: int

    def satellite_by_id(self, sat_id: int) -> SatelliteEphemeris:
        for sat in self.satellites:
            if sat.id == sat_id:
                return sat
        raise KeyError(f"no satellite with id {sat_id}")

    def tis_by_id(self, tis_id: int) -> TisArray:
        for tis in self.tis_arrays:
            if tis.id == tis_id:
                return tis
        raise KeyError(f"no TIS array with id {tis_id}")


def euclidean_distance(a: Position3, b: Position3) -> float:
    """Straight-line distance between two points, metres."""
    return math.sqrt(
        (a.x_m - b.x_m) ** 2 + (a.y_m - b.y_m) ** 2 + (a.z_m - b.z_m) ** 2
    )


# --------------------------------------------------------------------------
# validation

def _is_finite_position(p) -> bool:
    return (
        isinstance(p, Position3)
        and all(math.isfinite(v) for v in (p.x_m, p.y_m, p.z_m))
    )


def validate_scene(scene: Scene) -> list:
    """Check every scene invariant and return the list of violations.

    An empty list means the scene is valid. Diagnostics are plain strings
    naming the violated invariant, one entry per violation.
    """
    diags = []

    sats = scene.satellites
    if len(sats) < 4:
        diags.append("fewer than 4 satellites")
    sat_ids = [s.id for s in sats]
    if len(set(sat_ids)) != len(sat_ids):
        diags.append("satellite ids are not unique")
    for s in sats:
        tag = f"satellite {s.id}"
        if not _is_finite_position(s.position):
            diags.append(f"{tag}: position is not finite")
        if not (s.wavelength_m > 0 and math.isfinite(s.wavelength_m)):
            diags.append(f"{tag}: wavelength must be positive")
        if s.tx_antennas < 1:
            diags.append(f"{tag}: tx_antennas must be at least 1")
        if not (s.antenna_spacing_m > 0):
            diags.append(f"{tag}: antenna spacing must be positive")
        if not math.isfinite(s.clock_offset_s):
            diags.append(f"{tag}: clock offset is not finite")

    arrays = scene.tis_arrays
    if len(arrays) < 2:
        diags.append("fewer than 2 TIS arrays")
    ids = [t.id for t in arrays]
    if sorted(ids) != list(range(1, len(arrays) + 1)):
        diags.append("TIS ids are not a permutation of 1..R")
    slots = [t.time_slot for t in arrays]
    if sorted(slots) != list(range(1, len(arrays) + 1)):
        diags.append("TIS time slots are not a permutation of 1..R")
    for t in arrays:
        tag = f"TIS {t.id}"
        if not _is_finite_position(t.position):
            diags.append(f"{tag}: position is not finite")
        k = t.elements
        if k < 1 or math.isqrt(k) ** 2 != k:
            diags.append(f"{tag}: K not a perfect square")
        if not (t.element_spacing_m > 0):
            diags.append(f"{tag}: element spacing must be positive")
        if len(t.transmission_coeffs) != k:
            diags.append(f"{tag}: expected {k} transmission coefficients")
        for q, (amp, phase) in enumerate(t.transmission_coeffs):
            if not (0.0 <= amp <= 1.0):
                diags.append(f"{tag}: element {q} amplitude outside [0, 1]")
                break
        for q, (amp, phase) in enumerate(t.transmission_coeffs):
            if not (0.0 <= phase < 2.0 * math.pi):
                diags.append(f"{tag}: element {q} phase outside [0, 2*pi)")
                break

    user = scene.user
    if not _is_finite_position(user.position):
        diags.append("user: position is not finite")
    if user.rx_antennas < 1:
        diags.append("user: rx_antennas must be at least 1")
    if not (user.antenna_spacing_m > 0):
        diags.append("user: antenna spacing must be positive")
    if not math.isfinite(user.clock_offset_s):
        diags.append("user: clock offset is not finite")

    noise = scene.noise
    if noise.code_sigma_m < 0:
        diags.append("noise: code sigma must be non-negative")
    if noise.carrier_sigma_m < 0:
        diags.append("noise: carrier sigma must be non-negative")
    if noise.carrier_sigma_m > noise.code_sigma_m:
        diags.append("noise: carrier sigma exceeds code sigma")
    if noise.aoa_ambiguity_mode not in ("hpbw_uniform", "fixed_deg", "none"):
        diags.append(f"noise: unknown ambiguity mode {noise.aoa_ambiguity_mode!r}")
    if noise.aoa_ambiguity_mode == "fixed_deg":
        if noise.aoa_ambiguity_deg is None or noise.aoa_ambiguity_deg < 0:
            diags.append("noise: fixed_deg mode needs a non-negative angle")

    return diags


def require_valid(scene: Scene) -> Scene:
    """Return the scene unchanged, raising SceneError when invalid."""
    diags = validate_scene(scene)
    if diags:
        raise SceneError("; ".join(diags))
    return scene


# --------------------------------------------------------------------------
# serialization

def _position_to_list(p: Position3) -> list:
    return [p.x_m, p.y_m, p.z_m]


def scene_to_dict(scene: Scene) -> dict:
    """Plain-dict form of a scene, the YAML schema."""
    return {
        "rng_seed": scene.rng_seed,
        "satellites": [
            {
                "id": s.id,
                "position_m": _position_to_list(s.position),
                "clock_offset_s": s.clock_offset_s,
                "emit_time_s": s.emit_time_s,
                "wavelength_m": s.wavelength_m,
                "tx_antennas": s.tx_antennas,
                "antenna_spacing_m": s.antenna_spacing_m,
            }
            for s in scene.satellites
        ],
        "tis_arrays": [
            {
                "id": t.id,
                "position_m": _position_to_list(t.position),
                "elements": t.elements,
                "element_spacing_m": t.element_spacing_m,
                "time_slot": t.time_slot,
                "transmission_amplitudes": [c[0] for c in t.transmission_coeffs],
                "transmission_phases_rad": [c[1] for c in t.transmission_coeffs],
            }
            for t in scene.tis_arrays
        ],
        "user": {
            "position_m": _position_to_list(scene.user.position),
            "clock_offset_s": scene.user.clock_offset_s,
            "rx_antennas": scene.user.rx_antennas,
            "antenna_spacing_m": scene.user.antenna_spacing_m,
        },
        "noise": {
            "code_sigma_m": scene.noise.code_sigma_m,
            "carrier_sigma_m": scene.noise.carrier_sigma_m,
            "aoa_ambiguity_mode": scene.noise.aoa_ambiguity_mode,
            "aoa_ambiguity_deg": scene.noise.aoa_ambiguity_deg,
        },
    }


def _coeffs_from_dict(entry: dict) -> tuple:
    k = int(entry["elements"])
    amps = entry.get("transmission_amplitudes", 1.0)
    phases = entry.get("transmission_phases_rad", 0.0)
    # scalars broadcast across the panel for hand-written files
    if isinstance(amps, (int, float)):
        amps = [float(amps)] * k
    if isinstance(phases, (int, float)):
        phases = [float(phases)] * k
    return tuple((float(a), float(p)) for a, p in zip(amps, phases))


def scene_from_dict(data: dict) -> Scene:
    """Inverse of :func:`scene_to_dict`."""
    from .pseudorange import NoiseModel  # deferred, avoids an import cycle

    try:
        satellites = tuple(
            SatelliteEphemeris(
                id=int(s["id"]),
                position=Position3.from_iterable(s["position_m"]),
                clock_offset_s=float(s["clock_offset_s"]),
                emit_time_s=float(s["emit_time_s"]),
                wavelength_m=float(s["wavelength_m"]),
                tx_antennas=int(s["tx_antennas"]),
                antenna_spacing_m=float(s["antenna_spacing_m"]),
            )
            for s in data["satellites"]
        )
        tis_arrays = tuple(
            TisArray(
                id=int(t["id"]),
                position=Position3.from_iterable(t["position_m"]),
                elements=int(t["elements"]),
                element_spacing_m=float(t["element_spacing_m"]),
                transmission_coeffs=_coeffs_from_dict(t),
                time_slot=int(t["time_slot"]),
            )
            for t in data["tis_arrays"]
        )
        u = data["user"]
        user = UserConfig(
            position=Position3.from_iterable(u["position_m"]),
            clock_offset_s=float(u["clock_offset_s"]),
            rx_antennas=int(u["rx_antennas"]),
            antenna_spacing_m=float(u["antenna_spacing_m"]),
        )
        n = data["noise"]
        deg = n.get("aoa_ambiguity_deg")
        noise = NoiseModel(
            code_sigma_m=float(n["code_sigma_m"]),
            carrier_sigma_m=float(n["carrier_sigma_m"]),
            aoa_ambiguity_mode=str(n["aoa_ambiguity_mode"]),
            aoa_ambiguity_deg=None if deg is None else float(deg),
        )
        return Scene(
            satellites=satellites,
            tis_arrays=tis_arrays,
            user=user,
            noise=noise,
            rng_seed=int(data["rng_seed"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SceneError(f"malformed scene data: {exc}") from exc


def save_scene(scene: Scene, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(scene_to_dict(scene), fh, sort_keys=False)


def load_scene(path) -> Scene:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise SceneError(f"{path}: not a scene file")
    return scene_from_dict(data)


# --------------------------------------------------------------------------
# scenario generators

#: Default panel used by generated scenes: 9x9 elements at half-wavelength
#: pitch for a 0.19 m carrier.
_DEFAULT_ELEMENTS = 81
_DEFAULT_PITCH_M = 0.19029367279836487 / 2.0


def _uniform_coeffs(elements: int) -> tuple:
    return tuple((1.0, 0.0) for _ in range(elements))


def _tis_at(
    tis_id: int,
    user: UserConfig,
    azimuth_deg: float,
    distance_m: float,
    elements: int,
    pitch_m: float,
) -> TisArray:
    az = math.radians(azimuth_deg)
    pos = Position3(
        user.position.x_m + distance_m * math.cos(az),
        user.position.y_m + distance_m * math.sin(az),
        user.position.z_m,
    )
    return TisArray(
        id=tis_id,
        position=pos,
        elements=elements,
        element_spacing_m=pitch_m,
        transmission_coeffs=_uniform_coeffs(elements),
        time_slot=tis_id,
    )


def demo_constellation(rng_seed: int = 20260825) -> Scene:
    """An uncalibrated but valid scene used as a template by generators.

    Four satellites at orbital range with spread azimuths and elevations
    spanning low to high (position dilution stays below 4), a user near
    the origin, four surface arrays fanned across the first quadrant, and
    noise switched off.
    """
    from .pseudorange import NoiseModel

    wavelength = 0.19029367279836487
    orbital = [
        # (id, azimuth_deg, elevation_deg, range_m, clock_offset_s)
        (1, 20.0, 12.0, 2.05e7, 2.4e-4),
        (2, 135.0, 35.0, 2.18e7, -6.1e-4),
        (3, 250.0, 55.0, 2.11e7, 8.9e-4),
        (4, 320.0, 78.0, 1.98e7, -3.7e-4),
    ]
    satellites = tuple(
        SatelliteEphemeris(
            id=sid,
            position=Position3(
                rng * math.cos(math.radians(el)) * math.cos(math.radians(az)),
                rng * math.cos(math.radians(el)) * math.sin(math.radians(az)),
                rng * math.sin(math.radians(el)),
            ),
            clock_offset_s=dt,
            emit_time_s=0.0,
            wavelength_m=wavelength,
            tx_antennas=4,
            antenna_spacing_m=wavelength / 2.0,
        )
        for sid, az, el, rng, dt in orbital
    )
    user = UserConfig(
        position=Position3(0.0, 0.0, 1.2),
        clock_offset_s=3.3e-4,
        rx_antennas=8,
        antenna_spacing_m=wavelength / 2.0,
    )
    tis_arrays = tuple(
        _tis_at(i + 1, user, az, 3.0, _DEFAULT_ELEMENTS, _DEFAULT_PITCH_M)
        for i, az in enumerate((0.0, 30.0, 60.0, 90.0))
    )
    return Scene(
        satellites=satellites,
        tis_arrays=tis_arrays,
        user=user,
        noise=NoiseModel(0.0, 0.0, "none"),
        rng_seed=rng_seed,
    )


def fan_scene(
    distance_m: float,
    azimuths_deg: Sequence[float] = (0.0, 30.0, 60.0, 90.0),
    *,
    base_scene: Optional[Scene] = None,
    elements: int = _DEFAULT_ELEMENTS,
    pitch_m: float = _DEFAULT_PITCH_M,
) -> Scene:
    """Place the surface arrays on a horizontal fan around the user.

    Every array sits at the same plane distance from the user with its
    height equal to the user's, one array per azimuth. Satellites, user,
    noise and seed come from ``base_scene`` (default template scene).

    Args:
        distance_m: Common plane distance between each array and the user.
        azimuths_deg: One azimuth per array, degrees counterclockwise
            from +x.

    Returns:
        A new scene with the fan layout.
    """
    if distance_m <= 0:
        raise ValueError("distance_m must be positive")
    base = base_scene if base_scene is not None else demo_constellation()
    arrays = tuple(
        _tis_at(i + 1, base.user, az, distance_m, elements, pitch_m)
        for i, az in enumerate(azimuths_deg)
    )
    return replace(base, tis_arrays=arrays)


def rotation_scenario(
    step_deg_per_tis: Sequence[float],
    turns: int,
    radius_m: float,
    fixed_distance_m: float,
    *,
    base_scene: Optional[Scene] = None,
    end_radius_m: Optional[float] = None,
    final_azimuth_deg: float = 0.0,
    elements: int = _DEFAULT_ELEMENTS,
    pitch_m: float = _DEFAULT_PITCH_M,
) -> tuple:
    """Generate the turn-by-turn scenes of the rotating-constellation study.

    Four arrays orbit the user in the horizontal plane. Array 1 keeps its
    azimuth; arrays 2 to 4 rotate clockwise by their per-turn steps. The
    initial azimuths are chosen so that after the final turn the four
    arrays point along mutually perpendicular directions from the user
    (``final_azimuth_deg`` plus 0/90/180/270 degrees). Arrays 1 to 3 close
    in on the user, their radius interpolating linearly from ``radius_m``
    down to ``end_radius_m``; array 4 holds ``fixed_distance_m`` exactly at
    every turn.

    Args:
        step_deg_per_tis: Three clockwise per-turn steps, one per rotating
            array (arrays 2, 3, 4), degrees.
        turns: Number of rotation steps; turn 0 is the initial placement.
        radius_m: Starting radius of arrays 1 to 3.
        fixed_distance_m: Constant user distance of array 4.
        end_radius_m: Radius of arrays 1 to 3 after the last turn;
            defaults to half of ``radius_m``.
        final_azimuth_deg: Azimuth of array 1 (and of the perpendicular
            end state), degrees.

    Returns:
        Tuple of ``turns + 1`` scenes, one per turn including turn 0.

    Raises:
        ValueError: If any array would rotate beyond 90 degrees in total,
            overshooting the perpendicular end state, or if the radii do
            not describe an approach.
    """
    steps = tuple(float(s) for s in step_deg_per_tis)
    if len(steps) != 3:
        raise ValueError("expected one step per rotating array (arrays 2..4)")
    if turns < 0:
        raise ValueError("turns must be non-negative")
    for j, s in enumerate(steps, start=2):
        if s < 0:
            raise ValueError(f"array {j}: clockwise step must be non-negative")
        if s * turns > 90.0 + 1e-9:
            raise ValueError(
                f"array {j}: total rotation {s * turns:.1f} deg exceeds the"
                " 90 deg perpendicular end state"
            )
    if end_radius_m is None:
        end_radius_m = radius_m / 2.0
    if not (0.0 < end_radius_m < radius_m):
        raise ValueError("end_radius_m must be positive and below radius_m")
    if fixed_distance_m <= 0:
        raise ValueError("fixed_distance_m must be positive")

    base = base_scene if base_scene is not None else demo_constellation()
    all_steps = (0.0,) + steps
    final = [final_azimuth_deg + 90.0 * j for j in range(4)]
    initial = [final[j] + all_steps[j] * turns for j in range(4)]

    scenes = []
    for t in range(turns + 1):
        frac = t / turns if turns else 0.0
        shrink = radius_m + (end_radius_m - radius_m) * frac
        radii = (shrink, shrink, shrink, fixed_distance_m)
        arrays = tuple(
            _tis_at(
                j + 1,
                base.user,
                initial[j] - all_steps[j] * t,
                radii[j],
                elements,
                pitch_m,
            )
            for j in range(4)
        )
        scenes.append(
            replace(base, tis_arrays=arrays, rng_seed=base.rng_seed + t)
        )
    return tuple(scenes)
