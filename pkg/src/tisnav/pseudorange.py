"""Pseudo-range synthesis and correction for surface-relayed satellite links.

Two observable families are produced for the same geometry:

* code ranges ("cem"): timestamp differences scaled by the speed of light,
  corrected with the broadcast satellite clock offset;
* carrier ranges ("cpm"): fractional carrier phase plus an integer cycle
  count, reconstructed as ``wavelength * (phase + integer)``.

Each corrected range measures ``d_sat_to_surface + d_surface_to_user +
c * user_clock_offset`` plus measurement noise; the user clock term stays in
the observable and is estimated downstream as part of the range bias.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import SceneError
from .scene import Scene, euclidean_distance

__all__ = [
    "SPEED_OF_LIGHT_M_S",
    "METHODS",
    "NoiseModel",
    "PseudorangeObservation",
    "PseudorangeSet",
    "raw_cem",
    "correct_cem",
    "synthesize_cpm",
    "resolve_ambiguity",
    "build_observation_set",
    "synthesis_call_count",
    "observations_to_csv",
    "observations_from_csv",
]

#: Exact SI definition, metres per second.
SPEED_OF_LIGHT_M_S = 299792458.0

METHODS = ("cem", "cpm")

# build_observation_set bumps this counter; repeat-fix runs must leave it
# untouched, which the test suite asserts.
_synthesis_calls = 0


def synthesis_call_count() -> int:
    """Number of observation-set syntheses performed so far."""
    return _synthesis_calls


@dataclass(frozen=True)
class NoiseModel:
    """Measurement noise configuration.

    Attributes:
        code_sigma_m: Standard deviation of code-range noise.
        carrier_sigma_m: Standard deviation of carrier-range noise, never
            above the code sigma in a sensible configuration.
        aoa_ambiguity_mode: "hpbw_uniform" draws angular errors bounded by
            the half-power beamwidth of the serving array, "fixed_deg" uses
            ``aoa_ambiguity_deg``, "none" disables angular errors.
        aoa_ambiguity_deg: Full ambiguity width for "fixed_deg", degrees.
    """

    code_sigma_m: float
    carrier_sigma_m: float
    aoa_ambiguity_mode: str = "none"
    aoa_ambiguity_deg: Optional[float] = None


@dataclass(frozen=True)
class PseudorangeObservation:
    """One corrected range between a satellite and a surface array.

    For carrier rows ``corrected_range_m`` equals
    ``wavelength_m * (carrier_phase_cycles + integer_ambiguity)`` exactly;
    code rows leave the carrier fields as None.
    """

    satellite_id: int
    tis_id: int
    method: str
    corrected_range_m: float
    wavelength_m: float
    carrier_phase_cycles: Optional[float] = None
    integer_ambiguity: Optional[int] = None


@dataclass(frozen=True)
class PseudorangeSet:
    """Corrected ranges for a scene, grouped by surface array on demand.

    ``truth_user_clock_s`` is carried for scoring; solvers never read it.
    """

    observations: tuple
    method: str
    truth_user_clock_s: float

    def for_tis(self, tis_id: int) -> tuple:
        return tuple(o for o in self.observations if o.tis_id == tis_id)

    def tis_ids(self) -> tuple:
        seen = []
        for o in self.observations:
            if o.tis_id not in seen:
                seen.append(o.tis_id)
        return tuple(seen)


def raw_cem(receive_time_s: float, emit_time_s: float) -> float:
    """Code pseudo-range from a receive/emit timestamp pair.

    Args:
        receive_time_s: Reception time read on the user clock.
        emit_time_s: Emission time stamped by the satellite clock.

    Returns:
        ``c * (receive - emit)`` in metres.

    Raises:
        ValueError: If the flight time is not positive.
    """
    dt = receive_time_s - emit_time_s
    if dt <= 0.0:
        raise ValueError(f"non-positive flight time {dt:.3e} s")
    return SPEED_OF_LIGHT_M_S * dt


def correct_cem(raw_range_m: float, satellite_clock_offset_s: float) -> float:
    """Apply the broadcast satellite clock correction to a raw code range."""
    return raw_range_m + SPEED_OF_LIGHT_M_S * satellite_clock_offset_s


def synthesize_cpm(total_range_m: float, wavelength_m: float):
    """Split a range into carrier phase and integer cycle count.

    The returned corrected range is ``wavelength * (phase + n)``, which
    reconstructs ``total_range_m`` to floating-point accuracy and makes the
    carrier identity exact by construction.

    Args:
        total_range_m: Geometric range plus user clock term plus noise.
        wavelength_m: Carrier wavelength.

    Returns:
        Tuple ``(phase_cycles, n_cycles, corrected_range_m)`` with
        ``phase_cycles`` in [0, 1).

    Raises:
        ValueError: For non-positive range or wavelength.
    """
    if total_range_m <= 0.0:
        raise ValueError("range must be positive")
    if wavelength_m <= 0.0:
        raise ValueError("wavelength must be positive")
    cycles = total_range_m / wavelength_m
    n = math.floor(cycles)
    phase = cycles - n
    if phase >= 1.0:  # guards the floor/overflow corner at cycle boundaries
        n += 1
        phase = 0.0
    return phase, n, wavelength_m * (phase + n)


def resolve_ambiguity(
    observation: PseudorangeObservation, coarse_range_m: float
) -> int:
    """Fix the integer cycle count of a carrier observation by rounding.

    Stand-in for a full integer least-squares search: the estimate is exact
    whenever the coarse range errs by less than half a wavelength, and a
    wrong fix otherwise is an expected failure mode rather than an error.

    Args:
        observation: A carrier-method observation.
        coarse_range_m: Coarse range, typically a corrected code range.

    Returns:
        Estimated integer cycle count.
    """
    if observation.method != "cpm":
        raise ValueError("ambiguity resolution applies to carrier rows only")
    if observation.carrier_phase_cycles is None:
        raise ValueError("observation carries no carrier phase")
    return round(
        coarse_range_m / observation.wavelength_m
        - observation.carrier_phase_cycles
    )


def build_observation_set(
    scene: Scene,
    method: str,
    seed: Optional[int] = None,
    noise: Optional[NoiseModel] = None,
) -> PseudorangeSet:
    """Synthesize every (satellite, surface array) corrected range.

    Noise draws are one standard normal per link scaled by the method
    sigma, in a fixed (array, satellite) order; code and carrier sets built
    from the same seed therefore differ only in noise scale and in the
    carrier-specific fields.

    Args:
        scene: Scene to synthesize from.
        method: "cem" or "cpm".
        seed: Overrides ``scene.rng_seed`` when given.
        noise: Overrides ``scene.noise`` when given.

    Returns:
        A :class:`PseudorangeSet` with ``len(satellites) * len(tis_arrays)``
        observations.
    """
    global _synthesis_calls
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    model = noise if noise is not None else scene.noise
    sigma = model.code_sigma_m if method == "cem" else model.carrier_sigma_m
    rng = np.random.default_rng(scene.rng_seed if seed is None else seed)
    draws = rng.standard_normal((len(scene.tis_arrays), len(scene.satellites)))
    clock_term = SPEED_OF_LIGHT_M_S * scene.user.clock_offset_s

    observations = []
    for r, tis in enumerate(scene.tis_arrays):
        d_ru = euclidean_distance(tis.position, scene.user.position)
        for i, sat in enumerate(scene.satellites):
            d_ir = euclidean_distance(sat.position, tis.position)
            total = float(d_ir + d_ru + clock_term + sigma * draws[r, i])
            if total <= 0.0:
                raise SceneError(
                    f"satellite {sat.id} via TIS {tis.id}: range came out"
                    " non-positive; scene geometry and clocks are inconsistent"
                )
            if method == "cem":
                obs = PseudorangeObservation(
                    satellite_id=sat.id,
                    tis_id=tis.id,
                    method=method,
                    corrected_range_m=total,
                    wavelength_m=sat.wavelength_m,
                )
            else:
                phase, n, corrected = synthesize_cpm(total, sat.wavelength_m)
                obs = PseudorangeObservation(
                    satellite_id=sat.id,
                    tis_id=tis.id,
                    method=method,
                    corrected_range_m=corrected,
                    wavelength_m=sat.wavelength_m,
                    carrier_phase_cycles=phase,
                    integer_ambiguity=n,
                )
            observations.append(obs)

    _synthesis_calls += 1
    return PseudorangeSet(
        observations=tuple(observations),
        method=method,
        truth_user_clock_s=scene.user.clock_offset_s,
    )


# --------------------------------------------------------------------------
# CSV form: sat, tis, method, rho_c_m, lambda_m, dphi_cycles, N

_CSV_FIELDS = ("sat", "tis", "method", "rho_c_m", "lambda_m", "dphi_cycles", "N")


def observations_to_csv(obs_set: PseudorangeSet, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_FIELDS)
        for o in obs_set.observations:
            writer.writerow(
                [
                    o.satellite_id,
                    o.tis_id,
                    o.method,
                    repr(o.corrected_range_m),
                    repr(o.wavelength_m),
                    "" if o.carrier_phase_cycles is None
                    else repr(o.carrier_phase_cycles),
                    "" if o.integer_ambiguity is None else o.integer_ambiguity,
                ]
            )


def observations_from_csv(path, truth_user_clock_s: float = float("nan")) -> PseudorangeSet:
    observations = []
    methods = set()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != _CSV_FIELDS:
            raise ValueError(f"{path}: expected columns {_CSV_FIELDS}")
        for row in reader:
            methods.add(row["method"])
            observations.append(
                PseudorangeObservation(
                    satellite_id=int(row["sat"]),
                    tis_id=int(row["tis"]),
                    method=row["method"],
                    corrected_range_m=float(row["rho_c_m"]),
                    wavelength_m=float(row["lambda_m"]),
                    carrier_phase_cycles=(
                        float(row["dphi_cycles"]) if row["dphi_cycles"] else None
                    ),
                    integer_ambiguity=(int(row["N"]) if row["N"] else None),
                )
            )
    method = methods.pop() if len(methods) == 1 else "mixed"
    return PseudorangeSet(
        observations=tuple(observations),
        method=method,
        truth_user_clock_s=truth_user_clock_s,
    )
