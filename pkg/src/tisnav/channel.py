"""Satellite-to-surface-to-user channel synthesis.

Link geometry and symbols used throughout this module:

    M   transmit antennas on one satellite (uniform linear array)
    K   passive elements on one transparent surface array
    W   receive antennas on the user terminal
    psi generic boresight offset angle of a steering vector, radians

One downlink symbol traverses satellite precoding, the satellite-to-surface
channel, the surface's per-element transmission coefficients, the
surface-to-user channel, and user-side combining.  Channels factor into a
deterministic steering structure times an element-wise fading term; fading
defaults to all-ones and may be replaced by shadowed-Rician draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .scene import Position3, Scene, TisArray, euclidean_distance

__all__ = [
    "LargeScaleGain",
    "large_scale",
    "array_factor",
    "array_axis",
    "satellite_offset_angle",
    "user_offset_angle",
    "ShadowedRicianParams",
    "sample_shadowed_rician",
    "structured_channel",
    "received_signal",
]


@dataclass(frozen=True)
class LargeScaleGain:
    """Dimensionless power gain of one link leg, with its provenance."""

    value: float
    link: str
    distance_m: float

    def __float__(self) -> float:
        return self.value


def large_scale(
    gain: float, wavelength_m: float, distance_m: float, link: str = "generic"
) -> LargeScaleGain:
    """Free-space power gain ``G * (wavelength / (4 pi d))**2``.

    Args:
        gain: Combined antenna power gain of the leg, linear (not dB).
        wavelength_m: Carrier wavelength.
        distance_m: Leg length, must be positive.
        link: Label carried through for reporting.
    """
    if distance_m <= 0.0:
        raise ValueError(f"{link}: distance must be positive")
    if gain < 0.0 or wavelength_m <= 0.0:
        raise ValueError(f"{link}: gain must be >= 0 and wavelength > 0")
    amp = wavelength_m / (4.0 * math.pi * distance_m)
    return LargeScaleGain(value=gain * amp * amp, link=link, distance_m=distance_m)


def array_factor(
    elements: int, spacing_m: float, wavelength_m: float, angle_rad: float
) -> np.ndarray:
    """Unit-norm steering vector of a uniform linear array.

    Entry ``q`` is ``exp(-2j pi spacing/wavelength * q * sin(angle)) /
    sqrt(elements)`` for ``q = 0 .. elements-1``.
    """
    if elements < 1:
        raise ValueError("need at least one element")
    if spacing_m <= 0.0 or wavelength_m <= 0.0:
        raise ValueError("spacing and wavelength must be positive")
    q = np.arange(elements)
    phase = -2.0 * math.pi * spacing_m / wavelength_m * math.sin(angle_rad)
    return np.exp(1j * phase * q) / math.sqrt(elements)


def array_axis(position: Position3) -> np.ndarray:
    """Horizontal reference axis of an array: unit vector toward the origin.

    An array standing exactly on the vertical axis has no such direction;
    +x is used there so every scene gets a well-defined convention.
    """
    axis = np.array([-position.x_m, -position.y_m, 0.0])
    norm = float(np.linalg.norm(axis))
    if norm < 1e-12:
        return np.array([1.0, 0.0, 0.0])
    return axis / norm


def satellite_offset_angle(
    tis: TisArray, satellite_position: Position3
) -> float:
    """Arrival offset of a satellite at a surface array, radians.

    The receive-side steering ramp runs along the vertical, so the offset
    is ``arcsin`` of the vertical direction cosine toward the satellite:
    its elevation as seen from the array.  Visible satellites therefore
    always land in the [0, pi/2] domain of the angle dictionary.
    """
    d = satellite_position.as_array() - tis.position.as_array()
    norm = float(np.linalg.norm(d))
    if norm < 1e-9:
        raise ValueError("satellite coincides with the array")
    s = float(d[2]) / norm
    return math.asin(max(-1.0, min(1.0, s)))


def user_offset_angle(tis: TisArray, user_position: Position3) -> float:
    """Departure offset toward the user at a surface array, radians.

    Uses ``arccos`` of the projection onto the array axis so the transmit
    steering vector, evaluated at ninety degrees minus this angle, carries
    the exact direction cosine.
    """
    d = user_position.as_array() - tis.position.as_array()
    norm = float(np.linalg.norm(d))
    if norm < 1e-9:
        raise ValueError("user coincides with the array")
    c = float(np.dot(d / norm, array_axis(tis.position)))
    return math.acos(max(-1.0, min(1.0, c)))


@dataclass(frozen=True)
class ShadowedRicianParams:
    """Shadowed-Rician fading parameters.

    ``scatter_power`` is the average power of the diffuse component per
    complex dimension, ``nakagami_m`` the shadowing severity of the
    line-of-sight amplitude, and ``los_power`` its average power.  Defaults
    reproduce a frequently-used "average shadowing" satellite channel.
    """

    scatter_power: float = 0.126
    nakagami_m: float = 10.1
    los_power: float = 0.835

    def mean_square(self) -> float:
        """E[|h|^2] = 2 * scatter_power + los_power."""
        return 2.0 * self.scatter_power + self.los_power


def sample_shadowed_rician(
    params: ShadowedRicianParams,
    shape,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw element-wise shadowed-Rician fading coefficients.

    The diffuse part is circular complex Gaussian with per-dimension
    variance ``scatter_power``; the line-of-sight amplitude is the square
    root of a Gamma draw with shape ``nakagami_m`` and mean ``los_power``
    (a Nakagami-m amplitude), applied with a uniform phase.

    Args:
        params: Distribution parameters, all strictly positive.
        shape: Output array shape.
        rng: Source of randomness.

    Returns:
        Complex array of the requested shape.
    """
    if params.scatter_power <= 0.0 or params.nakagami_m <= 0.0 or params.los_power <= 0.0:
        raise ValueError("shadowed-Rician parameters must be positive")
    sigma = math.sqrt(params.scatter_power)
    scatter = sigma * (
        rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    )
    los_amp = np.sqrt(
        rng.gamma(params.nakagami_m, params.los_power / params.nakagami_m, shape)
    )
    los_phase = rng.uniform(0.0, 2.0 * math.pi, shape)
    return scatter + los_amp * np.exp(1j * los_phase)


def structured_channel(
    fading: Optional[np.ndarray],
    angle_rad: float,
    rx_elements: int,
    rx_spacing_m: float,
    tx_elements: int,
    tx_spacing_m: float,
    wavelength_m: float,
) -> np.ndarray:
    """Channel matrix with steering structure and element-wise fading.

    Computes ``fading * outer(a_rx(angle), a_tx(pi/2 - angle)^H)`` where
    both steering vectors come from :func:`array_factor`.  ``fading=None``
    means all-ones, i.e. the purely geometric channel.

    Returns:
        Complex matrix of shape ``(rx_elements, tx_elements)``.
    """
    rx = array_factor(rx_elements, rx_spacing_m, wavelength_m, angle_rad)
    tx = array_factor(
        tx_elements, tx_spacing_m, wavelength_m, math.pi / 2.0 - angle_rad
    )
    structure = np.outer(rx, tx.conj())
    if fading is None:
        return structure
    fading = np.asarray(fading, dtype=complex)
    if fading.shape != structure.shape:
        raise ValueError(
            f"fading shape {fading.shape} does not match channel shape"
            f" {structure.shape}"
        )
    return fading * structure


def _default_precoder(sat, tis) -> np.ndarray:
    """Matched transmit beam toward the surface array.

    The departure-side structure of the satellite channel is the conjugated
    steering vector, so transmitting the steering vector itself collapses
    that inner product to one.
    """
    angle = satellite_offset_angle(tis, sat.position)
    return array_factor(
        sat.tx_antennas,
        sat.antenna_spacing_m,
        sat.wavelength_m,
        math.pi / 2.0 - angle,
    )


def received_signal(
    scene: Scene,
    tis_id: int,
    combiner: np.ndarray,
    *,
    precoders: Optional[Mapping[int, np.ndarray]] = None,
    symbols: Optional[Mapping[int, complex]] = None,
    tx_power_w: float = 1.0,
    antenna_gain: float = 1.0,
    noise_power_w: float = 0.0,
    fading_sat: Optional[Mapping[int, np.ndarray]] = None,
    fading_user: Optional[np.ndarray] = None,
    satellite_ids: Optional[Sequence[int]] = None,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Combined baseband signal relayed by one surface array.

    Every satellite contributes the cascade: precoded symbol, satellite-to-
    surface structured channel, per-element transmission coefficients of
    the array, surface-to-user structured channel, then the user combiner.
    Contributions are scaled by the amplitude of both large-scale gains and
    the transmit power, summed, and perturbed by circular complex Gaussian
    noise whose total expected power across components is ``noise_power_w``.

    Args:
        scene: Scene providing geometry and array parameters.
        tis_id: Serving surface array; other arrays are assumed silent in
            this time slot.
        combiner: ``(W, D)`` matrix of unit-norm combining columns.
        precoders: Per-satellite-id ``(M,)`` transmit beams; defaults to
            the matched beam toward the serving array.
        symbols: Per-satellite-id pilot symbols, default 1.
        tx_power_w: Per-satellite transmit power.
        antenna_gain: Linear antenna power gain used in both legs.
        noise_power_w: Total noise power; 0 disables noise.
        fading_sat: Optional per-satellite-id ``(K, M)`` fading matrices.
        fading_user: Optional ``(W, K)`` fading matrix for the
            surface-to-user leg, shared across satellites.
        satellite_ids: Restrict the sum to these satellites; default all.
        rng: Required when ``noise_power_w > 0``.

    Returns:
        Complex vector of length ``D`` (one entry per combiner column).
    """
    tis = scene.tis_by_id(tis_id)
    combiner = np.asarray(combiner, dtype=complex)
    if combiner.ndim != 2 or combiner.shape[0] != scene.user.rx_antennas:
        raise ValueError(
            f"combiner must have {scene.user.rx_antennas} rows, one per"
            " receive antenna"
        )
    col_norms = np.linalg.norm(combiner, axis=0)
    if np.any(np.abs(col_norms - 1.0) > 1e-6):
        raise ValueError("combiner columns must have unit norm")
    if tx_power_w < 0.0 or noise_power_w < 0.0:
        raise ValueError("powers must be non-negative")

    k = tis.elements
    psi = tis.transmission_diagonal()
    user_angle = user_offset_angle(tis, scene.user.position)
    d_ru = euclidean_distance(tis.position, scene.user.position)

    active = scene.satellites
    if satellite_ids is not None:
        wanted = set(satellite_ids)
        active = tuple(s for s in scene.satellites if s.id in wanted)
        if len(active) != len(wanted):
            raise ValueError("satellite_ids contains unknown ids")

    y = np.zeros(combiner.shape[1], dtype=complex)
    for sat in active:
        lam = sat.wavelength_m
        sat_angle = satellite_offset_angle(tis, sat.position)
        d_ir = euclidean_distance(sat.position, tis.position)
        gain_ir = large_scale(antenna_gain, lam, d_ir, link="sat_to_tis")
        gain_ru = large_scale(antenna_gain, lam, d_ru, link="tis_to_user")

        h_ir = structured_channel(
            None if fading_sat is None else fading_sat.get(sat.id),
            sat_angle,
            k,
            tis.element_spacing_m,
            sat.tx_antennas,
            sat.antenna_spacing_m,
            lam,
        )
        h_ru = structured_channel(
            fading_user,
            user_angle,
            scene.user.rx_antennas,
            scene.user.antenna_spacing_m,
            k,
            tis.element_spacing_m,
            lam,
        )
        if precoders is not None and sat.id in precoders:
            p = np.asarray(precoders[sat.id], dtype=complex)
            if p.shape != (sat.tx_antennas,):
                raise ValueError(
                    f"precoder for satellite {sat.id} must have shape"
                    f" ({sat.tx_antennas},)"
                )
        else:
            p = _default_precoder(sat, tis)
        s = 1.0 + 0.0j if symbols is None else complex(symbols.get(sat.id, 1.0))
        amp = math.sqrt(gain_ir.value * gain_ru.value * tx_power_w)
        y += amp * s * (combiner.conj().T @ (h_ru @ (psi * (h_ir @ p))))

    if noise_power_w > 0.0:
        if rng is None:
            raise ValueError("noise_power_w > 0 requires an rng")
        d = combiner.shape[1]
        sigma = math.sqrt(noise_power_w / (2.0 * d))
        y = y + sigma * (
            rng.standard_normal(d) + 1j * rng.standard_normal(d)
        )
    return y
