"""Channel legs: large-scale gain, steering structure, fading, cascade."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import tisnav as tn
from tisnav.channel import (
    array_axis,
    satellite_offset_angle,
    user_offset_angle,
)

angles = st.floats(0.0, math.pi / 2, allow_nan=False)


def test_large_scale_free_space_formula():
    g = tn.large_scale(2.0, 0.2, 10.0, link="tis_to_user")
    assert g.value == pytest.approx(2.0 * (0.2 / (4.0 * math.pi * 10.0)) ** 2)
    assert g.link == "tis_to_user"
    assert float(g) == g.value


def test_large_scale_rejects_bad_inputs():
    with pytest.raises(ValueError, match="distance"):
        tn.large_scale(1.0, 0.2, 0.0)
    with pytest.raises(ValueError, match="gain"):
        tn.large_scale(-1.0, 0.2, 5.0)


@given(st.integers(1, 64), angles)
def test_array_factor_entries_and_norm(elements, angle):
    lam = 0.19
    spacing = lam / 2
    a = tn.array_factor(elements, spacing, lam, angle)
    q = np.arange(elements)
    expect = np.exp(
        -2j * math.pi * spacing / lam * q * math.sin(angle)
    ) / math.sqrt(elements)
    np.testing.assert_allclose(a, expect, atol=1e-12)
    assert np.linalg.norm(a) == pytest.approx(1.0)


def test_array_factor_rejects_empty_array():
    with pytest.raises(ValueError):
        tn.array_factor(0, 0.1, 0.2, 0.0)


def test_array_axis_points_at_origin():
    axis = array_axis(tn.Position3(3.0, 4.0, 7.0))
    np.testing.assert_allclose(axis, [-0.6, -0.8, 0.0])
    # directly overhead there is no horizontal direction; +x by convention
    np.testing.assert_allclose(
        array_axis(tn.Position3(0.0, 0.0, 5.0)), [1.0, 0.0, 0.0]
    )


def test_satellite_offset_angle_is_elevation(demo_scene):
    for tis in demo_scene.tis_arrays:
        for sat in demo_scene.satellites:
            d = sat.position.as_array() - tis.position.as_array()
            expect = math.asin(d[2] / np.linalg.norm(d))
            got = satellite_offset_angle(tis, sat.position)
            assert got == pytest.approx(expect, abs=1e-12)
            assert 0.0 <= got <= math.pi / 2


def test_user_offset_angle_against_axis(demo_scene):
    user = demo_scene.user.position
    for tis in demo_scene.tis_arrays:
        d = user.as_array() - tis.position.as_array()
        d /= np.linalg.norm(d)
        expect = math.acos(float(np.dot(d, array_axis(tis.position))))
        assert user_offset_angle(tis, user) == pytest.approx(expect, abs=1e-12)


def test_structured_channel_is_steering_outer_product():
    lam = 0.19
    h = tn.structured_channel(None, 0.3, 5, lam / 2, 3, lam / 2, lam)
    rx = tn.array_factor(5, lam / 2, lam, 0.3)
    tx = tn.array_factor(3, lam / 2, lam, math.pi / 2 - 0.3)
    np.testing.assert_allclose(h, np.outer(rx, tx.conj()), atol=1e-12)


def test_structured_channel_applies_fading_elementwise(rng):
    lam = 0.19
    fading = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
    bare = tn.structured_channel(None, 0.3, 5, lam / 2, 3, lam / 2, lam)
    faded = tn.structured_channel(fading, 0.3, 5, lam / 2, 3, lam / 2, lam)
    np.testing.assert_allclose(faded, fading * bare, atol=1e-12)
    with pytest.raises(ValueError, match="fading shape"):
        tn.structured_channel(fading[:2], 0.3, 5, lam / 2, 3, lam / 2, lam)


def test_shadowed_rician_second_moment(rng):
    params = tn.ShadowedRicianParams()
    h = tn.sample_shadowed_rician(params, 200_000, rng)
    got = float(np.mean(np.abs(h) ** 2))
    assert got == pytest.approx(params.mean_square(), rel=0.02)


def test_shadowed_rician_rejects_bad_params(rng):
    bad = tn.ShadowedRicianParams(scatter_power=0.0)
    with pytest.raises(ValueError):
        tn.sample_shadowed_rician(bad, 4, rng)


def _unit_combiner(rows, cols):
    m = np.eye(rows, cols, dtype=complex)
    return m / np.linalg.norm(m, axis=0)


def test_received_signal_matches_manual_cascade(demo_scene):
    scene = demo_scene
    tis = scene.tis_arrays[0]
    combiner = _unit_combiner(scene.user.rx_antennas, 2)
    got = tn.received_signal(scene, tis.id, combiner)

    expect = np.zeros(2, dtype=complex)
    psi = tis.transmission_diagonal()
    user_angle = user_offset_angle(tis, scene.user.position)
    d_ru = np.linalg.norm(
        tis.position.as_array() - scene.user.position.as_array()
    )
    for sat in scene.satellites:
        lam = sat.wavelength_m
        sat_angle = satellite_offset_angle(tis, sat.position)
        d_ir = np.linalg.norm(
            sat.position.as_array() - tis.position.as_array()
        )
        h_ir = tn.structured_channel(
            None, sat_angle, tis.elements, tis.element_spacing_m,
            sat.tx_antennas, sat.antenna_spacing_m, lam,
        )
        h_ru = tn.structured_channel(
            None, user_angle, scene.user.rx_antennas,
            scene.user.antenna_spacing_m, tis.elements,
            tis.element_spacing_m, lam,
        )
        p = tn.array_factor(
            sat.tx_antennas, sat.antenna_spacing_m, lam,
            math.pi / 2 - sat_angle,
        )
        amp = math.sqrt(
            tn.large_scale(1.0, lam, d_ir).value
            * tn.large_scale(1.0, lam, d_ru).value
        )
        expect += amp * (combiner.conj().T @ (h_ru @ (psi * (h_ir @ p))))
    np.testing.assert_allclose(got, expect, rtol=1e-12)


def test_received_signal_noise_power(demo_scene):
    combiner = _unit_combiner(demo_scene.user.rx_antennas, 3)
    rng = np.random.default_rng(8)
    power = np.mean(
        [
            np.sum(
                np.abs(
                    tn.received_signal(
                        demo_scene, 1, combiner,
                        tx_power_w=0.0, noise_power_w=2.5, rng=rng,
                    )
                )
                ** 2
            )
            for _ in range(4000)
        ]
    )
    assert power == pytest.approx(2.5, rel=0.05)


def test_received_signal_validates_combiner(demo_scene):
    bad = 2.0 * _unit_combiner(demo_scene.user.rx_antennas, 2)
    with pytest.raises(ValueError, match="unit norm"):
        tn.received_signal(demo_scene, 1, bad)
    with pytest.raises(ValueError, match="rows"):
        tn.received_signal(demo_scene, 1, _unit_combiner(2, 2))


def test_received_signal_requires_rng_for_noise(demo_scene):
    combiner = _unit_combiner(demo_scene.user.rx_antennas, 2)
    with pytest.raises(ValueError, match="requires an rng"):
        tn.received_signal(demo_scene, 1, combiner, noise_power_w=1.0)
