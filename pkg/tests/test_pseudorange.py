"""Range synthesis, the carrier identity, and ambiguity resolution."""

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import tisnav as tn
from tisnav.pseudorange import (
    observations_from_csv,
    observations_to_csv,
    synthesis_call_count,
)
from tisnav.scene import euclidean_distance

C = tn.SPEED_OF_LIGHT_M_S

ranges = st.floats(1.0, 3e7, allow_nan=False)
wavelengths = st.floats(0.01, 1.0, allow_nan=False)


def test_speed_of_light_is_exact():
    assert C == 299792458.0


def test_raw_cem_is_flight_time_times_c():
    assert tn.raw_cem(0.08, 0.01) == pytest.approx(0.07 * C)
    with pytest.raises(ValueError, match="non-positive flight time"):
        tn.raw_cem(0.01, 0.08)


def test_correct_cem_applies_broadcast_offset():
    assert tn.correct_cem(2.0e7, 1e-4) == 2.0e7 + C * 1e-4
    assert tn.correct_cem(2.0e7, -1e-4) == 2.0e7 - C * 1e-4


@given(ranges, wavelengths)
def test_cpm_identity_is_bit_exact(total, lam):
    phase, n, corrected = tn.synthesize_cpm(total, lam)
    assert corrected == lam * (phase + n)
    assert 0.0 <= phase < 1.0
    assert abs(corrected - total) <= 1e-9 * max(1.0, total)


@given(ranges, wavelengths)
def test_cpm_cycle_count_is_the_floor(total, lam):
    phase, n, _ = tn.synthesize_cpm(total, lam)
    # the guarded corner can promote an almost-exact cycle boundary
    assert n in (math.floor(total / lam), math.floor(total / lam) + 1)
    assert n >= 0


def test_cpm_rejects_degenerate_inputs():
    with pytest.raises(ValueError):
        tn.synthesize_cpm(-1.0, 0.19)
    with pytest.raises(ValueError):
        tn.synthesize_cpm(10.0, 0.0)


@given(ranges, wavelengths, st.floats(-0.499, 0.499))
def test_resolver_exact_under_half_wavelength_error(total, lam, frac):
    phase, n, corrected = tn.synthesize_cpm(total, lam)
    obs = tn.PseudorangeObservation(1, 1, "cpm", corrected, lam, phase, n)
    assert tn.resolve_ambiguity(obs, corrected + frac * lam) == n


def test_resolver_rejects_code_rows():
    obs = tn.PseudorangeObservation(1, 1, "cem", 100.0, 0.19)
    with pytest.raises(ValueError, match="carrier rows only"):
        tn.resolve_ambiguity(obs, 100.0)


def test_observation_set_counts_and_grouping(reference_scene):
    obs = tn.build_observation_set(reference_scene, "cem", seed=5)
    n_sats = len(reference_scene.satellites)
    n_arrays = len(reference_scene.tis_arrays)
    assert len(obs.observations) == n_sats * n_arrays
    assert obs.tis_ids() == tuple(t.id for t in reference_scene.tis_arrays)
    for tid in obs.tis_ids():
        group = obs.for_tis(tid)
        assert len({o.satellite_id for o in group}) == n_sats


def test_noise_free_ranges_are_geometric(reference_scene):
    quiet = dataclasses.replace(
        reference_scene, noise=tn.NoiseModel(0.0, 0.0, "none")
    )
    obs = tn.build_observation_set(quiet, "cem", seed=5)
    user = quiet.user
    for o in obs.observations:
        sat = quiet.satellite_by_id(o.satellite_id)
        tis = quiet.tis_by_id(o.tis_id)
        expect = (
            euclidean_distance(sat.position, tis.position)
            + euclidean_distance(tis.position, user.position)
            + C * user.clock_offset_s
        )
        assert o.corrected_range_m == pytest.approx(expect, abs=1e-9)


def test_cpm_rows_satisfy_identity(reference_scene):
    obs = tn.build_observation_set(reference_scene, "cpm", seed=5)
    for o in obs.observations:
        assert o.method == "cpm"
        assert o.corrected_range_m == o.wavelength_m * (
            o.carrier_phase_cycles + o.integer_ambiguity
        )


def test_code_and_carrier_share_noise_draws(reference_scene):
    """Same seed, same standard-normal draws, different sigma scaling."""
    quiet = dataclasses.replace(
        reference_scene, noise=tn.NoiseModel(0.0, 0.0, "none")
    )
    base_cem = tn.build_observation_set(quiet, "cem", seed=17)
    cem = tn.build_observation_set(reference_scene, "cem", seed=17)
    cpm = tn.build_observation_set(reference_scene, "cpm", seed=17)
    noise = reference_scene.noise
    for clean, a, b in zip(
        base_cem.observations, cem.observations, cpm.observations
    ):
        eps_code = a.corrected_range_m - clean.corrected_range_m
        eps_carrier = b.corrected_range_m - clean.corrected_range_m
        scaled = eps_code * noise.carrier_sigma_m / noise.code_sigma_m
        assert eps_carrier == pytest.approx(scaled, abs=1e-8)


def test_observation_set_is_deterministic(reference_scene):
    a = tn.build_observation_set(reference_scene, "cem", seed=3)
    b = tn.build_observation_set(reference_scene, "cem", seed=3)
    assert a == b
    c = tn.build_observation_set(reference_scene, "cem", seed=4)
    assert a != c


def test_unknown_method_rejected(reference_scene):
    with pytest.raises(ValueError, match="unknown method"):
        tn.build_observation_set(reference_scene, "doppler")


def test_csv_round_trip_preserves_values(reference_scene, tmp_path):
    obs = tn.build_observation_set(reference_scene, "cpm", seed=11)
    path = tmp_path / "ranges.csv"
    observations_to_csv(obs, path)
    loaded = observations_from_csv(
        path, truth_user_clock_s=obs.truth_user_clock_s
    )
    assert loaded.observations == obs.observations
    assert loaded.method == obs.method


def test_synthesis_counter_increments(reference_scene):
    before = synthesis_call_count()
    tn.build_observation_set(reference_scene, "cem", seed=1)
    assert synthesis_call_count() == before + 1
