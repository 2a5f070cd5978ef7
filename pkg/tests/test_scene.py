"""Scene types, validation diagnostics, file round-trips, and generators."""

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import tisnav as tn
from tisnav.scene import euclidean_distance

from conftest import random_scene

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def test_position_array_round_trip():
    p = tn.Position3(1.0, -2.5, 3.25)
    assert tn.Position3.from_iterable(p.as_array()) == p


def test_position_from_iterable_coerces_to_float():
    p = tn.Position3.from_iterable(np.array([1, 2, 3]))
    assert all(type(v) is float for v in (p.x_m, p.y_m, p.z_m))


def test_euclidean_distance_pythagorean():
    a = tn.Position3(0.0, 0.0, 0.0)
    b = tn.Position3(3.0, 4.0, 0.0)
    assert euclidean_distance(a, b) == 5.0


@given(finite, finite, finite, finite, finite, finite)
def test_euclidean_distance_symmetric(ax, ay, az, bx, by, bz):
    a = tn.Position3(ax, ay, az)
    b = tn.Position3(bx, by, bz)
    assert euclidean_distance(a, b) == euclidean_distance(b, a)
    assert euclidean_distance(a, a) == 0.0


def test_demo_constellation_is_valid():
    scene = tn.demo_constellation()
    assert tn.validate_scene(scene) == []
    assert len(scene.satellites) == 4
    # every built-in satellite is above the horizon
    assert all(s.position.z_m > 0 for s in scene.satellites)


def test_validate_reports_every_violation(demo_scene):
    sats = demo_scene.satellites
    bad = dataclasses.replace(
        demo_scene,
        satellites=(sats[0], dataclasses.replace(sats[1], id=sats[0].id)),
        noise=tn.NoiseModel(-1.0, 0.5),
    )
    diags = tn.validate_scene(bad)
    assert any("fewer than 4 satellites" in d for d in diags)
    assert any("ids are not unique" in d for d in diags)
    assert any("code sigma" in d for d in diags)
    assert any("carrier sigma exceeds code sigma" in d for d in diags)


def test_validate_catches_bad_arrays(demo_scene):
    arrays = demo_scene.tis_arrays
    first = arrays[0]
    bad = dataclasses.replace(
        demo_scene,
        tis_arrays=(
            dataclasses.replace(
                first, elements=80, transmission_coeffs=((1.2, 0.0),) * 80
            ),
        )
        + arrays[1:],
    )
    diags = tn.validate_scene(bad)
    assert any("not a perfect square" in d for d in diags)
    assert any("amplitude outside [0, 1]" in d for d in diags)


def test_validate_catches_slot_permutation_break(demo_scene):
    arrays = demo_scene.tis_arrays
    bad = dataclasses.replace(
        demo_scene,
        tis_arrays=(dataclasses.replace(arrays[0], time_slot=99),) + arrays[1:],
    )
    assert any("time slots" in d for d in tn.validate_scene(bad))


def test_validate_catches_bad_ambiguity_mode(demo_scene):
    bad = dataclasses.replace(
        demo_scene, noise=tn.NoiseModel(0.3, 0.2, "sideways")
    )
    assert any("unknown ambiguity mode" in d for d in tn.validate_scene(bad))
    bad = dataclasses.replace(
        demo_scene, noise=tn.NoiseModel(0.3, 0.2, "fixed_deg", None)
    )
    assert any("fixed_deg" in d for d in tn.validate_scene(bad))


def test_require_valid_passes_through_and_raises(demo_scene):
    assert tn.scene.require_valid(demo_scene) is demo_scene
    bad = dataclasses.replace(demo_scene, satellites=demo_scene.satellites[:2])
    with pytest.raises(tn.SceneError, match="fewer than 4"):
        tn.scene.require_valid(bad)


def test_yaml_round_trip_is_bit_exact(rng, tmp_path):
    scene = random_scene(rng, noise=tn.NoiseModel(0.312, 0.2185, "fixed_deg", 7.5))
    path = tmp_path / "scene.yaml"
    tn.save_scene(scene, path)
    loaded = tn.load_scene(path)
    assert loaded == scene


def test_fan_scene_geometry():
    scene = tn.fan_scene(6.0, (0.0, 30.0, 60.0, 90.0))
    user = scene.user.position
    for tis, az in zip(scene.tis_arrays, (0.0, 30.0, 60.0, 90.0)):
        assert euclidean_distance(tis.position, user) == pytest.approx(6.0)
        got = math.degrees(
            math.atan2(
                tis.position.y_m - user.y_m, tis.position.x_m - user.x_m
            )
        )
        assert got == pytest.approx(az, abs=1e-9)
    assert [t.id for t in scene.tis_arrays] == [1, 2, 3, 4]
    assert tn.validate_scene(scene) == []


def test_fan_scene_respects_template(demo_scene):
    scene = tn.fan_scene(4.0, (0.0, 90.0), base_scene=demo_scene, elements=49)
    assert all(t.elements == 49 for t in scene.tis_arrays)
    assert scene.satellites == demo_scene.satellites


def test_rotation_scenario_turn_count_and_validity():
    scenes = tn.rotation_scenario((3.0, 6.0, 9.0), 10, 4.0, 4.0)
    assert len(scenes) == 11
    for s in scenes:
        assert tn.validate_scene(s) == []


def _azimuth_deg(scene, tis_id):
    tis = scene.tis_by_id(tis_id)
    user = scene.user.position
    return math.degrees(
        math.atan2(tis.position.y_m - user.y_m, tis.position.x_m - user.x_m)
    )


def test_rotation_scenario_azimuth_law():
    steps = (3.0, 6.0, 9.0)
    scenes = tn.rotation_scenario(steps, 10, 4.0, 4.0)
    start = {j: _azimuth_deg(scenes[0], j) for j in (1, 2, 3, 4)}
    for t, s in enumerate(scenes):
        assert _azimuth_deg(s, 1) == pytest.approx(start[1], abs=1e-9)
        for j, step in zip((2, 3, 4), steps):
            expect = start[j] - step * t
            got = _azimuth_deg(s, j)
            assert math.remainder(got - expect, 360.0) == pytest.approx(
                0.0, abs=1e-9
            )
    # array 2 ends 30 degrees clockwise of where it started
    assert math.remainder(
        _azimuth_deg(scenes[10], 2) - (start[2] - 30.0), 360.0
    ) == pytest.approx(0.0, abs=1e-9)


def test_rotation_scenario_perpendicular_end_state():
    scenes = tn.rotation_scenario((3.0, 6.0, 9.0), 10, 4.0, 4.0)
    final = sorted(
        math.remainder(_azimuth_deg(scenes[-1], j), 360.0) % 90.0
        for j in (1, 2, 3, 4)
    )
    for v in final:
        assert min(v, 90.0 - v) == pytest.approx(0.0, abs=1e-9)


def test_rotation_scenario_radii():
    scenes = tn.rotation_scenario((3.0, 6.0, 9.0), 10, 4.0, 4.0, end_radius_m=2.0)
    for t, s in enumerate(scenes):
        user = s.user.position
        expect = 4.0 + (2.0 - 4.0) * t / 10.0
        for j in (1, 2, 3):
            assert euclidean_distance(
                s.tis_by_id(j).position, user
            ) == pytest.approx(expect)
        assert euclidean_distance(
            s.tis_by_id(4).position, user
        ) == pytest.approx(4.0)


def test_rotation_scenario_rejects_overshoot():
    # 10 turns x 9.5 deg would rotate array 4 past the perpendicular end
    with pytest.raises(ValueError, match="exceeds the 90 deg"):
        tn.rotation_scenario((3.0, 6.0, 9.5), 10, 4.0, 4.0)


def test_rotation_scenario_rejects_bad_radii():
    with pytest.raises(ValueError, match="end_radius_m"):
        tn.rotation_scenario((3.0, 6.0, 9.0), 10, 4.0, 4.0, end_radius_m=5.0)


def test_scene_lookup_helpers(demo_scene):
    assert demo_scene.satellite_by_id(1).id == 1
    assert demo_scene.tis_by_id(2).id == 2
    with pytest.raises(KeyError):
        demo_scene.satellite_by_id(99)
    with pytest.raises(KeyError):
        demo_scene.tis_by_id(99)


@given(st.integers(0, 2**32 - 1))
def test_random_scene_builder_always_valid(seed):
    scene = random_scene(np.random.default_rng(seed))
    assert tn.validate_scene(scene) == []
