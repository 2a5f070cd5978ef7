"""End-to-end fix driver and Monte-Carlo experiment harness."""

import csv
import dataclasses
import json

import numpy as np
import pytest

from tisnav import (
    ExperimentSpec,
    NoiseModel,
    StageError,
    fan_scene,
    load_experiment,
    run_ambiguity_sweep,
    run_distance_sweep,
    run_experiment,
    run_fix,
    run_repeat_fix,
)
from tisnav.harness import experiment_from_dict
from tisnav.metrics import geometry_reports_from_csv
from tisnav.pseudorange import synthesis_call_count


def _noisy_scene(demo_scene):
    return dataclasses.replace(
        demo_scene,
        noise=NoiseModel(0.3, 0.2, "fixed_deg", 8.0),
    )


def _small_sweep(scene, **overrides) -> ExperimentSpec:
    fields = {
        "kind": "ambiguity_sweep",
        "scene": scene,
        "levels": (5.0, 15.0),
        "trials": 6,
        "optimizers": ("mvm", "lsm"),
        "seed": 99,
    }
    fields.update(overrides)
    return ExperimentSpec(**fields)


# -- run_fix ----------------------------------------------------------------


def test_run_fix_noise_free_recovers_user(demo_scene):
    result = run_fix(demo_scene, method="cem", optimizer="lsm")
    assert result.method == "cem"
    assert result.optimizer == "lsm"
    assert len(result.tis_fixes) == len(demo_scene.tis_arrays)
    assert len(result.rays) == len(result.tis_fixes)
    assert result.user_fix.error_vs_truth_m < 1e-5
    for ray in result.rays:
        assert ray.ambiguity_halfwidth_rad == 0.0


def test_run_fix_is_deterministic(demo_scene):
    scene = _noisy_scene(demo_scene)
    a = run_fix(scene, method="cpm", optimizer="gdm", seed=5)
    b = run_fix(scene, method="cpm", optimizer="gdm", seed=5)
    assert a.user_fix.position_est.as_array() == pytest.approx(
        b.user_fix.position_est.as_array(), abs=0.0
    )
    c = run_fix(scene, method="cpm", optimizer="gdm", seed=6)
    assert np.linalg.norm(
        a.user_fix.position_est.as_array() - c.user_fix.position_est.as_array()
    ) > 0.0


def test_run_fix_reports_stage1_failure(demo_scene):
    pinned = demo_scene.satellites[0].position
    sats = tuple(
        dataclasses.replace(s, position=pinned) for s in demo_scene.satellites
    )
    clumped = dataclasses.replace(demo_scene, satellites=sats)
    with pytest.raises(StageError) as excinfo:
        run_fix(clumped)
    assert excinfo.value.stage == "stage1"


def test_run_fix_reports_stage3_failure(demo_scene):
    # two arrays directly opposite the user give antiparallel bearings,
    # which leaves the pairwise-midpoint solver with nothing to intersect
    opposed = fan_scene(4.0, (0.0, 180.0), base_scene=demo_scene)
    with pytest.raises(StageError) as excinfo:
        run_fix(opposed, optimizer="mvm")
    assert excinfo.value.stage == "stage3"


def test_run_fix_rejects_invalid_scene(demo_scene):
    broken = dataclasses.replace(demo_scene, satellites=demo_scene.satellites[:3])
    with pytest.raises(Exception, match="fewer than 4 satellites"):
        run_fix(broken)


# -- run_repeat_fix ---------------------------------------------------------


def test_repeat_fix_replays_without_synthesis(demo_scene):
    scene = _noisy_scene(demo_scene)
    result = run_fix(scene, method="cem", optimizer="lsm", seed=3)
    before = synthesis_call_count()
    replay = run_repeat_fix(
        result.tis_fixes, result.rays, "lsm", truth=scene.user.position
    )
    assert synthesis_call_count() == before
    assert replay.position_est.as_array() == pytest.approx(
        result.user_fix.position_est.as_array(), abs=0.0
    )
    assert replay.error_vs_truth_m == result.user_fix.error_vs_truth_m


def test_repeat_fix_rejects_unconverged_fix(demo_scene):
    result = run_fix(demo_scene)
    stale = [dataclasses.replace(result.tis_fixes[0], converged=False)]
    stale.extend(result.tis_fixes[1:])
    with pytest.raises(ValueError, match="never converged"):
        run_repeat_fix(stale, result.rays, "lsm")


def test_repeat_fix_rejects_orphan_ray(demo_scene):
    result = run_fix(demo_scene)
    with pytest.raises(ValueError, match="no stored fix"):
        run_repeat_fix(result.tis_fixes[1:], result.rays, "lsm")


# -- experiment specs -------------------------------------------------------


def test_spec_validation(demo_scene):
    with pytest.raises(ValueError, match="unknown experiment kind"):
        ExperimentSpec(kind="grid_walk", scene=demo_scene, levels=(1.0,))
    with pytest.raises(ValueError, match="trials"):
        _small_sweep(demo_scene, trials=0)
    with pytest.raises(ValueError, match="unknown methods"):
        _small_sweep(demo_scene, methods=("cem", "dopplershift"))
    with pytest.raises(ValueError, match="unknown optimizers"):
        _small_sweep(demo_scene, optimizers=("lsm", "adam"))
    with pytest.raises(ValueError, match="at least one level"):
        _small_sweep(demo_scene, levels=())
    with pytest.raises(ValueError, match="monotone"):
        _small_sweep(demo_scene, levels=(1.0, 3.0, 2.0))
    # strictly decreasing levels are fine
    _small_sweep(demo_scene, levels=(15.0, 5.0))


def test_experiment_from_dict_resolves_scene_path(scenarios_dir):
    spec = experiment_from_dict(
        {
            "kind": "ambiguity_sweep",
            "scene_path": "reference_scene.yaml",
            "levels": [4.0, 8.0],
            "trials": 2,
        },
        base_dir=scenarios_dir,
    )
    assert len(spec.scene.tis_arrays) == 4
    assert spec.levels == (4.0, 8.0)


def test_experiment_from_dict_rejects_leftover_keys(scenarios_dir):
    with pytest.raises(ValueError, match="unknown experiment keys"):
        experiment_from_dict(
            {
                "kind": "ambiguity_sweep",
                "scene_path": "reference_scene.yaml",
                "levels": [1.0],
                "budget": 9,
            },
            base_dir=scenarios_dir,
        )


def test_experiment_from_dict_needs_scene_and_kind():
    with pytest.raises(ValueError, match="'scene' or 'scene_path'"):
        experiment_from_dict({"kind": "ambiguity_sweep", "levels": [1.0]})


def test_load_experiment_rejects_non_mapping(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ValueError, match="not an experiment file"):
        load_experiment(path)


def test_frozen_scenarios_load(scenarios_dir):
    ambiguity = load_experiment(scenarios_dir / "ambiguity_sweep.yaml")
    assert ambiguity.kind == "ambiguity_sweep"
    assert ambiguity.levels == tuple(float(v) for v in range(1, 26))
    assert ambiguity.trials == 500
    assert ambiguity.scene.noise.aoa_ambiguity_mode == "hpbw_uniform"

    distance = load_experiment(scenarios_dir / "distance_sweep.yaml")
    assert distance.kind == "distance_sweep"
    assert distance.levels == (4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0)
    assert distance.scene.noise.aoa_ambiguity_mode == "fixed_deg"
    assert distance.scene.noise.aoa_ambiguity_deg == 26.0

    rotation = load_experiment(scenarios_dir / "rotation_study.yaml")
    assert rotation.kind == "rotation_study"
    assert rotation.rotation_steps_deg == (3.0, 6.0, 9.0)
    assert rotation.turns == 10
    assert rotation.radius_m == 4.0
    assert rotation.fixed_distance_m == 4.0


# -- experiment runs --------------------------------------------------------


def test_ambiguity_sweep_shape_and_determinism(demo_scene):
    spec = _small_sweep(_noisy_scene(demo_scene))
    record = run_ambiguity_sweep(spec)
    expected_rows = len(spec.levels) * len(spec.methods) * len(spec.optimizers)
    assert len(record.rows) == expected_rows * spec.trials
    assert len(record.aggregates) == expected_rows
    for agg in record.aggregates:
        assert agg["ok"] + agg["failed"] == spec.trials
        assert agg["mean_error_m"] is not None
    again = run_ambiguity_sweep(spec)
    assert again.rows == record.rows
    assert again.aggregates == record.aggregates


def test_sweep_rows_do_not_depend_on_threads(demo_scene):
    spec = _small_sweep(_noisy_scene(demo_scene))
    serial = run_ambiguity_sweep(spec, threads=1)
    threaded = run_ambiguity_sweep(spec, threads=4)
    assert serial.rows == threaded.rows
    assert serial.aggregates == threaded.aggregates


def test_sweep_levels_share_common_random_numbers(demo_scene):
    spec = _small_sweep(_noisy_scene(demo_scene))
    reordered = dataclasses.replace(spec, levels=tuple(reversed(spec.levels)))
    forward = run_ambiguity_sweep(spec)
    backward = run_ambiguity_sweep(reordered)

    def keyed(record):
        return {
            (r["level"], r["method"], r["optimizer"], r["trial"]): r["error_m"]
            for r in record.rows
        }

    assert keyed(forward) == keyed(backward)


def test_distance_sweep_runs_each_level(demo_scene):
    scene = dataclasses.replace(
        demo_scene, noise=NoiseModel(0.3, 0.2, "fixed_deg", 10.0)
    )
    spec = ExperimentSpec(
        kind="distance_sweep",
        scene=scene,
        levels=(4.0, 8.0),
        trials=5,
        optimizers=("lsm",),
        seed=7,
    )
    record = run_distance_sweep(spec)
    assert record.levels == (4.0, 8.0)
    assert {r["level"] for r in record.rows} == {4.0, 8.0}
    assert all(r["failed"] == 0 for r in record.rows)


def test_rotation_study_record(demo_scene, tmp_path):
    scene = dataclasses.replace(
        demo_scene, noise=NoiseModel(0.3, 0.2, "hpbw_uniform")
    )
    spec = ExperimentSpec(
        kind="rotation_study",
        scene=scene,
        trials=4,
        rotation_steps_deg=(3.0, 6.0, 9.0),
        turns=2,
        radius_m=4.0,
        seed=11,
        label="spin",
    )
    record = run_experiment(spec, output_dir=tmp_path / "out")
    assert record.levels == (0, 1, 2)
    assert record.optimizers == ()
    for agg in record.aggregates:
        assert agg["ok"] == spec.trials
        assert agg["mean_tpdop_m"] > 0.0
        assert agg["mean_rmse_m"] >= 0.0
    labels = {g.label for g in record.geometry}
    assert labels == {"turn=0", "turn=1", "turn=2"}

    loaded = geometry_reports_from_csv(tmp_path / "out" / "geometry.csv")
    assert loaded == record.geometry


def test_run_record_save_artifacts(demo_scene, tmp_path):
    spec = _small_sweep(_noisy_scene(demo_scene), trials=3)
    record = run_experiment(spec, output_dir=tmp_path)
    paths = record.save(tmp_path)
    assert set(paths) == {"trials", "aggregates", "summary"}

    with open(paths["trials"], newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(record.rows)
    assert float(rows[0]["error_m"]) == record.rows[0]["error_m"]

    with open(paths["summary"]) as fh:
        summary = json.load(fh)
    assert summary == record.summary_dict()
    assert summary["kernel"] == record.kernel
    assert summary["seed"] == spec.seed
