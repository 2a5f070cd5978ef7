"""Command line interface.

Subcommands mirror the library surface: ``validate`` checks a scene file,
``fix`` runs one end-to-end position fix, ``repeat-fix`` re-runs stage
three from stored artefacts, ``experiment`` drives a Monte-Carlo sweep
from a config file, and ``metrics`` reports geometry numbers for a scene
or stored stage-1 fixes.

Every failure exits nonzero with a one-line diagnostic on stderr; pipeline
failures carry their stage tag.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from .aoa import rays_from_csv, rays_to_csv
from .errors import PositioningError
from .harness import load_experiment, run_experiment, run_fix, run_repeat_fix
from .metrics import geometry_report, geometry_reports_to_csv
from .scene import Position3, load_scene, validate_scene
from .tis_locator import tis_fixes_from_csv, tis_fixes_to_csv
from .user_locator import OPTIMIZERS, user_fixes_to_csv

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tisnav",
        description="Indoor positioning via satellite-fed transmitting"
        " surfaces: scene tools, fixes, and Monte-Carlo experiments.",
    )
    parser.add_argument(
        "--quiet", action="store_true", help="suppress informational output"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scene file")
    p.add_argument("scene", type=Path)

    p = sub.add_parser("fix", help="run one end-to-end position fix")
    p.add_argument("scene", type=Path)
    p.add_argument("--method", choices=("cem", "cpm"), default="cem")
    p.add_argument("--optimizer", choices=OPTIMIZERS, default="lsm")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument(
        "--out",
        type=Path,
        default=None,
        help="directory for tis_fixes.csv, rays.csv, user_fix.csv",
    )

    p = sub.add_parser(
        "repeat-fix",
        help="re-run stage three from artefacts stored by 'fix --out'",
    )
    p.add_argument("fixes", type=Path, help="tis_fixes.csv from a stored fix")
    p.add_argument("rays", type=Path, help="rays.csv from a stored fix")
    p.add_argument("--optimizer", choices=OPTIMIZERS, default="lsm")
    p.add_argument(
        "--user",
        type=str,
        default=None,
        help="true user position x,y,z for error reporting",
    )

    p = sub.add_parser("experiment", help="run a Monte-Carlo experiment")
    p.add_argument("config", type=Path)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser(
        "metrics",
        help="geometry metrics for a scene file or a stage-1 fixes CSV",
    )
    p.add_argument("path", type=Path)
    p.add_argument(
        "--user",
        type=str,
        default=None,
        help="reference user position x,y,z (required for CSV input)",
    )
    p.add_argument("--out", type=Path, default=None)

    return parser


def _parse_point(text: str) -> Position3:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError(f"expected x,y,z, got {text!r}")
    return Position3(float(parts[0]), float(parts[1]), float(parts[2]))


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _cmd_validate(args) -> int:
    scene = load_scene(args.scene)
    diags = validate_scene(scene)
    if diags:
        for d in diags:
            print(f"invalid: {d}", file=sys.stderr)
        return 1
    _say(
        args,
        f"scene OK: {len(scene.satellites)} satellites,"
        f" {len(scene.tis_arrays)} surface arrays",
    )
    return 0


def _cmd_fix(args) -> int:
    scene = load_scene(args.scene)
    result = run_fix(
        scene, method=args.method, optimizer=args.optimizer, seed=args.seed
    )
    fix = result.user_fix
    p = fix.position_est
    _say(args, f"method={result.method} optimizer={result.optimizer}")
    for tf in result.tis_fixes:
        _say(
            args,
            f"array {tf.tis_id}: ({tf.position_est.x_m:.4f},"
            f" {tf.position_est.y_m:.4f}, {tf.position_est.z_m:.4f}) m,"
            f" bias {tf.range_bias_m:.4f} m,"
            f" {tf.iterations_used} iterations",
        )
    for ray in result.rays:
        _say(
            args,
            f"ray {ray.tis_id}: elevation {math.degrees(ray.elevation_rad):.3f}"
            f" deg, azimuth {math.degrees(ray.azimuth_rad):.3f} deg,"
            f" halfwidth {math.degrees(ray.ambiguity_halfwidth_rad):.3f} deg",
        )
    _say(
        args,
        f"user: ({p.x_m:.4f}, {p.y_m:.4f}, {p.z_m:.4f}) m,"
        f" objective {fix.objective_m:.6f} m"
        + (
            f", error {fix.error_vs_truth_m:.4f} m"
            if fix.error_vs_truth_m is not None
            else ""
        ),
    )
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        tis_fixes_to_csv(result.tis_fixes, args.out / "tis_fixes.csv")
        rays_to_csv(result.rays, args.out / "rays.csv")
        user_fixes_to_csv([fix], args.out / "user_fix.csv")
        _say(args, f"wrote artefacts to {args.out}")
    return 0


def _cmd_repeat_fix(args) -> int:
    fixes = tis_fixes_from_csv(args.fixes)
    rays = rays_from_csv(args.rays)
    truth = _parse_point(args.user) if args.user else None
    fix = run_repeat_fix(fixes, rays, optimizer=args.optimizer, truth=truth)
    p = fix.position_est
    _say(args, "stage three re-run from stored artefacts; no new ranges")
    _say(
        args,
        f"user: ({p.x_m:.4f}, {p.y_m:.4f}, {p.z_m:.4f}) m,"
        f" objective {fix.objective_m:.6f} m"
        + (
            f", error {fix.error_vs_truth_m:.4f} m"
            if fix.error_vs_truth_m is not None
            else ""
        ),
    )
    return 0


def _cmd_experiment(args) -> int:
    spec = load_experiment(args.config)
    if args.trials is not None:
        spec = replace(spec, trials=args.trials)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    record = run_experiment(spec, threads=args.threads, output_dir=args.out)
    _say(
        args,
        f"{record.kind}: {len(record.rows)} rows,"
        f" {len(record.aggregates)} aggregates,"
        f" kernel={record.kernel}, {record.wall_time_s:.2f} s",
    )
    failed = sum(r["failed"] for r in record.rows)
    if failed:
        _say(args, f"{failed} trial point(s) failed")
    if args.out is not None:
        _say(args, f"wrote results to {args.out}")
    return 0


def _cmd_metrics(args) -> int:
    if args.path.suffix in (".yaml", ".yml"):
        scene = load_scene(args.path)
        positions = [t.position for t in scene.tis_arrays]
        reference = scene.user.position
        label = "scene"
    else:
        fixes = tis_fixes_from_csv(args.path)
        if not fixes:
            raise ValueError(f"{args.path}: no fixes")
        if args.user is None:
            raise ValueError("CSV input needs --user x,y,z as the reference")
        positions = [f.position_est for f in fixes]
        reference = _parse_point(args.user)
        label = "fixes"
    report = geometry_report(label, "", positions, reference,
                             samples=len(positions))
    c = report.centroid
    _say(args, f"anchors: {len(positions)}")
    print(f"tpdop_m: {report.tpdop_m!r}")
    print(f"compactness_rmse_m: {report.rmse_m!r}")
    print(f"centroid_m: ({c.x_m!r}, {c.y_m!r}, {c.z_m!r})")
    print(f"mean_distance_m: {report.mean_distance_m!r}")
    if args.out is not None:
        geometry_reports_to_csv([report], args.out)
        _say(args, f"wrote {args.out}")
    return 0


_COMMANDS = {
    "validate": _cmd_validate,
    "fix": _cmd_fix,
    "repeat-fix": _cmd_repeat_fix,
    "experiment": _cmd_experiment,
    "metrics": _cmd_metrics,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (PositioningError, ValueError, OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
