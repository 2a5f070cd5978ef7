"""Indoor positioning through satellite-fed transmitting surface arrays.

Wall-mounted transparent surface arrays relay navigation satellite signals
to an indoor receiver.  Positioning runs in three stages: corrected
pseudo-ranges locate each surface array, a dictionary search at each array
estimates the bearing toward the user, and an optimiser intersects the
bearing rays for the user fix.  The package covers scene synthesis, all
three stages, geometry metrics, and a Monte-Carlo experiment harness with
a command line front end (``tisnav``).
"""

from .aoa import (
    AngleGrid,
    AoaEstimate,
    AoaSignalModel,
    RayEstimate,
    ambiguity_halfwidth_rad,
    apply_ambiguity,
    default_codebook,
    dictionary_column,
    estimate_aoa,
    hpbw_planar,
    hpbw_upa,
    projection_residual,
)
from .channel import (
    LargeScaleGain,
    ShadowedRicianParams,
    array_factor,
    large_scale,
    received_signal,
    sample_shadowed_rician,
    structured_channel,
)
from .errors import (
    DivergenceError,
    GeometryError,
    PositioningError,
    SceneError,
    StageError,
    UnderdeterminedError,
)
from .harness import (
    ExperimentSpec,
    FixResult,
    RunRecord,
    load_experiment,
    run_ambiguity_sweep,
    run_distance_sweep,
    run_experiment,
    run_fix,
    run_repeat_fix,
    run_rotation_study,
)
from .kernels import USING_COMPILED
from .metrics import (
    ErrorStats,
    GeometryReport,
    compactness_rmse,
    error_stats,
    geometry_report,
    tpdop,
)
from .pseudorange import (
    SPEED_OF_LIGHT_M_S,
    NoiseModel,
    PseudorangeObservation,
    PseudorangeSet,
    build_observation_set,
    correct_cem,
    raw_cem,
    resolve_ambiguity,
    synthesize_cpm,
)
from .scene import (
    Position3,
    SatelliteEphemeris,
    Scene,
    TisArray,
    UserConfig,
    demo_constellation,
    fan_scene,
    load_scene,
    rotation_scenario,
    save_scene,
    validate_scene,
)
from .tis_locator import TisFix, linearize, locate_all_tis, locate_tis, solve_wls
from .user_locator import (
    OPTIMIZERS,
    SolverOptions,
    UserFix,
    locate_user,
    objective,
    point_to_ray_distance,
    solve_gdm,
    solve_lsm,
    solve_mvm,
    solve_nuom,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "USING_COMPILED",
    # scene
    "Position3",
    "SatelliteEphemeris",
    "TisArray",
    "UserConfig",
    "Scene",
    "validate_scene",
    "load_scene",
    "save_scene",
    "demo_constellation",
    "fan_scene",
    "rotation_scenario",
    # errors
    "PositioningError",
    "SceneError",
    "GeometryError",
    "UnderdeterminedError",
    "DivergenceError",
    "StageError",
    # ranges
    "SPEED_OF_LIGHT_M_S",
    "NoiseModel",
    "PseudorangeObservation",
    "PseudorangeSet",
    "raw_cem",
    "correct_cem",
    "synthesize_cpm",
    "resolve_ambiguity",
    "build_observation_set",
    # channel
    "LargeScaleGain",
    "large_scale",
    "array_factor",
    "structured_channel",
    "ShadowedRicianParams",
    "sample_shadowed_rician",
    "received_signal",
    # angles and rays
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
    "apply_ambiguity",
    "RayEstimate",
    # stage 1
    "TisFix",
    "linearize",
    "solve_wls",
    "locate_tis",
    "locate_all_tis",
    # stage 3
    "OPTIMIZERS",
    "SolverOptions",
    "UserFix",
    "point_to_ray_distance",
    "objective",
    "solve_mvm",
    "solve_lsm",
    "solve_gdm",
    "solve_nuom",
    "locate_user",
    # metrics
    "tpdop",
    "compactness_rmse",
    "ErrorStats",
    "error_stats",
    "GeometryReport",
    "geometry_report",
    # harness
    "FixResult",
    "run_fix",
    "run_repeat_fix",
    "ExperimentSpec",
    "load_experiment",
    "RunRecord",
    "run_ambiguity_sweep",
    "run_distance_sweep",
    "run_rotation_study",
    "run_experiment",
]
