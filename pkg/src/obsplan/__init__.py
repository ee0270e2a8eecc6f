"""Mobile-sensor path planning and Kalman estimation on low-rank models."""

__version__ = "0.1.0"

from .errors import (
    BlowUpError,
    ConditioningError,
    ConfigError,
    ConvergenceError,
    DegenerateRankError,
    DiagonalizationError,
    FormatError,
    InfeasiblePlanError,
    NumericalError,
    ObsplanError,
    StructureError,
    UnobservableError,
)
from .geometry import Geometry, MotionConstraint
from .model import (
    FullModel,
    NoiseSpec,
    RealBlockModel,
    ReducedModel,
    SnapshotMatrix,
    coarsen,
    fit_dmd,
    simulate,
    spectral_truncate,
    to_complex_coeffs,
    to_real_blocks,
    to_real_coeffs,
)
from .observability import (
    ObservabilityMatrix,
    RankReport,
    Trajectory,
    assemble,
    condition_number,
    is_observable,
    projected_block,
)
from .planner import (
    PlanConfig,
    PlanStep,
    candidate_set,
    multiscale_refine,
    plan,
    selection_score,
)
from .kalman import (
    DareBounds,
    DareSolution,
    KfRun,
    KfState,
    LiftedSystem,
    dare_iterate,
    dare_trace_bounds,
    kf_step,
    lift_system,
    run_filter,
)
from .scenarios import KsSpec, TorusScenario, TorusSpec, make_torus, solve_ks
from .gridded import GriddedDataset, load_gridded, mask_geometry, save_gridded
from .config import ExperimentConfig, load_config, validate_config
from .experiment import RunManifest, expand_sweep, run_experiment, verify_manifest

__all__ = [name for name in dir() if not name.startswith("_")]
