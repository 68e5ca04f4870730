"""morpho: loss-landscape analysis of sensor placement for a two-sensor
phototaxis robot, with derivative-free training, body/brain co-optimization,
and sensor-homeostasis analysis."""

__version__ = "0.1.0"

from .sim import (  # noqa: F401
    CANONICAL_DESIGN,
    PROFILES,
    START_DISTANCE,
    BodyDesign,
    Environment,
    EnvironmentSet,
    Policy,
    Pose,
    SimProfile,
    TrialResult,
    default_environment_set,
    evaluate_all,
    simulate,
)
from .landscape import (  # noqa: F401
    DesignGrid,
    DesignMetrics,
    OverlapMatrix,
    WeightGrid,
    metric_interference,
    metric_learnability,
    mirror_design,
    overlap,
    success_matrix,
    sweep_designs,
)
from .optimizers import (  # noqa: F401
    Bounds,
    LineageLog,
    OptRunRecord,
    combine_fitness,
    hill_climb,
    loss,
    minimize,
    train_sweep,
)
from .coopt import baseline_optimize, co_optimize, compare_runs  # noqa: F401
from .analysis import (  # noqa: F401
    ChapterTwoMetrics,
    StatResult,
    aggregate_dtw,
    chapter_two_metrics,
    dtw,
    mann_whitney,
    pearson,
    spearman,
)
