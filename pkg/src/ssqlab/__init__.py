"""Simulation and estimation laboratory for the critically loaded
serve-the-shortest-queue system and its heavy-traffic limit."""

from .errors import (
    AmbiguousBall,
    BadRate,
    BadTieBreak,
    DegenerateChain,
    InfeasiblePoint,
    LatticeMismatch,
    NonConvergedPDE,
    NonCritical,
    QuadratureTolerance,
    RateMismatch,
    SsqError,
)
from .model import (
    GENERAL,
    HOMOGENEOUS,
    ModelSpec,
    ScaledModel,
    StateVector,
    TieBreakRule,
    ValidationReport,
    WbmParams,
    canonical_perm,
    diffusion_coefficients,
    dist_to_axes,
    generator_apply,
    lyapunov_F,
    permute_spec,
    shortest_set,
    validate,
)
from .engine import (
    EventLog,
    ExcursionMark,
    PathRecord,
    StopCondition,
    excursions,
    first_entrance,
    simulate,
    step,
    write_path_csv,
)
from .diffusion import (
    GridPath,
    KernelQuery,
    killed_kernel,
    rbm_path,
    rbm_survival,
    skorohod,
    wbm_path,
    wbm_semigroup,
)
from .estimators import (
    DyadicRow,
    FreqResult,
    GofResult,
    QEstimate,
    ReweightedQEstimate,
    dyadic_cauchy,
    estimate_q,
    likelihood_weight,
    queue_workload_transform,
    rbm_gof,
    reweighted_q,
    star_absorption,
    star_absorption_solve,
    star_chain_mc,
    tube_exit_freq,
)
from .harness import ExperimentConfig, SweepPoint, resolve_family, run_sweep, selftest
from .rngstreams import stream

__version__ = "0.1.0"
