"""Epidemic modeling with tracing/testing detection and test-distribution planning."""

from .model import (
    CompartmentState,
    ConstantParams,
    DecaySchedule,
    DecaySegment,
    ModelParams,
    ScheduleDomainError,
    TestingPolicy,
    delta_detections,
    eval_schedule,
    make_rhs,
    rhs_seir2,
    rhs_seir4,
    rhs_seir5,
)
from .integrator import IntegrationError, Trajectory, integrate, long_run, trajectory_frame
from .analysis import (
    FinalSizeError,
    StabilityResult,
    alternative_reproduction_number,
    basic_reproduction_number,
    effective_reproduction_number,
    is_stable,
    limit_susceptible,
    monotonicity_scan,
)
from .estimation import (
    Bounds,
    DEConfig,
    EstimationError,
    FitnessWeights,
    FitResult,
    ObservationSeries,
    data_norm,
    fit,
    fitness,
    new_population,
    weekly_breakpoints,
)
from .planner import (
    CapacityRule,
    DistributionMatrix,
    EstimationSettings,
    GainMatrix,
    Location,
    Region,
    SavingReport,
    evaluate_plan,
    evaluate_saving,
    gain_matrix,
    homogeneous_plan,
    rolling_plan,
    test_distribution,
)
from .dataio import (
    DataValidationError,
    RawSeries,
    load_population_registry,
    load_timeseries,
    reconstruct_observations,
    spain_fixture,
    spain_initial_state,
    spain_model_params,
    synthetic_region,
)

__version__ = "0.1.0"
