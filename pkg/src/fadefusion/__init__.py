"""Distributed estimation over fading links: BLUE fusion, power allocation,
outage and diversity simulation."""

from .allocation import (
    AllocationDiagnostics,
    CapVector,
    RankedView,
    feasibility_floor,
    l2_min_power_allocation,
    max_performance_allocation,
    max_performance_with_caps,
    min_power_allocation,
    numeric_reference_allocation,
    optimality_certificate,
    rank_sensors,
)
from .analysis import (
    AverageDistortion,
    CappedPolicy,
    EqualPolicy,
    MinPowerSummary,
    OptimalPolicy,
    OutageEstimate,
    RateFunctionQuery,
    SandwichCheck,
    SlopeFit,
    active_fraction,
    average_distortion,
    average_min_power,
    chernoff_bound,
    d_infinity,
    diversity_slope,
    outage_probability,
    rate_function_exponential,
    rate_function_numeric,
    sandwich_check,
)
from .channel import (
    FadingModel,
    NetworkModel,
    ObservationModel,
    PropagationModel,
    RngStream,
    default_network,
    mean_merit,
    sample_batch,
    sample_channel_snr,
    sample_snapshot,
)
from .errors import (
    AllPowerZero,
    ConvergenceFailure,
    DivergentMGF,
    FadeFusionError,
    InfeasibleTarget,
    InsufficientData,
    InternalConsistencyError,
    NoUsableSensor,
)
from .model import (
    NOISELESS,
    Allocation,
    SensorSite,
    SignalPrior,
    Snapshot,
    blue_mse,
    blue_mse_matrix_oracle,
    distortion_floor,
    equal_allocation,
    equal_power_mse,
    merit,
    signal_contributions,
    transmit_power,
)

__version__ = "0.1.0"
