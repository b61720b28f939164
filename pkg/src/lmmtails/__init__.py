"""Monte Carlo engine and tail diagnostics for the log-normal LIBOR market model."""

from .config import load_config
from .errors import (
    BracketNotFoundError,
    CheckFailed,
    ConfigError,
    DomainError,
    InsufficientDataError,
    LMMError,
    NotACorrelationMatrixError,
    StateError,
)
from .estimators import (
    MomentEstimate,
    MomentScanReport,
    ScanThresholds,
    TailFitReport,
    black_caplet_value,
    check_product_bound,
    estimate_logsquare_moment,
    fit_logsquare_tail,
    fit_tail_slope,
    scan_critical_exponent,
)
from .model import (
    DIVERGENT,
    CorrelationMatrix,
    InitialCurve,
    ModelConfig,
    PiecewiseConstant,
    TenorStructure,
    Verdict,
    VolTermStructure,
    cholesky_factor,
    critical_exponent,
    cumulative_variance,
    frozen_drift_integral,
    lognormal_logsquare_moment,
    terminal_drift,
)
from .simulation import (
    MarketState,
    SimulationPlan,
    TerminalSample,
    reweighted_expectation,
    rn_weight_to_measure,
    rn_weights,
    sample_frozen_drift,
    simulate_terminal_measure,
)

__version__ = "0.1.0"
