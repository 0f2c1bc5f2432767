"""Power-law penalized portfolios built on independent components of returns."""
from .backtest import BacktestConfig, annualize_stats, cross_p_correlations, run_backtest, run_bucket
from .errors import (
    ConvergenceError,
    DegeneratePenaltyError,
    EmptyPortfolioError,
    InsufficientDataError,
    NumericalError,
    ParseError,
    PowerLawError,
    RankDeficiencyError,
    UnsupportedFormError,
    ValidationError,
)
from .ica import FundingSpec, ICDecomposition, amari_distance, fastica, resolve_signs, whiten
from .marketdata import (
    BucketSpec,
    PriceTable,
    ReturnMatrix,
    apply_delisting_rule,
    compute_returns,
    load_price_table,
    slice_buckets,
)
from .moments import MomentProfile, estimate_moments, gaussian_abs_moment, moment_profile
from .powerlaw import (
    PenaltySpec,
    WeightVector,
    gaussian_weights,
    infinite_p_weights,
    leading_order_weights,
    normalize,
    to_asset_weights,
)
from .solver import (
    ObjectiveSpec,
    build_foc_polynomials,
    evaluate_objective,
    exact_weights,
    largest_positive_root,
    maximize_objective,
    objective_gradient,
    solve_coordinatewise,
)

__version__ = "0.1.0"
