"""Bucketed in-sample backtests over a sweep of penalty orders.

Per bucket: apply the delisting rule, compute returns, run one ICA
decomposition shared by every order, build weights for each ``p``,
normalise them, map to assets and summarise the resulting return series.
"""
from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyPortfolioError, InsufficientDataError, ValidationError
from .ica import FundingSpec, ICDecomposition, fastica, resolve_signs
from .marketdata import (
    DEFAULT_MIN_OBS,
    DEFAULT_PERIODS_PER_YEAR,
    BucketSpec,
    PriceTable,
    ReturnMatrix,
    apply_delisting_rule,
    compute_returns,
    slice_buckets,
)
from .moments import kurtosis, log_abs_moment, moment_profile
from .powerlaw import (
    PenaltySpec,
    WeightVector,
    format_order,
    infinite_p_weights,
    leading_order_weights,
    normalize,
    squared_weight_entropy,
    to_asset_weights,
)
from .solver import ObjectiveSpec, exact_weights

MIN_BUCKET_ROWS = 30


@dataclass(frozen=True)
class BacktestConfig:
    k: int = 10
    kind: str = "arithmetic"
    period_per_year: int = DEFAULT_PERIODS_PER_YEAR
    form: str = "absolute"
    normalization: str = "sum_sq_one"
    hurdle: float = 0.0
    short_rate: Optional[float] = None
    seed: int = 0
    exact: bool = False
    nonlinearity: str = "logcosh"
    ica_tol: float = 1e-6
    ica_max_iter: int = 500
    min_obs: int = DEFAULT_MIN_OBS
    restarts: int = 16
    walk_forward: bool = False
    # power-law ratios reported for every portfolio, on top of each finite p in the sweep
    ratio_orders: tuple = (2, 4)

    def funding(self) -> FundingSpec:
        return FundingSpec(self.hurdle, self.short_rate)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["ratio_orders"] = list(self.ratio_orders)
        return d


@dataclass
class PortfolioSeries:
    label: str
    p: float
    returns: np.ndarray
    weights_used: WeightVector
    asset_weights: np.ndarray
    raw_weights: Optional[WeightVector] = None
    empty: bool = False
    funding_rate: float = 0.0  # per-period hurdle of the whole portfolio


@dataclass
class StatBlock:
    annualized_return: float
    annualized_stdev: float
    kurtosis_raw: Optional[float]
    kurtosis_excess: Optional[float]
    sharpe_ratio: Optional[float]
    power_law_ratios: dict = field(default_factory=dict)
    effective_component_count: Optional[int] = None
    annualized_excess_return: float = 0.0
    squared_weight_entropy: Optional[float] = None
    empty: bool = False

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _none_if_nan(x):
    return None if x is None or not math.isfinite(x) else float(x)


def annualize_stats(
    series,
    period_per_year: int = DEFAULT_PERIODS_PER_YEAR,
    rate: float = 0.0,
    ratio_orders: Sequence[float] = (2, 4),
) -> StatBlock:
    """Annualised statistics of a per-period return series.

    Return and excess return scale with ``period_per_year``, volatility with
    its square root. The power-law ratio of order ``p`` is the annualised
    excess return over ``M_p ** (1/p) * sqrt(period_per_year)``; at ``p = 2``
    it is the Sharpe ratio. Ratios, Sharpe and kurtosis are ``None`` for a
    constant series. Kurtosis is computed on per-period returns.
    """
    weights = None
    if isinstance(series, PortfolioSeries):
        weights = series.weights_used.weights
        rate = series.funding_rate
        x = series.returns
    else:
        x = np.asarray(series, dtype=float)
    if x.size < 2:
        raise InsufficientDataError("need at least two returns to annualise")
    mean = float(x.mean())
    # shifting by the first value keeps a constant series at exactly zero spread
    sd = float(np.std(x - x[0]))
    ann_ret = mean * period_per_year
    ann_excess = (mean - rate) * period_per_year
    ann_sd = sd * math.sqrt(period_per_year)
    ratios = {}
    for q in ratio_orders:
        key = format_order(q)
        if sd == 0.0:
            ratios[key] = None
            continue
        root = math.exp(log_abs_moment(x, q) / float(q))
        ratios[key] = ann_excess / (root * math.sqrt(period_per_year))
    k_raw, k_exc = kurtosis(x) if sd > 0 else (math.nan, math.nan)
    return StatBlock(
        annualized_return=ann_ret,
        annualized_stdev=ann_sd,
        kurtosis_raw=_none_if_nan(k_raw),
        kurtosis_excess=_none_if_nan(k_exc),
        sharpe_ratio=ann_excess / ann_sd if sd > 0 else None,
        power_law_ratios=ratios,
        effective_component_count=None if weights is None else int(np.count_nonzero(weights)),
        annualized_excess_return=ann_excess,
        squared_weight_entropy=None if weights is None else squared_weight_entropy(weights),
        empty=bool(isinstance(series, PortfolioSeries) and series.empty),
    )


def cross_p_correlations(series_list: Sequence) -> tuple[list, np.ndarray]:
    """Pearson correlations of per-period returns; the diagonal is exactly 1."""
    arrays = [s.returns if isinstance(s, PortfolioSeries) else np.asarray(s, dtype=float) for s in series_list]
    labels = [s.label if isinstance(s, PortfolioSeries) else str(i) for i, s in enumerate(series_list)]
    if not arrays:
        return labels, np.zeros((0, 0))
    n = arrays[0].shape[0]
    if any(a.shape != (n,) for a in arrays):
        raise ValidationError("correlated series must all have the same length")
    x = np.vstack(arrays)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.corrcoef(x) if len(arrays) > 1 else np.ones((1, 1))
    c = np.atleast_2d(c)
    np.fill_diagonal(c, 1.0)
    return labels, c


@dataclass
class PreparedBucket:
    table: PriceTable
    fit_returns: ReturnMatrix
    eval_returns: ReturnMatrix
    decomposition: ICDecomposition
    rates: np.ndarray


def prepare_bucket(prices: PriceTable, bucket: BucketSpec, config: BacktestConfig) -> PreparedBucket:
    """Delisting rule, returns and the sign-resolved decomposition of one bucket."""
    table = apply_delisting_rule(prices, bucket, min_obs=config.min_obs)
    if table.n_symbols == 0:
        raise InsufficientDataError(f"bucket {bucket.label!r}: no symbols survive the delisting rule")
    if table.n_dates - 1 < MIN_BUCKET_ROWS:
        raise InsufficientDataError(
            f"bucket {bucket.label!r}: {table.n_dates - 1} returns, at least {MIN_BUCKET_ROWS} needed"
        )
    returns = compute_returns(table, config.kind, config.period_per_year)
    fit, evaluate = returns, returns
    if config.walk_forward:
        half = returns.n_periods // 2
        fit = ReturnMatrix(returns.returns[:half], returns.returns[:half].mean(axis=0), returns.period_per_year,
                           returns.kind, returns.symbols, returns.dates[:half])
        evaluate = ReturnMatrix(returns.returns[half:], returns.returns[half:].mean(axis=0),
                                returns.period_per_year, returns.kind, returns.symbols, returns.dates[half:])
    dec = fastica(fit, k=config.k, nonlinearity=config.nonlinearity, tol=config.ica_tol,
                  max_iter=config.ica_max_iter, seed=config.seed)
    dec, rates = resolve_signs(dec, config.funding())
    return PreparedBucket(table, fit, evaluate, dec, rates)


def component_weights(dec: ICDecomposition, rates, p: float, config: BacktestConfig) -> WeightVector:
    """Raw component weights for one penalty order (leading order or exact)."""
    spec = PenaltySpec(p, form=config.form)
    if spec.is_infinite:
        return infinite_p_weights(dec.oriented_means, rates)
    if config.exact:
        obj = ObjectiveSpec.from_decomposition(dec, rates, spec)
        w = exact_weights(obj, restarts=config.restarts, seed=config.seed)
        return WeightVector(w, "raw", obj.excess)
    profile = moment_profile(dec.oriented_components, p)
    return leading_order_weights(profile, rates, spec)


def build_portfolio(prep: PreparedBucket, p: float, config: BacktestConfig, label: str) -> PortfolioSeries:
    dec = prep.decomposition
    raw = component_weights(dec, prep.rates, p, config)
    try:
        used = normalize(raw, config.normalization)
    except EmptyPortfolioError:
        zeros = np.zeros(dec.k)
        return PortfolioSeries(label, p, np.zeros(prep.eval_returns.n_periods), WeightVector(zeros, "raw", raw.hurdle_excess),
                               np.zeros(prep.eval_returns.n_assets), raw, empty=True)
    assets = to_asset_weights(used, dec)
    series = prep.eval_returns.returns @ assets
    return PortfolioSeries(label, p, series, used, assets, raw, funding_rate=float(used.weights @ prep.rates))


@dataclass
class BucketResult:
    bucket: BucketSpec
    p_list: list
    series: list
    stats: list
    correlations: np.ndarray
    decomposition: ICDecomposition
    symbols: tuple
    warnings: tuple
    config: BacktestConfig

    @property
    def empty(self) -> bool:
        return all(s.empty for s in self.series)


def run_bucket(
    prices: PriceTable,
    bucket: BucketSpec,
    p_list: Sequence[float],
    config: BacktestConfig | None = None,
    threads: int = 1,
) -> BucketResult:
    """One bucket of the protocol: a shared decomposition, one portfolio per order."""
    config = config or BacktestConfig()
    prep = prepare_bucket(prices, bucket, config)
    p_list = [float(p) for p in p_list]
    ratio_orders = sorted({float(q) for q in config.ratio_orders} | {p for p in p_list if math.isfinite(p)})

    def one(p):
        return build_portfolio(prep, p, config, f"{bucket.label} p={format_order(p)}")

    if threads > 1 and len(p_list) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            built = list(pool.map(one, p_list))
    else:
        built = [one(p) for p in p_list]
    series, stats = [], []
    for s in built:
        series.append(s)
        if s.empty:
            stats.append(StatBlock(0.0, 0.0, None, None, None, {format_order(q): None for q in ratio_orders},
                                   0, 0.0, 0.0, True))
        else:
            stats.append(annualize_stats(s, config.period_per_year, ratio_orders=ratio_orders))
    _, corr = cross_p_correlations(series)
    return BucketResult(bucket, p_list, series, stats, corr, prep.decomposition, prep.table.symbols,
                        prep.table.warnings, config)


def run_backtest(
    prices: PriceTable,
    buckets: Sequence[BucketSpec],
    p_list: Sequence[float],
    config: BacktestConfig | None = None,
    membership=None,
    threads: int = 1,
) -> list[BucketResult]:
    """Run every bucket; with ``threads > 1`` buckets are processed concurrently."""
    config = config or BacktestConfig()
    tables = slice_buckets(prices, buckets, membership, min_obs=config.min_obs)
    jobs = list(zip(tables, buckets))
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda tb: run_bucket(tb[0], tb[1], p_list, config), jobs))
    return [run_bucket(t, b, p_list, config, threads=threads) for t, b in jobs]
