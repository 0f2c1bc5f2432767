"""Component weights for power-law penalties.

For a component with excess return ``e = mu - r`` and p-th moment ``M`` the
leading-order weight is ``(e / M) ** (1 / (p - 1))``; components with
``e <= 0`` get zero. As ``p -> inf`` this becomes a step at the hurdle.

Weights here are in component space and never negative; going short a
component is expressed through the decomposition's ``signs``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import DegeneratePenaltyError, EmptyPortfolioError, ValidationError
from .moments import INFINITY, MomentProfile, is_integer_order

# clamp for excess returns before taking logs, so p ~ 1e6 does not underflow
EXCESS_FLOOR = 1e-300

NORMALIZATIONS = ("sum_sq_one", "unit_sum", "raw")
_ALIASES = {"sumsq": "sum_sq_one", "sum": "unit_sum"}


def parse_order(value) -> float:
    """Parse a penalty order; accepts ``inf``/``infinity``."""
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinity", "∞"):
        return INFINITY
    p = float(value)
    if math.isnan(p):
        raise ValidationError("penalty order is NaN")
    return p


def format_order(p: float) -> str:
    if math.isinf(p):
        return "inf"
    return str(int(p)) if float(p).is_integer() else repr(float(p))


@dataclass(frozen=True)
class PenaltySpec:
    """Order ``p``, risk-aversion ``lam`` and moment form of the penalty.

    ``lam=None`` selects ``1 / p``, under which the single-component optimum
    of ``w e - lam M w**p`` is exactly the leading-order weight.
    """

    p: float
    lam: float | None = None
    form: str = "absolute"

    def __post_init__(self):
        p = parse_order(self.p)
        object.__setattr__(self, "p", p)
        if not p >= 2:
            raise ValidationError(f"penalty order must be >= 2 (or inf), got {p}")
        if self.form not in ("absolute", "signed"):
            raise ValidationError(f"unknown penalty form {self.form!r}")
        if self.form == "signed" and not is_integer_order(p):
            raise ValidationError("the signed-moment penalty needs an integer order")
        if self.lam is not None and not self.lam > 0:
            raise ValidationError("lambda must be positive")

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.p)

    @property
    def resolved_lambda(self) -> float:
        if self.lam is not None:
            return float(self.lam)
        return 0.0 if self.is_infinite else 1.0 / self.p


@dataclass(frozen=True)
class WeightVector:
    weights: np.ndarray
    normalization: str = "raw"
    hurdle_excess: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, "weights", np.atleast_1d(np.asarray(self.weights, dtype=float)))
        object.__setattr__(self, "hurdle_excess", np.atleast_1d(np.asarray(self.hurdle_excess, dtype=float)))

    @property
    def is_empty(self) -> bool:
        return not np.any(self.weights)

    def to_dict(self) -> dict:
        return {
            "normalization": self.normalization,
            "weights": [float(v) for v in self.weights],
            "hurdle_excess": [float(v) for v in self.hurdle_excess],
        }


def _excess(means, rates) -> np.ndarray:
    means = np.atleast_1d(np.asarray(means, dtype=float))
    rates = np.broadcast_to(np.asarray(rates, dtype=float), means.shape)
    return means - rates


def leading_order_weights(moments: MomentProfile, effective_rates, spec: PenaltySpec | None = None) -> WeightVector:
    """Raw weights ``((mu - r) / D) ** (1 / (p - 1))``.

    ``D`` is the absolute moment, or ``|signed moment|`` for the signed form.
    Evaluated as ``exp((log e - log D) / (p - 1))``.
    """
    spec = spec or PenaltySpec(moments.p)
    if spec.is_infinite:
        raise ValidationError("leading_order_weights needs a finite order; use infinite_p_weights")
    if moments.p != spec.p:
        raise ValidationError(f"moment profile is of order {moments.p}, penalty of order {spec.p}")
    excess = _excess(moments.means, effective_rates)
    log_d = moments.log_absolute if spec.form == "absolute" else moments.log_abs_signed
    if log_d is None:
        raise ValidationError(f"moment profile lacks the {spec.form} moments")
    viable = excess > 0
    degenerate = np.flatnonzero(viable & np.isneginf(log_d))
    if degenerate.size:
        raise DegeneratePenaltyError(
            f"components {degenerate.tolist()} have positive excess but zero penalty moment; "
            "their weight can grow without bound",
            degenerate.tolist(),
        )
    log_e = np.log(np.maximum(excess, EXCESS_FLOOR))
    with np.errstate(invalid="ignore"):
        log_w = (log_e - log_d) / (spec.p - 1.0)
    w = np.where(viable, np.exp(np.where(viable, log_w, 0.0)), 0.0)
    return WeightVector(w, "raw", excess)


def infinite_p_weights(moments, effective_rates) -> WeightVector:
    """Step function at the hurdle: 1 where ``mu - r > 0``, else 0."""
    means = moments.means if isinstance(moments, MomentProfile) else moments
    excess = _excess(means, effective_rates)
    return WeightVector((excess > 0).astype(float), "raw", excess)


def weights_for_penalty(moments: MomentProfile, effective_rates, spec: PenaltySpec) -> WeightVector:
    if spec.is_infinite:
        return infinite_p_weights(moments, effective_rates)
    return leading_order_weights(moments, effective_rates, spec)


def _check_gaussian_args(mu, rates, sigma, p):
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    if not (sigma > 0).all():
        raise ValidationError("volatilities must be positive")
    p = float(p)
    if not p >= 2:
        raise ValidationError(f"penalty order must be >= 2, got {p}")
    excess = _excess(mu, rates)
    return excess, sigma, p


def gaussian_weights(mu, rates, sigma, p: float) -> WeightVector:
    """Leading-order weights for Gaussian components in closed form.

    ``(1/sigma) * (e/sigma)**(1/(p-1)) * 2**(-p/(2(p-1))) * Gamma((p+1)/2)**(-1/(p-1))``
    for positive excess ``e``. This omits the ``sqrt(pi)`` of the Gaussian
    moment, so raw values differ from :func:`leading_order_weights` by the
    component-independent factor ``pi**(-1/(2(p-1)))``.
    """
    excess, sigma, p = _check_gaussian_args(mu, rates, sigma, p)
    viable = excess > 0
    sharpe = np.maximum(excess, EXCESS_FLOOR) / sigma
    log_w = (
        -np.log(sigma)
        + np.log(sharpe) / (p - 1.0)
        - p / (2.0 * (p - 1.0)) * math.log(2.0)
        - float(gammaln(0.5 * (p + 1.0))) / (p - 1.0)
    )
    return WeightVector(np.where(viable, np.exp(log_w), 0.0), "raw", excess)


def stirling_gaussian_weights(mu, rates, sigma, p: float, large_p: bool = False) -> WeightVector:
    """Gaussian weights with the Gamma constant replaced by its Stirling form.

    The constant is ``e**(p/(2(p-1))) / (p**(p/(2(p-1))) 2**((p+1)/(2(p-1))))``,
    or ``sqrt(e/2) / sqrt(p)`` with ``large_p``. It is the same for every
    component, so normalized weights agree with :func:`gaussian_weights`.
    """
    excess, sigma, p = _check_gaussian_args(mu, rates, sigma, p)
    viable = excess > 0
    sharpe = np.maximum(excess, EXCESS_FLOOR) / sigma
    if large_p:
        log_c = 0.5 * (1.0 - math.log(2.0)) - 0.5 * math.log(p)
    else:
        a = p / (2.0 * (p - 1.0))
        log_c = a - a * math.log(p) - (p + 1.0) / (2.0 * (p - 1.0)) * math.log(2.0)
    log_w = -np.log(sigma) + np.log(sharpe) / (p - 1.0) + log_c
    return WeightVector(np.where(viable, np.exp(log_w), 0.0), "raw", excess)


def normalize(w: WeightVector, mode: str = "sum_sq_one") -> WeightVector:
    """Rescale by one positive scalar to ``sum w**2 == 1`` or ``sum w == 1``."""
    mode = _ALIASES.get(mode, mode)
    if mode not in NORMALIZATIONS:
        raise ValidationError(f"unknown normalization {mode!r}")
    if mode == "raw":
        return WeightVector(w.weights, "raw", w.hurdle_excess)
    if w.is_empty:
        raise EmptyPortfolioError("all weights are zero: no component clears its hurdle")
    # divide by the largest entry first so tiny or huge weights neither under- nor overflow
    x = w.weights / np.max(np.abs(w.weights))
    if mode == "sum_sq_one":
        scale = math.sqrt(float(np.dot(x, x)))
    else:
        scale = float(x.sum())
        if not scale > 0:
            raise EmptyPortfolioError("weights do not have a positive sum")
    return WeightVector(x / scale, mode, w.hurdle_excess)


def to_asset_weights(w, dec) -> np.ndarray:
    """Map component weights to asset weights through the unmixing matrix.

    ``a = unmixing.T @ (signs * w)``, so ``returns @ a`` equals the weighted
    sum of oriented component series.
    """
    weights = w.weights if isinstance(w, WeightVector) else np.asarray(w, dtype=float)
    if weights.shape != (dec.k,):
        raise ValidationError(f"weight vector has {weights.shape[0]} entries, decomposition has {dec.k} components")
    return dec.unmixing.T @ (dec.signs * weights)


def squared_weight_entropy(w) -> float:
    """Shannon entropy of ``w**2 / sum(w**2)``; ``log K`` for equal weights."""
    x = w.weights if isinstance(w, WeightVector) else np.asarray(w, dtype=float)
    q = x * x
    total = q.sum()
    if total == 0:
        return 0.0
    q = q[q > 0] / total
    return float(-(q * np.log(q)).sum())


def weight_curve(excess_grid, p: float, moment: float = 1.0) -> np.ndarray:
    """Leading-order weight as a function of excess return (for plotting)."""
    e = np.asarray(excess_grid, dtype=float)
    if math.isinf(p):
        return (e > 0).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(e > 0, np.exp((np.log(np.maximum(e, EXCESS_FLOOR)) - math.log(moment)) / (p - 1.0)), 0.0)
