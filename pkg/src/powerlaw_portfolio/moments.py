"""Central moments of return series and their Gaussian closed forms.

Moment estimators use the population convention (divide by T). For large
orders the p-th moment over- or underflows a float64 quickly, so every
estimate is also kept as a logarithm; downstream weight formulas only ever
need ratios such as ``(mu / M_p) ** (1 / (p - 1))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import gammaln

from .errors import InsufficientDataError, ValidationError

INFINITY = math.inf
# Above this order the direct power is computed from the log-space value.
LOG_SPACE_ORDER = 100.0


def is_integer_order(p: float) -> bool:
    return math.isfinite(p) and float(p).is_integer()


def is_even_order(p: float) -> bool:
    return is_integer_order(p) and int(p) % 2 == 0


class MomentEstimate(NamedTuple):
    mean: float
    absolute: float
    signed: Optional[float]


def _center(x: np.ndarray, axis=0) -> tuple[np.ndarray, np.ndarray]:
    """Mean and residuals, shifted by the first row so constant series give exact zeros."""
    first = np.take(x, [0], axis=axis)
    d = x - first
    m = d.mean(axis=axis, keepdims=True)
    return np.squeeze(first + m, axis=axis), d - m


def _log_abs_power_mean(resid: np.ndarray, p: float, axis=0) -> np.ndarray:
    """log(mean(|resid|**p)) without forming the power directly."""
    a = np.abs(resid)
    scale = a.max(axis=axis, keepdims=True)
    safe = np.where(scale > 0, scale, 1.0)
    with np.errstate(divide="ignore"):
        out = p * np.log(safe) + np.log(np.mean((a / safe) ** p, axis=axis, keepdims=True))
    out = np.where(scale > 0, out, -np.inf)
    return np.squeeze(out, axis=axis)


def _log_abs_signed_power_mean(resid: np.ndarray, p: int, axis=0):
    """log|mean(resid**p)| and the sign of mean(resid**p)."""
    scale = np.abs(resid).max(axis=axis, keepdims=True)
    safe = np.where(scale > 0, scale, 1.0)
    m = np.mean((resid / safe) ** p, axis=axis, keepdims=True)
    with np.errstate(divide="ignore"):
        out = p * np.log(safe) + np.log(np.abs(m))
    out = np.where(scale > 0, out, -np.inf)
    return np.squeeze(out, axis=axis), np.squeeze(np.sign(m), axis=axis)


def log_abs_moment(series, p: float) -> float:
    """log E|x - mean|**p of a sample, finite even where the moment overflows."""
    x = np.asarray(series, dtype=float).ravel()
    return float(_log_abs_power_mean(_center(x)[1], float(p)))


def _check_order(p: float) -> float:
    p = float(p)
    if not math.isfinite(p):
        raise ValidationError("moment order must be finite")
    if p < 1:
        raise ValidationError(f"moment order must be >= 1, got {p}")
    return p


def estimate_moments(series, p: float) -> MomentEstimate:
    """Sample mean, absolute and signed central moments of order ``p``.

    The signed moment is ``None`` unless ``p`` is an integer. For even ``p``
    both moments come from the same computation and are identical.

    >>> estimate_moments([-1.0, 1.0], 3)
    MomentEstimate(mean=0.0, absolute=1.0, signed=0.0)
    """
    x = np.asarray(series, dtype=float).ravel()
    if x.size < 2:
        raise InsufficientDataError("need at least two observations to estimate moments")
    p = _check_order(p)
    mean, resid = _center(x)
    mean = float(mean)
    if p < LOG_SPACE_ORDER:
        absolute = float(np.mean(np.abs(resid) ** p))
    else:
        absolute = float(np.exp(_log_abs_power_mean(resid, p)))
    signed = None
    if is_even_order(p):
        signed = absolute
    elif is_integer_order(p):
        if p < LOG_SPACE_ORDER:
            signed = float(np.mean(resid ** int(p)))
        else:
            log_m, sign = _log_abs_signed_power_mean(resid, int(p))
            signed = float(sign * np.exp(log_m))
    return MomentEstimate(mean, absolute, signed)


@dataclass(frozen=True)
class MomentProfile:
    """Per-component moments of one order ``p`` (possibly infinite).

    ``log_absolute`` / ``log_abs_signed`` carry the same information as
    ``absolute`` / ``signed`` but survive orders where the plain value does not.
    """

    p: float
    means: np.ndarray
    absolute: Optional[np.ndarray] = None
    signed: Optional[np.ndarray] = None
    log_absolute: Optional[np.ndarray] = None
    log_abs_signed: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "means", np.atleast_1d(np.asarray(self.means, dtype=float)))
        if self.absolute is not None and self.log_absolute is None:
            with np.errstate(divide="ignore"):
                object.__setattr__(self, "log_absolute", np.log(np.asarray(self.absolute, dtype=float)))
        if self.signed is not None and self.log_abs_signed is None:
            with np.errstate(divide="ignore"):
                object.__setattr__(self, "log_abs_signed", np.log(np.abs(np.asarray(self.signed, dtype=float))))

    @property
    def k(self) -> int:
        return len(self.means)

    @classmethod
    def from_gaussian(cls, means, sigma, p: float) -> "MomentProfile":
        """Moments of independent Gaussians with the given volatilities."""
        sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
        if math.isinf(p):
            return cls(p, means)
        log_abs = np.array([gaussian_log_abs_moment(s, p) for s in sigma])
        absolute = np.exp(log_abs) if p < LOG_SPACE_ORDER else None
        signed, log_signed = None, None
        if is_even_order(p):
            signed, log_signed = absolute, log_abs
        elif is_integer_order(p):
            signed, log_signed = np.zeros_like(sigma), np.full_like(sigma, -np.inf)
        return cls(p, means, absolute, signed, log_abs, log_signed)

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else [float(v) for v in a]

        return {
            "p": "inf" if math.isinf(self.p) else float(self.p),
            "means": arr(self.means),
            "absolute": arr(self.absolute),
            "signed": arr(self.signed),
            "log_absolute": arr(self.log_absolute),
        }


def moment_profile(components, p: float) -> MomentProfile:
    """Estimate a :class:`MomentProfile` from a (T, K) matrix of series."""
    x = np.asarray(components, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise InsufficientDataError("need at least two observations to estimate moments")
    means, resid = _center(x)
    if math.isinf(p):
        return MomentProfile(p, means)
    p = _check_order(p)
    log_abs = _log_abs_power_mean(resid, p)
    if p < LOG_SPACE_ORDER:
        absolute = np.mean(np.abs(resid) ** p, axis=0)
    else:
        with np.errstate(over="ignore"):
            absolute = np.exp(log_abs)
    signed, log_signed = None, None
    if is_even_order(p):
        signed, log_signed = absolute, log_abs
    elif is_integer_order(p):
        log_signed, sign = _log_abs_signed_power_mean(resid, int(p))
        if p < LOG_SPACE_ORDER:
            signed = np.mean(resid ** int(p), axis=0)
        else:
            with np.errstate(over="ignore"):
                signed = sign * np.exp(log_signed)
    return MomentProfile(p, means, absolute, signed, log_abs, log_signed)


def kurtosis(series) -> tuple[float, float]:
    """Raw kurtosis ``M_4 / M_2**2`` and excess kurtosis (raw minus 3)."""
    resid = _center(np.asarray(series, dtype=float).ravel())[1]
    m2 = np.mean(resid**2)
    if m2 == 0:
        return math.nan, math.nan
    raw = float(np.mean(resid**4) / m2**2)
    return raw, raw - 3.0


def _log_gaussian_unit_moment(p: float) -> float:
    return -0.5 * math.log(math.pi) + 0.5 * p * math.log(2.0) + float(gammaln(0.5 * (p + 1.0)))


def _check_sigma(sigma: float) -> float:
    sigma = float(sigma)
    if not sigma > 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    return sigma


def gaussian_log_abs_moment(sigma: float, p: float) -> float:
    """Natural log of :func:`gaussian_abs_moment`; finite for any order."""
    sigma = _check_sigma(sigma)
    p = _check_order(p)
    return _log_gaussian_unit_moment(p) + p * math.log(sigma)


def gaussian_abs_moment(sigma: float, p: float) -> float:
    """E|X - mu|**p for X ~ N(mu, sigma**2).

    Equals ``2**(p/2) * Gamma((p+1)/2) / sqrt(pi) * sigma**p``. The Gamma
    function goes through its logarithm so large orders do not overflow
    before the final power; past float range the result is ``inf``.
    """
    sigma = _check_sigma(sigma)
    p = _check_order(p)
    with np.errstate(over="ignore"):
        return float(np.exp(_log_gaussian_unit_moment(p)) * np.float64(sigma) ** p)


def gaussian_log_abs_moment_stirling(sigma: float, p: float) -> float:
    """Natural log of :func:`gaussian_abs_moment_stirling`."""
    sigma = _check_sigma(sigma)
    p = float(p)
    if not p >= 2:
        raise ValidationError(f"Stirling approximation is offered for p >= 2, got {p}")
    z = 0.5 * (p + 1.0)
    log_gamma = 0.5 * math.log(2.0 * math.pi / z) + z * (math.log(z) - 1.0)
    return -0.5 * math.log(math.pi) + 0.5 * p * math.log(2.0) + log_gamma + p * math.log(sigma)


def gaussian_abs_moment_stirling(sigma: float, p: float) -> float:
    """Gaussian absolute moment with Gamma replaced by Stirling's formula.

    ``Gamma(z) ~ sqrt(2 pi / z) (z / e)**z`` at ``z = (p + 1) / 2``. The
    relative error is about ``-1 / (6 (p + 1))``: roughly 5% at p=2, 1.5% at
    p=10 and 0.16% at p=100.
    """
    with np.errstate(over="ignore"):
        return float(np.exp(gaussian_log_abs_moment_stirling(sigma, p)))
