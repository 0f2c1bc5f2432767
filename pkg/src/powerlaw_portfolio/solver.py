"""Exact maximization of the penalized portfolio objective.

The objective over nonnegative component weights ``w`` is::

    f(w) = sum_i w_i (mu_i - r_i) - lam * E|sum_i w_i c_i|**p      (absolute form)
    f(w) = sum_i w_i (mu_i - r_i) - lam * |E (sum_i w_i c_i)**p|    (signed form)

with ``c`` the centered component series and expectations taken over the
sample. Two independent routes are provided: cyclic coordinate ascent on
the polynomial first-order conditions (even integer ``p`` only), and
multi-start projected gradient ascent with Newton steps (any ``p >= 2``).

The default ``lam = 1/p`` makes the single-component optimum coincide with
the leading-order power-law weight.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import comb

from .errors import (
    ConvergenceError,
    DegeneratePenaltyError,
    NumericalError,
    UnsupportedFormError,
    ValidationError,
)
from .moments import is_even_order, moment_profile
from .powerlaw import PenaltySpec, leading_order_weights

FOC_MODES = ("empirical", "independent", "diagonal")


@dataclass(frozen=True)
class ObjectiveSpec:
    component_series: np.ndarray  # (T, K)
    means: np.ndarray  # (K,)
    rates: np.ndarray  # (K,)
    penalty: PenaltySpec

    def __post_init__(self):
        x = np.asarray(self.component_series, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        k = x.shape[1]
        means = np.atleast_1d(np.asarray(self.means, dtype=float))
        rates = np.broadcast_to(np.asarray(self.rates, dtype=float), (k,)).copy()
        if means.shape != (k,):
            raise ValidationError(f"{means.shape[0]} means for {k} component series")
        if x.shape[0] < 2:
            raise ValidationError("need at least two observations")
        if self.penalty.is_infinite:
            raise ValidationError("the exact objective needs a finite penalty order")
        object.__setattr__(self, "component_series", x)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "_centered", x - x.mean(axis=0))

    @classmethod
    def from_series(cls, series, penalty: PenaltySpec, rates=0.0, means=None) -> "ObjectiveSpec":
        x = np.asarray(series, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        return cls(x, x.mean(axis=0) if means is None else means, rates, penalty)

    @classmethod
    def from_decomposition(cls, dec, rates, penalty: PenaltySpec) -> "ObjectiveSpec":
        """Objective over the oriented components of an ICA decomposition."""
        return cls(dec.oriented_components, dec.oriented_means, rates, penalty)

    @property
    def centered(self) -> np.ndarray:
        return self._centered

    @property
    def k(self) -> int:
        return self.component_series.shape[1]

    @property
    def p(self) -> float:
        return self.penalty.p

    @property
    def lam(self) -> float:
        return self.penalty.resolved_lambda

    @property
    def excess(self) -> np.ndarray:
        return self.means - self.rates

    @property
    def uses_signed_moment(self) -> bool:
        # for even p both forms coincide
        return self.penalty.form == "signed" and not is_even_order(self.p)


def _check_w(spec: ObjectiveSpec, w) -> np.ndarray:
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if w.shape != (spec.k,):
        raise ValidationError(f"weight vector has shape {w.shape}, expected ({spec.k},)")
    return w


def _penalty(spec: ObjectiveSpec, w: np.ndarray, order: int = 0):
    """Penalty moment B(w) and, for ``order`` >= 1/2, its gradient and Hessian.

    Powers are taken of ``y / max|y|`` and rescaled, so large orders only
    overflow when the result itself does.
    """
    c = spec.centered
    p = spec.p
    t = c.shape[0]
    y = c @ w
    s = np.float64(np.max(np.abs(y)))
    k = spec.k
    if s == 0.0:
        grad = np.zeros(k)
        hess = (2.0 * c.T @ c / t) if p == 2 else np.zeros((k, k))
        return 0.0, grad, hess
    u = y / s
    with np.errstate(over="ignore"):
        sp = s**p
        if spec.uses_signed_moment:
            n = int(p)
            su = float(np.mean(u**n))
            sgn = math.copysign(1.0, su) if su != 0 else 0.0
            value = abs(su) * sp
            if order == 0:
                return value, None, None
            grad = sgn * p * s ** (p - 1) * (c.T @ u ** (n - 1)) / t
            hess = None
            if order >= 2:
                hess = sgn * p * (p - 1) * s ** (p - 2) * (c.T @ (c * (u ** (n - 2))[:, None])) / t
            return value, grad, hess
        au = np.abs(u)
        value = float(np.mean(au**p)) * sp
        if order == 0:
            return value, None, None
        grad = p * s ** (p - 1) * (c.T @ (au ** (p - 1) * np.sign(u))) / t
        hess = None
        if order >= 2:
            hess = p * (p - 1) * s ** (p - 2) * (c.T @ (c * (au ** (p - 2))[:, None])) / t
        return value, grad, hess


def evaluate_objective(spec: ObjectiveSpec, w) -> float:
    """``w . (mu - r) - lam * penalty(w)``; exactly 0 at ``w = 0``."""
    w = _check_w(spec, w)
    b, _, _ = _penalty(spec, w)
    return float(w @ spec.excess - spec.lam * b)


def objective_gradient(spec: ObjectiveSpec, w) -> np.ndarray:
    w = _check_w(spec, w)
    _, g, _ = _penalty(spec, w, order=1)
    return spec.excess - spec.lam * g


def objective_hessian(spec: ObjectiveSpec, w) -> np.ndarray:
    w = _check_w(spec, w)
    _, _, h = _penalty(spec, w, order=2)
    return -spec.lam * h


def gradient_check(spec: ObjectiveSpec, w, step: float = 1e-6) -> float:
    """Relative error between the analytic gradient and central differences."""
    w = _check_w(spec, w)
    g = objective_gradient(spec, w)
    fd = np.empty_like(g)
    for i in range(spec.k):
        e = np.zeros_like(w)
        e[i] = step
        fd[i] = (evaluate_objective(spec, w + e) - evaluate_objective(spec, w - e)) / (2 * step)
    denom = max(np.linalg.norm(g), np.linalg.norm(fd), 1e-300)
    return float(np.linalg.norm(g - fd) / denom)


def power_law_ratio(spec: ObjectiveSpec, w) -> float:
    """Scale-free ratio ``w.(mu - r) / penalty(w) ** (1/p)``.

    Maximizing the objective over the nonnegative orthant maximizes this
    ratio over nonnegative directions.
    """
    w = _check_w(spec, w)
    c = spec.centered
    y = c @ w
    s = float(np.max(np.abs(y)))
    num = float(w @ spec.excess)
    if s == 0.0:
        return math.copysign(math.inf, num) if num else math.nan
    u = y / s
    m = abs(float(np.mean(u ** int(spec.p)))) if spec.uses_signed_moment else float(np.mean(np.abs(u) ** spec.p))
    return num / (s * m ** (1.0 / spec.p))


# -- first-order-condition polynomials (even p) ---------------------------------------


@dataclass(frozen=True)
class FOCPolynomial:
    """``P_i`` in the first-order condition ``(mu_i - r_i) - offset - P_i(w_i) = 0``.

    ``coefficients`` are in ascending powers of ``w_i`` with a zero constant
    term. Any constant produced by sample cross moments, ``lam p E[c_i z**(p-1)]``,
    is kept in ``offset``; it vanishes for exactly independent components.
    """

    index: int
    coefficients: np.ndarray
    offset: float = 0.0
    lam: float = 1.0

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def leading_coefficient(self) -> float:
        return float(self.coefficients[-1])

    @property
    def monotone(self) -> bool:
        """All coefficients nonnegative, so ``P_i`` increases on ``[0, inf)``."""
        return bool(np.all(self.coefficients >= 0))

    def __call__(self, w):
        return np.polynomial.polynomial.polyval(w, self.coefficients)

    def derivative(self, w):
        return np.polynomial.polynomial.polyval(w, np.polynomial.polynomial.polyder(self.coefficients))

    def sign_changes(self, excess: float) -> int:
        """Descartes count for ``(excess - offset) - P_i(w)``: an upper bound on positive roots."""
        coefs = np.concatenate([[excess - self.offset], -self.coefficients[1:]])
        signs = np.sign(coefs[coefs != 0])
        return int(np.sum(signs[1:] != signs[:-1]))


def _require_even(spec: ObjectiveSpec) -> int:
    if not is_even_order(spec.p):
        raise UnsupportedFormError(
            f"polynomial first-order conditions need an even integer p, got {spec.p}; "
            "use maximize_objective instead"
        )
    return int(spec.p)


def _marginal_moments(c: np.ndarray, order: int) -> np.ndarray:
    """Central moments m_0..m_order per column, with m_1 set to 0 exactly."""
    m = np.empty((order + 1, c.shape[1]))
    m[0] = 1.0
    power = np.ones_like(c)
    for r in range(1, order + 1):
        power = power * c
        m[r] = power.mean(axis=0)
    if order >= 1:
        m[1] = 0.0
    return m


def _foc_polynomial(spec, w, i, mode, marginals=None) -> FOCPolynomial:
    p = int(spec.p)
    lam = spec.lam
    c = spec.centered
    deg = p - 1
    binom = comb(deg, np.arange(deg + 1), exact=False)
    if mode == "empirical":
        ci = c[:, i]
        z = c @ w - w[i] * ci
        # joint[m] = E[c_i**(m+1) z**(deg-m)]
        zpow = np.ones((deg + 1, c.shape[0]))
        for q in range(1, deg + 1):
            zpow[q] = zpow[q - 1] * z
        joint = np.empty(deg + 1)
        cpow = ci.copy()
        for m in range(deg + 1):
            joint[m] = np.mean(cpow * zpow[deg - m])
            cpow = cpow * ci
    else:
        mi = marginals[:, i]
        if mode == "diagonal":
            ez = np.zeros(deg + 1)
            ez[0] = 1.0
        else:
            # raw moments of z = sum_{j != i} w_j c_j under exact independence
            ez = np.zeros(deg + 1)
            ez[0] = 1.0
            for j in range(spec.k):
                if j == i:
                    continue
                a = w[j] ** np.arange(deg + 1) * marginals[: deg + 1, j]
                new = np.zeros(deg + 1)
                for q in range(deg + 1):
                    r = np.arange(q + 1)
                    new[q] = np.sum(comb(q, r, exact=False) * a[r] * ez[q - r])
                ez = new
        joint = np.array([mi[m + 1] * ez[deg - m] for m in range(deg + 1)])
    coefs = lam * p * binom * joint
    offset = float(coefs[0])
    coefs = coefs.copy()
    coefs[0] = 0.0
    return FOCPolynomial(i, coefs, offset, lam)


def build_foc_polynomials(spec: ObjectiveSpec, w, mode: str = "empirical") -> list[FOCPolynomial]:
    """First-order-condition polynomials for every component at weights ``w``.

    ``mode`` chooses how cross moments of the components enter:

    * ``empirical``: joint sample moments, i.e. the exact FOC of the sample objective;
    * ``independent``: products of marginal moments (exact independence, ``m_1 = 0``);
    * ``diagonal``: all cross terms dropped, giving the separable single-component FOC.
    """
    _require_even(spec)
    if mode not in FOC_MODES:
        raise ValidationError(f"unknown FOC mode {mode!r}; choose from {FOC_MODES}")
    w = _check_w(spec, w)
    marginals = None if mode == "empirical" else _marginal_moments(spec.centered, int(spec.p))
    return [_foc_polynomial(spec, w, i, mode, marginals) for i in range(spec.k)]


def _rtsafe(g, dg, lo, hi, rtol=1e-15, max_iter=400):
    """Root of decreasing-through-zero ``g`` on ``[lo, hi]`` with ``g(lo) > 0 > g(hi)``.

    Newton steps when they stay in the bracket, bisection otherwise.
    """
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        gx = g(x)
        if gx == 0:
            return x
        if gx > 0:
            lo = x
        else:
            hi = x
        d = dg(x)
        x_new = x - gx / d if d != 0 else math.nan
        if not (lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= rtol * abs(x_new) or hi - lo <= rtol * hi:
            return x_new
        x = x_new
    return x


def largest_positive_root(poly: FOCPolynomial, excess: float, tol: float = 1e-12) -> float:
    """Largest real root of ``(excess - offset) - P(w)``, or 0 on the boundary.

    Returns 0 when the effective excess is not positive (the maximum sits at
    ``w = 0``) and ``math.inf`` when the leading coefficient vanishes, i.e.
    the weight can grow without any penalty.
    """
    e = float(excess) - poly.offset
    if not e > 0:
        return 0.0
    lead = poly.leading_coefficient
    if not lead > 0:
        return math.inf
    deg = poly.degree

    def g(x):
        return e - float(poly(x))

    def dg(x):
        return -float(poly.derivative(x))

    hi = 2.0 * (e / lead) ** (1.0 / deg)
    for _ in range(2000):
        if g(hi) < 0:
            break
        hi *= 2.0
    else:
        raise NumericalError("could not bracket the first-order-condition root")
    lo = 0.0
    if poly.sign_changes(excess) > 1:
        # several positive roots are possible: start the bracket just below the largest
        full = np.concatenate([[e], -poly.coefficients[1:]])
        cand = np.roots(full[::-1])
        cand = np.sort(cand[(np.abs(cand.imag) <= 1e-9 * np.abs(cand)) & (cand.real > 0)].real)[::-1]
        for r in cand:
            a = r * (1.0 - 1e-6)
            if a < hi and g(a) > 0:
                lo = a
                break
    root = _rtsafe(g, dg, lo, hi, rtol=min(tol, 1e-12) * 1e-3)
    return float(root)


def _leading_order_start(spec: ObjectiveSpec) -> np.ndarray:
    """Leading-order weights for this objective, rescaled from lam = 1/p to ``spec.lam``."""
    prof = dataclasses.replace(moment_profile(spec.component_series, spec.p), means=spec.means)
    w = leading_order_weights(prof, spec.rates, PenaltySpec(spec.p, spec.lam, spec.penalty.form)).weights
    return w * (1.0 / (spec.p * spec.lam)) ** (1.0 / (spec.p - 1))


class CoordinatewiseResult(NamedTuple):
    w_hat: np.ndarray
    diagnostics: dict


def solve_coordinatewise(
    spec: ObjectiveSpec,
    tol: float = 1e-13,
    max_sweeps: int = 10_000,
    mode: str = "empirical",
    w0=None,
) -> CoordinatewiseResult:
    """Cyclic coordinate ascent on the FOC polynomials (even ``p``).

    Each step sets ``w_i`` to the largest root of its FOC with the other
    weights frozen. Sweeps stop when the largest change is below ``tol``
    relative to the largest weight. The diagnostics carry the Descartes
    sign-change counts and a monotone-FOC certificate (all coefficients of
    every ``P_i`` nonnegative), which guarantees the nonnegative maximum is unique.
    """
    _require_even(spec)
    if mode not in FOC_MODES:
        raise ValidationError(f"unknown FOC mode {mode!r}")
    excess = spec.excess
    if w0 is None:
        try:
            w = _leading_order_start(spec)
        except DegeneratePenaltyError:
            w = np.zeros(spec.k)
    else:
        w = np.maximum(_check_w(spec, w0), 0.0).copy()
    marginals = None if mode == "empirical" else _marginal_moments(spec.centered, int(spec.p))
    trace = []
    for sweep in range(1, max_sweeps + 1):
        change = 0.0
        for i in range(spec.k):
            poly = _foc_polynomial(spec, w, i, mode, marginals)
            root = largest_positive_root(poly, excess[i])
            if math.isinf(root):
                raise DegeneratePenaltyError(f"component {i} has zero penalty moment", [i])
            change = max(change, abs(root - w[i]))
            w[i] = root
        trace.append(change)
        if change <= tol * max(float(np.max(np.abs(w))), np.finfo(float).tiny):
            break
    else:
        raise ConvergenceError(f"coordinate ascent did not converge in {max_sweeps} sweeps", trace)
    polys = [_foc_polynomial(spec, w, i, mode, marginals) for i in range(spec.k)]
    diagnostics = {
        "method": "coordinatewise",
        "mode": mode,
        "lambda": spec.lam,
        "sweeps": sweep,
        "trace": trace,
        "descartes_sign_changes": [pl.sign_changes(excess[pl.index]) for pl in polys],
        "offsets": [pl.offset for pl in polys],
        "negative_coefficients": not all(pl.monotone for pl in polys),
        "monotone_foc_certificate": all(pl.monotone for pl in polys),
    }
    return CoordinatewiseResult(w, diagnostics)


# -- projected gradient ascent -----------------------------------------------------------


class MaximizeResult(NamedTuple):
    w_star: np.ndarray
    value: float
    diagnostics: dict


def _ray_rescale(spec, w):
    """Optimal positive multiple of ``w``; the penalty is homogeneous of degree p."""
    a = float(w @ spec.excess)
    b, _, _ = _penalty(spec, w)
    if not (a > 0 and b > 0 and math.isfinite(b)):
        return w
    return w * (a / (spec.lam * spec.p * b)) ** (1.0 / (spec.p - 1.0))


def _ascend(spec, w0, tol, max_iter, size):
    w = np.maximum(w0, 0.0)
    f = evaluate_objective(spec, w)
    if not math.isfinite(f):
        return w, f, 0, "diverged"
    scale = max(float(np.max(np.abs(spec.excess))), np.finfo(float).tiny)
    limit = 1e3 * max(float(np.max(w)), size)
    grad_step = 1.0
    for it in range(1, max_iter + 1):
        _, gb, hb = _penalty(spec, w, order=2)
        g = spec.excess - spec.lam * gb
        pg = np.where(w > 0, g, np.maximum(g, 0.0))
        if np.max(np.abs(pg)) <= 1e-14 * scale:
            return w, f, it, "converged"
        free = (w > 0) | (g > 0)
        d = np.zeros_like(w)
        newton = False
        h = -spec.lam * hb
        hf = h[np.ix_(free, free)]
        try:
            np.linalg.cholesky(-hf)
            d[free] = np.linalg.solve(-hf, g[free])
            newton = bool(g @ d > 0)
        except np.linalg.LinAlgError:
            pass
        t = 1.0
        if not newton:
            d = g
            t = grad_step
        accepted = False
        for _ in range(80):
            w_new = np.maximum(w + t * d, 0.0)
            f_new = evaluate_objective(spec, w_new)
            if math.isfinite(f_new) and f_new >= f + 1e-4 * float(g @ (w_new - w)):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            status = "converged" if np.max(np.abs(pg)) <= 1e-8 * scale else "stalled"
            return w, f, it, status
        if not newton:
            grad_step = 2.0 * t
        w_r = _ray_rescale(spec, w_new)
        f_r = evaluate_objective(spec, w_r)
        if math.isfinite(f_r) and f_r > f_new:
            w_new, f_new = w_r, f_r
        step = float(np.max(np.abs(w_new - w)))
        w, f = w_new, f_new
        if not np.all(np.isfinite(w)) or np.max(w) > limit:
            return w, f, it, "diverged"
        if newton and step <= tol * max(float(np.max(w)), np.finfo(float).tiny):
            return w, f, it, "converged"
    return w, f, max_iter, "max_iter"


def maximize_objective(
    spec: ObjectiveSpec,
    restarts: int = 16,
    seed: int = 0,
    tol: float = 1e-13,
    max_iter: int = 500,
    cluster_tol: float = 1e-6,
) -> MaximizeResult:
    """Multi-start projected gradient ascent on the nonnegative orthant.

    Steps are projected Newton steps on the free variables when the reduced
    Hessian is negative definite, otherwise projected gradient steps, each
    with an Armijo backtracking search and followed by an exact rescaling
    along the ray. Starts are the leading-order point plus ``restarts``
    seeded random nonnegative points. The best local maximum is returned;
    all distinct maxima (clustered at ``cluster_tol``) are in the diagnostics.
    """
    if not spec.p >= 2:
        raise ValidationError("penalty order must be >= 2")
    rng = np.random.default_rng(seed)
    starts = []
    try:
        lo = _leading_order_start(spec)
        if np.all(np.isfinite(lo)):
            starts.append(lo)
    except (DegeneratePenaltyError, ValidationError):
        pass
    typical = float(np.mean(starts[0][starts[0] > 0])) if starts and np.any(starts[0] > 0) else 1.0
    for _ in range(restarts):
        starts.append(typical * rng.exponential(size=spec.k))
    if not starts:
        starts.append(np.zeros(spec.k))

    grad_err = gradient_check(spec, np.maximum(starts[0], 1e-3 * typical))
    runs = []
    for w0 in starts:
        w, f, iters, status = _ascend(spec, np.asarray(w0, dtype=float), tol, max_iter, typical)
        runs.append({"w": w, "value": f, "iterations": iters, "status": status})
    good = [r for r in runs if r["status"] in ("converged", "stalled") and math.isfinite(r["value"])]
    if not good:
        raise NumericalError(
            "no start of the projected ascent reached a local maximum "
            f"(statuses: {sorted(set(r['status'] for r in runs))}); the objective may be unbounded"
        )
    good.sort(key=lambda r: (-r["value"], tuple(r["w"])))
    maxima = []
    for r in good:
        for m in maxima:
            if np.max(np.abs(m["w"] - r["w"])) <= cluster_tol * max(1.0, float(np.max(np.abs(m["w"])))):
                m["count"] += 1
                break
        else:
            maxima.append({"w": r["w"], "value": r["value"], "count": 1})
    best = good[0]
    diagnostics = {
        "method": "projected_ascent",
        "lambda": spec.lam,
        "starts": len(starts),
        "converged": sum(r["status"] == "converged" for r in runs),
        "diverged": sum(r["status"] == "diverged" for r in runs),
        "statuses": [r["status"] for r in runs],
        "iterations": [r["iterations"] for r in runs],
        "gradient_check_rel_error": grad_err,
        "local_maxima": [{"w": [float(v) for v in m["w"]], "value": m["value"], "count": m["count"]} for m in maxima],
    }
    return MaximizeResult(best["w"].copy(), float(best["value"]), diagnostics)


def exact_weights(spec: ObjectiveSpec, restarts: int = 16, seed: int = 0) -> np.ndarray:
    """Oracle weights rescaled to the ``lam = 1/p`` convention of the leading-order formula."""
    res = maximize_objective(spec, restarts=restarts, seed=seed)
    return res.w_star * (spec.p * spec.lam) ** (1.0 / (spec.p - 1))
