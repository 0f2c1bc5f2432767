"""Whitening and symmetric FastICA for return matrices.

Component series are kept in their raw orientation (third moment >= 0);
``signs`` records the long/short orientation chosen later by
:func:`resolve_signs`. Variances use the population convention, matching
the moment estimators.
"""
from __future__ import annotations

import dataclasses
import functools
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import integrate

from .errors import ConvergenceError, RankDeficiencyError, ValidationError
from .marketdata import ReturnMatrix

NONLINEARITIES = ("logcosh", "cube")
RANK_TOL = 1e-10


def _as_array(returns) -> np.ndarray:
    x = returns.returns if isinstance(returns, ReturnMatrix) else returns
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return x


class Whitening(NamedTuple):
    whitened: np.ndarray  # (T, K)
    whitening: np.ndarray  # (K, N)
    dewhitening: np.ndarray  # (N, K)
    mean: np.ndarray  # (N,)


def whiten(returns, k: int) -> Whitening:
    """PCA-whiten the centered returns onto their top ``k`` principal directions."""
    x = _as_array(returns)
    t, n = x.shape
    if not 1 <= k <= n:
        raise ValidationError(f"component count k={k} must lie in [1, {n}]")
    if k > t - 1:
        raise ValidationError(f"component count k={k} exceeds T-1={t - 1}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / t
    evals, evecs = np.linalg.eigh(cov)
    evals, evecs = evals[::-1], evecs[:, ::-1]
    top = max(evals[0], 0.0)
    rank = int(np.sum(evals > RANK_TOL * top)) if top > 0 else 0
    if rank < k:
        raise RankDeficiencyError(f"return covariance has rank {rank} < k={k}; choose k <= {rank}")
    evals, evecs = evals[:k], evecs[:, :k]
    # fix eigenvector signs so the output is reproducible across LAPACK builds
    flip = np.sign(evecs[np.argmax(np.abs(evecs), axis=0), np.arange(k)])
    evecs = evecs * flip
    root = np.sqrt(evals)
    whitening = evecs.T / root[:, None]
    dewhitening = evecs * root[None, :]
    return Whitening(xc @ whitening.T, whitening, dewhitening, mean)


def _sym_decorrelate(w: np.ndarray) -> np.ndarray:
    s, u = np.linalg.eigh(w @ w.T)
    return (u / np.sqrt(np.maximum(s, np.finfo(float).tiny))) @ u.T @ w


@functools.lru_cache(maxsize=None)
def _gaussian_logcosh_mean() -> float:
    f = lambda y: math.log(math.cosh(y)) * math.exp(-0.5 * y * y) / math.sqrt(2 * math.pi)
    return 2.0 * integrate.quad(f, 0, 40, epsabs=1e-13, epsrel=1e-13)[0]


def _logcosh(y):
    return np.logaddexp(y, -y) - math.log(2.0)


def nongaussianity(components, nonlinearity: str = "logcosh") -> np.ndarray:
    """Per-column contrast score; zero for a Gaussian, larger is less Gaussian.

    ``logcosh`` uses the negentropy approximation
    ``(E G(y) - E G(nu))**2``; ``cube`` uses squared excess kurtosis.
    Columns are assumed standardized.
    """
    y = _as_array(components)
    if nonlinearity == "cube":
        return (np.mean(y**4, axis=0) - 3.0) ** 2
    return (np.mean(_logcosh(y), axis=0) - _gaussian_logcosh_mean()) ** 2


@dataclass(frozen=True)
class FundingSpec:
    """Per-period funding rates for holding a component long or short.

    Scalars broadcast across components; ``short_rate`` defaults to the long rate.
    """

    long_rate: object = 0.0
    short_rate: object = None

    def resolve(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        long = np.broadcast_to(np.asarray(self.long_rate, dtype=float), (k,)).copy()
        short = long.copy() if self.short_rate is None else np.broadcast_to(
            np.asarray(self.short_rate, dtype=float), (k,)
        ).copy()
        if not (np.isfinite(long).all() and np.isfinite(short).all()):
            raise ValidationError("funding rates must be finite")
        return long, short


@dataclass(frozen=True)
class ICDecomposition:
    unmixing: np.ndarray  # (K, N): asset returns -> raw component series
    mixing: np.ndarray  # (N, K): pseudo-inverse of unmixing
    components: np.ndarray  # (T, K), raw orientation, unit variance
    means: np.ndarray  # (K,), raw orientation
    signs: np.ndarray  # (K,) in {+1, -1}
    seed: int = 0
    nonlinearity: str = "logcosh"
    n_iter: int = 0
    scores: Optional[np.ndarray] = None
    viable: Optional[np.ndarray] = None
    symbols: tuple = ()

    @property
    def k(self) -> int:
        return self.unmixing.shape[0]

    @property
    def oriented_components(self) -> np.ndarray:
        return self.components * self.signs

    @property
    def oriented_means(self) -> np.ndarray:
        return self.means * self.signs

    def to_dict(self) -> dict:
        def mat(a):
            return [[float(v) for v in row] for row in np.atleast_2d(a)]

        return {
            "k": self.k,
            "seed": int(self.seed),
            "nonlinearity": self.nonlinearity,
            "iterations": int(self.n_iter),
            "symbols": list(self.symbols),
            "means": [float(v) for v in self.means],
            "signs": [int(s) for s in self.signs],
            "viable": None if self.viable is None else [bool(v) for v in self.viable],
            "nongaussianity": None if self.scores is None else [float(v) for v in self.scores],
            "unmixing": mat(self.unmixing),
            "mixing": mat(self.mixing),
        }


def fastica(
    returns,
    k: int = 10,
    nonlinearity: str = "logcosh",
    tol: float = 1e-6,
    max_iter: int = 500,
    seed: int = 0,
) -> ICDecomposition:
    """Symmetric fixed-point ICA of a return matrix.

    All ``k`` unmixing directions are updated together and re-orthogonalised
    after each sweep. Convergence means every direction moved by less than
    ``tol`` (``max |1 - |<w_new, w_old>|| < tol``).

    Components are sorted by decreasing non-Gaussianity, then decreasing
    ``|mean|``, and oriented to have a nonnegative third moment.
    """
    if nonlinearity not in NONLINEARITIES:
        raise ValidationError(f"unknown nonlinearity {nonlinearity!r}; choose from {NONLINEARITIES}")
    x = _as_array(returns)
    wh = whiten(x, k)
    z = wh.whitened
    t = z.shape[0]
    rng = np.random.default_rng(seed)
    w = _sym_decorrelate(rng.standard_normal((k, k)))
    trace = []
    for it in range(1, max_iter + 1):
        y = z @ w.T
        if nonlinearity == "logcosh":
            g = np.tanh(y)
            gp = 1.0 - g * g
        else:
            g = y**3
            gp = 3.0 * y * y
        w_new = _sym_decorrelate(g.T @ z / t - gp.mean(axis=0)[:, None] * w)
        lim = float(np.max(np.abs(np.abs(np.einsum("ij,ij->i", w_new, w)) - 1.0)))
        trace.append(lim)
        w = w_new
        if lim < tol:
            break
    else:
        raise ConvergenceError(f"FastICA did not converge in {max_iter} iterations (last change {trace[-1]:.3g})", trace)

    unmixing = w @ wh.whitening
    comps = x @ unmixing.T
    sd = comps.std(axis=0)
    unmixing = unmixing / sd[:, None]
    comps = x @ unmixing.T
    centered = comps - comps.mean(axis=0)
    orient = np.where(np.mean(centered**3, axis=0) < 0, -1.0, 1.0)
    unmixing = unmixing * orient[:, None]
    comps = comps * orient
    means = comps.mean(axis=0)
    scores = nongaussianity(comps - means, nonlinearity)
    order = np.lexsort((-np.abs(means), -scores))
    unmixing, comps, means, scores = unmixing[order], comps[:, order], means[order], scores[order]
    symbols = returns.symbols if isinstance(returns, ReturnMatrix) else ()
    return ICDecomposition(
        unmixing=unmixing,
        mixing=np.linalg.pinv(unmixing),
        components=comps,
        means=means,
        signs=np.ones(k),
        seed=int(seed),
        nonlinearity=nonlinearity,
        n_iter=it,
        scores=scores,
        symbols=tuple(symbols),
    )


def resolve_signs(dec: ICDecomposition, funding: FundingSpec | None = None):
    """Pick, per component, the long or short orientation with the larger excess.

    Holding ``+IC`` earns ``mu - long_rate``; holding ``-IC`` earns
    ``-mu - short_rate``. A component that cannot beat its funding cost on
    either side is marked non-viable. Returns the updated decomposition and
    the funding rate of the chosen side for each component.
    """
    funding = funding or FundingSpec()
    long, short = funding.resolve(dec.k)
    up = dec.means - long
    down = -dec.means - short
    flip = down > up
    signs = np.where(flip, -1.0, 1.0)
    rates = np.where(flip, short, long)
    viable = np.maximum(up, down) > 0
    return dataclasses.replace(dec, signs=signs, viable=viable), rates


def amari_distance(unmixing, mixing) -> float:
    """Normalised Amari distance between an estimated unmixing and a true mixing.

    Zero exactly when ``unmixing @ mixing`` is a scaled permutation; at most 1.
    """
    p = np.abs(np.asarray(unmixing) @ np.asarray(mixing))
    k = p.shape[0]
    if p.shape != (k, k) or k < 2:
        raise ValidationError("Amari distance needs a square product of size >= 2")
    rows = (p.sum(axis=1) / p.max(axis=1) - 1.0).sum()
    cols = (p.sum(axis=0) / p.max(axis=0) - 1.0).sum()
    return float((rows + cols) / (2.0 * k * (k - 1)))
