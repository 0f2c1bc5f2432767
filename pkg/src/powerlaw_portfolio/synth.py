"""Synthetic price panels from linearly mixed independent sources.

Every source family is drawn with zero mean and unit variance, then shifted
by a per-source drift, mixed by a random matrix and scaled to a daily
volatility. The ground truth (mixing matrix, drifts, families) is returned
alongside the prices so ICA recovery can be scored against it.
"""
from __future__ import annotations

import dataclasses
import datetime as dt
import math
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError
from .marketdata import PriceTable

FAMILIES = ("gaussian", "laplace", "uniform", "student_t", "bimodal")
# bimodal sources are an equal mixture of N(+-m, 1 - m**2)
BIMODAL_CENTER = 0.9


@dataclass(frozen=True)
class SourceSpec:
    family: str
    nu: Optional[float] = None  # Student-t degrees of freedom

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown source family {self.family!r}; choose from {FAMILIES}")
        if self.family == "student_t":
            if self.nu is None or not self.nu > 2:
                raise ValidationError("student_t needs degrees of freedom nu > 2 for a finite variance")
        elif self.nu is not None:
            raise ValidationError(f"family {self.family!r} takes no parameter")

    @property
    def label(self) -> str:
        return f"student_t:{self.nu:g}" if self.family == "student_t" else self.family

    def moment_warnings(self, orders: Sequence[float] = ()) -> list[str]:
        """Messages for requested moment orders this source does not have."""
        if self.family != "student_t":
            return []
        out = []
        if self.nu <= 4:
            out.append(f"{self.label}: fourth moment is infinite (nu <= 4); sample kurtosis will not settle")
        for p in orders:
            if math.isfinite(p) and p >= self.nu and not (p == 4 and self.nu <= 4):
                out.append(f"{self.label}: moment of order {p:g} is infinite (nu <= p)")
        return out

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.family == "gaussian":
            return rng.standard_normal(n)
        if self.family == "laplace":
            return rng.laplace(0.0, 1.0 / math.sqrt(2.0), n)
        if self.family == "uniform":
            return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), n)
        if self.family == "student_t":
            return rng.standard_t(self.nu, n) * math.sqrt((self.nu - 2.0) / self.nu)
        m = BIMODAL_CENTER
        side = np.where(rng.random(n) < 0.5, -m, m)
        return side + math.sqrt(1.0 - m * m) * rng.standard_normal(n)


_ENTRY = re.compile(r"^(?P<family>[a-z_]+)(?::(?P<nu>[0-9.eE+-]+))?(?:\*(?P<count>\d+))?$")


def parse_sources(text: str) -> list[SourceSpec]:
    """Parse ``"laplace,student_t:5,uniform*2"`` into source specs."""
    out = []
    for raw in str(text).split(","):
        entry = raw.strip().lower().replace("student-t", "student_t")
        if not entry:
            continue
        m = _ENTRY.match(entry)
        if not m:
            raise ValidationError(f"cannot parse source entry {raw.strip()!r}")
        nu = float(m["nu"]) if m["nu"] is not None else None
        count = int(m["count"]) if m["count"] else 1
        if count < 1:
            raise ValidationError(f"source count must be positive in {raw.strip()!r}")
        out.extend([SourceSpec(m["family"], nu)] * count)
    if not out:
        raise ValidationError("no sources given")
    return out


@dataclass(frozen=True)
class SynthConfig:
    sources: tuple
    n_periods: int = 2520
    n_assets: Optional[int] = None  # defaults to the number of sources
    vol: float = 0.01
    drift_scale: float = 0.05
    noise: float = 0.0
    seed: int = 0
    start: str = "2007-01-01"
    end: Optional[str] = None

    def __post_init__(self):
        srcs = tuple(parse_sources(self.sources) if isinstance(self.sources, str) else self.sources)
        object.__setattr__(self, "sources", srcs)
        if self.n_assets is None:
            object.__setattr__(self, "n_assets", len(srcs))
        if self.end is not None:
            start, end = _business_day(self.start), _business_day(self.end, roll="backward")
            if end <= start:
                raise ValidationError("synthetic end date must follow the start date")
            object.__setattr__(self, "n_periods", int(np.busday_count(start, end)))
        if self.n_periods < 1:
            raise ValidationError("need at least one synthetic return period")
        if self.n_assets < 1:
            raise ValidationError("need at least one synthetic asset")
        if not self.vol > 0:
            raise ValidationError("volatility must be positive")
        if self.noise < 0 or self.drift_scale < 0:
            raise ValidationError("noise and drift scale must be nonnegative")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["sources"] = [s.label for s in self.sources]
        return d


@dataclass
class SynthResult:
    table: PriceTable
    returns: np.ndarray  # (T, N)
    sources: np.ndarray  # (T, S), before drift
    mixing: np.ndarray  # (N, S)
    drift: np.ndarray  # (S,)
    config: SynthConfig
    warnings: list = field(default_factory=list)

    def truth(self) -> dict:
        """Ground-truth sidecar document."""
        return {
            "config": self.config.to_dict(),
            "families": [s.label for s in self.config.sources],
            "mixing": [[float(v) for v in row] for row in self.mixing],
            "unmixing": [[float(v) for v in row] for row in np.linalg.pinv(self.mixing)],
            "drift": [float(v) for v in self.drift],
            "vol": self.config.vol,
            "noise": self.config.noise,
            "seed": self.config.seed,
            "symbols": list(self.table.symbols),
            "warnings": list(self.warnings),
        }


def _business_day(value, roll: str = "forward") -> np.datetime64:
    try:
        d = np.datetime64(dt.date.fromisoformat(str(value)), "D")
    except ValueError as exc:
        raise ValidationError(f"invalid date {value!r}") from exc
    return np.busday_offset(d, 0, roll=roll)


def generate(config: SynthConfig, warn_orders: Sequence[float] = ()) -> SynthResult:
    """Draw sources, mix them and compound to prices starting at 100.

    Per-period returns are ``vol * (A @ (s_t + drift)) + vol * noise * eps_t``
    with ``A`` standard normal of shape (N, S). With one asset and one source
    this is a single random walk.
    """
    rng = np.random.default_rng(config.seed)
    t, n, k = config.n_periods, config.n_assets, len(config.sources)
    mixing = rng.standard_normal((n, k))
    if n == 1 and k == 1:
        mixing = np.abs(mixing)
    drift = config.drift_scale * rng.standard_normal(k)
    sources = np.column_stack([s.sample(rng, t) for s in config.sources])
    returns = config.vol * ((sources + drift) @ mixing.T)
    if config.noise > 0:
        returns = returns + config.vol * config.noise * rng.standard_normal((t, n))
    if np.any(returns <= -1.0):
        raise ValidationError("a synthetic return reached -100%; lower --vol")
    prices = 100.0 * np.vstack([np.ones((1, n)), np.cumprod(1.0 + returns, axis=0)])
    start = _business_day(config.start)
    dates = np.busday_offset(start, np.arange(t + 1), roll="forward")
    width = len(str(n))
    symbols = tuple(f"S{i + 1:0{width}d}" for i in range(n))
    msgs = []
    for s in dict.fromkeys(config.sources):
        msgs.extend(s.moment_warnings(warn_orders))
    return SynthResult(PriceTable(dates, symbols, prices), returns, sources, mixing, drift, config, msgs)
