"""Harvested-energy model, policy description and the imperfection mapping."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .special_fn import LOG_FACT


class ConfigError(ValueError):
    """Invalid physical or structural configuration."""


class Policy(str, enum.Enum):
    BEST_EFFORT = "best_effort"
    ON_OFF = "on_off"

    @classmethod
    def parse(cls, value) -> "Policy":
        if isinstance(value, Policy):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"be": cls.BEST_EFFORT, "best_effort": cls.BEST_EFFORT,
                   "oo": cls.ON_OFF, "on_off": cls.ON_OFF}
        if key not in aliases:
            raise ConfigError(f"unknown policy {value!r}")
        return aliases[key]


@dataclass(frozen=True)
class GammaEHModel:
    """I.i.d. Gamma harvest per slot with integer shape ``m`` and mean ``mean_x``."""

    m: int
    mean_x: float

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ConfigError(f"shape m must be a positive integer, got {self.m}")
        if not (self.mean_x > 0 and math.isfinite(self.mean_x)):
            raise ConfigError(f"mean harvest must be positive, got {self.mean_x}")
        object.__setattr__(self, "m", int(self.m))

    @property
    def rate(self) -> float:
        return self.m / self.mean_x

    def scaled(self, beta: float) -> "GammaEHModel":
        """Model of beta * X, which is again Gamma with the same shape."""
        return GammaEHModel(self.m, beta * self.mean_x)


@dataclass(frozen=True)
class Imperfections:
    rho: float = 1.0
    beta: float = 1.0
    p_c: float = 0.0

    def __post_init__(self):
        if not self.rho >= 1.0:
            raise ConfigError(f"amplifier inefficiency rho must be >= 1, got {self.rho}")
        if not 0.0 < self.beta <= 1.0:
            raise ConfigError(f"storage efficiency beta must lie in (0, 1], got {self.beta}")
        if not self.p_c >= 0.0:
            raise ConfigError(f"circuit power must be >= 0, got {self.p_c}")


IDEAL = Imperfections()


@dataclass(frozen=True)
class PolicySpec:
    """Transmission policy with desired UL power ``M`` and capacity ``K`` (``inf`` allowed)."""

    kind: Policy
    M: float
    K: float = math.inf
    imperfections: Imperfections = field(default_factory=Imperfections)

    def __post_init__(self):
        object.__setattr__(self, "kind", Policy.parse(self.kind))
        if not (self.M > 0 and math.isfinite(self.M)):
            raise ConfigError(f"desired power M must be positive, got {self.M}")
        if not self.K > 0:
            raise ConfigError(f"capacity K must be positive, got {self.K}")
        m_eff = self.imperfections.p_c + self.imperfections.rho * self.M
        if math.isfinite(self.K) and self.K <= m_eff:
            raise ConfigError(
                f"capacity K={self.K} must exceed the energy per transmission {m_eff}")

    @property
    def finite(self) -> bool:
        return math.isfinite(self.K)

    @property
    def M_eff(self) -> float:
        return self.imperfections.p_c + self.imperfections.rho * self.M


@dataclass(frozen=True)
class EffectiveParams:
    M_eff: float
    mean_x_eff: float
    rate_eff: float
    delta_eff: float
    m: int
    K: float = math.inf
    l: int | None = None
    Delta: float | None = None

    def eh_eff(self) -> GammaEHModel:
        return GammaEHModel(self.m, self.mean_x_eff)


def split_capacity(K: float, M: float) -> tuple[int, float]:
    """K = l*M + Delta with integer l >= 0 and 0 <= Delta < M.

    Values within a few ulps of an exact multiple snap to Delta = 0 so that
    K = 4*M built in floating point still counts as four whole stripes.
    """
    ratio = K / M
    l = math.floor(ratio)
    if abs(ratio - round(ratio)) <= 1e-12 * max(1.0, ratio):
        l = int(round(ratio))
        return l, 0.0
    delta = K - l * M
    return int(l), max(delta, 0.0)


def effective_params(spec: PolicySpec, eh: GammaEHModel) -> EffectiveParams:
    imp = spec.imperfections
    m_eff = spec.M_eff
    mean_eff = imp.beta * eh.mean_x
    rate_eff = eh.rate / imp.beta
    delta = m_eff / mean_eff
    if not spec.finite:
        return EffectiveParams(m_eff, mean_eff, rate_eff, delta, eh.m)
    if spec.K <= m_eff:
        raise ConfigError(f"capacity K={spec.K} must exceed M_eff={m_eff}")
    l, d = split_capacity(spec.K, m_eff)
    return EffectiveParams(m_eff, mean_eff, rate_eff, delta, eh.m, spec.K, l, d)


def harvest_pdf(eh: GammaEHModel, x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("harvest_pdf is defined for x >= 0")
    lam, m = eh.rate, eh.m
    with np.errstate(divide="ignore"):
        logx = np.log(x)
    if m == 1:
        out = lam * np.exp(-lam * x)
    else:
        out = np.where(x > 0, np.exp(m * math.log(lam) + (m - 1) * logx - lam * x - LOG_FACT[m - 1]), 0.0)
    return out if out.shape else float(out)


def harvest_ccdf(eh: GammaEHModel, x):
    """P(X > x) from the finite integer-shape sum."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("harvest_ccdf is defined for x >= 0")
    y = eh.rate * x
    total = np.zeros_like(y)
    term = np.ones_like(y)
    for r in range(eh.m):
        if r:
            term = term * y / r
        total = total + term
    out = np.exp(-y) * total
    return out if out.shape else float(out)


def harvest_cdf(eh: GammaEHModel, x):
    return 1.0 - harvest_ccdf(eh, x)


def make_rng(seed: int | None) -> np.random.Generator:
    """PCG64 generator; ``seed`` is recorded by callers in every output."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def spawn_rngs(seed: int, count: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def sample_harvest(eh: GammaEHModel, rng: np.random.Generator, size=None):
    """Gamma(m, rate) draws built as sums of m unit exponentials scaled by 1/rate."""
    shape = () if size is None else (size if isinstance(size, tuple) else (size,))
    e = rng.standard_exponential(shape + (eh.m,))
    out = e.sum(axis=-1) / eh.rate
    return float(out) if size is None else out
