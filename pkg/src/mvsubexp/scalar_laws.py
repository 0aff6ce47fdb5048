"""Univariate laws on the half line.

Every law exposes its tail, log-tail, inverse survival function, mean, the
truncated tail integral ``min(1, int_x^{x+u} tail)`` and an inverse-transform
sampler.  Samplers driven by standard normals (``from_normal``) are what the
rare-event engine uses: ``isf(Phi(-z))`` keeps full precision far in the tail.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass
from typing import Any, ClassVar

import numpy as np
from scipy import integrate, special

from .errors import NotLongTailed

__all__ = [
    "ScalarLaw",
    "Pareto",
    "Weibull",
    "Lognormal",
    "Exponential",
    "Geometric",
    "Degenerate",
    "InsensitivityFn",
    "law_from_config",
    "insensitivity",
    "h_inverse",
    "truncated_tail_integral",
]

QUAD_EPSABS = 1e-10
QUAD_LIMIT = 1000


def _as_float_or_array(x):
    if np.ndim(x) == 0:
        return float(x)
    return x


class ScalarLaw(ABC):
    """Base class; subclasses are frozen dataclasses."""

    family: ClassVar[str]
    discrete: ClassVar[bool] = False

    @property
    def long_tailed(self) -> bool:
        return False

    @abstractmethod
    def tail(self, x):
        """P[Z > x], vectorized."""

    def log_tail(self, x):
        with np.errstate(divide="ignore"):
            return np.log(self.tail(x))

    @abstractmethod
    def isf(self, v):
        """Inverse survival function: the draw for tail probability ``v``."""

    def quantile(self, u):
        return self.isf(1.0 - np.asarray(u, dtype=float))

    def pdf(self, x):
        raise NotImplementedError(f"{self.family} has no density")

    def log_pdf(self, x):
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(x))

    @abstractmethod
    def mean(self) -> float:
        ...

    @property
    def support_start(self) -> float:
        return 0.0

    def tail_integral(self, a: float, b: float) -> float:
        """int_a^b tail(y) dy; adaptive quadrature unless overridden."""
        if b <= a:
            return 0.0
        pts = [p for p in self._kinks() if a < p < b]
        val, _ = integrate.quad(self.tail, a, b, points=pts or None,
                                epsabs=QUAD_EPSABS, epsrel=1e-12, limit=QUAD_LIMIT)
        return val

    def _kinks(self) -> list[float]:
        return [self.support_start] if self.support_start > 0 else []

    def sample(self, rng: np.random.Generator, size=None):
        # 1 - U lies in (0, 1], so isf never sees zero
        v = 1.0 - rng.random(size)
        return _as_float_or_array(self.isf(v))

    def from_normal(self, z):
        return self.isf(special.ndtr(-np.asarray(z, dtype=float)))

    def default_gamma(self) -> float:
        raise NotLongTailed(f"{self.family} is not tagged long-tailed")

    def params(self) -> dict[str, Any]:
        return asdict(self)

    def to_config(self) -> dict[str, Any]:
        return {"family": self.family, "params": self.params()}


@dataclass(frozen=True)
class Pareto(ScalarLaw):
    """Pareto type I: tail (x / scale)^(-alpha) above ``scale``."""

    alpha: float
    scale: float = 1.0
    family: ClassVar[str] = "pareto"

    def __post_init__(self):
        if not (self.alpha > 0 and self.scale > 0):
            raise ValueError("Pareto needs alpha > 0 and scale > 0")

    @property
    def long_tailed(self) -> bool:
        return True

    @property
    def support_start(self) -> float:
        return self.scale

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            out = np.where(x < self.scale, 1.0, (np.maximum(x, self.scale) / self.scale) ** -self.alpha)
        return _as_float_or_array(out)

    def log_tail(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x < self.scale, 0.0, -self.alpha * np.log(np.maximum(x, self.scale) / self.scale))
        return _as_float_or_array(out)

    def isf(self, v):
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore"):
            return _as_float_or_array(self.scale * v ** (-1.0 / self.alpha))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        safe = np.maximum(x, self.scale)
        out = np.where(x < self.scale, 0.0, self.alpha / self.scale * (safe / self.scale) ** (-self.alpha - 1))
        return _as_float_or_array(out)

    def log_pdf(self, x):
        x = np.asarray(x, dtype=float)
        safe = np.maximum(x, self.scale)
        lp = math.log(self.alpha / self.scale) - (self.alpha + 1) * np.log(safe / self.scale)
        return _as_float_or_array(np.where(x < self.scale, -np.inf, lp))

    def mean(self) -> float:
        if self.alpha <= 1:
            return math.inf
        return self.alpha * self.scale / (self.alpha - 1)

    def _power_integral(self, a: float, b: float) -> float:
        # int_a^b (y/s)^(-alpha) dy for s <= a < b, written to avoid cancellation
        s, al = self.scale, self.alpha
        if al == 1.0:
            return s * math.log1p((b - a) / a)
        lead = s ** al * a ** (1.0 - al) / (al - 1.0)
        return -lead * math.expm1((1.0 - al) * math.log1p((b - a) / a))

    def tail_integral(self, a: float, b: float) -> float:
        if b <= a:
            return 0.0
        if math.isinf(b):
            if self.alpha <= 1:
                return math.inf
            lo = max(a, self.scale)
            flat = max(0.0, self.scale - a)
            return flat + self.scale ** self.alpha * lo ** (1.0 - self.alpha) / (self.alpha - 1.0)
        flat = max(0.0, min(b, self.scale) - a)
        lo = max(a, self.scale)
        return flat + (self._power_integral(lo, b) if b > lo else 0.0)

    def default_gamma(self) -> float:
        return 0.9


@dataclass(frozen=True)
class Weibull(ScalarLaw):
    """Tail exp(-(x/scale)^shape); long-tailed for shape < 1."""

    shape: float
    scale: float = 1.0
    family: ClassVar[str] = "weibull"

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError("Weibull needs shape > 0 and scale > 0")

    @property
    def long_tailed(self) -> bool:
        return self.shape < 1

    def tail(self, x):
        return _as_float_or_array(np.exp(self.log_tail(x)))

    def log_tail(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return _as_float_or_array(-((x / self.scale) ** self.shape))

    def isf(self, v):
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore"):
            return _as_float_or_array(self.scale * (-np.log(v)) ** (1.0 / self.shape))

    def pdf(self, x):
        return _as_float_or_array(np.exp(self.log_pdf(x)))

    def log_pdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = x / self.scale
            lp = math.log(self.shape / self.scale) + (self.shape - 1) * np.log(r) - r ** self.shape
        return _as_float_or_array(np.where(x <= 0, -np.inf if self.shape >= 1 else np.inf, lp))

    def mean(self) -> float:
        return self.scale * math.gamma(1.0 + 1.0 / self.shape)

    def tail_integral(self, a: float, b: float) -> float:
        if b <= a:
            return 0.0
        a = max(a, 0.0)
        k = 1.0 / self.shape
        c = self.scale * k * math.gamma(k)
        qa = special.gammaincc(k, (a / self.scale) ** self.shape)
        qb = 0.0 if math.isinf(b) else special.gammaincc(k, (b / self.scale) ** self.shape)
        return float(c * (qa - qb))

    def default_gamma(self) -> float:
        if not self.long_tailed:
            raise NotLongTailed("Weibull with shape >= 1 is not long-tailed")
        # an insensitivity function must be o(x^(1 - shape))
        return min(0.9, (1.0 - self.shape) / 2.0)


@dataclass(frozen=True)
class Lognormal(ScalarLaw):
    mu: float = 0.0
    sigma: float = 1.0
    family: ClassVar[str] = "lognormal"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("Lognormal needs sigma > 0")

    @property
    def long_tailed(self) -> bool:
        return True

    def _std(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return (np.log(np.maximum(x, 0.0)) - self.mu) / self.sigma

    def tail(self, x):
        return _as_float_or_array(special.ndtr(-self._std(x)))

    def log_tail(self, x):
        return _as_float_or_array(special.log_ndtr(-self._std(x)))

    def isf(self, v):
        v = np.asarray(v, dtype=float)
        return _as_float_or_array(np.exp(self.mu - self.sigma * special.ndtri(v)))

    def pdf(self, x):
        return _as_float_or_array(np.exp(self.log_pdf(x)))

    def log_pdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            zz = self._std(x)
            lp = -0.5 * zz * zz - np.log(np.maximum(x, 1e-300) * self.sigma * math.sqrt(2 * math.pi))
        return _as_float_or_array(np.where(x <= 0, -np.inf, lp))

    def mean(self) -> float:
        return math.exp(self.mu + 0.5 * self.sigma ** 2)

    def _upper_integral(self, a: float) -> float:
        # E[(Z - a)^+]
        if a <= 0:
            return self.mean() - a
        la = math.log(a)
        s = self.sigma
        return float(self.mean() * special.ndtr((self.mu + s * s - la) / s)
                     - a * special.ndtr((self.mu - la) / s))

    def tail_integral(self, a: float, b: float) -> float:
        if b <= a:
            return 0.0
        if math.isinf(b):
            return self._upper_integral(a)
        val = self._upper_integral(a) - self._upper_integral(b)
        if val < 1e-8 * self._upper_integral(a):
            # cancellation; fall back to quadrature
            return super().tail_integral(a, b)
        return val

    def default_gamma(self) -> float:
        # x^g is an insensitivity function for every g < 1, but the shift
        # ratio only approaches 1 monotonically from x = 100 on when
        # x^(g-1) log x is already decreasing there
        return 0.5


@dataclass(frozen=True)
class Exponential(ScalarLaw):
    rate: float = 1.0
    family: ClassVar[str] = "exponential"

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("Exponential needs rate > 0")

    def tail(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return _as_float_or_array(np.exp(-self.rate * x))

    def log_tail(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return _as_float_or_array(-self.rate * x)

    def isf(self, v):
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore"):
            return _as_float_or_array(-np.log(v) / self.rate)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return _as_float_or_array(np.where(x < 0, 0.0, self.rate * np.exp(-self.rate * np.maximum(x, 0.0))))

    def log_pdf(self, x):
        x = np.asarray(x, dtype=float)
        return _as_float_or_array(np.where(x < 0, -np.inf, math.log(self.rate) - self.rate * x))

    def mean(self) -> float:
        return 1.0 / self.rate

    def tail_integral(self, a: float, b: float) -> float:
        if b <= a:
            return 0.0
        a = max(a, 0.0)
        ea = math.exp(-self.rate * a)
        if math.isinf(b):
            return ea / self.rate
        return -ea * math.expm1(-self.rate * (b - a)) / self.rate


@dataclass(frozen=True)
class Geometric(ScalarLaw):
    """Number of trials to first success: P[tau = k] = (1-p)^(k-1) p, k >= 1."""

    p: float
    family: ClassVar[str] = "geometric"
    discrete: ClassVar[bool] = True

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise ValueError("Geometric needs 0 < p <= 1")

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        k = np.floor(np.maximum(x, 0.0))
        with np.errstate(divide="ignore"):
            out = np.where(x < 0, 1.0, (1.0 - self.p) ** k)
        return _as_float_or_array(out)

    def isf(self, v):
        v = np.asarray(v, dtype=float)
        if self.p == 1.0:
            return _as_float_or_array(np.ones_like(v))
        with np.errstate(divide="ignore"):
            k = np.ceil(np.log(v) / math.log1p(-self.p))
        return _as_float_or_array(np.maximum(k, 1.0))

    def pmf(self, k):
        k = np.asarray(k)
        return _as_float_or_array(np.where(k >= 1, (1 - self.p) ** (k - 1) * self.p, 0.0))

    def mean(self) -> float:
        return 1.0 / self.p

    def _kinks(self) -> list[float]:
        return []

    def tail_integral(self, a: float, b: float) -> float:
        if b <= a:
            return 0.0
        q = 1.0 - self.p
        a = max(a, 0.0)
        if math.isinf(b):
            # sum over unit cells of a step function
            ka = math.floor(a)
            return q ** ka * (ka + 1 - a) + (q ** (ka + 1) / self.p if q > 0 else 0.0)
        total, y = 0.0, a
        while y < b:
            nxt = min(math.floor(y) + 1.0, b)
            total += q ** math.floor(y) * (nxt - y)
            y = nxt
        return total


@dataclass(frozen=True)
class Degenerate(ScalarLaw):
    value: float
    family: ClassVar[str] = "degenerate"
    discrete: ClassVar[bool] = True

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        return _as_float_or_array(np.where(x < self.value, 1.0, 0.0))

    def isf(self, v):
        v = np.asarray(v, dtype=float)
        return _as_float_or_array(np.full_like(v, self.value))

    def mean(self) -> float:
        return float(self.value)

    def tail_integral(self, a: float, b: float) -> float:
        lo, hi = max(a, 0.0), min(b, self.value)
        return max(0.0, hi - lo)


_FAMILIES: dict[str, type[ScalarLaw]] = {
    cls.family: cls for cls in (Pareto, Weibull, Lognormal, Exponential, Geometric, Degenerate)
}


def law_from_config(cfg: dict[str, Any]) -> ScalarLaw:
    """Build a law from ``{"family": ..., "params": {...}}``."""
    try:
        cls = _FAMILIES[cfg["family"]]
    except KeyError as exc:
        raise ValueError(f"unknown law family {cfg.get('family')!r}") from exc
    params = dict(cfg.get("params", {}))
    for key, val in params.items():
        if not (isinstance(val, (int, float)) and math.isfinite(val)):
            raise ValueError(f"parameter {key}={val!r} is not a finite number")
    return cls(**params)


def truncated_tail_integral(law: ScalarLaw, x: float, u: float) -> float:
    """min(1, int_x^{x+u} tail(y) dy)."""
    if u < 1:
        raise ValueError("u must be >= 1")
    if x < 0:
        raise ValueError("x must be >= 0")
    return min(1.0, law.tail_integral(x, x + u))


@dataclass(frozen=True)
class InsensitivityFn:
    """h(x) = x^exponent with 0 < exponent < 1."""

    exponent: float

    def __post_init__(self):
        if not 0 < self.exponent < 1:
            raise ValueError("insensitivity exponent must lie in (0, 1)")

    def __call__(self, x):
        return np.asarray(x, dtype=float) ** self.exponent if np.ndim(x) else float(x) ** self.exponent

    def inverse(self, y):
        return h_inverse(self, y)


def insensitivity(law: ScalarLaw, exponent: float | None = None) -> InsensitivityFn:
    """Insensitivity function attached to a long-tailed law."""
    if not law.long_tailed:
        raise NotLongTailed(f"{law.family} is not tagged long-tailed")
    return InsensitivityFn(law.default_gamma() if exponent is None else exponent)


def h_inverse(h: InsensitivityFn, y):
    if np.ndim(y):
        return np.asarray(y, dtype=float) ** (1.0 / h.exponent)
    return float(y) ** (1.0 / h.exponent)
