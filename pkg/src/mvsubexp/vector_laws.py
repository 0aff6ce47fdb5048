"""Claim-vector models and the projected law F_A.

Every model is also a deterministic map from a block of standard normals to a
vector (``from_normal``), which is what the splitting engine moves around.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import integrate, special

from . import scalar_laws as sl
from .errors import InfMean, PreconditionError
from .mc_core import (
    EngineConfig,
    Estimate,
    LatentStatistic,
    MeanEstimate,
    Method,
    ModuleTag,
    analytic_estimate,
    estimate_mean_latent,
    estimate_tail,
)
from .rare_sets import RareSet

__all__ = [
    "VectorLaw",
    "Independent",
    "Lwqd",
    "Mrv",
    "FaLaw",
    "sample_vector",
    "fa_tail",
    "fa_mean",
    "mu_A",
    "fa_statistic",
    "default_shock",
    "vector_law_from_config",
]


class VectorLaw(ABC):
    dim: int

    @property
    @abstractmethod
    def latent_dim(self) -> int:
        """Number of standard normals consumed per vector."""

    @abstractmethod
    def from_normal(self, z: np.ndarray) -> np.ndarray:
        """Map ``(N, latent_dim)`` normals to ``(N, dim)`` vectors."""

    @abstractmethod
    def marginal_mean(self, i: int) -> float:
        ...

    @property
    def long_tailed(self) -> bool:
        return True

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        m = 1 if size is None else int(size)
        out = self.from_normal(rng.standard_normal((m, self.latent_dim)))
        return out[0] if size is None else out

    def analytic_tail(self, A: RareSet, x: float) -> float | None:
        return None

    def analytic_mean(self, A: RareSet) -> float | None:
        if A.directions.shape[0] == 1:
            means = [self.marginal_mean(i) for i in range(self.dim)]
            p = A.directions[0]
            if any(math.isinf(m) and w > 0 for m, w in zip(means, p)):
                raise InfMean("a weighted marginal has infinite mean")
            return float(sum(w * m for w, m in zip(p, means) if w > 0))
        return None

    @abstractmethod
    def to_config(self) -> dict[str, Any]:
        ...


@dataclass(frozen=True)
class Independent(VectorLaw):
    marginals: tuple[sl.ScalarLaw, ...]

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(self.marginals))
        if not self.marginals:
            raise ValueError("need at least one marginal")

    @property
    def dim(self) -> int:
        return len(self.marginals)

    @property
    def latent_dim(self) -> int:
        return self.dim

    @property
    def long_tailed(self) -> bool:
        return any(m.long_tailed for m in self.marginals)

    def from_normal(self, z):
        z = np.asarray(z, dtype=float)
        return np.stack([m.from_normal(z[:, i]) for i, m in enumerate(self.marginals)], axis=1)

    def marginal_mean(self, i):
        return self.marginals[i].mean()

    def analytic_tail(self, A, x):
        dirs = A.directions
        if np.all((dirs > 0).sum(axis=1) == 1):
            # union of coordinate exceedances: max over rows sharing a coordinate
            coef = dirs.max(axis=0)
            log_keep = 0.0
            for m, c in zip(self.marginals, coef):
                if c > 0:
                    t = float(m.tail(x / c))
                    if t >= 1.0:
                        return 1.0
                    log_keep += math.log1p(-t)
            return -math.expm1(log_keep)
        if dirs.shape[0] == 1 and self.dim == 2:
            return _halfspace_tail_2d(self.marginals, dirs[0], x)
        return None

    def analytic_mean(self, A):
        lin = super().analytic_mean(A)
        if lin is not None:
            return lin
        dirs = A.directions
        if np.all((dirs > 0).sum(axis=1) == 1):
            coef = dirs.max(axis=0)
            for m, c in zip(self.marginals, coef):
                if c > 0 and math.isinf(m.mean()):
                    raise InfMean("a marginal entering the set has infinite mean")
            used = [(m, c) for m, c in zip(self.marginals, coef) if c > 0]

            def tail(y):
                keep = 1.0
                for m, c in used:
                    keep *= 1.0 - float(m.tail(y / c))
                return 1.0 - keep

            kinks = sorted({c * m.support_start for m, c in used if m.support_start > 0})
            total, lo = 0.0, 0.0
            for k in kinks + [math.inf]:
                if k > lo:
                    val, _ = integrate.quad(tail, lo, k, epsabs=1e-12, epsrel=1e-11, limit=500)
                    total += val
                lo = k
            return total
        return None

    def to_config(self):
        return {"kind": "independent", "marginals": [m.to_config() for m in self.marginals]}


def _halfspace_tail_2d(marginals, p, x) -> float | None:
    """P[p1 X1 + p2 X2 > x] by one-dimensional quadrature."""
    m1, m2 = marginals
    p1, p2 = float(p[0]), float(p[1])
    if p1 == 0 or p2 == 0:
        m, c = (m2, p2) if p1 == 0 else (m1, p1)
        return float(m.tail(x / c))
    if m1.discrete or m2.discrete:
        return None
    # condition on the coordinate with the lighter-looking weight so the
    # integrand mass sits near the lower end
    top = x / p1
    t_top = float(m1.tail(top))
    if top <= m1.support_start:
        return 1.0

    def integrand(y):
        return float(m2.tail((x - p1 * y) / p2)) * float(m1.pdf(y))

    pts = {m1.support_start}
    kink = (x - p2 * m2.support_start) / p1
    pts.add(kink)
    pts.add(0.5 * (m1.support_start + top))
    cuts = sorted(v for v in pts if m1.support_start <= v < top) + [top]
    total = 0.0
    for a, b in zip(cuts, cuts[1:]):
        if b > a:
            val, _ = integrate.quad(integrand, a, b, epsabs=0.0, epsrel=1e-11, limit=500)
            total += val
    return min(1.0, t_top + total)


def default_shock(common: sl.ScalarLaw) -> sl.ScalarLaw:
    """Same family as ``common`` with a strictly lighter tail."""
    if isinstance(common, sl.Pareto):
        return sl.Pareto(common.alpha + 1.0, common.scale)
    if isinstance(common, sl.Weibull):
        return sl.Weibull(common.shape + 1.0, common.scale)
    if isinstance(common, sl.Lognormal):
        return sl.Lognormal(common.mu, common.sigma / 2.0)
    if isinstance(common, sl.Exponential):
        return sl.Exponential(common.rate + 1.0)
    raise ValueError(f"no default shock for {common.family}")


@dataclass(frozen=True)
class Lwqd(VectorLaw):
    """Common-shock vector ``X_i = Z_i + theta * S`` with i.i.d. ``Z_i``."""

    common: sl.ScalarLaw
    dim: int = 2
    shock_weight: float = 0.5
    shock: sl.ScalarLaw | None = None

    def __post_init__(self):
        if not 0 <= self.shock_weight < 1:
            raise ValueError("shock weight must lie in [0, 1)")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.shock is None:
            object.__setattr__(self, "shock", default_shock(self.common))

    @property
    def latent_dim(self):
        return self.dim + 1

    @property
    def long_tailed(self):
        return self.common.long_tailed

    def from_normal(self, z):
        z = np.asarray(z, dtype=float)
        base = self.common.from_normal(z[:, : self.dim])
        if self.shock_weight == 0:
            return base
        s = self.shock.from_normal(z[:, self.dim])
        return base + self.shock_weight * s[:, None]

    def marginal_mean(self, i):
        return self.common.mean() + self.shock_weight * self.shock.mean()

    def marginal_tail(self, x) -> float:
        """P[X_i > x] by quadrature over the shock."""
        if self.shock_weight == 0:
            return float(self.common.tail(x))
        th = self.shock_weight

        def f(s):
            return float(self.common.tail(x - th * s)) * float(self.shock.pdf(s))

        lo = self.shock.support_start
        hi = max(lo, x / th)
        pts = [v for v in (lo + 1.0, (x - self.common.support_start) / th) if lo < v < hi]
        a, _ = integrate.quad(f, lo, hi, points=pts or None, limit=500, epsrel=1e-10)
        return a + float(self.shock.tail(hi))

    def to_config(self):
        return {"kind": "lwqd", "dim": self.dim, "common": self.common.to_config(),
                "shock_weight": self.shock_weight, "shock": self.shock.to_config()}


@dataclass(frozen=True)
class Mrv(VectorLaw):
    """``X = R * W`` with Pareto radius ``R`` and a finite angular law ``W``.

    ``W`` puts mass ``axis_weights[j]`` on ``e_j`` and ``diag_weight`` on
    ``(1, ..., 1) / sqrt(d)``.
    """

    alpha: float
    axis_weights: tuple[float, ...] = (0.5, 0.5)
    diag_weight: float = 0.0
    scale: float = 1.0
    _dirs: np.ndarray = field(init=False, repr=False, compare=False)
    _w: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.array(list(self.axis_weights) + [self.diag_weight], dtype=float)
        object.__setattr__(self, "axis_weights", tuple(float(v) for v in self.axis_weights))
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("angular weights must be a probability vector")
        d = len(self.axis_weights)
        dirs = np.vstack([np.eye(d), np.full((1, d), 1.0 / math.sqrt(d))])
        keep = w > 0
        object.__setattr__(self, "_dirs", dirs[keep])
        object.__setattr__(self, "_w", w[keep])

    @property
    def dim(self) -> int:
        return len(self.axis_weights)

    @property
    def radial(self) -> sl.Pareto:
        return sl.Pareto(self.alpha, self.scale)

    @property
    def latent_dim(self):
        return 2

    def from_normal(self, z):
        z = np.asarray(z, dtype=float)
        r = self.radial.from_normal(z[:, 0])
        u = special.ndtr(z[:, 1])
        k = np.minimum(np.searchsorted(np.cumsum(self._w), u, side="right"), len(self._w) - 1)
        return r[:, None] * self._dirs[k]

    def marginal_mean(self, i):
        return self.radial.mean() * float(self._w @ self._dirs[:, i])

    def analytic_tail(self, A, x):
        ys = A.y_projection(self._dirs)
        tot = 0.0
        for w, y in zip(self._w, np.atleast_1d(ys)):
            if y > 0:
                tot += w * float(self.radial.tail(x / y))
        return min(1.0, tot)

    def analytic_mean(self, A):
        m = self.radial.mean()
        ys = np.atleast_1d(A.y_projection(self._dirs))
        if math.isinf(m) and np.any(ys > 0):
            raise InfMean("radial law has infinite mean")
        return float(m * (self._w @ ys))

    def mu(self, A: RareSet) -> float:
        ys = np.atleast_1d(A.y_projection(self._dirs))
        return float(np.sum(self._w * ys ** self.alpha))

    def to_config(self):
        return {"kind": "mrv", "alpha": self.alpha, "axis_weights": list(self.axis_weights),
                "diag_weight": self.diag_weight, "scale": self.scale}


@dataclass
class FaLaw:
    """The law of ``Y_A(X)`` for a fixed vector law and set."""

    parent: VectorLaw
    set: RareSet
    engine: EngineConfig = field(default_factory=EngineConfig)
    _mean: MeanEstimate | None = field(default=None, init=False, repr=False)

    def tail(self, x: float, method: str = "auto") -> Estimate:
        return fa_tail(self.parent, self.set, x, self.engine, method)

    @property
    def mean(self) -> float:
        if self._mean is None:
            self._mean = fa_mean(self.parent, self.set, self.engine)
        return self._mean.value


def sample_vector(vlaw: VectorLaw, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    return vlaw.sample(rng, size)


def fa_statistic(vlaw: VectorLaw, A: RareSet) -> LatentStatistic:
    _check_dim(vlaw, A)
    return LatentStatistic(vlaw.latent_dim, lambda z: A.y_projection(vlaw.from_normal(z)), label="F_A")


def _check_dim(vlaw: VectorLaw, A: RareSet):
    if vlaw.dim != A.dim:
        raise ValueError(f"law has dimension {vlaw.dim}, set has {A.dim}")


def fa_tail(vlaw: VectorLaw, A: RareSet, x: float, engine: EngineConfig | None = None,
            method: str = "auto", budget: int | None = None) -> Estimate:
    """P[Y_A(X) > x]: analytic when a closed form exists, otherwise splitting.

    ``method`` may force ``"analytic"``, ``"crude"`` or ``"splitting"``.
    """
    if not x > 0:
        raise ValueError("x must be positive")
    _check_dim(vlaw, A)
    if method in ("auto", "analytic"):
        val = vlaw.analytic_tail(A, x)
        if val is not None:
            return analytic_estimate(val)
        if method == "analytic":
            raise PreconditionError("no analytic form for this law and set")
    mc = "splitting" if method == "auto" else method
    return estimate_tail(fa_statistic(vlaw, A), x, mc, engine, tag=ModuleTag.VECTOR, budget=budget)


def fa_mean(vlaw: VectorLaw, A: RareSet, engine: EngineConfig | None = None,
            n: int | None = None) -> MeanEstimate:
    """E[Y_A(X)]: linearity or quadrature when possible, else a sample mean."""
    _check_dim(vlaw, A)
    val = vlaw.analytic_mean(A)
    if val is not None:
        return MeanEstimate(val, 0.0, 0, Method.ANALYTIC)
    used = np.flatnonzero(A.directions.max(axis=0) > 0)
    for i in used:
        if math.isinf(vlaw.marginal_mean(int(i))):
            raise InfMean(f"marginal {i} has infinite mean")
    eng = engine or EngineConfig()
    stat = fa_statistic(vlaw, A)
    return estimate_mean_latent(stat.fn, stat.dim, n or eng.budget, eng.seed, ModuleTag.VECTOR,
                                eng.chunk_size, eng.workers)


def mu_A(vlaw: VectorLaw, A: RareSet) -> float:
    """Limit-measure value of ``A`` for an MRV law."""
    if not isinstance(vlaw, Mrv):
        raise PreconditionError("mu_A needs an MRV law")
    _check_dim(vlaw, A)
    return vlaw.mu(A)


def vector_law_from_config(cfg: dict[str, Any]) -> VectorLaw:
    kind = cfg.get("kind")
    if kind == "independent":
        return Independent(tuple(sl.law_from_config(m) for m in cfg["marginals"]))
    if kind == "lwqd":
        shock = sl.law_from_config(cfg["shock"]) if cfg.get("shock") else None
        return Lwqd(sl.law_from_config(cfg["common"]), int(cfg.get("dim", 2)),
                    float(cfg.get("shock_weight", 0.5)), shock)
    if kind == "mrv":
        return Mrv(float(cfg["alpha"]), tuple(cfg.get("axis_weights", (0.5, 0.5))),
                   float(cfg.get("diag_weight", 0.0)), float(cfg.get("scale", 1.0)))
    raise ValueError(f"unknown vector law kind {kind!r}")
