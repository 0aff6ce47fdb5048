"""Multivariate risk model with discounted claims, entrance and ruin probabilities."""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy import integrate, special, stats

from .counting import CountingProcess, lambda_mean, simulate_counting
from .errors import ArrivalOverflow, MeanNotFinite, NotLongTailed, PreconditionError, ViolatesKesten
from .mc_core import (
    EngineConfig,
    Estimate,
    LatentStatistic,
    Method,
    ModuleTag,
    RngStream,
    analytic_estimate,
    estimate_tail,
    stream_id,
)
from .paths import random_sum_statistic, sum_statistic
from .rare_sets import RareSet, RuinSetKind, make_ruin_translate
from .trend import TrendReport, Verdict, ci_trend_report
from .vector_laws import Mrv, VectorLaw, fa_mean, fa_tail, fa_statistic, mu_A

__all__ = [
    "RiskModel",
    "discounted_claims",
    "entrance_probability",
    "ruin_probability",
    "entrance_and_ruin",
    "theorem61_asymptote",
    "theorem61_asymptote_mc",
    "lambda_measure_integral",
    "SummabilityResult",
    "check_assumption_62",
    "weighted_sum_uniformity",
    "mrv_closed_form",
    "premium_bound_holds",
    "LAMBDA_GRID_POINTS",
]

LAMBDA_GRID_POINTS = 256


@dataclass(frozen=True)
class RiskModel:
    """Claims ``X_k`` arrive at the epochs of ``cp``; line ``i`` earns premium
    at constant rate ``premium_caps[i]`` and starts with ``x * allocation[i]``."""

    claims: VectorLaw
    cp: CountingProcess
    allocation: tuple[float, ...]
    premium_caps: tuple[float, ...]
    interest: float = 0.0
    horizon: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "allocation", tuple(float(v) for v in self.allocation))
        object.__setattr__(self, "premium_caps", tuple(float(v) for v in self.premium_caps))
        d = self.claims.dim
        if len(self.allocation) != d or len(self.premium_caps) != d:
            raise ValueError("allocation and premiums need one entry per line")
        if any(v <= 0 for v in self.allocation) or abs(sum(self.allocation) - 1.0) > 1e-12:
            raise ValueError("allocation must be positive and sum to one")
        if any(v < 0 or not math.isfinite(v) for v in self.premium_caps):
            raise ValueError("premium caps must be finite and non-negative")
        if self.interest < 0 or not self.horizon > 0:
            raise ValueError("need interest >= 0 and a positive horizon")

    @property
    def dim(self) -> int:
        return self.claims.dim

    def premium_density(self, i: int) -> Callable[[float], float]:
        cap = self.premium_caps[i]
        return lambda s: cap

    def discounted_premium(self, s: float) -> np.ndarray:
        """``int_0^s p_i(y) e^{-ry} dy`` for constant densities."""
        r = self.interest
        fac = -math.expm1(-r * s) / r if r > 0 else s
        return np.asarray(self.premium_caps) * fac

    def _check_t(self, t: float):
        if not 0 <= t <= self.horizon:
            raise ValueError(f"t must lie in [0, {self.horizon}]")


def premium_bound_holds(model: RiskModel, t: float | None = None) -> bool:
    """Check ``int_0^t p_i(y) e^{-ry} dy <= cap_i * T`` by quadrature."""
    t = model.horizon if t is None else t
    for i, cap in enumerate(model.premium_caps):
        p = model.premium_density(i)
        val, _ = integrate.quad(lambda y: p(y) * math.exp(-model.interest * y), 0.0, t)
        if val > cap * model.horizon * (1 + 1e-12):
            return False
    return True


def discounted_claims(model: RiskModel, t: float, rng: np.random.Generator) -> np.ndarray:
    """One draw of ``D_r(t) = sum_{k <= N(t)} X_k e^{-r tau_k}``."""
    model._check_t(t)
    n, epochs = simulate_counting(model.cp, t, rng)
    if n == 0:
        return np.zeros(model.dim)
    x = model.claims.sample(rng, n)
    return (x * np.exp(-model.interest * epochs)[:, None]).sum(axis=0)


def _risk_tag(x: float, t: float) -> int:
    # stream ids depend on the cell, so entrance and ruin at the same (x, t) share paths
    h = zlib.crc32(struct.pack("<dd", float(x), float(t))) & 0xFFFF
    return (int(ModuleTag.RISK) << 16) | h


def entrance_and_ruin(model: RiskModel, A: RareSet, x: float, t: float,
                      engine: EngineConfig | None = None, method: str = "splitting",
                      tag: int | None = None) -> tuple[Estimate, Estimate]:
    """Joint run estimating ``P[D_r(t) in xA]`` and the ruin probability.

    Ruin means ``D_r(s) - int_0^s p(y) e^{-ry} dy`` enters ``xA`` at some claim
    epoch ``s <= t``.  It is estimated as a sub-event of the entrance event on
    the same paths, so the ruin estimate never exceeds the entrance estimate.
    """
    model._check_t(t)
    if not x > 0:
        raise ValueError("x must be positive")
    eng = engine or EngineConfig()
    if model.cp.deterministic and model.cp.deterministic_epochs(t).size == 0:
        zero = analytic_estimate(0.0)
        return zero, analytic_estimate(0.0)
    stat = random_sum_statistic(model.claims, model.cp, A, t, model.interest,
                                premiums=model.premium_caps, ruin_x=x, seed=eng.seed)
    est = estimate_tail(stat, x, method, eng, tag=_risk_tag(x, t) if tag is None else tag)
    ruin = est.extra["sub"][0]
    return est, ruin


def entrance_probability(model: RiskModel, A: RareSet, x: float, t: float,
                         engine: EngineConfig | None = None, method: str = "splitting") -> Estimate:
    return entrance_and_ruin(model, A, x, t, engine, method)[0]


def ruin_probability(model: RiskModel, kind: RuinSetKind | str, x: float, t: float,
                     engine: EngineConfig | None = None, method: str = "splitting") -> Estimate:
    """Finite-horizon ruin probability for the ruin set ``kind``."""
    A = make_ruin_translate(model.allocation, kind)
    est, ruin = entrance_and_ruin(model, A, x, t, engine, method)
    ruin.extra["entrance"] = est.value
    return ruin


def lambda_measure_integral(cp: CountingProcess, g: Callable[[float], float], t: float,
                            seed: int = 0, budget: int = 20000,
                            grid_points: int = LAMBDA_GRID_POINTS) -> tuple[float, str]:
    """``int_0^t g(s) lambda(ds)`` and the method used.

    Poisson: quadrature against the constant density.  Deterministic
    arrivals: a sum over the epochs.  Otherwise ``lambda`` is tabulated by
    Monte Carlo on a uniform grid (forced monotone) and integrated by the
    trapezoid rule in ``lambda``.
    """
    rate = cp.poisson_rate
    if rate is not None:
        val, _ = integrate.quad(g, 0.0, t, epsabs=0.0, epsrel=1e-11, limit=500)
        return rate * val, "analytic"
    if cp.deterministic:
        return float(sum(g(s) for s in cp.deterministic_epochs(t))), "analytic"
    s = np.linspace(0.0, t, grid_points)
    lam = np.array([lambda_mean(cp, v, budget, seed, tag=5000 + i).value for i, v in enumerate(s)])
    lam = np.maximum.accumulate(lam)
    gv = np.array([g(v) for v in s])
    return float(np.sum(0.5 * (gv[1:] + gv[:-1]) * np.diff(lam))), "tabulated"


def theorem61_asymptote(model: RiskModel, A: RareSet, x: float, t: float,
                        engine: EngineConfig | None = None) -> float:
    """``int_0^t P[X in x e^{rs} A] lambda(ds)``.

    Needs an analytic projected tail; use :func:`theorem61_asymptote_mc`
    otherwise.
    """
    model._check_t(t)
    eng = engine or EngineConfig()
    if model.claims.analytic_tail(A, x) is None:
        return theorem61_asymptote_mc(model, A, x, t, eng).value
    r = model.interest

    def g(s):
        return float(model.claims.analytic_tail(A, x * math.exp(r * s)))

    return lambda_measure_integral(model.cp, g, t, eng.seed)[0]


def theorem61_asymptote_mc(model: RiskModel, A: RareSet, x: float, t: float,
                           engine: EngineConfig | None = None) -> Estimate:
    """Monte Carlo version: ``lambda(t) P[Y_A(X) e^{-rS} > x]`` with ``S``
    drawn from the normalized measure ``lambda(ds) / lambda(t)``."""
    eng = engine or EngineConfig()
    cp, r = model.cp, model.interest
    base = fa_statistic(model.claims, A)
    if cp.poisson_rate is not None:
        lam_t = cp.poisson_rate * t

        def s_of(u):
            return u * t
    elif cp.deterministic:
        ep = cp.deterministic_epochs(t)
        lam_t = float(ep.size)
        if ep.size == 0:
            return analytic_estimate(0.0)

        def s_of(u):
            return ep[np.minimum((u * ep.size).astype(int), ep.size - 1)]
    else:
        grid = np.linspace(0.0, t, LAMBDA_GRID_POINTS)
        lam = np.maximum.accumulate(
            [lambda_mean(cp, v, 20000, eng.seed, tag=5000 + i).value for i, v in enumerate(grid)])
        lam_t = float(lam[-1])
        if lam_t == 0:
            return analytic_estimate(0.0)
        cdf = lam / lam_t

        def s_of(u):
            return np.interp(u, cdf, grid)

    def fn(z):
        s = s_of(special.ndtr(z[:, -1]))
        return base.fn(z[:, :-1]) * np.exp(-r * s)

    est = estimate_tail(LatentStatistic(base.dim + 1, fn), x, "splitting", eng,
                        tag=(int(ModuleTag.RISK) << 16) | 0xFFFF)
    return est.scaled(lam_t)


@dataclass
class SummabilityResult:
    partial_sum: float
    remainder: float
    ratio: float
    verdict: str
    terms_659: np.ndarray
    terms_660: np.ndarray
    numerators_659: np.ndarray
    numerators_660: np.ndarray
    denominators: np.ndarray
    c: float
    t: float
    method: str
    notes: list[str] = field(default_factory=list)

    @property
    def max_term_gap(self) -> float:
        return float(np.max(np.abs(self.terms_659 - self.terms_660))) if self.terms_659.size else 0.0

    def summary(self) -> dict[str, Any]:
        return {"partial_sum": self.partial_sum, "remainder": self.remainder, "ratio": self.ratio,
                "verdict": self.verdict, "c": self.c, "t": self.t, "method": self.method,
                "partial_sum_660": math.fsum(self.terms_660)}


def _delayed_numerators(cp: CountingProcess, t: float, n_cap: int, budget: int, seed: int):
    """``P[N*(t) >= n - 1]`` for ``n = 1..n_cap`` computed two ways.

    The first uses the count ``N*(t)``; the second the epochs of the delayed
    process, ``P[theta_2 + ... + theta_n <= t]``.
    """
    ns = np.arange(1, n_cap + 1)
    m = ns - 1  # N* >= m  <=>  tau*_m <= t, with tau*_0 = 0
    dcp = cp.delayed()
    rate = cp.poisson_rate
    if rate is not None:
        mu = rate * t
        num_a = np.where(m <= 0, 1.0, stats.poisson.sf(m - 1, mu))
        num_b = np.where(m <= 0, 1.0, stats.gamma.cdf(t, np.maximum(m, 1), scale=1.0 / rate))
        return num_a, num_b, "analytic"
    if dcp.deterministic:
        try:
            count = dcp.deterministic_epochs(t, limit=n_cap + 1).size
        except ArrivalOverflow:
            count = n_cap + 1
        gaps = np.array([dcp.law(i).value for i in range(1, n_cap + 1)])
        epochs = np.cumsum(gaps)
        num_a = (count >= m).astype(float)
        num_b = np.where(m <= 0, 1.0, (epochs[np.maximum(m, 1) - 1] <= t).astype(float))
        return num_a, num_b, "exact"
    rng = RngStream(seed, stream_id(ModuleTag.RISK, 1)).generator()
    gaps = dcp.gaps_from_normal(rng.standard_normal((budget, n_cap)))
    epochs = np.cumsum(gaps, axis=1)
    inside = epochs <= t
    count = inside.sum(axis=1)
    num_a = np.array([np.mean(count >= k) if k > 0 else 1.0 for k in m])
    num_b = np.array([np.mean(inside[:, k - 1]) if k > 0 else 1.0 for k in m])
    return num_a, num_b, "monte_carlo"


def check_assumption_62(model: RiskModel, A: RareSet, c: float | None = None,
                        T_star: float | None = None, n_cap: int = 200,
                        engine: EngineConfig | None = None, budget: int = 100_000,
                        rel_remainder: float = 0.01) -> SummabilityResult:
    """Truncated sum of ``P[N*(t) >= n-1] / P[X in cnA]`` for ``n = 1..n_cap``.

    The terms are increasing in ``t``, so the check is run at ``T_star``.
    The tail beyond ``n_cap`` is bounded by a geometric extrapolation of the
    last ten term ratios.  Verdict ``"Summable"`` requires that ratio below
    one and a remainder below ``rel_remainder`` of the partial sum.
    """
    eng = engine or EngineConfig()
    t = model.horizon if T_star is None else float(T_star)
    mu = fa_mean(model.claims, A, eng).value
    c = mu + 1.0 if c is None else float(c)
    if not c > mu:
        raise ViolatesKesten(f"c={c} must exceed the projected mean {mu:.6g}")
    num_a, num_b, method = _delayed_numerators(model.cp, t, n_cap, budget, eng.seed)
    ns = np.arange(1, n_cap + 1)
    den = np.array([fa_tail(model.claims, A, c * n, eng).value for n in ns])
    notes = []
    with np.errstate(divide="ignore", invalid="ignore"):
        terms_a = np.where(num_a > 0, num_a / den, 0.0)
        terms_b = np.where(num_b > 0, num_b / den, 0.0)
    partial = float(math.fsum(terms_a))
    last = terms_a[-10:]
    if np.all(last == 0):
        ratio, remainder = 0.0, 0.0
    elif np.any(last == 0) or not np.all(np.isfinite(last)):
        ratio, remainder = math.inf, math.inf
        notes.append("irregular tail terms")
    else:
        ratio = float(np.max(last[1:] / last[:-1]))
        remainder = float(last[-1] * ratio / (1 - ratio)) if ratio < 1 else math.inf
    summable = ratio < 1 and remainder < rel_remainder * partial
    return SummabilityResult(partial, remainder, ratio, "Summable" if summable else "NotSummable",
                              terms_a, terms_b, num_a, num_b, den, c, t, method, notes)


def weighted_sum_uniformity(vlaw: VectorLaw, A: RareSet, n: int, a: float, b: float, c_samples: int,
                            x_grid: Sequence[float], engine: EngineConfig | None = None,
                            tol: float = 0.2) -> TrendReport:
    """``P[sum c_i X_i in xA] / sum_i P[c_i X_i in xA]`` over coefficient draws in ``[a, b]^n``.

    The corners ``(a, ..., a)`` and ``(b, ..., b)`` are always included.  The
    reported ratio at each ``x`` is the worst (largest deviation from one)
    over the coefficient vectors; per-vector ratios go in ``extra``.
    """
    if not 0 < a <= b < math.inf:
        raise ValueError("need 0 < a <= b < inf")
    if not vlaw.long_tailed:
        raise NotLongTailed("claim law must be long-tailed")
    eng = engine or EngineConfig()
    grid = [float(x) for x in x_grid]
    rng = RngStream(eng.seed, stream_id(ModuleTag.RISK, 2)).generator()
    coefs = [np.full(n, a), np.full(n, b)] + [rng.uniform(a, b, n) for _ in range(c_samples)]
    if n == 1:
        rows = [[1.0] * len(grid) for _ in coefs]
        los, his = rows, rows
    else:
        rows, los, his = [], [], []
        for ci, cv in enumerate(coefs):
            stat = sum_statistic([vlaw] * n, A, cv)
            r_row, lo_row, hi_row = [], [], []
            for j, x in enumerate(grid):
                est = estimate_tail(stat, x, "splitting", eng,
                                    tag=(int(ModuleTag.RISK) << 24) | (ci << 8) | j)
                singles = [fa_tail(vlaw, A, x / c, eng) for c in cv]
                den = sum(s.value for s in singles)
                r_row.append(est.value / den)
                lo_row.append(est.lo / den)
                hi_row.append(est.hi / den)
            rows.append(r_row)
            los.append(lo_row)
            his.append(hi_row)
    worst_idx = [int(np.argmax([abs(rows[k][j] - 1) for k in range(len(coefs))])) for j in range(len(grid))]
    ratio = [rows[k][j] for j, k in enumerate(worst_idx)]
    lo = [los[k][j] for j, k in enumerate(worst_idx)]
    hi = [his[k][j] for j, k in enumerate(worst_idx)]
    rep = ci_trend_report(grid, ratio, lo, hi, 1.0, tol, label=f"weighted sums n={n}")
    rep.extra = {"coefficients": [c.tolist() for c in coefs], "ratios": rows,
                 "max_dev_at_tail": max(abs(rows[k][-1] - 1) for k in range(len(coefs)))}
    return rep


def mrv_closed_form(model: RiskModel, A: RareSet, x: float, t: float, engine: EngineConfig | None = None) -> float:
    """``mu(A) P[R > x] int_0^t e^{-alpha r s} lambda(ds)``."""
    vlaw = model.claims
    if not isinstance(vlaw, Mrv):
        raise PreconditionError("closed form needs MRV claims")
    if vlaw.alpha <= 1:
        raise MeanNotFinite("closed form needs alpha > 1")
    eng = engine or EngineConfig()
    ar = vlaw.alpha * model.interest
    rate = model.cp.poisson_rate
    if rate is not None:
        integral = rate * (-math.expm1(-ar * t) / ar if ar > 0 else t)
    else:
        integral = lambda_measure_integral(model.cp, lambda s: math.exp(-ar * s), t, eng.seed)[0]
    return mu_A(vlaw, A) * float(vlaw.radial.tail(x)) * integral
