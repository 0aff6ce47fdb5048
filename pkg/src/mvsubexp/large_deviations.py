"""Precise large deviations for fixed and random sums, plus the counting-process checks they need."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy import stats

from . import scalar_laws as sl
from .counting import CountingProcess, count_paths, lambda_mean, simulate_counting
from .errors import MeanNotFinite, PreconditionError
from .mc_core import EngineConfig, Estimate, Method, ModuleTag, RngStream, estimate_tail, stream_id
from .paths import nfold_statistic, random_sum_statistic
from .rare_sets import RareSet
from .trend import TrendReport, Verdict
from .vector_laws import Independent, Lwqd, Mrv, VectorLaw, fa_mean, fa_tail, mu_A

__all__ = [
    "CountingProcess",
    "simulate_counting",
    "lambda_mean",
    "check_lln",
    "LightTailValue",
    "check_light_tail",
    "light_tail_trend",
    "SurfaceCell",
    "Surface",
    "reference_law",
    "pld_fixed_n_surface",
    "pld_random_surface",
    "pld_mrv_closed_form",
    "DEFAULT_X_MULTS",
]

DEFAULT_X_MULTS = (1.0, 1.5, 2.0, 4.0)
MIN_REACHABLE = 1e-10


def _decay_verdict(values: Sequence[float], ses: Sequence[float]) -> Verdict:
    """Consistent when the sequence is non-increasing within noise and its
    last value is significantly below its first, or ends at exactly zero."""
    if not values:
        return Verdict.INCONCLUSIVE
    if values[-1] == 0.0:
        return Verdict.CONSISTENT
    steady = all(b <= a + 2.0 * math.hypot(sa, sb) for a, b, sa, sb in zip(values, values[1:], ses, ses[1:]))
    drop = values[-1] < values[0] - 3.0 * math.hypot(ses[0], ses[-1])
    return Verdict.CONSISTENT if steady and drop else Verdict.INCONSISTENT


def check_lln(cp: CountingProcess, t_grid: Sequence[float], budget: int = 20000, seed: int = 0,
              deltas: Sequence[float] = (0.1, 0.05)) -> TrendReport:
    """Estimate ``P[|N(t)/lambda(t) - 1| > delta]`` along ``t_grid``.

    The report is Consistent when the probabilities decay for every delta;
    per-delta sequences are kept in ``extra``.
    """
    grid = [float(t) for t in t_grid]
    probs: dict[float, list[float]] = {float(d): [] for d in deltas}
    ses: dict[float, list[float]] = {float(d): [] for d in deltas}
    for i, t in enumerate(grid):
        lam = lambda_mean(cp, t, budget, seed, tag=1000 + i).value
        if not lam > 0:
            raise PreconditionError(f"lambda({t}) must be positive")
        rng = RngStream(seed, stream_id(ModuleTag.COUNTING, i)).generator()
        counts = count_paths(cp, t, budget if not cp.deterministic else 1, rng)
        dev = np.abs(counts / lam - 1.0)
        for d in probs:
            p = float(np.mean(dev > d))
            probs[d].append(p)
            ses[d].append(math.sqrt(p * (1 - p) / counts.size))
    verdicts = {d: _decay_verdict(probs[d], ses[d]) for d in probs}
    overall = Verdict.CONSISTENT if all(v is Verdict.CONSISTENT for v in verdicts.values()) else Verdict.INCONSISTENT
    first = next(iter(probs))
    rep = TrendReport(grid, probs[first], 0.0, overall, max(probs[first][-1:], default=math.nan), 0.0,
                      label="lln")
    rep.extra = {"probabilities": {str(d): v for d, v in probs.items()},
                 "verdicts": {str(d): v.value for d, v in verdicts.items()}}
    return rep


@dataclass
class LightTailValue:
    t: float
    value: float
    stderr: float
    method: Method
    underflow: bool = False
    threshold: int = 0


def check_light_tail(cp: CountingProcess, t: float, delta: float = 0.5, eps: float = 0.05,
                     n_cap: int | None = None, budget: int = 20000, seed: int = 0) -> LightTailValue:
    """``sum_{n > floor((1+delta) lambda(t))} (1+eps)^n P[N(t) = n]``.

    Poisson counts use the tilted generating function
    ``e^{eps mu} P[Poisson((1+eps) mu) > m]``; deterministic counts give zero
    exactly; other processes use a Monte Carlo histogram (flagged as
    underflow when no sampled count exceeds the threshold).
    """
    if not (delta > 0 and eps > 0):
        raise ValueError("delta and eps must be positive")
    lam = lambda_mean(cp, t, budget, seed).value
    m = int(math.floor((1 + delta) * lam))
    rate = cp.poisson_rate
    if rate is not None:
        mu = rate * t
        if n_cap is None:
            val = math.exp(eps * mu) * float(stats.poisson.sf(m, (1 + eps) * mu))
        else:
            ns = np.arange(m + 1, n_cap + 1)
            val = float(np.sum(np.exp(ns * math.log1p(eps) + stats.poisson.logpmf(ns, mu))))
            # remainder past the cap from the same tilted identity
            val += math.exp(eps * mu) * float(stats.poisson.sf(n_cap, (1 + eps) * mu))
        return LightTailValue(t, val, 0.0, Method.ANALYTIC, False, m)
    if cp.deterministic:
        n = cp.deterministic_epochs(t).size
        val = (1 + eps) ** n if n > m else 0.0
        return LightTailValue(t, val, 0.0, Method.ANALYTIC, False, m)
    rng = RngStream(seed, stream_id(ModuleTag.COUNTING, 2 ** 20)).generator()
    counts = count_paths(cp, t, budget, rng)
    if n_cap is not None:
        counts = counts[counts <= n_cap]
    w = np.where(counts > m, np.exp(counts * math.log1p(eps)), 0.0)
    val = float(w.sum() / budget)
    se = float(w.std(ddof=1) / math.sqrt(budget))
    return LightTailValue(t, val, se, Method.CRUDE, not np.any(counts > m), m)


def light_tail_trend(cp: CountingProcess, t_grid: Sequence[float], delta: float = 0.5, eps: float = 0.05,
                     budget: int = 20000, seed: int = 0) -> TrendReport:
    vals = [check_light_tail(cp, t, delta, eps, None, budget, seed) for t in t_grid]
    v = [x.value for x in vals]
    if all(x.underflow for x in vals) and not cp.deterministic:
        verdict = Verdict.INCONCLUSIVE
    else:
        verdict = _decay_verdict(v, [x.stderr for x in vals])
    rep = TrendReport([float(t) for t in t_grid], v, 0.0, verdict, v[-1] if v else math.nan, 0.0,
                      label="light tail")
    rep.extra = {"delta": delta, "eps": eps, "methods": [x.method.value for x in vals]}
    return rep


@dataclass
class SurfaceCell:
    key: str
    n: int
    x_mult: float
    threshold: float
    x: float
    estimate: Estimate | None
    single: float
    target: float
    ratio: float
    ratio_lo: float
    ratio_hi: float
    status: str = "ok"

    def row(self) -> dict[str, Any]:
        e = self.estimate
        return {"key": self.key, "n": self.n, "x_mult": self.x_mult, "threshold": self.threshold,
                "x": self.x, "estimate": e.value if e else math.nan, "stderr": e.stderr if e else math.nan,
                "ci_lo": e.lo if e else math.nan, "ci_hi": e.hi if e else math.nan, "target": self.target,
                "ratio": self.ratio, "ratio_lo": self.ratio_lo, "ratio_hi": self.ratio_hi,
                "method": e.method.value if e else "none", "status": self.status}


@dataclass
class Surface:
    cells: list[SurfaceCell]
    x_mults: list[float]
    mean_fa: float
    gamma: float
    max_dev: float = math.nan
    max_dev_by_mult: dict[float, float] = field(default_factory=dict)
    monotone_in_mult: bool = False
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        ok = [c for c in self.cells if c.status == "ok" and math.isfinite(c.ratio)]
        self.max_dev = max((abs(c.ratio - 1) for c in ok), default=math.nan)
        for m in self.x_mults:
            devs = [abs(c.ratio - 1) for c in ok if c.x_mult == m]
            self.max_dev_by_mult[m] = max(devs) if devs else math.nan
        seq = [self.max_dev_by_mult[m] for m in sorted(self.x_mults)]
        self.monotone_in_mult = all(b <= a for a, b in zip(seq, seq[1:]) if math.isfinite(a) and math.isfinite(b))


def reference_law(vlaw: VectorLaw) -> sl.ScalarLaw:
    """Scalar law whose insensitivity function sets the uniformity thresholds."""
    if isinstance(vlaw, Independent):
        lt = [m for m in vlaw.marginals if m.long_tailed]
        if not lt:
            raise PreconditionError("no long-tailed marginal")
        return lt[0]
    if isinstance(vlaw, Lwqd):
        return vlaw.common
    if isinstance(vlaw, Mrv):
        return vlaw.radial
    raise PreconditionError("unsupported vector law")


def _threshold_fn(vlaw: VectorLaw, gamma: float | None):
    h = sl.insensitivity(reference_law(vlaw), gamma)
    return h


def _cell_tag(n: int, j: int) -> int:
    if n >= 2 ** 16 or j >= 2 ** 8:
        raise ValueError("surface too large for the stream layout")
    return (int(ModuleTag.LARGE_DEV) << 24) | (n << 8) | j


def _run_cell(stat_builder, vlaw, A, n, x_mult, j, threshold, key, eng) -> SurfaceCell:
    x = x_mult * threshold
    single = fa_tail(vlaw, A, x, eng)
    target = n * single.value
    if target < MIN_REACHABLE:
        return SurfaceCell(key, n, x_mult, threshold, x, None, single.value, target,
                           math.nan, math.nan, math.nan, "Unreachable")
    if n == 1 and stat_builder is None:
        est = single
    else:
        est = estimate_tail(stat_builder(), x, "splitting", eng, tag=_cell_tag(n, j))
    rel = single.stderr / single.value if single.value > 0 and single.method is not Method.ANALYTIC else 0.0
    ratio = est.value / target
    if rel == 0:
        lo, hi = est.lo / target, est.hi / target
    else:
        half = 1.96 * ratio * math.hypot(est.stderr / est.value if est.value > 0 else 0.0, rel)
        lo, hi = max(0.0, ratio - half), ratio + half
    return SurfaceCell(key, n, x_mult, threshold, x, est, single.value, target, ratio, lo, hi)


def pld_fixed_n_surface(vlaw: VectorLaw, A: RareSet, n_list: Sequence[int],
                        x_mult_grid: Sequence[float] = DEFAULT_X_MULTS, engine: EngineConfig | None = None,
                        gamma: float | None = None) -> Surface:
    """Ratios ``P[S_n in xA] / (n P[X in xA])`` at ``x = x_mult * h^{-1}(n (mu_A + 1))``."""
    if any(m < 1 for m in x_mult_grid):
        raise ValueError("x multipliers must be >= 1")
    if not vlaw.long_tailed:
        raise PreconditionError("claim law must be long-tailed")
    eng = engine or EngineConfig()
    mu = fa_mean(vlaw, A, eng).value
    h = _threshold_fn(vlaw, gamma)
    cells = []
    for n in n_list:
        thr = float(h.inverse(n * (mu + 1.0)))
        for j, m in enumerate(x_mult_grid):
            builder = None if n == 1 else (lambda n=n: nfold_statistic(vlaw, A, n))
            cells.append(_run_cell(builder, vlaw, A, n, float(m), j, thr, f"n={n}", eng))
    return Surface(cells, [float(m) for m in x_mult_grid], mu, h.exponent)


def pld_random_surface(vlaw: VectorLaw, cp: CountingProcess, A: RareSet, t_list: Sequence[float],
                       x_mult_grid: Sequence[float] = DEFAULT_X_MULTS, engine: EngineConfig | None = None,
                       gamma: float | None = None, check_preconditions: bool = True,
                       delta: float = 0.5, eps: float = 0.05) -> Surface:
    """Ratios ``P[S_{N(t)} in xA] / (floor(lambda(t)) P[X in xA])``.

    Thresholds use ``n = floor(lambda(t))``; cells share stream ids with the
    fixed-``n`` surface so deterministic arrivals reproduce it exactly.
    """
    if not vlaw.long_tailed:
        raise PreconditionError("claim law must be long-tailed")
    eng = engine or EngineConfig()
    notes = []
    if check_preconditions:
        tmax = max(t_list)
        pre_grid = sorted(set(float(t) for t in t_list) | {4.0 * tmax, 16.0 * tmax})
        lln = check_lln(cp, pre_grid, seed=eng.seed)
        lt = light_tail_trend(cp, pre_grid, delta, eps, seed=eng.seed)
        if lln.verdict is not Verdict.CONSISTENT or lt.verdict is not Verdict.CONSISTENT:
            raise PreconditionError(
                f"counting process fails its checks (lln={lln.verdict.value}, light tail={lt.verdict.value})")
        notes.append(f"preconditions checked on t in {pre_grid}")
    mu = fa_mean(vlaw, A, eng).value
    h = _threshold_fn(vlaw, gamma)
    cells = []
    for t in t_list:
        lam = lambda_mean(cp, t, seed=eng.seed).value
        n = int(math.floor(lam))
        if n < 1:
            raise PreconditionError(f"floor(lambda({t})) must be at least one")
        thr = float(h.inverse(n * (mu + 1.0)))
        for j, m in enumerate(x_mult_grid):
            def builder(t=t):
                return random_sum_statistic(vlaw, cp, A, t, seed=eng.seed)
            c = _run_cell(builder, vlaw, A, n, float(m), j, thr, f"t={t:g}", eng)
            cells.append(c)
    return Surface(cells, [float(m) for m in x_mult_grid], mu, h.exponent, notes=notes)


def pld_mrv_closed_form(vlaw: VectorLaw, A: RareSet, n_or_lambda: float, x: float) -> float:
    """``floor(n) mu(A) P[R > x]`` for an MRV law."""
    if not isinstance(vlaw, Mrv):
        raise PreconditionError("closed form needs an MRV law")
    if vlaw.alpha <= 1:
        raise MeanNotFinite("closed form needs alpha > 1")
    return math.floor(n_or_lambda) * mu_A(vlaw, A) * float(vlaw.radial.tail(x))
