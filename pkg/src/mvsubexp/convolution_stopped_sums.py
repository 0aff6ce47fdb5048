"""Convolutions over rare sets, n-fold sums, Kesten tables and randomly stopped sums."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import scalar_laws as sl
from .errors import MeanNotFinite, NotLongTailed, PreconditionError, TauOverflow, ViolatesKesten
from .mc_core import EngineConfig, Estimate, Method, ModuleTag, analytic_estimate, estimate_tail
from .paths import nfold_statistic, stopped_sum_statistic, sum_statistic
from .rare_sets import RareSet
from .trend import TrendReport, Verdict, ci_trend_report, trend_report
from .vector_laws import Mrv, VectorLaw, fa_mean, fa_tail, mu_A

__all__ = [
    "StoppedSumModel",
    "RatioPoint",
    "KestenTable",
    "SingleBigJumpReport",
    "convolution_tail_over_set",
    "maxsum_ratio",
    "nfold_tail",
    "nfold_ratio",
    "kesten_table",
    "stopped_sum_tail",
    "single_big_jump_report",
    "mrv_stopped_closed_form",
    "ratio_with_ci",
]


@dataclass(frozen=True)
class StoppedSumModel:
    vlaw: VectorLaw
    tau: sl.ScalarLaw

    def __post_init__(self):
        if not self.tau.discrete:
            raise PreconditionError("the stopping variable must be integer valued")
        if not math.isfinite(self.tau.mean()):
            raise PreconditionError("the stopping variable needs a finite mean")

    @property
    def mean_tau(self) -> float:
        return self.tau.mean()


@dataclass
class RatioPoint:
    x: float
    numerator: Estimate
    denominator: float
    ratio: float
    ratio_lo: float
    ratio_hi: float

    def row(self) -> dict[str, Any]:
        return {"x": self.x, "estimate": self.numerator.value, "stderr": self.numerator.stderr,
                "ci_lo": self.numerator.lo, "ci_hi": self.numerator.hi, "target": self.denominator,
                "ratio": self.ratio, "ratio_lo": self.ratio_lo, "ratio_hi": self.ratio_hi,
                "method": self.numerator.method.value}


def ratio_with_ci(x: float, num: Estimate, den: Estimate | float) -> RatioPoint:
    """Ratio of an estimate to a target; MC noise in the target widens the CI."""
    if isinstance(den, Estimate):
        d, d_rel = den.value, (den.stderr / den.value if den.value > 0 else math.inf)
    else:
        d, d_rel = float(den), 0.0
    if d <= 0:
        return RatioPoint(x, num, d, math.nan, math.nan, math.nan)
    ratio = num.value / d
    if d_rel == 0:
        lo, hi = num.lo / d, num.hi / d
    else:
        n_rel = num.stderr / num.value if num.value > 0 else math.inf
        half = 1.96 * ratio * math.hypot(n_rel, d_rel)
        lo, hi = max(0.0, ratio - half), ratio + half
    return RatioPoint(x, num, d, ratio, lo, hi)


def _cell_engine(engine: EngineConfig | None) -> EngineConfig:
    return engine or EngineConfig()


def _require_long_tailed(*vlaws: VectorLaw):
    for v in vlaws:
        if not v.long_tailed:
            raise NotLongTailed("summand laws must be long-tailed")


def convolution_tail_over_set(vlaw1: VectorLaw, vlaw2: VectorLaw, A: RareSet, x: float,
                              engine: EngineConfig | None = None, method: str = "splitting",
                              tag: int = ModuleTag.CONVOLUTION) -> Estimate:
    """P[X1 + X2 in xA]."""
    if vlaw1.dim != vlaw2.dim:
        raise ValueError("laws must have the same dimension")
    return estimate_tail(sum_statistic([vlaw1, vlaw2], A), x, method, _cell_engine(engine), tag=tag)


def _trend(points: list[RatioPoint], tol: float, label: str) -> TrendReport:
    rep = ci_trend_report([p.x for p in points], [p.ratio for p in points],
                          [p.ratio_lo for p in points], [p.ratio_hi for p in points], 1.0, tol, label=label)
    rep.extra["points"] = [p.row() for p in points]
    return rep


def maxsum_ratio(vlaw1: VectorLaw, vlaw2: VectorLaw, A: RareSet, x_grid: Sequence[float],
                 engine: EngineConfig | None = None, tol: float = 0.2) -> TrendReport:
    """P[X1 + X2 in xA] / (P[X1 in xA] + P[X2 in xA]) along ``x_grid``."""
    _require_long_tailed(vlaw1, vlaw2)
    eng = _cell_engine(engine)
    pts = []
    for j, x in enumerate(x_grid):
        num = convolution_tail_over_set(vlaw1, vlaw2, A, x, eng, tag=(ModuleTag.CONVOLUTION << 16) | j)
        d1, d2 = fa_tail(vlaw1, A, x, eng), fa_tail(vlaw2, A, x, eng)
        den = _sum_estimates(d1, d2)
        pts.append(ratio_with_ci(x, num, den))
    return _trend(pts, tol, "maxsum")


def _sum_estimates(*ests: Estimate) -> Estimate | float:
    if all(e.method is Method.ANALYTIC for e in ests):
        return float(sum(e.value for e in ests))
    v = sum(e.value for e in ests)
    se = math.sqrt(sum(e.stderr ** 2 for e in ests))
    return Estimate(v, se, math.inf, (max(0.0, v - 1.96 * se), v + 1.96 * se), Method.SPLITTING)


def nfold_tail(vlaw: VectorLaw, A: RareSet, n: int, x: float, engine: EngineConfig | None = None,
               method: str = "splitting", tag: int = ModuleTag.CONVOLUTION) -> Estimate:
    """P[X_1 + ... + X_n in xA]."""
    if n == 1:
        return fa_tail(vlaw, A, x, engine)
    return estimate_tail(nfold_statistic(vlaw, A, n), x, method, _cell_engine(engine), tag=tag)


def nfold_ratio(vlaw: VectorLaw, A: RareSet, n: int, x_grid: Sequence[float],
                engine: EngineConfig | None = None, tol: float = 0.2) -> TrendReport:
    """P[S_n in xA] / (n P[X in xA]); identically one for ``n = 1``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    grid = [float(x) for x in x_grid]
    if n == 1:
        return trend_report(grid, [1.0] * len(grid), 1.0, tol, label="nfold n=1")
    eng = _cell_engine(engine)
    pts = []
    for j, x in enumerate(grid):
        num = nfold_tail(vlaw, A, n, x, eng, tag=(ModuleTag.CONVOLUTION << 16) | (n << 6) | j)
        den = fa_tail(vlaw, A, x, eng)
        den_v = den.value * n if den.method is Method.ANALYTIC else den.scaled(n)
        pts.append(ratio_with_ci(x, num, den_v))
    return _trend(pts, tol, f"nfold n={n}")


@dataclass
class KestenTable:
    n_list: list[int]
    x_grid: list[float]
    K: np.ndarray
    K_se: np.ndarray
    sup_by_n: list[float]
    sup: float
    verdict: str
    c: float
    mean_fa: float
    x_values: np.ndarray | None = None
    x_relative: bool = False

    def x_at(self, i: int, j: int) -> float:
        return float(self.x_values[i, j]) if self.x_values is not None else self.x_grid[j]

    def rows(self) -> list[dict[str, Any]]:
        out = []
        for i, n in enumerate(self.n_list):
            for j in range(len(self.x_grid)):
                out.append({"key": f"n={n}", "x": self.x_at(i, j), "estimate": float(self.K[i, j]),
                            "stderr": float(self.K_se[i, j])})
        return out


def kesten_table(vlaw: VectorLaw, A: RareSet, c: float, n_max: int, x_grid: Sequence[float],
                 engine: EngineConfig | None = None, growth_tol: float = 0.1,
                 n_list: Sequence[int] | None = None, x_relative: bool = False) -> KestenTable:
    """Empirical ``K_n(x) = P[S_n in xA] / P[X in xA] * P[X in cnA]``.

    With ``x_relative`` the grid entries are multiples of ``c * n``, so every
    row looks at the same region relative to its own scale; otherwise the
    grid is absolute.  The verdict is ``"Bounded"`` when the row-wise
    supremum does not grow by more than ``growth_tol`` (beyond two standard
    errors) between consecutive entries among the three largest ``n``.
    """
    eng = _cell_engine(engine)
    mu = fa_mean(vlaw, A, eng).value
    if not c > mu:
        raise ViolatesKesten(f"c={c} must exceed the projected mean {mu:.6g}")
    ns = list(n_list) if n_list is not None else list(range(1, n_max + 1))
    if any(n < 1 or n > n_max for n in ns):
        raise ValueError("n_list entries must lie in [1, n_max]")
    grid = [float(x) for x in x_grid]
    if any(not x > 0 for x in grid):
        raise ValueError("grid entries must be positive")
    xv = np.array([[m * c * n if x_relative else m for m in grid] for n in ns])
    K = np.zeros((len(ns), len(grid)))
    K_se = np.zeros_like(K)
    for i, n in enumerate(ns):
        p_cn = fa_tail(vlaw, A, c * n, eng)
        for j in range(len(grid)):
            x = float(xv[i, j])
            den = fa_tail(vlaw, A, x, eng)
            if n == 1:
                K[i, j], K_se[i, j] = p_cn.value, p_cn.stderr
                continue
            num = nfold_tail(vlaw, A, n, x, eng, tag=(ModuleTag.CONVOLUTION << 16) | (n << 6) | j)
            K[i, j] = num.value / den.value * p_cn.value
            rel = math.hypot(num.stderr / num.value if num.value > 0 else 0.0,
                             den.stderr / den.value if den.value > 0 else 0.0)
            K_se[i, j] = K[i, j] * rel
    sup_by_n = K.max(axis=1)
    arg = K.argmax(axis=1)
    se_by_n = K_se[np.arange(len(ns)), arg]
    top = list(range(max(0, len(ns) - 3), len(ns)))
    grows = any(
        sup_by_n[b] > sup_by_n[a] * (1 + growth_tol) + 2 * math.hypot(se_by_n[a], se_by_n[b])
        for a, b in zip(top, top[1:])
    )
    verdict = "Unbounded" if grows or not np.all(np.isfinite(sup_by_n)) else "Bounded"
    return KestenTable(ns, grid, K, K_se, sup_by_n.tolist(), float(sup_by_n.max()), verdict, c, mu,
                       xv, x_relative)


def stopped_sum_tail(model: StoppedSumModel, A: RareSet, x: float, engine: EngineConfig | None = None,
                     method: str = "splitting", tag: int = ModuleTag.STOPPED) -> Estimate:
    """P[S_tau in xA]."""
    if not x > 0:
        raise ValueError("x must be positive")
    if float(model.tau.tail(0.0)) == 0.0:
        # tau = 0 almost surely: the empty sum never enters xA
        return analytic_estimate(0.0)
    if isinstance(model.tau, sl.Degenerate) and model.tau.value == 1:
        return fa_tail(model.vlaw, A, x, engine)
    stat = stopped_sum_statistic(model.vlaw, model.tau, A)
    return estimate_tail(stat, x, method, _cell_engine(engine), tag=tag)


@dataclass
class SingleBigJumpReport:
    ratios: TrendReport
    condition_grid: list[float]
    condition_ratios: list[float]
    condition_holds: bool
    c: float
    verdict: str
    points: list[RatioPoint] = field(default_factory=list)

    def summary(self) -> dict[str, Any]:
        return {"verdict": self.verdict, "condition_holds": self.condition_holds, "c": self.c,
                "ratio_verdict": self.ratios.verdict.value, "max_dev_last_k": self.ratios.max_dev_last_k}


def condition_ratios(model: StoppedSumModel, A: RareSet, x_grid: Sequence[float], c: float,
                     engine: EngineConfig | None = None) -> list[float]:
    """``P[c tau > x] / P[X in xA]`` on ``x_grid``."""
    out = []
    for x in x_grid:
        den = fa_tail(model.vlaw, A, x, engine).value
        out.append(float(model.tau.tail(x / c)) / den if den > 0 else math.inf)
    return out


def single_big_jump_report(model: StoppedSumModel, A: RareSet, x_grid: Sequence[float],
                           engine: EngineConfig | None = None, c: float | None = None,
                           tol: float = 0.2) -> SingleBigJumpReport:
    """Compare P[S_tau in xA] with E[tau] P[X in xA] and check the stopping-tail condition.

    The condition holds on the grid when ``P[c tau > x] / P[X in xA]`` is
    non-increasing and ends below ``0.1``; otherwise the report verdict is
    ``"ConditionSuspect"`` and the ratios are still reported.
    """
    eng = _cell_engine(engine)
    grid = [float(x) for x in x_grid]
    if c is None:
        c = fa_mean(model.vlaw, A, eng).value + 1.0
    cond = condition_ratios(model, A, grid, c, eng)
    holds = all(b <= a for a, b in zip(cond, cond[1:])) and cond[-1] < 0.1
    pts: list[RatioPoint] = []
    notes = []
    try:
        for j, x in enumerate(grid):
            num = stopped_sum_tail(model, A, x, eng, tag=(ModuleTag.STOPPED << 16) | j)
            den = fa_tail(model.vlaw, A, x, eng)
            den_v = den.value * model.mean_tau if den.method is Method.ANALYTIC else den.scaled(model.mean_tau)
            pts.append(ratio_with_ci(x, num, den_v))
        rep = _trend(pts, tol, "single big jump")
    except TauOverflow as exc:
        notes.append(str(exc))
        rep = TrendReport(grid, [math.nan] * len(grid), 1.0, Verdict.INCONCLUSIVE, math.nan, tol,
                          label="single big jump", notes=notes)
    verdict = rep.verdict.value if holds else "ConditionSuspect"
    return SingleBigJumpReport(rep, grid, cond, holds, c, verdict, pts)


def mrv_stopped_closed_form(model: StoppedSumModel, A: RareSet, x: float) -> float:
    """``E[tau] mu(A) P[R > x]`` for an MRV claim law."""
    if not isinstance(model.vlaw, Mrv):
        raise PreconditionError("closed form needs an MRV law")
    if model.vlaw.alpha <= 1:
        raise MeanNotFinite("closed form needs alpha > 1")
    return model.mean_tau * mu_A(model.vlaw, A) * float(model.vlaw.radial.tail(x))
