"""Deterministic trend diagnostics for univariate tail classes.

All convolution-type quantities are computed by quadrature against analytic
densities, in log space where the tails are tiny, so these serve as oracles
for the Monte Carlo modules.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from . import scalar_laws as sl
from .errors import InfMean, NotLongTailed
from .trend import TrendReport, Verdict, bounded_report, trend_report

__all__ = [
    "default_grid",
    "long_tail_ratio",
    "dominated_variation_ratio",
    "rv_ratio",
    "subexp_ratio",
    "strong_subexp_ratio",
    "strongly_subexp_ratio",
    "StronglySubexpReport",
    "two_fold_tail",
    "strong_subexp_integral",
    "DEFAULT_U_GRID",
]

TAIL_FLOOR = 1e-300
DEFAULT_U_GRID = (1.0, 2.0, 5.0, 10.0, 100.0, 1e6)
TOL_LR = 0.02
TOL_S = 0.05
_QUAD = dict(epsabs=0.0, epsrel=1e-10, limit=1000)


def default_grid(x0: float = 8.0, k_max: int = 17) -> list[float]:
    return [x0 * 2.0 ** k for k in range(k_max + 1)]


def _guarded(law: sl.ScalarLaw, grid: Sequence[float]) -> tuple[list[float], list[str]]:
    out, notes = [], []
    for x in grid:
        if float(law.tail(x)) < TAIL_FLOOR:
            notes.append(f"grid stopped at x={x:g}: tail below {TAIL_FLOOR:g}")
            break
        out.append(float(x))
    return out, notes


def _with_notes(rep: TrendReport, notes: list[str]) -> TrendReport:
    rep.notes.extend(notes)
    return rep


def _log_ratio(law: sl.ScalarLaw, num_x, den_x) -> float:
    return math.exp(float(law.log_tail(num_x)) - float(law.log_tail(den_x)))


def long_tail_ratio(law: sl.ScalarLaw, a: float = 1.0, grid: Sequence[float] | None = None,
                    tol: float = TOL_LR, k: int = 3) -> TrendReport:
    """tail(x - a) / tail(x), target 1."""
    if a < 0:
        raise ValueError("a must be non-negative")
    g, notes = _guarded(law, grid or default_grid())
    ratios = [_log_ratio(law, x - a, x) for x in g]
    return _with_notes(trend_report(g, ratios, 1.0, tol, k, label="long-tail"), notes)


def dominated_variation_ratio(law: sl.ScalarLaw, b: float = 0.5, grid: Sequence[float] | None = None,
                              spread: float = 0.10, k: int = 3) -> TrendReport:
    """tail(bx) / tail(x); Consistent when the last ratios agree to ``spread``."""
    if not 0 < b < 1:
        raise ValueError("b must lie in (0, 1)")
    g, notes = _guarded(law, grid or default_grid())
    ratios = [_log_ratio(law, b * x, x) for x in g]
    return _with_notes(bounded_report(g, ratios, spread, k, label="dominated variation"), notes)


def rv_ratio(law: sl.ScalarLaw, t: float = 2.0, grid: Sequence[float] | None = None,
             target: float | None = None, tol: float = TOL_LR, k: int = 3) -> TrendReport:
    """tail(tx) / tail(x) against ``t**-alpha`` (Pareto) or a caller target."""
    if not t > 0:
        raise ValueError("t must be positive")
    if target is None:
        if not isinstance(law, sl.Pareto):
            raise ValueError("a target is required for non-Pareto laws")
        target = t ** -law.alpha
    g, notes = _guarded(law, grid or default_grid())
    ratios = [_log_ratio(law, t * x, x) for x in g]
    return _with_notes(trend_report(g, ratios, target, tol, k, label="regular variation"), notes)


def _pieces(law: sl.ScalarLaw, a: float, b: float) -> list[tuple[float, float]]:
    """Split [a, b] at the support start and geometrically toward the ends."""
    pts = {a, b}
    s = law.support_start
    if a < s < b:
        pts.add(s)
    lo = max(a, s if s > 0 else a)
    # geometric cuts help quadrature with integrable singularities and long ranges
    if lo > 0:
        c = lo * 2.0
        while c < b:
            pts.add(c)
            c *= 4.0
    elif b > 1:
        c = 1.0
        while c < b:
            pts.add(c)
            c *= 4.0
    return list(zip(sorted(pts)[:-1], sorted(pts)[1:]))


def _quad(f, lo, hi) -> float:
    # round-off warnings appear once the integrand is resolved to machine precision
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return integrate.quad(f, lo, hi, **_QUAD)[0]


def _quad_scaled(f, law, a, b) -> float:
    return sum(_quad(f, lo, hi) for lo, hi in _pieces(law, a, b) if hi > lo)


def two_fold_tail(law: sl.ScalarLaw, x: float) -> float:
    """P[Y1 + Y2 > x] relative to tail(x), i.e. the subexponential ratio.

    Uses ``P[Y1 + Y2 > x] = 2 int_0^{x/2} tail(x - y) dV(y) + tail(x/2)^2``
    and divides every term by ``tail(x)`` in log space.
    """
    if law.discrete:
        raise NotLongTailed("two-fold tails need a law with a density")
    lt = float(law.log_tail(x))
    half = x / 2.0

    def f(y):
        return math.exp(float(law.log_tail(x - y)) + float(law.log_pdf(y)) - lt)

    lo = law.support_start
    integral = _quad_scaled(f, law, lo, half) if half > lo else 0.0
    sq = math.exp(2.0 * float(law.log_tail(half)) - lt)
    return 2.0 * integral + sq


def strong_subexp_integral(law: sl.ScalarLaw, x: float, split: bool = True) -> float:
    """int_0^x tail(x - y) tail(y) dy / tail(x)."""
    lt = float(law.log_tail(x))

    def f(y):
        return math.exp(float(law.log_tail(x - y)) + float(law.log_tail(y)) - lt)

    if split:
        return 2.0 * _quad_scaled(f, law, 0.0, x / 2.0)
    return _quad_scaled(f, law, 0.0, x / 2.0) + _quad_scaled(lambda y: f(x - y), law, 0.0, x / 2.0)


def subexp_ratio(law: sl.ScalarLaw, grid: Sequence[float] | None = None, tol: float = TOL_S,
                 k: int = 3) -> TrendReport:
    """P[Y1 + Y2 > x] / tail(x), target 2."""
    if not law.long_tailed and isinstance(law, (sl.Degenerate, sl.Geometric)):
        raise NotLongTailed(f"{law.family} is not long-tailed")
    g, notes = _guarded(law, grid or default_grid())
    ratios = []
    for x in g:
        try:
            ratios.append(two_fold_tail(law, x))
        except (OverflowError, ValueError):
            ratios.append(math.nan)
    rep = trend_report(g, ratios, 2.0, tol, k, label="subexponential")
    return _with_notes(rep, notes)


def _require_mean(law: sl.ScalarLaw) -> float:
    m = law.mean()
    if not math.isfinite(m):
        raise InfMean(f"{law.family} has infinite mean")
    return m


def strong_subexp_ratio(law: sl.ScalarLaw, grid: Sequence[float] | None = None, tol: float = TOL_S,
                        k: int = 3) -> TrendReport:
    """int_0^x tail(x - y) tail(y) dy / (2 mean tail(x)), target 1."""
    mu = _require_mean(law)
    g, notes = _guarded(law, grid or default_grid())
    ratios = [strong_subexp_integral(law, x) / (2.0 * mu) for x in g]
    return _with_notes(trend_report(g, ratios, 1.0, tol, k, label="strong subexponential"), notes)


class _TruncatedLaw:
    """Law V_u with tail T_u(x) = min(1, int_x^{x+u} tail) for x >= 0.

    ``T_u`` is non-increasing; below the clamp point ``c`` it equals one, so
    the law has an atom at zero of mass ``1 - T_u(0)`` and density
    ``tail(y) - tail(y + u)`` on ``(c, inf)``.
    """

    def __init__(self, law: sl.ScalarLaw, u: float):
        self.law, self.u = law, u
        self.c = self._clamp_point()

    def _raw(self, x: float) -> float:
        return self.law.tail_integral(x, x + self.u)

    def _clamp_point(self) -> float:
        if self._raw(0.0) <= 1.0:
            return 0.0
        lo, hi = 0.0, 1.0
        while self._raw(hi) > 1.0:
            lo, hi = hi, hi * 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self._raw(mid) > 1.0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-13 * max(1.0, hi):
                break
        return hi

    def tail(self, x: float) -> float:
        if x < 0:
            return 1.0
        return min(1.0, self._raw(x))

    def log_tail(self, x: float) -> float:
        v = self.tail(x)
        return math.log(v) if v > 0 else -math.inf

    def density(self, y: float) -> float:
        if y <= self.c:
            return 0.0
        return float(self.law.tail(y)) - float(self.law.tail(y + self.u))

    @property
    def atom0(self) -> float:
        return 1.0 - self.tail(0.0) if self.c == 0.0 else 0.0

    def two_fold_ratio(self, x: float) -> float:
        """P[W1 + W2 > x] / T_u(x) for i.i.d. W ~ V_u."""
        tx = self.tail(x)
        if tx <= 0:
            return math.nan
        half = x / 2.0

        def f(y):
            return self.tail(x - y) * self.density(y) / tx

        a = self.c
        integral = 0.0
        if half > a:
            integral = _quad_scaled(f, self.law, a, half)
        atom_part = self.atom0 * self.tail(x) / tx
        sq = self.tail(half) ** 2 / tx
        # both copies may carry the big value; the y <= x/2 split counts each once
        return 2.0 * (integral + atom_part) + sq


@dataclass
class StronglySubexpReport:
    per_u: dict[float, TrendReport]
    uniform_max_dev: float
    verdict: Verdict
    notes: list[str] = field(default_factory=list)


def strongly_subexp_ratio(law: sl.ScalarLaw, u_grid: Sequence[float] = DEFAULT_U_GRID,
                          x_grid: Sequence[float] | None = None, tol: float = TOL_S,
                          k: int = 3) -> StronglySubexpReport:
    """Subexponential ratio of the truncated-tail laws V_u for each ``u``."""
    _require_mean(law)
    grid, notes = _guarded(law, x_grid or default_grid())
    notes.append("uniformity over u is checked on a finite grid only")
    per_u: dict[float, TrendReport] = {}
    last_devs = []
    for u in u_grid:
        if u < 1:
            raise ValueError("u must be >= 1")
        tl = _TruncatedLaw(law, float(u))
        g = [x for x in grid if tl.tail(x) > TAIL_FLOOR]
        ratios = [tl.two_fold_ratio(x) for x in g]
        rep = trend_report(g, ratios, 2.0, tol, k, label=f"V_u u={u:g}")
        per_u[float(u)] = rep
        if rep.ratios:
            last_devs.append(abs(rep.ratios[-1] - 2.0) / 2.0)
    verdicts = [r.verdict for r in per_u.values()]
    if all(v is Verdict.CONSISTENT for v in verdicts):
        verdict = Verdict.CONSISTENT
    elif any(v is Verdict.INCONSISTENT for v in verdicts):
        verdict = Verdict.INCONSISTENT
    else:
        verdict = Verdict.INCONCLUSIVE
    return StronglySubexpReport(per_u, max(last_devs) if last_devs else math.nan, verdict, notes)
