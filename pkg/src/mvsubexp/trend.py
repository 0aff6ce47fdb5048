"""Trend-level verdicts for ratios that should converge to a target."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any

import numpy as np

__all__ = ["Verdict", "TrendReport", "trend_report", "bounded_report", "ci_trend_report"]

# deviations below this are treated as equal when checking monotonicity
DEV_FLOOR = 1e-12


class Verdict(str, enum.Enum):
    CONSISTENT = "Consistent"
    INCONSISTENT = "Inconsistent"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class TrendReport:
    grid: list[float]
    ratios: list[float]
    target: float
    verdict: Verdict
    max_dev_last_k: float
    tol: float = 0.05
    k: int = 3
    label: str = ""
    notes: list[str] = field(default_factory=list)
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def deviations(self) -> list[float]:
        return [_dev(r, self.target) for r in self.ratios]

    @property
    def consistent(self) -> bool:
        return self.verdict is Verdict.CONSISTENT

    def rows(self) -> list[dict[str, float]]:
        return [
            {"x": x, "ratio": r, "target": self.target, "dev": d}
            for x, r, d in zip(self.grid, self.ratios, self.deviations)
        ]

    def summary(self) -> dict[str, Any]:
        out = {
            "label": self.label,
            "verdict": self.verdict.value,
            "max_dev_last_k": self.max_dev_last_k,
            "target": self.target,
            "tol": self.tol,
            "k": self.k,
        }
        if self.notes:
            out["notes"] = list(self.notes)
        return out


def _dev(ratio: float, target: float) -> float:
    if target == 0:
        return abs(ratio)
    return abs(ratio - target) / abs(target)


def trend_report(grid, ratios, target: float, tol: float, k: int = 3, label: str = "") -> TrendReport:
    """Consistent iff the last ``k`` deviations are all within ``tol`` and
    non-increasing.  Non-finite ratios make the report Inconclusive."""
    grid = [float(g) for g in grid]
    ratios = [float(r) for r in ratios]
    if len(ratios) < k:
        return TrendReport(grid, ratios, target, Verdict.INCONCLUSIVE, float("nan"), tol, k, label,
                           notes=[f"only {len(ratios)} grid points"])
    tail = ratios[-k:]
    if not all(np.isfinite(tail)):
        return TrendReport(grid, ratios, target, Verdict.INCONCLUSIVE, float("nan"), tol, k, label,
                           notes=["non-finite ratio on the last grid points"])
    devs = [_dev(r, target) for r in tail]
    within = max(devs) <= tol
    monotone = all(b <= a + DEV_FLOOR for a, b in zip(devs, devs[1:]))
    verdict = Verdict.CONSISTENT if within and monotone else Verdict.INCONSISTENT
    return TrendReport(grid, ratios, target, verdict, max(devs), tol, k, label)


def bounded_report(grid, ratios, spread: float = 0.10, k: int = 3, label: str = "") -> TrendReport:
    """Boundedness verdict: the last ``k`` finite ratios agree to ``spread``."""
    grid = [float(g) for g in grid]
    ratios = [float(r) for r in ratios]
    tail = ratios[-k:]
    if len(tail) < k:
        return TrendReport(grid, ratios, float("nan"), Verdict.INCONCLUSIVE, float("nan"), spread, k, label)
    if not all(np.isfinite(tail)):
        return TrendReport(grid, ratios, float("nan"), Verdict.INCONSISTENT, float("inf"), spread, k, label,
                           notes=["ratio overflowed"])
    lo, hi = min(tail), max(tail)
    rel = (hi - lo) / hi if hi > 0 else 0.0
    verdict = Verdict.CONSISTENT if rel <= spread else Verdict.INCONSISTENT
    return TrendReport(grid, ratios, tail[-1], verdict, rel, spread, k, label)


def ci_trend_report(grid, ratios, ratio_lo, ratio_hi, target: float, tol: float,
                    k: int = 3, max_rel_halfwidth: float = 0.5, label: str = "") -> TrendReport:
    """Trend verdict for Monte Carlo ratios.

    Consistent when the last ``k`` point estimates lie within ``tol`` of the
    target, or when each of their confidence intervals reaches the
    ``tol``-band.  Inconsistent when some interval on the last ``k`` points
    misses the band entirely.  Inconclusive when the intervals are too wide
    to decide (relative half-width above ``max_rel_halfwidth``).
    """
    grid = [float(g) for g in grid]
    ratios = [float(r) for r in ratios]
    lo = [float(v) for v in ratio_lo]
    hi = [float(v) for v in ratio_hi]
    base = trend_report(grid, ratios, target, tol, k, label)
    if len(ratios) < k:
        return base
    band_lo, band_hi = target * (1 - tol), target * (1 + tol)
    idx = range(len(ratios) - k, len(ratios))
    if any(not np.isfinite(hi[i]) or not np.isfinite(lo[i]) for i in idx):
        base.verdict = Verdict.INCONCLUSIVE
        base.notes.append("missing confidence interval")
        return base
    misses = [i for i in idx if hi[i] < band_lo or lo[i] > band_hi]
    wide = [i for i in idx if ratios[i] > 0 and (hi[i] - lo[i]) / (2 * ratios[i]) > max_rel_halfwidth]
    if misses:
        base.verdict = Verdict.INCONSISTENT
    elif all(_dev(ratios[i], target) <= tol for i in idx):
        base.verdict = Verdict.CONSISTENT
    elif wide:
        base.verdict = Verdict.INCONCLUSIVE
        base.notes.append("confidence intervals too wide")
    else:
        base.verdict = Verdict.CONSISTENT
        base.notes.append("consistent within confidence intervals")
    return base
