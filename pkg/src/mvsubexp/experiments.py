"""Dispatch validated experiment configs to the library and collect results."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy import optimize

from . import class_diagnostics as cd
from . import config as C
from . import scalar_laws as sl
from .convolution_stopped_sums import (
    StoppedSumModel,
    kesten_table,
    maxsum_ratio,
    mrv_stopped_closed_form,
    nfold_ratio,
    single_big_jump_report,
)
from .errors import PreconditionError
from .large_deviations import pld_fixed_n_surface, pld_random_surface
from .mc_core import EngineConfig, Estimate, Method, ModuleTag, estimate_crude, estimate_tail, LatentStatistic
from .rare_sets import grid_scan_projection, make_ruin_translate
from .risk_engine import (
    RiskModel,
    check_assumption_62,
    entrance_and_ruin,
    mrv_closed_form,
    theorem61_asymptote,
    weighted_sum_uniformity,
)
from .trend import TrendReport, Verdict
from .vector_laws import Mrv, fa_tail, mu_A

__all__ = ["ExperimentResult", "run_experiment", "CSV_COLUMNS", "solve_x_for_target", "build_risk_model"]

CSV_COLUMNS = ("experiment", "name", "key", "x", "estimate", "stderr", "ci_lo", "ci_hi", "target",
               "ratio", "ratio_lo", "ratio_hi", "method", "status")


@dataclass
class ExperimentResult:
    name: str
    kind: str
    verdict: str
    summary: dict[str, Any]
    rows: list[dict[str, Any]] = field(default_factory=list)
    estimates: list[Estimate] = field(default_factory=list)
    elapsed_s: float = 0.0

    @property
    def zero_hit_fraction(self) -> float:
        mc = [e for e in self.estimates if e.method is not Method.ANALYTIC]
        return sum(e.zero_hit for e in mc) / len(mc) if mc else 0.0

    def report(self) -> dict[str, Any]:
        return {"name": self.name, "experiment": self.kind, "verdict": self.verdict,
                "summary": self.summary, "zero_hit_fraction": self.zero_hit_fraction,
                "elapsed_s": round(self.elapsed_s, 3)}


def _trend_rows(rep: TrendReport, key: str = "") -> list[dict[str, Any]]:
    if "points" in rep.extra:
        return [dict(p, key=key) for p in rep.extra["points"]]
    return [{"key": key, "x": r["x"], "ratio": r["ratio"], "target": r["target"]} for r in rep.rows()]


def _points_estimates(rep: TrendReport) -> list[Estimate]:
    return [Estimate(p["estimate"], p["stderr"], 0, (p["ci_lo"], p["ci_hi"]), Method(p["method"]),
                     zero_hit=p["estimate"] == 0 and p["method"] != "analytic")
            for p in rep.extra.get("points", [])]


# -- class diagnostics -------------------------------------------------------

def _class_diag(exp: C.ClassDiagExp, eng: EngineConfig) -> ExperimentResult:
    law = exp.law.build()
    grid = cd.default_grid(exp.x0, exp.k_max)
    runners: dict[str, Callable[[], Any]] = {
        "L": lambda: cd.long_tail_ratio(law, grid=grid),
        "D": lambda: cd.dominated_variation_ratio(law, grid=grid),
        "R": lambda: cd.rv_ratio(law, grid=grid),
        "S": lambda: cd.subexp_ratio(law, grid=grid),
        "S*": lambda: cd.strong_subexp_ratio(law, grid=grid),
        "S_*": lambda: cd.strongly_subexp_ratio(law, x_grid=grid),
    }
    verdicts, rows = {}, []
    for cls in exp.classes:
        try:
            rep = runners[cls]()
        except (PreconditionError, ValueError) as exc:
            verdicts[cls] = f"NotApplicable: {exc}"
            continue
        if isinstance(rep, cd.StronglySubexpReport):
            verdicts[cls] = rep.verdict.value
            for u, r in rep.per_u.items():
                rows += _trend_rows(r, f"{cls} u={u:g}")
        else:
            verdicts[cls] = rep.verdict.value
            rows += _trend_rows(rep, cls)
    return ExperimentResult(exp.name, exp.experiment, "Completed",
                            {"law": exp.law.model_dump(), "classes": verdicts}, rows)


# -- convolution and stopped sums -------------------------------------------

def _trend_result(exp, rep: TrendReport, summary: dict[str, Any] | None = None) -> ExperimentResult:
    s = rep.summary()
    s.update(summary or {})
    return ExperimentResult(exp.name, exp.experiment, rep.verdict.value, s, _trend_rows(rep),
                            _points_estimates(rep))


def _maxsum(exp: C.MaxsumExp, eng: EngineConfig) -> ExperimentResult:
    rep = maxsum_ratio(C.build_vector_law(exp.law1), C.build_vector_law(exp.law2), C.build_set(exp.set),
                       exp.x_grid, eng, exp.tol)
    return _trend_result(exp, rep)


def _nfold(exp: C.NfoldExp, eng: EngineConfig) -> ExperimentResult:
    rep = nfold_ratio(C.build_vector_law(exp.law), C.build_set(exp.set), exp.n, exp.x_grid, eng, exp.tol)
    return _trend_result(exp, rep, {"n": exp.n})


def _kesten(exp: C.KestenExp, eng: EngineConfig) -> ExperimentResult:
    tab = kesten_table(C.build_vector_law(exp.law), C.build_set(exp.set), exp.c, exp.n_max, exp.x_grid, eng,
                       exp.growth_tol, exp.n_list, exp.x_relative)
    rows = [{"key": r["key"], "x": r["x"], "estimate": r["estimate"], "stderr": r["stderr"]} for r in tab.rows()]
    summary = {"sup": tab.sup, "sup_by_n": dict(zip(map(str, tab.n_list), tab.sup_by_n)), "c": tab.c,
               "mean_fa": tab.mean_fa, "x_relative": tab.x_relative}
    return ExperimentResult(exp.name, exp.experiment, tab.verdict, summary, rows)


def _stopped_sum(exp: C.StoppedSumExp, eng: EngineConfig) -> ExperimentResult:
    vlaw, A = C.build_vector_law(exp.law), C.build_set(exp.set)
    model = StoppedSumModel(vlaw, exp.tau.build())
    rep = single_big_jump_report(model, A, exp.x_grid, eng, exp.c, exp.tol)
    rows = [dict(p.row(), key="ratio") for p in rep.points]
    rows += [{"key": "condition", "x": x, "ratio": r} for x, r in zip(rep.condition_grid, rep.condition_ratios)]
    summary = rep.summary()
    summary["condition_ratios"] = rep.condition_ratios
    summary["ratios"] = rep.ratios.ratios
    summary["ratio_ci"] = [[p.ratio_lo, p.ratio_hi] for p in rep.points]
    ests = [p.numerator for p in rep.points]
    if isinstance(vlaw, Mrv):
        closed, inside, mu_checks = [], [], []
        mu = mu_A(vlaw, A)
        for p in rep.points:
            cf = mrv_stopped_closed_form(model, A, p.x)
            closed.append(cf)
            inside.append(p.numerator.lo <= cf <= p.numerator.hi)
            rows.append({"key": "closed_form", "x": p.x, "estimate": p.numerator.value, "ci_lo": p.numerator.lo,
                         "ci_hi": p.numerator.hi, "target": cf, "ratio": p.numerator.value / cf})
        for j, x in enumerate(exp.x_grid):
            est = fa_tail(vlaw, A, x, eng, method="splitting")
            ests.append(est)
            rel = abs(est.value / float(vlaw.radial.tail(x)) - mu) / mu
            mu_checks.append(rel)
            rows.append({"key": "mu_check", "x": x, "estimate": est.value, "stderr": est.stderr,
                         "ci_lo": est.lo, "ci_hi": est.hi, "target": mu * float(vlaw.radial.tail(x)),
                         "ratio": est.value / (mu * float(vlaw.radial.tail(x))), "method": est.method.value})
        summary.update({"closed_form": closed, "closed_form_inside_ci": inside, "mu_A": mu,
                        "mu_rel_error": mu_checks})
    return ExperimentResult(exp.name, exp.experiment, rep.verdict, summary, rows, ests)


# -- large deviations --------------------------------------------------------

def _surface_result(exp, surf, summary_extra: dict[str, Any]) -> ExperimentResult:
    ok = [c for c in surf.cells if c.status == "ok"]
    within = all(abs(c.ratio - 1) <= exp.tol for c in ok)
    verdict = Verdict.CONSISTENT.value if ok and within and surf.monotone_in_mult else Verdict.INCONSISTENT.value
    if not ok:
        verdict = Verdict.INCONCLUSIVE.value
    rows = [c.row() for c in surf.cells]
    summary = {"max_dev": surf.max_dev, "max_dev_by_mult": {str(k): v for k, v in surf.max_dev_by_mult.items()},
               "monotone_in_mult": surf.monotone_in_mult, "mean_fa": surf.mean_fa, "gamma": surf.gamma,
               "tol": exp.tol, "unreachable": sum(c.status != "ok" for c in surf.cells), "notes": surf.notes}
    summary.update(summary_extra)
    return ExperimentResult(exp.name, exp.experiment, verdict, summary, rows,
                            [c.estimate for c in ok if c.estimate is not None])


def _pld_fixed(exp: C.PldFixedExp, eng: EngineConfig) -> ExperimentResult:
    surf = pld_fixed_n_surface(C.build_vector_law(exp.law), C.build_set(exp.set), exp.n_list, exp.x_mults,
                               eng, exp.gamma)
    return _surface_result(exp, surf, {"n_list": exp.n_list})


def _pld_random(exp: C.PldRandomExp, eng: EngineConfig) -> ExperimentResult:
    surf = pld_random_surface(C.build_vector_law(exp.law), C.build_arrivals(exp.arrivals), C.build_set(exp.set),
                              exp.t_list, exp.x_mults, eng, exp.gamma, exp.check_preconditions, exp.delta, exp.eps)
    return _surface_result(exp, surf, {"t_list": exp.t_list})


# -- risk model --------------------------------------------------------------

def build_risk_model(spec: C.RiskModelSpec) -> RiskModel:
    return RiskModel(C.build_vector_law(spec.claims), C.build_arrivals(spec.arrivals), tuple(spec.allocation),
                     tuple(p.cap for p in spec.premiums), spec.interest, spec.horizon)


def solve_x_for_target(model: RiskModel, A, t: float, target: float, engine: EngineConfig | None = None) -> float:
    """Level ``x`` at which the uniform asymptote equals ``target``."""
    def f(logx):
        return math.log(theorem61_asymptote(model, A, math.exp(logx), t, engine)) - math.log(target)

    lo, hi = 0.0, 2.0
    while f(hi) > 0:
        lo, hi = hi, hi * 2
        if hi > 200:
            raise PreconditionError("target is below the reachable range")
    if f(lo) < 0:
        raise PreconditionError("target is above the asymptote at x=1")
    return math.exp(optimize.brentq(f, lo, hi, xtol=1e-12))


def _risk(exp, eng: EngineConfig, which: str) -> ExperimentResult:
    model = build_risk_model(exp.model)
    if which == "ruin":
        A = make_ruin_translate(exp.model.allocation, exp.ruin_kind)
    else:
        A = C.build_set(exp.set)
    rows, ests, ratios, ordered, closed_inside = [], [], [], [], []
    for t in exp.t_list:
        xs = exp.x_list if exp.x_list is not None else [solve_x_for_target(model, A, t, exp.target, eng)]
        for x in xs:
            ent, ruin = entrance_and_ruin(model, A, x, t, eng)
            asym = theorem61_asymptote(model, A, x, t, eng)
            est = ruin if which == "ruin" else ent
            ests.append(est)
            ordered.append(ruin.value <= ent.value)
            ratios.append(est.value / asym)
            row = {"key": f"t={t:g}", "x": x, "estimate": est.value, "stderr": est.stderr, "ci_lo": est.lo,
                   "ci_hi": est.hi, "target": asym, "ratio": est.value / asym, "ratio_lo": est.lo / asym,
                   "ratio_hi": est.hi / asym, "method": est.method.value}
            rows.append(row)
            other = ent if which == "ruin" else ruin
            rows.append({"key": f"t={t:g} {'entrance' if which == 'ruin' else 'ruin'}", "x": x,
                         "estimate": other.value, "stderr": other.stderr, "ci_lo": other.lo, "ci_hi": other.hi,
                         "target": asym, "ratio": other.value / asym, "method": other.method.value})
            if isinstance(model.claims, Mrv):
                cf = mrv_closed_form(model, A, x, t, eng)
                closed_inside.append(est.lo <= cf <= est.hi)
                rows.append({"key": f"t={t:g} closed_form", "x": x, "estimate": est.value, "target": cf,
                             "ratio": est.value / cf})
    within = all(abs(r - 1) <= exp.tol for r in ratios)
    summary = {"ratios": ratios, "tol": exp.tol, "ruin_le_entrance": all(ordered)}
    if closed_inside:
        summary["closed_form_inside_ci"] = closed_inside
    verdict = Verdict.CONSISTENT.value if within else Verdict.INCONSISTENT.value
    return ExperimentResult(exp.name, exp.experiment, verdict, summary, rows, ests)


def _delayed_summability(exp: C.DelayedSummabilityExp, eng: EngineConfig) -> ExperimentResult:
    model = build_risk_model(exp.model)
    res = check_assumption_62(model, C.build_set(exp.set), exp.c, exp.T_star, exp.n_cap, eng, exp.budget)
    rows = [{"key": f"n={n}", "x": float(n), "estimate": float(a), "target": float(b),
             "ratio": float(a / b) if b > 0 else math.nan, "method": res.method}
            for n, a, b in zip(range(1, exp.n_cap + 1), res.terms_659, res.terms_660)]
    summary = res.summary()
    summary["max_term_gap"] = res.max_term_gap
    return ExperimentResult(exp.name, exp.experiment, res.verdict, summary, rows)


def _weighted(exp: C.WeightedUniformityExp, eng: EngineConfig) -> ExperimentResult:
    rep = weighted_sum_uniformity(C.build_vector_law(exp.law), C.build_set(exp.set), exp.n, exp.a, exp.b,
                                  exp.c_samples, exp.x_grid, eng, exp.tol)
    res = _trend_result(exp, rep, {"max_dev_at_tail": rep.extra["max_dev_at_tail"]})
    res.summary["max_dev_at_tail"] = rep.extra["max_dev_at_tail"]
    return res


# -- engine plumbing checks --------------------------------------------------

def _projection(exp: C.ProjectionExp, eng: EngineConfig) -> ExperimentResult:
    from .mc_core import RngStream, stream_id

    rows, mism, errs = [], 0, []
    for i, spec in enumerate(exp.sets):
        A = C.build_set(spec)
        rng = RngStream(eng.seed, stream_id(ModuleTag.ENGINE_TEST, i)).generator()
        x = rng.exponential(3.0, (exp.n_pairs, A.dim))
        s = rng.exponential(2.0, exp.n_pairs) + 1e-9
        bad = int(np.sum(A.contains(x, s) != (A.y_projection(x) > s)))
        err = float(np.max(np.abs(grid_scan_projection(A, x, exp.delta) - A.y_projection(x))))
        mism += bad
        errs.append(err)
        rows.append({"key": A.label, "x": float(exp.n_pairs), "estimate": float(bad), "target": 0.0,
                     "ratio": err, "status": "ok" if bad == 0 and err <= exp.delta else "fail"})
    ok = mism == 0 and max(errs) <= exp.delta
    return ExperimentResult(exp.name, exp.experiment, Verdict.CONSISTENT.value if ok else Verdict.INCONSISTENT.value,
                            {"mismatches": mism, "max_oracle_error": max(errs), "delta": exp.delta}, rows)


def _engine_integrity(exp: C.EngineIntegrityExp, eng: EngineConfig) -> ExperimentResult:
    """Splitting against crude Monte Carlo on Pareto exceedances with P near 1e-2."""
    rows, ests, overlaps = [], [], []
    alphas = np.linspace(1.2, 4.0, exp.n_events)
    for i, a in enumerate(alphas):
        law = sl.Pareto(float(a))
        x = float(law.isf(1e-2)) * (1 + 0.05 * (i % 3))
        stat = LatentStatistic(1, lambda z, law=law: law.from_normal(z[:, 0]))
        e_eng = EngineConfig(seed=eng.seed + i, workers=eng.workers, budget=exp.budget, chunk_size=eng.chunk_size,
                             splitting=eng.splitting)
        sp = estimate_tail(stat, x, "splitting", e_eng, tag=(int(ModuleTag.ENGINE_TEST) << 16) | i)
        cr = estimate_tail(stat, x, "crude", e_eng, tag=(int(ModuleTag.ENGINE_TEST) << 16) | (1 << 15) | i)
        truth = float(law.tail(x))
        overlap = sp.lo <= cr.hi and cr.lo <= sp.hi
        overlaps.append(overlap)
        ests += [sp, cr]
        for e in (sp, cr):
            rows.append({"key": f"alpha={a:.3f}", "x": x, "estimate": e.value, "stderr": e.stderr, "ci_lo": e.lo,
                         "ci_hi": e.hi, "target": truth, "ratio": e.value / truth, "method": e.method.value,
                         "status": "overlap" if overlap else "disjoint"})
    zero = estimate_crude(lambda rng, m: np.zeros(m, dtype=bool), exp.budget, eng.seed, ModuleTag.ENGINE_TEST,
                          eng.chunk_size, eng.workers)
    rule_of_three = zero.zero_hit and zero.value == 0 and math.isclose(zero.hi, 3.0 / exp.budget)
    stat0 = LatentStatistic(1, lambda z: sl.Pareto(2.0).from_normal(z[:, 0]))
    r1 = estimate_tail(stat0, 10.0, "splitting", eng, tag=ModuleTag.ENGINE_TEST)
    r2 = estimate_tail(stat0, 10.0, "splitting", eng, tag=ModuleTag.ENGINE_TEST)
    identical = r1.value == r2.value and r1.ci95 == r2.ci95 and r1.stderr == r2.stderr
    ok = all(overlaps) and rule_of_three and identical
    summary = {"overlaps": sum(overlaps), "events": len(overlaps), "rule_of_three": rule_of_three,
               "rerun_identical": identical}
    return ExperimentResult(exp.name, exp.experiment, Verdict.CONSISTENT.value if ok else Verdict.INCONSISTENT.value,
                            summary, rows, ests)


_DISPATCH: dict[str, Callable[[Any, EngineConfig], ExperimentResult]] = {
    "class_diag": _class_diag,
    "maxsum": _maxsum,
    "nfold": _nfold,
    "kesten": _kesten,
    "stopped_sum": _stopped_sum,
    "pld_fixed": _pld_fixed,
    "pld_random": _pld_random,
    "entrance": lambda e, g: _risk(e, g, "entrance"),
    "ruin": lambda e, g: _risk(e, g, "ruin"),
    "assumption62": _delayed_summability,
    "weighted_uniformity": _weighted,
    "projection": _projection,
    "engine_integrity": _engine_integrity,
}


def run_experiment(exp, engine: EngineConfig) -> ExperimentResult:
    t0 = time.perf_counter()
    res = _DISPATCH[exp.experiment](exp, engine)
    res.elapsed_s = time.perf_counter() - t0
    if not res.name:
        res.name = exp.experiment
    return res
