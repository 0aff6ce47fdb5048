import math

import numpy as np
import pytest
from scipy import integrate, stats

from mvsubexp import scalar_laws as sl
from mvsubexp.counting import (
    CountingProcess,
    count_paths,
    counting_from_config,
    cyclic,
    geometric_storm,
    lambda_mean,
    renewal,
    simulate_counting,
)
from mvsubexp.errors import ArrivalOverflow, MeanNotFinite, PreconditionError
from mvsubexp.large_deviations import (
    check_light_tail,
    check_lln,
    light_tail_trend,
    pld_fixed_n_surface,
    pld_mrv_closed_form,
    pld_random_surface,
    reference_law,
)
from mvsubexp.mc_core import EngineConfig, Method, SplittingConfig
from mvsubexp.rare_sets import make_halfspace_set
from mvsubexp.trend import Verdict
from mvsubexp.vector_laws import Independent, Lwqd, Mrv

POISSON = renewal(sl.Exponential(1.0))
UNIT = renewal(sl.Degenerate(1.0))


def alternating_lambda_oracle(t: float, n_max: int = 120) -> float:
    """sum_n P[tau_n <= t] for alternating Exp(1), Exp(2) gaps, via gamma convolution."""
    total = 0.0
    for n in range(1, n_max + 1):
        a, b = (n + 1) // 2, n // 2
        if b == 0:
            p = stats.gamma.cdf(t, a)
        else:
            p = integrate.quad(lambda s: stats.gamma.pdf(s, a) * stats.gamma.cdf(t - s, b, scale=0.5),
                               0, t, epsabs=1e-13)[0]
        total += p
        if p < 1e-15:
            break
    return total


class TestSimulation:
    def test_unit_gaps(self, rng):
        n, ep = simulate_counting(UNIT, 3.5, rng)
        assert n == 3
        np.testing.assert_array_equal(ep, [1.0, 2.0, 3.0])

    def test_time_zero(self, rng):
        assert simulate_counting(POISSON, 0.0, rng)[0] == 0

    def test_negative_time(self, rng):
        with pytest.raises(ValueError):
            simulate_counting(POISSON, -1.0, rng)

    def test_poisson_mean_paths(self, rng):
        counts = count_paths(POISSON, 10.0, 100_000, rng)
        se = math.sqrt(10.0 / 100_000)
        assert abs(counts.mean() - 10.0) < 3 * se

    def test_single_path_agrees_in_law(self, rng):
        counts = [simulate_counting(POISSON, 4.0, rng)[0] for _ in range(4000)]
        assert abs(np.mean(counts) - 4.0) < 4 * math.sqrt(4.0 / 4000)

    def test_epochs_sorted(self, rng):
        _, ep = simulate_counting(cyclic([sl.Exponential(1.0), sl.Pareto(2.0, 0.5)]), 30.0, rng)
        assert np.all(np.diff(ep) > 0) and ep[-1] <= 30.0

    def test_storm_overflow(self, rng):
        with pytest.raises(ArrivalOverflow):
            count_paths(geometric_storm(0.05, 0.5), 1.0, 10, rng)

    def test_storm_finite_before_accumulation(self):
        # epochs 0.05, 0.075, 0.0875, ... accumulate at 0.1
        assert geometric_storm(0.05, 0.5).deterministic_epochs(0.08).size == 2

    def test_positive_gaps_required(self):
        with pytest.raises(PreconditionError):
            renewal(sl.Degenerate(0.0))


class TestLambda:
    @pytest.mark.parametrize("cp,t,expected", [(POISSON, 5.0, 5.0), (UNIT, 3.5, 3.0),
                                               (renewal(sl.Exponential(2.0)), 3.0, 6.0)])
    def test_exact(self, cp, t, expected):
        m = lambda_mean(cp, t)
        assert m.method is Method.ANALYTIC and m.value == expected

    def test_alternating_against_renewal_oracle(self):
        oracle = alternating_lambda_oracle(10.0)
        assert oracle == pytest.approx(119.0 / 9.0, rel=1e-9)
        m = lambda_mean(cyclic([sl.Exponential(1.0), sl.Exponential(2.0)]), 10.0, budget=100_000, seed=1)
        assert abs(m.value - oracle) < 4 * m.stderr

    def test_delayed_drops_first_gap(self):
        cp = cyclic([sl.Degenerate(1.0), sl.Degenerate(3.0)])
        np.testing.assert_array_equal(cp.deterministic_epochs(8.0), [1.0, 4.0, 5.0, 8.0])
        np.testing.assert_array_equal(cp.delayed().deterministic_epochs(8.0), [3.0, 4.0, 7.0, 8.0])

    @pytest.mark.parametrize("cp", [POISSON, UNIT, cyclic([sl.Exponential(1.0), sl.Weibull(0.5)]),
                                    geometric_storm(1.0, 0.9)], ids=["poisson", "unit", "cyclic", "storm"])
    def test_config_round_trip(self, cp):
        cfg = cp.to_config()
        back = counting_from_config(cfg)
        assert back.kind == cp.kind and back.laws == cp.laws and back.first == cp.first


class TestAssumptionChecks:
    def test_lln_poisson(self):
        rep = check_lln(POISSON, [10.0, 100.0, 1000.0], budget=20_000, seed=3)
        assert rep.verdict is Verdict.CONSISTENT
        # normal approximation: P[|N - 1000| > 100] ~ 2 Phi(-100 / sqrt(1000))
        p = rep.extra["probabilities"]["0.1"][-1]
        assert p == pytest.approx(2 * stats.norm.sf(100 / math.sqrt(1000)), abs=0.002)

    def test_lln_unit_hits_zero(self):
        rep = check_lln(UNIT, [10.5, 100.5, 1000.5])
        assert rep.ratios[-1] == 0.0 and rep.verdict is Verdict.CONSISTENT

    def test_lln_infinite_mean_gaps(self):
        rep = check_lln(renewal(sl.Pareto(0.8, 1.0)), [10.0, 100.0, 1000.0], budget=5000, seed=2)
        assert rep.verdict is Verdict.INCONSISTENT

    def test_light_tail_poisson_identity(self):
        # the capped histogram sum plus tilted remainder equals the uncapped closed form
        a = check_light_tail(POISSON, 30.0, 0.5, 0.1)
        b = check_light_tail(POISSON, 30.0, 0.5, 0.1, n_cap=80)
        assert a.value == pytest.approx(b.value, rel=1e-10)
        ns = np.arange(a.threshold + 1, 400)
        direct = np.sum(1.1 ** ns * stats.poisson.pmf(ns, 30.0))
        assert a.value == pytest.approx(direct, rel=1e-10)

    def test_light_tail_below_chernoff(self):
        val = check_light_tail(POISSON, 50.0, 0.5, 0.1).value
        # E[(1+eps)^N 1{N > m}] <= E[(1+eps)^N e^{s(N-m)}] for s >= 0; take s = log(1.5)
        s = math.log(1.5)
        bound = math.exp(50.0 * (1.1 * 1.5 - 1) - s * 75)
        assert 0 < val <= bound

    def test_light_tail_unit_is_zero(self):
        assert check_light_tail(UNIT, 20.5).value == 0.0

    def test_light_tail_large_eps_grows(self):
        rep = light_tail_trend(POISSON, [10.0, 40.0, 160.0], eps=2.0)
        assert rep.verdict is Verdict.INCONSISTENT

    def test_light_tail_default_decays(self):
        assert light_tail_trend(POISSON, [10.0, 40.0, 160.0]).verdict is Verdict.CONSISTENT

    @pytest.mark.parametrize("kw", [{"delta": 0.0}, {"eps": -1.0}])
    def test_light_tail_parameters(self, kw):
        with pytest.raises(ValueError):
            check_light_tail(POISSON, 1.0, **kw)


class TestSurfaces:
    @pytest.fixture
    def tiny_engine(self):
        return EngineConfig(seed=31, budget=6000, splitting=SplittingConfig(pilot_n=500, replicas=3))

    def test_reduction_identity(self, pareto_pair, half, tiny_engine):
        fixed = pld_fixed_n_surface(pareto_pair, half, [2, 3], [1.0, 2.0], tiny_engine)
        rand = pld_random_surface(pareto_pair, UNIT, half, [2.5, 3.5], [1.0, 2.0], tiny_engine)
        assert len(fixed.cells) == len(rand.cells) == 4
        for a, b in zip(fixed.cells, rand.cells):
            assert a.n == b.n and a.x == b.x and a.target == b.target
            assert a.estimate.value == b.estimate.value
            assert a.estimate.ci95 == b.estimate.ci95

    def test_threshold_from_h_inverse(self, pareto_pair, half, tiny_engine):
        surf = pld_fixed_n_surface(pareto_pair, half, [1, 10], [1.0], tiny_engine, gamma=0.9)
        thr = {c.n: c.threshold for c in surf.cells}
        assert thr[10] == pytest.approx(30.0 ** (10.0 / 9.0))
        assert thr[1] == pytest.approx(3.0 ** (10.0 / 9.0))
        assert all(c.x >= c.threshold for c in surf.cells)

    def test_n_one_ratio_is_one(self, pareto_pair, half, tiny_engine):
        surf = pld_fixed_n_surface(pareto_pair, half, [1], [1.0, 2.0, 4.0], tiny_engine)
        for c in surf.cells:
            assert c.ratio == 1.0

    def test_multipliers_below_one(self, pareto_pair, half):
        with pytest.raises(ValueError):
            pld_fixed_n_surface(pareto_pair, half, [2], [0.5])

    def test_light_claims_rejected(self, half):
        with pytest.raises(PreconditionError):
            pld_fixed_n_surface(Independent((sl.Exponential(), sl.Exponential())), half, [2])

    def test_preconditions_reject_heavy_gaps(self, pareto_pair, half, tiny_engine):
        with pytest.raises(PreconditionError):
            pld_random_surface(pareto_pair, renewal(sl.Pareto(0.8)), half, [10.0], [1.0], tiny_engine)

    def test_floor_of_lambda(self, pareto_pair, half, tiny_engine):
        a = pld_random_surface(pareto_pair, POISSON, half, [10.0, 10.9], [1.0], tiny_engine,
                               check_preconditions=False)
        assert [c.n for c in a.cells] == [10, 10]
        assert a.cells[0].target == a.cells[1].target


class TestClosedForms:
    def test_mrv_closed_form(self):
        law = Mrv(2.0, (0.5, 0.5))
        A = make_halfspace_set([0.5, 0.5], 1.0)
        x = 30.0 ** (10.0 / 9.0)
        val = pld_mrv_closed_form(law, A, 10, x)
        assert val == pytest.approx(10 * 0.25 * x ** -2)
        assert val == pytest.approx(1.3e-3, rel=0.01)

    def test_floor_applies(self):
        law = Mrv(2.0, (0.5, 0.5))
        A = make_halfspace_set([0.5, 0.5], 1.0)
        assert pld_mrv_closed_form(law, A, 10.9, 50.0) == pld_mrv_closed_form(law, A, 10, 50.0)

    def test_alpha_at_most_one(self):
        with pytest.raises(MeanNotFinite):
            pld_mrv_closed_form(Mrv(1.0, (0.5, 0.5)), make_halfspace_set([0.5, 0.5], 1.0), 2, 10.0)

    @pytest.mark.parametrize("law,expected", [
        (Independent((sl.Exponential(), sl.Pareto(2.0))), sl.Pareto(2.0)),
        (Lwqd(sl.Weibull(0.5)), sl.Weibull(0.5)),
        (Mrv(2.0, (0.5, 0.5), scale=2.0), sl.Pareto(2.0, 2.0)),
    ])
    def test_reference_law(self, law, expected):
        assert reference_law(law) == expected
