import math

import numpy as np
import pytest

from mvsubexp import scalar_laws as sl
from mvsubexp.convolution_stopped_sums import (
    StoppedSumModel,
    condition_ratios,
    convolution_tail_over_set,
    kesten_table,
    maxsum_ratio,
    mrv_stopped_closed_form,
    nfold_ratio,
    nfold_tail,
    ratio_with_ci,
    single_big_jump_report,
    stopped_sum_tail,
)
from mvsubexp.errors import MeanNotFinite, NotLongTailed, PreconditionError, ViolatesKesten
from mvsubexp.mc_core import EngineConfig, Method, analytic_estimate
from mvsubexp.rare_sets import make_halfspace_set
from mvsubexp.trend import Verdict
from mvsubexp.vector_laws import Independent, Mrv, fa_tail

HALF = make_halfspace_set([0.5, 0.5], 1.0)


class TestConvolution:
    def test_degenerate_step(self):
        e1 = Independent((sl.Degenerate(1.0), sl.Degenerate(0.0)))
        e2 = Independent((sl.Degenerate(0.0), sl.Degenerate(1.0)))
        # X1 + X2 = (1, 1) so Y = 1: inside xA iff x < 1
        eng = EngineConfig(seed=1, budget=2000)
        assert convolution_tail_over_set(e1, e2, HALF, 0.9, eng, method="crude").value == 1.0
        assert convolution_tail_over_set(e1, e2, HALF, 1.0, eng, method="crude").value == 0.0

    def test_sum_dominates_each_summand(self, pareto_pair, small_engine):
        x = 31.6
        s = convolution_tail_over_set(pareto_pair, pareto_pair, HALF, x, small_engine)
        assert s.hi >= fa_tail(pareto_pair, HALF, x).value

    def test_dimension_mismatch(self, pareto_pair):
        with pytest.raises(ValueError):
            convolution_tail_over_set(pareto_pair, Independent((sl.Pareto(2.0),)), HALF, 2.0)

    def test_maxsum_rejects_light(self, pareto_pair):
        light = Independent((sl.Exponential(), sl.Exponential()))
        with pytest.raises(NotLongTailed):
            maxsum_ratio(pareto_pair, light, HALF, [10.0])

    def test_maxsum_consistent(self, pareto_pair, small_engine):
        rep = maxsum_ratio(pareto_pair, pareto_pair, HALF, [50.0, 100.0, 200.0], small_engine)
        assert rep.verdict is Verdict.CONSISTENT


class TestNfold:
    def test_n_one_identity(self, pareto_pair):
        rep = nfold_ratio(pareto_pair, HALF, 1, [1.0, 10.0, 100.0])
        assert rep.ratios == [1.0, 1.0, 1.0]

    def test_n_one_tail(self, pareto_pair):
        assert nfold_tail(pareto_pair, HALF, 1, 5.0).value == fa_tail(pareto_pair, HALF, 5.0).value

    def test_n_zero(self, pareto_pair):
        with pytest.raises(ValueError):
            nfold_ratio(pareto_pair, HALF, 0, [1.0])

    def test_mrv_three_fold_level(self):
        law = Mrv(2.0, (0.5, 0.5))
        x = 300.0
        # axis-only angular law: Y_A(S_3) = (R1 + R2 + R3) / 2, so an
        # Asmussen-Kroese conditional estimator gives a tight oracle
        rng = np.random.default_rng(0)
        r = (1.0 - rng.random((1_000_000, 2))) ** -0.5
        oracle = np.mean(3 * np.maximum(np.maximum(r.max(1), 2 * x - r.sum(1)), 1.0) ** -2.0)
        closed = 3 * law.mu(HALF) * x ** -2
        assert oracle == pytest.approx(closed, rel=0.03)
        est = nfold_tail(law, HALF, 3, x, EngineConfig(seed=1, budget=400_000))
        assert est.lo <= oracle <= est.hi


class TestKesten:
    def test_violation(self, pareto_pair):
        with pytest.raises(ViolatesKesten):
            kesten_table(pareto_pair, HALF, 1.0, 5, [10.0])

    def test_first_row(self, pareto_pair, small_engine):
        tab = kesten_table(pareto_pair, HALF, 3.0, 3, [10.0, 20.0], small_engine)
        np.testing.assert_allclose(tab.K[0], fa_tail(pareto_pair, HALF, 3.0).value)
        assert np.all(tab.K[0] <= 1.0)

    def test_relative_grid(self, pareto_pair, small_engine):
        tab = kesten_table(pareto_pair, HALF, 3.0, 4, [1.0, 2.0], small_engine, n_list=[1, 4],
                           x_relative=True)
        assert tab.x_at(1, 1) == pytest.approx(2.0 * 3.0 * 4)
        assert len(tab.rows()) == 4

    @pytest.mark.parametrize("kw", [{"n_list": [0, 2]}, {"n_list": [9]}])
    def test_bad_n_list(self, pareto_pair, kw):
        with pytest.raises(ValueError):
            kesten_table(pareto_pair, HALF, 3.0, 5, [10.0], **kw)


class TestStoppedSums:
    def test_tau_one_equals_fa_tail(self, pareto_pair):
        m = StoppedSumModel(pareto_pair, sl.Degenerate(1.0))
        assert stopped_sum_tail(m, HALF, 10.0).value == fa_tail(pareto_pair, HALF, 10.0).value

    def test_tau_zero(self, pareto_pair):
        m = StoppedSumModel(pareto_pair, sl.Degenerate(0.0))
        est = stopped_sum_tail(m, HALF, 10.0)
        assert est.value == 0.0 and est.method is Method.ANALYTIC

    def test_continuous_tau_rejected(self, pareto_pair):
        with pytest.raises(PreconditionError):
            StoppedSumModel(pareto_pair, sl.Exponential())

    def test_geometric_example(self, pareto_pair):
        m = StoppedSumModel(pareto_pair, sl.Geometric(0.5))
        x = 31.6
        single = fa_tail(pareto_pair, HALF, x).value
        assert single == pytest.approx(5e-4, rel=0.15)
        est = stopped_sum_tail(m, HALF, x, EngineConfig(seed=2, budget=150_000))
        # at this x the finite-x excess is visible; the large-x trend is covered elsewhere
        assert est.value > 2 * single

    def test_condition_geometric_holds(self, pareto_pair, small_engine):
        m = StoppedSumModel(pareto_pair, sl.Geometric(0.5))
        cond = condition_ratios(m, HALF, [50.0, 100.0, 200.0], c=3.0)
        assert all(b < a for a, b in zip(cond, cond[1:])) and cond[-1] < 1e-10

    def test_condition_suspect_for_heavy_tau(self, pareto_pair, small_engine):
        # integer-valued tau with a Pareto(1.5) tail
        class HeavyInt(sl.Geometric):
            def tail(self, x):
                return float(sl.Pareto(1.5).tail(math.floor(max(x, 0.0))))

            def mean(self):
                return 3.0
        m = StoppedSumModel(pareto_pair, HeavyInt(0.5))
        cond = condition_ratios(m, HALF, [50.0, 100.0, 200.0], c=3.0)
        assert cond[-1] > cond[0]

    def test_mrv_closed_form_example(self):
        law = Mrv(2.0, (0.5, 0.5))
        m = StoppedSumModel(law, sl.Geometric(0.5))
        x = 10 ** 1.5
        assert mrv_stopped_closed_form(m, HALF, x) == pytest.approx(5e-4, rel=1e-12)

    def test_mrv_closed_form_alpha(self):
        with pytest.raises(MeanNotFinite):
            mrv_stopped_closed_form(StoppedSumModel(Mrv(1.0, (0.5, 0.5)), sl.Geometric(0.5)), HALF, 10.0)

    def test_closed_form_needs_mrv(self, pareto_pair):
        with pytest.raises(PreconditionError):
            mrv_stopped_closed_form(StoppedSumModel(pareto_pair, sl.Geometric(0.5)), HALF, 10.0)

    def test_fixed_tau_matches_nfold(self, pareto_pair, small_engine):
        m = StoppedSumModel(pareto_pair, sl.Degenerate(3.0))
        a = stopped_sum_tail(m, HALF, 40.0, small_engine)
        b = nfold_tail(pareto_pair, HALF, 3, 40.0, EngineConfig(seed=99, budget=60_000))
        assert a.lo <= b.hi and b.lo <= a.hi


class TestRatioCI:
    def test_analytic_denominator(self):
        num = analytic_estimate(0.2)
        p = ratio_with_ci(1.0, num, 0.1)
        assert p.ratio == pytest.approx(2.0) and p.ratio_lo == p.ratio_hi

    def test_zero_denominator(self):
        assert math.isnan(ratio_with_ci(1.0, analytic_estimate(0.1), 0.0).ratio)
