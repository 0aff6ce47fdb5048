import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvsubexp import scalar_laws as sl
from mvsubexp.errors import NotLongTailed

LAWS = [
    sl.Pareto(2.0, 1.0),
    sl.Pareto(1.5, 3.0),
    sl.Weibull(0.5, 1.0),
    sl.Weibull(2.0, 1.5),
    sl.Lognormal(0.0, 1.0),
    sl.Lognormal(0.5, 0.7),
    sl.Exponential(1.0),
    sl.Exponential(0.25),
]


def _mp_tail(law):
    """Independent high-precision tail formulas."""
    if isinstance(law, sl.Pareto):
        return lambda y: mp.mpf(1) if y < law.scale else (y / law.scale) ** (-law.alpha)
    if isinstance(law, sl.Weibull):
        return lambda y: mp.e ** (-((y / law.scale) ** law.shape))
    if isinstance(law, sl.Lognormal):
        return lambda y: mp.mpf(1) if y <= 0 else mp.erfc((mp.log(y) - law.mu) / (law.sigma * mp.sqrt(2))) / 2
    if isinstance(law, sl.Exponential):
        return lambda y: mp.e ** (-law.rate * y)
    raise TypeError(law)


class TestKnownValues:
    def test_pareto_tail_at_two(self):
        assert sl.Pareto(2.0, 1.0).tail(2.0) == pytest.approx(0.25, rel=1e-15)

    def test_pareto_below_scale(self):
        assert sl.Pareto(2.0, 3.0).tail(1.0) == 1.0

    @pytest.mark.parametrize("x,u,expected", [(1.0, 1.0, 0.5), (10.0, 1.0, 1.0 / 10 - 1.0 / 11)])
    def test_truncated_integral_pareto(self, x, u, expected):
        assert sl.truncated_tail_integral(sl.Pareto(2.0, 1.0), x, u) == pytest.approx(expected, rel=1e-12)

    def test_truncated_integral_clamps_at_one(self):
        assert sl.truncated_tail_integral(sl.Pareto(2.0, 1.0), 0.0, 5.0) == 1.0

    @pytest.mark.parametrize("x,u", [(1.0, 0.5), (-1.0, 2.0)])
    def test_truncated_integral_domain(self, x, u):
        with pytest.raises(ValueError):
            sl.truncated_tail_integral(sl.Pareto(2.0), x, u)

    def test_insensitivity_square_root(self):
        h = sl.insensitivity(sl.Pareto(2.0), 0.5)
        assert h(100.0) == pytest.approx(10.0)

    def test_h_inverse(self):
        h = sl.insensitivity(sl.Pareto(2.0))
        assert h.exponent == 0.9
        assert h.inverse(30.0) == pytest.approx(30.0 ** (10.0 / 9.0))
        assert h.inverse(30.0) == pytest.approx(43.8, abs=0.05)

    @pytest.mark.parametrize("e", [0.0, 1.0, 1.5])
    def test_insensitivity_exponent_range(self, e):
        with pytest.raises(ValueError):
            sl.InsensitivityFn(e)

    def test_insensitivity_needs_long_tail(self):
        with pytest.raises(NotLongTailed):
            sl.insensitivity(sl.Exponential(1.0))

    @pytest.mark.parametrize(
        "law,mean",
        [
            (sl.Pareto(2.0, 1.0), 2.0),
            (sl.Pareto(1.0, 1.0), math.inf),
            (sl.Weibull(0.5, 1.0), 2.0),
            (sl.Lognormal(0.0, 1.0), math.exp(0.5)),
            (sl.Exponential(4.0), 0.25),
            (sl.Geometric(0.25), 4.0),
            (sl.Degenerate(3.0), 3.0),
        ],
    )
    def test_means(self, law, mean):
        assert law.mean() == pytest.approx(mean)

    @pytest.mark.parametrize("law", [sl.Pareto(2.0), sl.Weibull(0.5), sl.Lognormal()])
    def test_long_tailed_flag(self, law):
        assert law.long_tailed

    @pytest.mark.parametrize("law", [sl.Exponential(), sl.Weibull(1.0), sl.Geometric(0.5)])
    def test_light_flag(self, law):
        assert not law.long_tailed


class TestTailIntegralOracle:
    @pytest.mark.parametrize("law", LAWS, ids=lambda l: f"{l.family}-{l.params()}")
    @pytest.mark.parametrize("a,b", [(0.0, 1.0), (0.5, 7.0), (2.0, 40.0), (10.0, 10.5)])
    def test_against_mpmath(self, law, a, b):
        mp.mp.dps = 30
        f = _mp_tail(law)
        pts = [a, b] if not isinstance(law, sl.Pareto) or not a < law.scale < b else [a, law.scale, b]
        ref = float(mp.quad(f, pts))
        assert law.tail_integral(a, b) == pytest.approx(ref, rel=1e-8, abs=1e-14)

    @pytest.mark.parametrize("law", [sl.Pareto(2.5, 1.0), sl.Weibull(0.5), sl.Lognormal(), sl.Exponential(2.0)],
                             ids=lambda l: l.family)
    def test_full_integral_is_mean(self, law):
        assert law.tail_integral(0.0, math.inf) == pytest.approx(law.mean(), rel=1e-9)

    def test_geometric_step_sum(self):
        g = sl.Geometric(0.3)
        assert g.tail_integral(0.0, math.inf) == pytest.approx(g.mean())
        assert g.tail_integral(0.0, 3.0) == pytest.approx(1 + 0.7 + 0.49)

    def test_degenerate(self):
        assert sl.Degenerate(2.0).tail_integral(0.5, 10.0) == pytest.approx(1.5)

    def test_empty_interval(self):
        assert sl.Pareto(2.0).tail_integral(3.0, 1.0) == 0.0


class TestInverseAndSampling:
    @pytest.mark.parametrize("law", LAWS, ids=lambda l: l.family)
    @pytest.mark.parametrize("v", [0.9, 0.3, 1e-3, 1e-12])
    def test_isf_inverts_tail(self, law, v):
        assert law.tail(law.isf(v)) == pytest.approx(v, rel=1e-9)

    @pytest.mark.parametrize("law", LAWS, ids=lambda l: l.family)
    def test_quantile_matches_isf(self, law):
        np.testing.assert_allclose(law.quantile([0.1, 0.5]), law.isf([0.9, 0.5]))

    def test_pareto_sample_mean(self, rng):
        x = sl.Pareto(3.0, 1.0).sample(rng, 200_000)
        assert np.mean(x) == pytest.approx(1.5, rel=0.02)

    def test_geometric_pmf_sums_to_one(self):
        g = sl.Geometric(0.2)
        assert np.sum(g.pmf(np.arange(1, 400))) == pytest.approx(1.0)

    def test_geometric_sample_support(self, rng):
        x = sl.Geometric(0.4).sample(rng, 10_000)
        assert x.min() >= 1 and np.all(x == np.floor(x))

    def test_from_normal_monotone(self):
        z = np.linspace(-4, 4, 50)
        assert np.all(np.diff(sl.Lognormal().from_normal(z)) > 0)

    @settings(max_examples=100, deadline=None)
    @given(alpha=st.floats(0.2, 10.0), scale=st.floats(0.1, 10.0),
           x=st.floats(0.0, 1e6), y=st.floats(0.0, 1e6))
    def test_pareto_tail_monotone(self, alpha, scale, x, y):
        law = sl.Pareto(alpha, scale)
        lo, hi = min(x, y), max(x, y)
        assert law.tail(hi) <= law.tail(lo)

    @settings(max_examples=100, deadline=None)
    @given(shape=st.floats(0.1, 3.0), a=st.floats(0.0, 50.0), w1=st.floats(0.0, 20.0), w2=st.floats(0.0, 20.0))
    def test_integral_additive(self, shape, a, w1, w2):
        law = sl.Weibull(shape)
        whole = law.tail_integral(a, a + w1 + w2)
        parts = law.tail_integral(a, a + w1) + law.tail_integral(a + w1, a + w1 + w2)
        assert whole == pytest.approx(parts, rel=1e-7, abs=1e-12)


class TestConfig:
    @pytest.mark.parametrize("law", LAWS + [sl.Geometric(0.5), sl.Degenerate(1.0)], ids=lambda l: l.family)
    def test_round_trip(self, law):
        assert sl.law_from_config(law.to_config()) == law

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            sl.law_from_config({"family": "cauchy", "params": {}})

    def test_nonfinite_param(self):
        with pytest.raises(ValueError):
            sl.law_from_config({"family": "pareto", "params": {"alpha": float("nan")}})

    @pytest.mark.parametrize("ctor", [lambda: sl.Pareto(-1.0), lambda: sl.Weibull(0.0),
                                      lambda: sl.Lognormal(0.0, 0.0), lambda: sl.Exponential(0.0),
                                      lambda: sl.Geometric(0.0)])
    def test_bad_parameters(self, ctor):
        with pytest.raises(ValueError):
            ctor()
