import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from mvsubexp.mc_core import (
    EngineConfig,
    LatentStatistic,
    Method,
    ModuleTag,
    RngStream,
    SplittingConfig,
    adaptive_ladder,
    analytic_estimate,
    auto_levels,
    crude_latent,
    estimate_crude,
    estimate_mean_latent,
    estimate_splitting,
    estimate_tail,
    stream_id,
    wilson_interval,
)

# Y = max of two standard normals, mapped through an exponential: tail known exactly
EXP_MAX = LatentStatistic(2, lambda z: np.max(-np.log(special.ndtr(-z)), axis=1), label="max of two Exp(1)")


def exp_max_tail(x):
    return 1.0 - (1.0 - math.exp(-x)) ** 2


class TestStreams:
    def test_stream_id_layout(self):
        assert stream_id(3, 5) == (3 << 32) | 5

    @pytest.mark.parametrize("tag,index", [(-1, 0), (0, 2 ** 32)])
    def test_stream_id_range(self, tag, index):
        with pytest.raises(ValueError):
            stream_id(tag, index)

    def test_same_key_same_draws(self):
        a = RngStream(7, 11).generator().random(5)
        b = RngStream(7, 11).generator().random(5)
        np.testing.assert_array_equal(a, b)

    def test_different_streams_differ(self):
        a = RngStream(7, 11).generator().random(5)
        b = RngStream(7, 12).generator().random(5)
        assert not np.array_equal(a, b)


class TestCrude:
    def test_trivial_event(self):
        est = estimate_crude(lambda rng, m: np.ones(m, bool), 1000, seed=1)
        assert est.value == 1.0 and est.ci95[1] == 1.0

    def test_fair_coin(self):
        est = estimate_crude(lambda rng, m: rng.random(m) < 0.5, 200_000, seed=2)
        assert est.lo <= 0.5 <= est.hi
        assert est.stderr == pytest.approx(math.sqrt(0.25 / 200_000), rel=0.01)

    def test_zero_hit_rule_of_three(self):
        est = estimate_crude(lambda rng, m: np.zeros(m, bool), 3000, seed=3)
        assert est.zero_hit and est.value == 0.0
        assert est.ci95 == (0.0, pytest.approx(1e-3))

    def test_shape_check(self):
        with pytest.raises(ValueError):
            estimate_crude(lambda rng, m: np.zeros(m + 1, bool), 10, seed=0)

    def test_chunked_workers_identical(self):
        ev = lambda rng, m: rng.random(m) < 0.3
        a = estimate_crude(ev, 50_000, seed=5, chunk_size=4096, workers=1)
        b = estimate_crude(ev, 50_000, seed=5, chunk_size=4096, workers=4)
        assert a.value == b.value

    @settings(max_examples=200, deadline=None)
    @given(n=st.integers(1, 10_000), data=st.data())
    def test_wilson_contains_point(self, n, data):
        h = data.draw(st.integers(0, n))
        lo, hi = wilson_interval(h, n)
        assert 0.0 <= lo <= h / n <= hi <= 1.0

    def test_crude_latent_sub_events(self):
        stat = LatentStatistic(2, EXP_MAX.fn, final_fn=lambda z, s: (s > 3.0)[:, None])
        est = crude_latent(stat, 2.0, 100_000, seed=9)
        sub = est.extra["sub"][0]
        assert sub.value <= est.value
        assert sub.lo <= exp_max_tail(3.0) <= sub.hi

    def test_sub_events_with_no_hits(self):
        stat = LatentStatistic(2, EXP_MAX.fn, final_fn=lambda z, s: (s > 60.0)[:, None])
        est = crude_latent(stat, 50.0, 2000, seed=1)
        assert est.zero_hit and est.extra["sub"][0].value == 0.0


class TestSplitting:
    @pytest.mark.parametrize("x", [8.0, 14.0])
    def test_against_analytic(self, x):
        est = estimate_tail(EXP_MAX, x, "splitting", EngineConfig(seed=21, budget=150_000))
        truth = exp_max_tail(x)
        assert est.method is Method.SPLITTING
        assert est.lo <= truth <= est.hi
        assert est.value == pytest.approx(truth, rel=0.25)

    def test_reproducible(self):
        eng = EngineConfig(seed=4, budget=40_000)
        a = estimate_tail(EXP_MAX, 9.0, "splitting", eng)
        b = estimate_tail(EXP_MAX, 9.0, "splitting", eng)
        assert a.value == b.value and a.ci95 == b.ci95

    def test_worker_count_invariance(self):
        a = estimate_tail(EXP_MAX, 9.0, "splitting", EngineConfig(seed=4, budget=40_000, workers=1))
        b = estimate_tail(EXP_MAX, 9.0, "splitting", EngineConfig(seed=4, budget=40_000, workers=3))
        assert a.value == b.value

    def test_levels_must_end_at_x(self):
        with pytest.raises(ValueError):
            estimate_splitting(EXP_MAX, 5.0, levels=[1.0, 2.0])

    def test_levels_strictly_increasing(self):
        with pytest.raises(ValueError):
            estimate_splitting(EXP_MAX, 5.0, levels=[2.0, 2.0, 5.0])

    def test_sub_event_bounded_by_main(self):
        stat = LatentStatistic(2, EXP_MAX.fn, final_fn=lambda z, s: (s > 11.0)[:, None])
        est = estimate_tail(stat, 10.0, "splitting", EngineConfig(seed=8, budget=60_000))
        sub = est.extra["sub"][0]
        assert sub.value <= est.value
        assert sub.lo <= exp_max_tail(11.0) <= sub.hi

    def test_ladder_is_increasing_and_ends_at_x(self):
        levels, rhos = adaptive_ladder(EXP_MAX, 12.0, SplittingConfig(), seed=1)
        assert levels[-1] == 12.0
        assert all(b > a for a, b in zip(levels, levels[1:]))
        assert len(rhos) == len(levels) - 1


class TestAutoLevels:
    def test_uniform_pilot(self):
        # P[U > 0.9] = 0.1; ladder takes the 0.8 and 0.96 quantiles below x only
        levels = auto_levels(lambda rng, n: rng.random(n), 0.9, pilot_n=10_000, p0=0.2)
        assert levels[-1] == 0.9
        assert levels[0] == pytest.approx(0.8, abs=0.02)
        assert len(levels) == 2

    def test_pilot_size_floor(self):
        with pytest.raises(ValueError):
            auto_levels(lambda rng, n: rng.random(n), 0.5, pilot_n=10)

    def test_constant_pilot(self):
        assert auto_levels(lambda rng, n: np.zeros(n), 1.0) == [1.0]


class TestMisc:
    def test_analytic_estimate_clamps(self):
        assert analytic_estimate(1.2).value == 1.0
        assert analytic_estimate(-0.1).value == 0.0

    def test_mean_latent(self):
        m = estimate_mean_latent(lambda z: z[:, 0] ** 2, 1, 200_000, seed=3, tag=ModuleTag.GENERIC)
        assert abs(m.value - 1.0) < 4 * m.stderr

    def test_scaled_estimate(self):
        e = analytic_estimate(0.2).scaled(3.0)
        assert e.value == pytest.approx(0.6) and e.ci95 == (pytest.approx(0.6), pytest.approx(0.6))

    def test_bad_splitting_config(self):
        with pytest.raises(ValueError):
            SplittingConfig(p0=1.0)
