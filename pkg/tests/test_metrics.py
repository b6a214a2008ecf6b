import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onebit_tc.metrics import (BoundConstants, constants_record, hellinger_sq, kl_div,
                               mae, pi_weighted_mse, rademacher_bounds, rank_norm_bounds,
                               rse, sign_accuracy, theorem1_rhs, write_metrics)
from onebit_tc.observations import SamplingDistribution, link_constants, logistic, probit

unit = st.floats(0.0, 1.0)


class TestRse:
    def test_exact(self):
        T = np.random.default_rng(0).standard_normal((3, 4))
        assert rse(T, T) == 0.0

    def test_zero_estimate(self):
        T = np.random.default_rng(1).standard_normal((3, 4))
        assert rse(np.zeros_like(T), T) == pytest.approx(1.0)

    def test_doubled(self):
        T = np.random.default_rng(2).standard_normal((3, 4))
        assert rse(2 * T, T) == pytest.approx(1.0)

    def test_zero_truth(self):
        with pytest.raises(ValueError):
            rse(np.ones((2, 2)), np.zeros((2, 2)))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            rse(np.ones((2, 2)), np.ones((2, 3)))


class TestSignAccuracyAndMae:
    def test_perfect(self):
        t = np.array([1.0, 4.0, 2.0, 5.0])
        assert sign_accuracy(t, t, 3.0) == 1.0 and mae(t, t) == 0.0

    def test_constant_at_threshold(self):
        truth = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        # predictions equal to eta count as positive
        assert sign_accuracy(np.full(5, 3.0), truth, 3.0) == pytest.approx(3 / 5)

    def test_mae_example(self):
        assert mae(np.array([2.0, 2.0]), np.array([1.0, 3.0])) == 1.0

    def test_empty(self):
        with pytest.raises(ValueError):
            sign_accuracy(np.array([]), np.array([]))
        with pytest.raises(ValueError):
            mae(np.array([]), np.array([]))

    def test_threshold_shifts(self):
        truth, pred = np.array([1.0, 5.0]), np.array([2.0, 2.0])
        assert sign_accuracy(pred, truth, 0.0) == 1.0
        assert sign_accuracy(pred, truth, 3.0) == 0.5


class TestPiWeightedMse:
    def test_exact(self):
        T = np.ones((2, 3))
        assert pi_weighted_mse(T, T) == 0.0

    def test_uniform_reduction(self):
        rng = np.random.default_rng(0)
        A, B = rng.standard_normal((3, 4, 5)), rng.standard_normal((3, 4, 5))
        assert pi_weighted_mse(A, B) == pytest.approx(np.sum((A - B) ** 2) / 60, abs=1e-12)

    def test_point_mass(self):
        A, B = np.zeros((2, 2)), np.arange(4.0).reshape(2, 2)
        dist = SamplingDistribution.point_mass((2, 2), (1, 0))
        assert pi_weighted_mse(A, B, dist) == 4.0

    def test_wrong_distribution_shape(self):
        with pytest.raises(ValueError):
            pi_weighted_mse(np.ones((2, 2)), np.ones((2, 2)), SamplingDistribution((2, 3)))


class TestDivergences:
    def test_equal(self):
        P = np.random.default_rng(0).uniform(0, 1, (3, 3))
        assert hellinger_sq(P, P) == 0.0
        assert kl_div(P, P) == 0.0

    def test_hellinger_extremes(self):
        assert hellinger_sq(np.array(0.0), np.array(1.0)) == 2.0

    def test_kl_example(self):
        assert kl_div(np.array(0.5), np.array(0.25)) == pytest.approx(
            0.14384103622589046372, rel=1e-14)

    def test_kl_finite_at_boundary(self):
        assert np.isfinite(kl_div(np.array(0.5), np.array(0.0)))

    def test_averaged(self):
        P = np.array([0.5, 0.5])
        Q = np.array([0.25, 0.5])
        assert kl_div(P, Q) == pytest.approx(0.14384103622589046 / 2)

    @pytest.mark.parametrize("bad", [-0.1, 1.1, np.nan])
    def test_out_of_range(self, bad):
        with pytest.raises(ValueError):
            hellinger_sq(np.array(bad), np.array(0.5))
        with pytest.raises(ValueError):
            kl_div(np.array(0.5), np.array(bad))

    @given(unit, unit)
    @settings(max_examples=300, deadline=None)
    def test_hellinger_symmetric(self, p, q):
        assert hellinger_sq(np.array(p), np.array(q)) == pytest.approx(
            hellinger_sq(np.array(q), np.array(p)), abs=1e-15)

    @given(st.floats(0.01, 0.99), st.floats(0.01, 0.99))
    @settings(max_examples=300, deadline=None)
    def test_hellinger_below_kl(self, p, q):
        assert hellinger_sq(np.array(p), np.array(q)) <= kl_div(np.array(p), np.array(q)) + 1e-12


class TestRankNormBounds:
    @pytest.mark.parametrize("d", [2, 3, 4])
    def test_rank_one(self, d):
        assert rank_norm_bounds(1, d, 0.7) == (0.7, 0.7)

    def test_matrix_rank_four(self):
        assert rank_norm_bounds(4, 2, 1.5)[0] == 6.0

    def test_order_three_rank_four(self):
        assert rank_norm_bounds(4, 3, 1.0)[1] == pytest.approx(64.0)

    @pytest.mark.parametrize("args", [(0, 3, 1.0), (2, 1, 1.0), (2, 3, 0.0)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            rank_norm_bounds(*args)


class TestTheorem1:
    lc = link_constants(logistic(), 1.0)

    def test_regression_fixture(self):
        consts = BoundConstants()
        # c2**3 * beta * (sqrt(0.1) + U * sqrt(log 8 / 900)), evaluated in 30 digits
        assert theorem1_rhs("max", consts, self.lc, 1.0, 3, 30, 900, 0.5) == pytest.approx(
            5.6737657642359559353, rel=1e-13)
        assert theorem1_rhs("M", consts, self.lc, 1.0, 3, 30, 900, 0.5) == pytest.approx(
            2.0060368367807155435, rel=1e-13)

    def test_first_term_scaling(self):
        c = BoundConstants()
        first = lambda m: (theorem1_rhs("M", c, self.lc, 2.0, 3, 30, m, 0.5)
                           - theorem1_rhs("M", c, self.lc, 1.0, 3, 30, m, 0.5))
        assert first(1800) == pytest.approx(first(900) / np.sqrt(2), rel=1e-12)

    def test_M_tighter(self):
        c = BoundConstants()
        assert c.C_M < c.C_max * c.c2 ** 3
        assert (theorem1_rhs("M", c, self.lc, 1.0, 3, 30, 900, 0.5)
                < theorem1_rhs("max", c, self.lc, 1.0, 3, 30, 900, 0.5))

    def test_monotone(self):
        c, lc = BoundConstants(), link_constants(probit(0.5), 1.0)
        ms = [100, 200, 400, 800]
        vals = [theorem1_rhs("max", c, lc, 1.0, 3, 30, m, 0.1) for m in ms]
        assert np.all(np.diff(vals) < 0)
        vals = [theorem1_rhs("max", c, lc, 1.0, 3, N, 900, 0.1) for N in (10, 20, 40)]
        assert np.all(np.diff(vals) > 0)
        vals = [theorem1_rhs("max", c, lc, R, 3, 30, 900, 0.1) for R in (1, 2, 4)]
        assert np.all(np.diff(vals) > 0)

    @pytest.mark.parametrize("kw", [dict(kind="nuclear"), dict(delta=1.0), dict(m=0)])
    def test_invalid(self, kw):
        args = dict(kind="max", consts=BoundConstants(), link_consts=self.lc, R=1.0,
                    d=3, N=30, m=900, delta=0.5)
        args.update(kw)
        with pytest.raises(ValueError):
            theorem1_rhs(**args)


class TestRademacher:
    def test_example(self):
        a, b = rademacher_bounds(3, 30, 900)
        assert a == pytest.approx(1.8973665961010275992, rel=1e-14)
        assert b == pytest.approx(4.7761037881391233794, rel=1e-13)

    def test_ratio(self):
        c = BoundConstants()
        a, b = rademacher_bounds(4, 10, 500, c)
        assert b == pytest.approx(a * c.c1 * c.c2 ** 4, rel=1e-14)

    def test_quadrupling_halves(self):
        a1, b1 = rademacher_bounds(3, 30, 900)
        a4, b4 = rademacher_bounds(3, 30, 3600)
        assert a4 == pytest.approx(a1 / 2) and b4 == pytest.approx(b1 / 2)

    def test_invalid(self):
        with pytest.raises(ValueError):
            rademacher_bounds(3, 30, 0)


class TestConstants:
    def test_grothendieck_consistency(self):
        c = BoundConstants()
        assert abs(c.K_G - c.c1 * c.c2 ** 2) <= 1e-12
        assert c.c1 < 0.9 and c.c2 < np.sqrt(2)
        assert 1.67 < c.K_G < 1.79

    def test_record(self, tmp_path):
        rec = constants_record(BoundConstants())
        write_metrics(tmp_path / "m.json", dict(rec, value=np.float64(1.5), n=np.int64(3)))
        back = json.loads((tmp_path / "m.json").read_text())
        assert back["value"] == 1.5 and back["n"] == 3 and "K_G" in back
