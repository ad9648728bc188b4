import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deeprec.errors import DimensionError
from deeprec.likelihood import (
    ScaledOneBitOperator,
    eta,
    eta_prime,
    eta_vec,
    grad_log_likelihood,
    log_likelihood,
    log_q_tail,
    q_tail,
)
from deeprec.model import ProblemInstance

from conftest import central_diff, mp_eta, mp_log_q, random_instance


class TestQTail:
    def test_zero(self):
        assert q_tail(0.0) == 0.5

    def test_two_sided_five_percent_point(self):
        # mpmath: Q(1.959964) = 0.0250000...
        ref = float(mp.erfc(mp.mpf("1.959964") / mp.sqrt(2)) / 2)
        assert abs(ref - 0.025) < 1e-6
        assert q_tail(1.959964) == pytest.approx(0.025, abs=1e-6)

    @pytest.mark.parametrize("x", [0.3, 1.7, 5.0])
    def test_symmetry(self, x):
        assert q_tail(-x) + q_tail(x) == pytest.approx(1.0, abs=1e-15)

    def test_relative_accuracy(self):
        xs = np.linspace(-8, 8, 161)
        ref = np.array([float(mp.erfc(mp.mpf(float(x)) / mp.sqrt(2)) / 2) for x in xs])
        np.testing.assert_allclose(q_tail(xs), ref, rtol=1e-12, atol=0)

    def test_monotone(self):
        xs = np.linspace(-8, 8, 1001)
        q = q_tail(xs)
        assert np.all(np.diff(q) <= 0)
        # strict wherever Q is not rounded to 1.0
        assert np.all(np.diff(q[xs > -5]) < 0)


class TestLogQTail:
    def test_grid_against_extended_precision(self):
        xs = np.linspace(-30, 30, 601)
        ref = np.array([float(mp_log_q(x)) for x in xs])
        np.testing.assert_allclose(log_q_tail(xs), ref, rtol=1e-12, atol=0)

    def test_left_tail_not_rounded_to_zero(self):
        assert log_q_tail(-30.0) < 0


class TestEta:
    def test_zero(self):
        assert eta(0.0) == pytest.approx(-2 / math.sqrt(2 * math.pi), rel=1e-15)

    def test_large_positive(self):
        assert eta(10.0) == pytest.approx(float(mp_eta(10)), rel=1e-12)
        assert eta(10.0) == pytest.approx(-10.0981, abs=1e-4)

    def test_large_negative(self):
        assert eta(-10.0) == pytest.approx(float(mp_eta(-10)), rel=1e-12)
        assert eta(-10.0) == pytest.approx(-7.6946e-23, rel=1e-4)

    def test_vec(self):
        np.testing.assert_allclose(eta_vec([0, 0]), [-0.79788, -0.79788], atol=1e-5)
        assert eta_vec([]).shape == (0,)
        np.testing.assert_array_equal(eta_vec([10, -10]), [eta(10.0), eta(-10.0)])

    def test_far_tails_finite(self):
        v = eta_vec([-1e3, -40.0, 40.0, 1e3, 1e8])
        assert np.all(np.isfinite(v)) and np.all(v <= 0)

    def test_decreasing_negative_branch(self):
        xs = np.linspace(0, 50, 2001)
        e = eta(xs)
        assert np.all(e < 0)
        assert np.all(np.diff(e) < 0)

    def test_asymptote(self):
        xs = np.linspace(10, 1e4, 500)
        assert np.all(np.abs(eta(xs) + xs + 1 / xs) <= 1e-2)

    def test_derivative(self):
        xs = np.array([-35.0, -5.0, -1.0, 0.0, 0.7, 3.0, 12.0, 60.0, 150.0, 1e3])
        f = lambda t: -mp.npdf(t) / (mp.erfc(t / mp.sqrt(2)) / 2)
        ref = [float(mp.diff(f, mp.mpf(float(x)))) for x in xs]
        np.testing.assert_allclose(eta_prime(xs), ref, rtol=1e-9)
        assert np.all((eta_prime(xs) < 0) & (eta_prime(xs) > -1))


class TestLogLikelihood:
    def test_zero_argument(self):
        inst = ProblemInstance(np.array([[1.0, 2.0, 0.0]]), [1.0], [3.0], [1.0, 1.0, 0.5], [1.0])
        assert log_likelihood(inst, np.array([1.0, 1.0, 0.5])) == pytest.approx(math.log(0.5), rel=1e-15)

    def test_sum_rule(self):
        m = 7
        h = np.tile([[1.0, 0.5, 2.0]], (m, 1))
        x = np.array([0.2, 0.4, 0.1])
        inst = ProblemInstance(h, np.ones(m) * 0.3, np.full(m, h[0] @ x), x, np.ones(m))
        assert log_likelihood(inst, x) == pytest.approx(m * math.log(0.5), rel=1e-14)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_extended_precision(self, seed):
        inst = random_instance(seed, m=5)
        x = np.random.default_rng(seed).uniform(-1, 2, 3)
        args = inst.d * (inst.tau - inst.h @ x)
        ref = mp.fsum(mp_log_q(a) for a in args)
        assert log_likelihood(inst, x) == pytest.approx(float(ref), rel=1e-12)

    def test_never_minus_inf(self):
        # arguments up to +-30 (and beyond) stay finite
        h = np.array([[1.0], [1.0], [1.0]])
        inst = ProblemInstance(h, [1.0, 1.0, 1.0], [0.0, 0.0, 0.0], [1.0], [1.0, -1.0, 1.0])
        for x in (-30.0, 30.0, 300.0):
            ll = log_likelihood(inst, np.array([x]))
            assert np.isfinite(ll) and ll <= 0

    def test_dimension_mismatch(self, small_instance):
        with pytest.raises(DimensionError):
            log_likelihood(small_instance, np.zeros(4))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6), st.floats(0.01, 0.99))
    def test_concave(self, seed, lam):
        inst = random_instance(seed)
        rng = np.random.default_rng(seed + 1)
        x1, x2 = rng.uniform(-2, 3, 3), rng.uniform(-2, 3, 3)
        lhs = log_likelihood(inst, lam * x1 + (1 - lam) * x2)
        rhs = lam * log_likelihood(inst, x1) + (1 - lam) * log_likelihood(inst, x2)
        assert lhs >= rhs - 1e-9


class TestGradient:
    def test_single_measurement(self):
        inst = ProblemInstance(np.array([[1.0, 0.0, 0.0]]), [1.0], [0.4], [0.4, 0.2, 0.1], [1.0])
        x = np.array([0.4, 0.2, 0.1])  # tau = h.x, argument 0
        g = grad_log_likelihood(inst, x)
        np.testing.assert_allclose(g, [2 / math.sqrt(2 * math.pi), 0, 0], atol=1e-15)
        fd = central_diff(lambda v: log_likelihood(inst, v), x)
        np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-12)

    def test_summation_form(self):
        inst = random_instance(9, m=12)
        x = np.array([0.3, 0.1, 0.8])
        total = np.zeros(3)
        for i in range(12):
            s = math.sqrt(inst.sigma2[i])
            a = inst.r[i] / s * (inst.tau[i] - inst.h[i] @ x)
            ratio = -math.exp(-a * a / 2) / math.sqrt(2 * math.pi) / (0.5 * math.erfc(a / math.sqrt(2)))
            total += -(inst.r[i] / s) * ratio * inst.h[i]
        np.testing.assert_allclose(grad_log_likelihood(inst, x), total, rtol=1e-12)

    def test_zero_sensing_matrix(self):
        inst = ProblemInstance(np.zeros((5, 3)), np.ones(5), np.arange(5.0), [1, 1, 1], [1, -1, 1, 1, -1])
        for x in (np.zeros(3), np.array([3.0, -2.0, 1.0])):
            np.testing.assert_array_equal(grad_log_likelihood(inst, x), 0)

    @pytest.mark.parametrize("seed", range(100))
    def test_finite_differences(self, seed):
        inst = random_instance(seed)
        x = np.random.default_rng(seed + 7).uniform(0, 1, 3)
        g = grad_log_likelihood(inst, x)
        fd = central_diff(lambda v: log_likelihood(inst, v), x)
        assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(fd)

    @pytest.mark.parametrize("seed", range(20))
    def test_row_space(self, seed):
        inst = random_instance(seed, m=int(np.random.default_rng(seed).integers(3, 40)))
        x = np.random.default_rng(seed).uniform(0, 1, 3)
        g = grad_log_likelihood(inst, x)
        coef, *_ = np.linalg.lstsq(inst.h.T, g, rcond=None)
        assert np.linalg.norm(inst.h.T @ coef - g) <= 1e-10 * max(1.0, np.linalg.norm(g))

    def test_operator(self, small_instance):
        op = ScaledOneBitOperator.from_instance(small_instance)
        np.testing.assert_allclose(np.abs(op.d), 1 / np.sqrt(small_instance.sigma2))
        np.testing.assert_allclose(op(np.ones(8)), small_instance.r / np.sqrt(small_instance.sigma2))
