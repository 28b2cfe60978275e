"""Utility evaluation, gradients, and the conjugate of the paired form."""

import math

import numpy as np
import pytest

from sysrisk.utility import (
    CustomUtility,
    ExpPlusAggregate,
    PairedExponential,
    UtilityError,
    conjugate_v,
    eval_u,
    grad_u,
    grad_v_diagonal,
    hedge_weights,
)

ALPHA3 = np.array([1.0, 2.0, 4.0])


def central_diff(f, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


class TestPairedExponential:
    def test_value_at_zero_is_zero(self):
        u = PairedExponential(ALPHA3)
        assert eval_u(u, np.zeros(3)) == pytest.approx(0.0, abs=1e-12)

    def test_sup_and_agent_count(self):
        u = PairedExponential(ALPHA3)
        assert u.n_agents == 3
        assert u.sup == 4.5

    def test_matches_scalar_reference(self):
        u = PairedExponential(ALPHA3)
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.normal(size=3)
            s = sum(math.exp(-a * v) for a, v in zip(ALPHA3, x))
            want = 0.5 * 9 - 0.5 * s * s
            assert eval_u(u, x) == pytest.approx(want, rel=1e-12)

    def test_batch_matches_rows(self):
        u = PairedExponential(ALPHA3)
        rng = np.random.default_rng(1)
        x = rng.normal(size=(40, 3))
        batch = eval_u(u, x)
        singles = np.array([eval_u(u, row) for row in x])
        np.testing.assert_allclose(batch, singles, rtol=1e-14)

    def test_gradient_matches_finite_differences(self):
        u = PairedExponential(ALPHA3)
        rng = np.random.default_rng(2)
        for _ in range(10):
            x = rng.normal(size=3)
            g = grad_u(u, x)
            fd = central_diff(lambda v: eval_u(u, v), x)
            np.testing.assert_allclose(g, fd, rtol=1e-6)

    def test_monotone_increasing_componentwise(self):
        u = PairedExponential(ALPHA3)
        rng = np.random.default_rng(3)
        x = rng.normal(size=(30, 3))
        assert np.all(grad_u(u, x) > 0)

    def test_extreme_input_clamped_with_warning(self):
        u = PairedExponential(ALPHA3)
        with pytest.warns(RuntimeWarning):
            v = eval_u(u, np.array([-1e4, 0.0, 0.0]))
        assert not math.isnan(v)

    def test_rejects_bad_alpha(self):
        for bad in ([], [1.0, -2.0], [np.inf], [0.0]):
            with pytest.raises(UtilityError):
                PairedExponential(np.array(bad))

    def test_rejects_wrong_width(self):
        u = PairedExponential(ALPHA3)
        with pytest.raises(UtilityError):
            eval_u(u, np.zeros((5, 2)))


class TestExpPlusAggregate:
    BETA3 = np.array([0.5, 0.25, 0.75])

    def make(self):
        return ExpPlusAggregate(ALPHA3, self.BETA3, p=2.0)

    def test_value_at_zero_is_zero(self):
        assert eval_u(self.make(), np.zeros(3)) == pytest.approx(0.0, abs=1e-12)

    def test_sup(self):
        assert self.make().sup == 4.0

    def test_matches_scalar_reference(self):
        u = self.make()
        rng = np.random.default_rng(4)
        for _ in range(20):
            x = rng.normal(size=3)
            own = sum(1 - math.exp(-a * v) for a, v in zip(ALPHA3, x))
            agg = 1 - math.exp(-2.0 * float(np.dot(self.BETA3, x)))
            assert eval_u(u, x) == pytest.approx(own + agg, rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        u = self.make()
        rng = np.random.default_rng(5)
        for _ in range(10):
            x = rng.normal(size=3)
            fd = central_diff(lambda v: eval_u(u, v), x)
            np.testing.assert_allclose(grad_u(u, x), fd, rtol=1e-6)

    def test_rejects_p_not_above_one(self):
        with pytest.raises(UtilityError):
            ExpPlusAggregate(ALPHA3, self.BETA3, p=1.0)

    def test_rejects_negative_beta(self):
        with pytest.raises(UtilityError):
            ExpPlusAggregate(ALPHA3, np.array([0.5, -0.1, 0.2]))

    def test_rejects_beta_length_mismatch(self):
        with pytest.raises(UtilityError):
            ExpPlusAggregate(ALPHA3, np.array([0.5, 0.25]))


class TestCustomUtility:
    def make(self):
        return CustomUtility(
            evaluate=lambda x: -np.sum(x * x, axis=1),
            gradient=lambda x: -2.0 * x,
            n_agents_=2,
            sup_=0.0,
        )

    def test_dispatch(self):
        u = self.make()
        x = np.array([[1.0, 2.0], [0.0, 1.0]])
        np.testing.assert_allclose(eval_u(u, x), [-5.0, -1.0])
        np.testing.assert_allclose(grad_u(u, x), -2.0 * x)

    def test_single_row(self):
        u = self.make()
        assert eval_u(u, np.array([3.0, 4.0])) == -25.0
        assert grad_u(u, np.array([3.0, 4.0])).shape == (2,)


class TestConjugate:
    def test_frozen_value_at_ones(self):
        # independent scalar computation: 2.4421890049965596
        assert conjugate_v(ALPHA3, np.ones(3)) == pytest.approx(
            2.4421890049965596, abs=1e-12
        )

    def test_diagonal_gradient_matches_finite_differences(self):
        for z in (0.5, 1.0, 2.0, 5.0):
            g = grad_v_diagonal(ALPHA3, z)
            h = 1e-5
            fd = np.empty(3)
            for j in range(3):
                wp = np.full(3, z)
                wm = np.full(3, z)
                wp[j] += h
                wm[j] -= h
                fd[j] = (conjugate_v(ALPHA3, wp) - conjugate_v(ALPHA3, wm)) / (2 * h)
            np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-9)

    def test_diagonal_value_identity(self):
        # V(z*1) - z * sum(grad) == N^2/2 - (beta/2) z for every z > 0
        beta = float(np.sum(1.0 / ALPHA3))
        for z in (0.25, 1.0, 3.0, 10.0):
            lhs = conjugate_v(ALPHA3, np.full(3, z)) - z * float(
                np.sum(grad_v_diagonal(ALPHA3, z))
            )
            assert lhs == pytest.approx(4.5 - 0.5 * beta * z, abs=1e-10)

    def test_fenchel_young_equality_on_diagonal(self):
        u = PairedExponential(ALPHA3)
        for z in (0.5, 1.0, 4.0):
            x_star = -grad_v_diagonal(ALPHA3, z)
            lhs = eval_u(u, x_star)
            rhs = conjugate_v(ALPHA3, np.full(3, z)) - z * float(np.sum(-x_star))
            assert lhs == pytest.approx(rhs, abs=1e-10)

    def test_fenchel_inequality_sampled(self):
        # V(w) >= U(x) - sum w_n x_n for all x and positive w
        u = PairedExponential(ALPHA3)
        rng = np.random.default_rng(6)
        for _ in range(50):
            x = rng.normal(size=3)
            w = rng.uniform(0.1, 5.0, size=3)
            gap = conjugate_v(ALPHA3, w) - (eval_u(u, x) - float(np.dot(w, x)))
            assert gap >= -1e-12

    def test_rejects_nonpositive_weights(self):
        with pytest.raises(UtilityError):
            conjugate_v(ALPHA3, np.array([1.0, 0.0, 1.0]))
        with pytest.raises(UtilityError):
            grad_v_diagonal(ALPHA3, 0.0)


class TestHedgeWeights:
    def test_inverse_scale_and_normalized(self):
        u = PairedExponential(ALPHA3)
        w = hedge_weights(u)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(w * ALPHA3, w[0] * ALPHA3[0])

    def test_uniform_for_custom(self):
        u = CustomUtility(
            evaluate=lambda x: np.zeros(x.shape[0]),
            gradient=lambda x: np.zeros_like(x),
            n_agents_=4,
        )
        np.testing.assert_allclose(hedge_weights(u), 0.25)
