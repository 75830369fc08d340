import numpy as np
import pytest
from scipy import integrate

from fracpath.core_paths import ProcessSpec, RngStream, SampledPath, evaluate, simulate_increments
from fracpath.riemann_liouville import (RLTransform, apply, compose_apply, compose_check,
                                        inversion_bound_check, inversion_reconstruct,
                                        jump_identity_check, transform_path)

from conftest import random_step_path

ORDERS = (-0.75, -0.25, 0.0, 0.25, 0.5, 1.0, 1.5)


def quad_transform(path, alpha, t):
    """Independent oracle: adaptive quadrature of the split formula (alpha > 0)."""
    T = path.T
    f = lambda u: alpha / T**alpha * (T - u) ** (alpha - 1) * evaluate(path, u)
    pts = [p for p in path.times if 0 < p < t]
    val, _ = integrate.quad(f, 0.0, t, points=pts or None, limit=400, epsabs=1e-14, epsrel=1e-13)
    return val + ((T - t) / T) ** alpha * evaluate(path, t)


# ---------------------------------------------------------------------------
# apply
# ---------------------------------------------------------------------------

class TestApply:
    @pytest.mark.parametrize("alpha", ORDERS)
    def test_constant_path(self, alpha):
        p = SampledPath.constant(1.0, 3.0)
        t = np.linspace(0, 0.99, 7)
        np.testing.assert_allclose(apply(RLTransform(alpha), p, t), 3.0, atol=1e-13)

    def test_hand_example(self, step_path):
        assert apply(RLTransform(1.0), step_path, [0.75])[0] == pytest.approx(0.5, abs=1e-15)

    def test_order_zero_identity(self, step_path):
        t = np.array([0.0, 0.3, 0.5, 0.9])
        np.testing.assert_array_equal(apply(RLTransform(0.0), step_path, t), evaluate(step_path, t))

    @pytest.mark.parametrize("alpha", [0.25, 0.7, 1.5])
    def test_against_quadrature(self, alpha):
        rng = np.random.default_rng(2)
        p = random_step_path(rng, 6)
        t = np.array([0.1, 0.45, 0.8, 0.97])
        got = apply(RLTransform(alpha), p, t)
        want = [quad_transform(p, alpha, s) for s in t]
        np.testing.assert_allclose(got, want, atol=1e-10)

    def test_negative_order_refuses_horizon(self, step_path):
        with pytest.raises(ValueError):
            apply(RLTransform(-0.5), step_path, [1.0])
        with pytest.raises(ValueError):
            apply(RLTransform(-0.5), step_path, [1.0 - 1e-10])

    def test_bad_transform(self):
        with pytest.raises(ValueError):
            RLTransform(0.5, T=0.0)
        with pytest.raises(ValueError):
            RLTransform(np.inf)

    def test_transform_path_matches_apply(self):
        rng = np.random.default_rng(3)
        p = random_step_path(rng, 10)
        rl = RLTransform(0.6)
        tp = transform_path(rl, p)
        np.testing.assert_allclose(tp.values, apply(rl, p, p.times), atol=1e-15)


# ---------------------------------------------------------------------------
# Group law
# ---------------------------------------------------------------------------

class TestGroupLaw:
    @pytest.mark.parametrize("alpha", ORDERS)
    @pytest.mark.parametrize("beta", ORDERS)
    def test_nested_closed_form(self, alpha, beta):
        if alpha + beta <= -1:
            pytest.skip("composition restricted to alpha + beta > -1")
        rng = np.random.default_rng(int(100 * (alpha + 2) + 10 * (beta + 2)))
        p = random_step_path(rng, 64)
        t = np.sort(rng.uniform(0, 0.999, 16))
        assert compose_check(p, alpha, beta, t) <= 1e-10

    def test_dense_fallback(self):
        rng = np.random.default_rng(4)
        p = random_step_path(rng, 8)
        t = np.sort(rng.uniform(0, 0.99, 16))
        assert compose_check(p, 0.7, -0.3, t, method="dense") <= 1e-8

    def test_nested_against_quadrature(self):
        rng = np.random.default_rng(5)
        p = random_step_path(rng, 8)
        alpha, beta = 0.7, 0.4
        inner = lambda u: apply(RLTransform(beta), p, [u])[0]
        for t in (0.3, 0.85):
            f = lambda u: alpha * (1 - u) ** (alpha - 1) * inner(u)
            val, _ = integrate.quad(f, 0, t, points=[x for x in p.times if 0 < x < t], limit=400,
                                    epsabs=1e-13)
            want = val + (1 - t) ** alpha * inner(t)
            assert compose_apply(p, alpha, beta, [t])[0] == pytest.approx(want, abs=1e-9)

    @pytest.mark.parametrize("alpha", [0.25, 0.5, 1.0])
    def test_inverse(self, alpha):
        rng = np.random.default_rng(6)
        p = random_step_path(rng, 20)
        t = np.sort(rng.uniform(0, 0.99, 16))
        inv = compose_apply(p, -alpha, alpha, t)
        np.testing.assert_allclose(inv, evaluate(p, t), atol=1e-8)

    def test_identity_element_exact(self):
        rng = np.random.default_rng(7)
        p = random_step_path(rng, 8)
        t = np.linspace(0, 0.95, 9)
        assert compose_check(p, 0.0, 0.6, t) == 0.0
        assert compose_check(p, 0.6, 0.0, t) == 0.0

    def test_rejects_low_total_order(self, step_path):
        with pytest.raises(ValueError):
            compose_check(step_path, -0.75, -0.5, [0.2])


# ---------------------------------------------------------------------------
# Jumps and inversion
# ---------------------------------------------------------------------------

class TestJumpsAndInversion:
    def test_unit_jump(self, step_path):
        tp = transform_path(RLTransform(1.0), step_path)
        assert np.diff(tp.values)[0] == pytest.approx(0.5, abs=1e-15)
        assert jump_identity_check(step_path, 1.0) <= 1e-15

    def test_constant_path(self):
        assert jump_identity_check(SampledPath.constant(1.0, 2.0), 0.5) == 0.0

    @pytest.mark.parametrize("alpha", [-0.5, 0.0, 0.3, 1.2])
    def test_random_paths(self, alpha):
        rng = np.random.default_rng(8)
        for _ in range(20):
            assert jump_identity_check(random_step_path(rng, 12), alpha) <= 1e-12

    def test_inversion_example(self, step_path):
        tp = transform_path(RLTransform(0.25), step_path)
        assert inversion_reconstruct(tp, 0.25, 0.25, 0.75) == pytest.approx(1.0, abs=1e-12)

    def test_inversion_constant(self):
        tp = transform_path(RLTransform(0.5), SampledPath.constant(1.0, 4.0))
        assert inversion_reconstruct(tp, 0.5, 0.1, 0.9) == pytest.approx(0.0, abs=1e-12)

    def test_inversion_random(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            p = random_step_path(rng, 10)
            alpha = rng.uniform(0.05, 2.0)
            s, t = np.sort(rng.uniform(0, 0.99, 2))
            tp = transform_path(RLTransform(alpha), p)
            got = inversion_reconstruct(tp, alpha, s, t)
            assert got == pytest.approx(evaluate(p, t) - evaluate(p, s), abs=1e-8)

    def test_inversion_bound(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            p = random_step_path(rng, 10)
            alpha = rng.uniform(0.05, 2.0)
            s, t = np.sort(rng.uniform(0, 0.99, 2))
            lhs, rhs = inversion_bound_check(p, alpha, s, t)
            assert lhs <= rhs + 1e-12

    def test_inversion_errors(self, step_path):
        tp = transform_path(RLTransform(0.5), step_path)
        with pytest.raises(ValueError):
            inversion_reconstruct(tp, 0.5, 0.2, 1.0)
        with pytest.raises(ValueError):
            inversion_reconstruct(tp, -0.5, 0.2, 0.5)


# ---------------------------------------------------------------------------
# Martingale moments
# ---------------------------------------------------------------------------

class TestMartingaleMoments:
    def test_brownian_mean_and_second_moment(self):
        alpha, n = 0.4, 64
        grid = np.linspace(0, 1, n + 1)
        W = simulate_increments(ProcessSpec("brownian"), grid, 100_000, RngStream(12).generator())
        t = grid[40]
        # exact transform of the step interpolation of W on the grid
        x = 1.0 - grid[:41]
        weights = np.diff(-(x ** alpha))
        I = W[:, :40] @ weights + (1 - t) ** alpha * W[:, 40]
        se = I.std(ddof=1) / np.sqrt(I.size)
        assert abs(I.mean()) <= 3 * se
        # the step interpolation is itself a martingale transform of the increments:
        # I_t = sum_k (x_{k}^alpha) dW_k with x evaluated at the increment's left end
        c = ((1 - grid[1:41]) ** alpha)
        second = np.sum(c**2 * np.diff(grid[:41]))
        sq = I**2
        assert abs(sq.mean() - second) <= 3 * sq.std(ddof=1) / np.sqrt(sq.size)
        cont = ((1 - (1 - t) ** (2 * alpha + 1)) / (2 * alpha + 1))
        assert abs(second - cont) < 0.02
