import numpy as np
import pytest

from fracpath.time_nets import (TimeNet, adapted_net, bracketing_knots, mesh_theta, net_to_csv,
                                quantization_masses, randomized_net, uniform_net)


# ---------------------------------------------------------------------------
# TimeNet and mesh sizes
# ---------------------------------------------------------------------------

class TestTimeNet:
    @pytest.mark.parametrize("knots", [[0.0], [0.1, 1.0], [0.0, 0.9], [0.0, 0.5, 0.5, 1.0]])
    def test_invalid(self, knots):
        with pytest.raises(ValueError):
            TimeNet(1.0, np.array(knots))

    def test_mesh_examples(self):
        assert mesh_theta(TimeNet(1.0, [0.0, 0.5, 1.0]), 1.0) == 0.5
        assert mesh_theta(TimeNet(1.0, [0.0, 0.75, 1.0]), 0.5) == pytest.approx(0.75)

    def test_mesh_theta_one_is_max_gap(self):
        net = TimeNet(2.0, [0.0, 0.1, 0.7, 1.2, 2.0])
        assert mesh_theta(net, 1.0) == pytest.approx(0.8)

    @pytest.mark.parametrize("theta", [0.0, 1.5, -0.2])
    def test_mesh_bad_theta(self, theta):
        with pytest.raises(ValueError):
            mesh_theta(TimeNet(1.0, [0.0, 1.0]), theta)

    def test_monotonicity_inequality(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            k = np.sort(rng.uniform(0, 1, 6))
            net = TimeNet(1.0, np.concatenate(([0.0], k, [1.0])))
            theta = rng.uniform(0.05, 1.0)
            i = rng.integers(1, net.n + 1)
            lo, hi = net.knots[i - 1], net.knots[i]
            u = rng.uniform(lo, hi)
            lhs = (hi - u) / (1.0 - u) ** (1 - theta)
            rhs = (hi - lo) / (1.0 - lo) ** (1 - theta)
            assert lhs <= rhs * (1 + 1e-12)

    def test_csv(self):
        text = net_to_csv(TimeNet(1.0, [0.0, 0.25, 1.0]))
        assert text == "t\n0\n0.25\n1\n"


# ---------------------------------------------------------------------------
# Adapted and randomized nets
# ---------------------------------------------------------------------------

class TestAdaptedNet:
    def test_examples(self):
        np.testing.assert_allclose(adapted_net(1.0, 1.0, 2).knots, [0.0, 0.5, 1.0])
        np.testing.assert_allclose(adapted_net(1.0, 0.5, 2).knots, [0.0, 0.75, 1.0])
        np.testing.assert_allclose(uniform_net(1.0, 7).knots, np.linspace(0, 1, 8))

    def test_last_knot_pinned(self):
        net = adapted_net(3.0, 0.3, 17)
        assert net.knots[-1] == 3.0 and net.n == 17

    def test_n_zero(self):
        with pytest.raises(ValueError):
            adapted_net(1.0, 0.5, 0)

    @pytest.mark.parametrize("theta", np.round(np.arange(0.1, 1.01, 0.1), 2))
    @pytest.mark.parametrize("n", [1, 7, 100, 10_000])
    def test_quantization_and_mesh(self, theta, n):
        net = adapted_net(1.0, theta, n)
        assert np.max(np.abs(quantization_masses(net, theta) * n - 1.0)) <= 1e-12 * n
        assert mesh_theta(net, theta) <= 1.0 / (theta * n) * (1 + 1e-12)
        assert np.all(np.diff(net.normalized_dist()) < 0)

    def test_horizon_scaling(self):
        T = 2.5
        net = adapted_net(T, 0.4, 20)
        assert mesh_theta(net, 0.4) <= T**0.4 / (0.4 * 20) * (1 + 1e-12)
        np.testing.assert_allclose(net.knots / T, adapted_net(1.0, 0.4, 20).knots, rtol=1e-14)

    def test_graded_net_stores_exact_distances(self):
        net = adapted_net(1.0, 0.1, 10_000)
        assert net.dist[-2] == pytest.approx(1e-40, rel=1e-12)
        assert np.all(net.gaps > 0)


class TestRandomizedNet:
    def test_zero_shift(self):
        np.testing.assert_array_equal(randomized_net(1.0, 0.5, 5, 0.0).knots,
                                      adapted_net(1.0, 0.5, 5).knots)

    def test_example(self):
        np.testing.assert_allclose(randomized_net(1.0, 1.0, 2, 0.5).knots,
                                   [0.0, 0.25, 0.75, 1.0])

    @pytest.mark.parametrize("r", [-0.1, 1.0])
    def test_bad_r(self, r):
        with pytest.raises(ValueError):
            randomized_net(1.0, 0.5, 4, r)

    def test_mesh_bound(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            theta = rng.uniform(0.1, 1.0)
            n = int(rng.integers(1, 200))
            r = rng.uniform(0, 1)
            net = randomized_net(1.0, theta, n, r)
            assert mesh_theta(net, 1.0) <= mesh_theta(adapted_net(1.0, theta, n), 1.0) + 1e-15
            assert mesh_theta(net, 1.0) <= 1.0 / (theta * n) + 1e-15


class TestBracketing:
    net = TimeNet(1.0, [0.0, 0.5, 1.0])

    def test_examples(self):
        assert bracketing_knots(self.net, 0.3) == (0.0, 0.5)
        assert bracketing_knots(self.net, 0.5) == (0.5, 1.0)
        assert bracketing_knots(TimeNet(1.0, [0.0, 1.0]), 0.0) == (0.0, 1.0)

    @pytest.mark.parametrize("a", [1.0, -0.1])
    def test_invalid(self, a):
        with pytest.raises(ValueError):
            bracketing_knots(self.net, a)
