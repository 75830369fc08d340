import numpy as np
import pytest

from fracpath.core_paths import (ProcessSpec, RngStream, SampledPath, evaluate, left_limit,
                                 path_to_csv, simulate_increments, simulate_path, stable_rvs)


# ---------------------------------------------------------------------------
# SampledPath
# ---------------------------------------------------------------------------

class TestSampledPath:
    def test_constant(self):
        p = SampledPath.constant(1.0, 2.5)
        assert evaluate(p, 0.0) == 2.5
        assert evaluate(p, 0.73) == 2.5
        assert evaluate(p, 1.0) == 2.5

    def test_right_continuity(self, step_path):
        assert evaluate(step_path, 0.5) == 1.0
        assert evaluate(step_path, 0.4999) == 0.0

    def test_left_limit(self, step_path):
        assert left_limit(step_path, 0.5) == 0.0
        assert evaluate(step_path, 0.5) - left_limit(step_path, 0.5) == 1.0

    def test_left_limit_at_zero(self, step_path):
        assert left_limit(step_path, 0.0) == evaluate(step_path, 0.0)

    def test_continuity_point(self, step_path):
        assert left_limit(step_path, 0.7) == evaluate(step_path, 0.7)

    def test_values_at_change_points(self):
        p = SampledPath(2.0, [0.0, 0.3, 1.1], [1.0, -2.0, 4.0])
        np.testing.assert_array_equal(evaluate(p, p.times), p.values)

    def test_vectorized_evaluation(self, step_path):
        np.testing.assert_array_equal(evaluate(step_path, [0.0, 0.5, 1.0]), [0.0, 1.0, 1.0])

    @pytest.mark.parametrize("t", [-0.1, 1.1])
    def test_out_of_range(self, step_path, t):
        with pytest.raises(ValueError):
            evaluate(step_path, t)
        with pytest.raises(ValueError):
            left_limit(step_path, t)

    @pytest.mark.parametrize("times,values", [
        ([0.1, 0.5], [0.0, 1.0]),
        ([0.0, 0.5, 0.5], [0.0, 1.0, 2.0]),
        ([0.0, 1.5], [0.0, 1.0]),
        ([0.0, 0.5], [0.0]),
    ])
    def test_invalid(self, times, values):
        with pytest.raises(ValueError):
            SampledPath(1.0, times, values)

    def test_from_jumps_merges_equal_times(self):
        p = SampledPath.from_jumps(1.0, 0.0, [0.5, 0.2, 0.5], [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(p.times, [0.0, 0.2, 0.5])
        np.testing.assert_array_equal(p.values, [0.0, 2.0, 6.0])

    def test_immutable(self, step_path):
        with pytest.raises(ValueError):
            step_path.values[0] = 3.0

    def test_csv(self, step_path):
        text = path_to_csv(step_path)
        assert text.splitlines()[0] == "t,value"
        assert text.endswith("\n") and "\r" not in text
        assert text.splitlines()[2] == "0.5,1"


# ---------------------------------------------------------------------------
# Random streams and specs
# ---------------------------------------------------------------------------

class TestRngStream:
    def test_reproducible(self):
        a = RngStream(7, 3).generator().standard_normal(5)
        b = RngStream(7, 3).generator().standard_normal(5)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        a = RngStream(7, 3).generator().standard_normal(5)
        b = RngStream(7, 4).generator().standard_normal(5)
        assert not np.array_equal(a, b)

    def test_children_distinct(self):
        s = RngStream(1, 0)
        idx = {s.child(k).index for k in range(100)}
        assert len(idx) == 100

    @pytest.mark.parametrize("seed,index", [(-1, 0), (2**64, 0), (0, -1)])
    def test_invalid(self, seed, index):
        with pytest.raises(ValueError):
            RngStream(seed, index)


class TestProcessSpec:
    @pytest.mark.parametrize("kwargs", [
        dict(kind="levy"),
        dict(kind="symmetric_stable", params={"beta": 2.0}),
        dict(kind="symmetric_stable", params={"beta": 0.0}),
        dict(kind="compound_poisson"),
        dict(kind="compound_poisson", atoms=((1.0, -1.0),)),
        dict(kind="brownian", T=0.0),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ProcessSpec(**kwargs)

    def test_properties(self):
        assert ProcessSpec("cauchy").beta == 1.0
        assert ProcessSpec("compound_poisson", atoms=((1, 1), (-1, 2))).total_rate == 3.0


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

class TestSimulation:
    def test_brownian_at_zero(self):
        p = simulate_path(ProcessSpec("brownian"), [0.0], RngStream(5))
        assert p.values.tolist() == [0.0]

    def test_gbm_positive(self):
        grid = np.linspace(0, 1, 65)
        p = simulate_path(ProcessSpec("geometric_brownian"), grid, RngStream(5))
        assert np.all(p.values > 0)

    def test_deterministic(self):
        spec = ProcessSpec("symmetric_stable", params={"beta": 1.5})
        grid = np.linspace(0, 1, 17)
        a = simulate_path(spec, grid, RngStream(11, 2))
        b = simulate_path(spec, grid, RngStream(11, 2))
        np.testing.assert_array_equal(a.values, b.values)

    @pytest.mark.parametrize("grid", [[0.0, 0.5, 0.4], [0.1, 0.5], [0.0, 2.0]])
    def test_bad_grid(self, grid):
        with pytest.raises(ValueError):
            simulate_path(ProcessSpec("brownian"), grid, RngStream(0))

    def test_brownian_variance(self):
        w = simulate_increments(ProcessSpec("brownian"), [0.0, 1.0], 100_000,
                                RngStream(3).generator())[:, -1]
        v = w.var(ddof=1)
        se = np.sqrt(2.0 / (w.size - 1))
        assert abs(v - 1.0) <= 5 * se

    def test_gbm_mean_one(self):
        y = simulate_increments(ProcessSpec("geometric_brownian"), [0.0, 1.0], 100_000,
                                RngStream(4).generator())[:, -1]
        assert abs(y.mean() - 1.0) <= 4 * y.std(ddof=1) / np.sqrt(y.size)

    def test_poisson_jump_count(self):
        spec = ProcessSpec("compound_poisson", atoms=((1.0, 1.0), (-1.0, 1.0)))
        gen = RngStream(9).generator()
        counts = np.array([simulate_path(spec, [0.0], gen).n_pieces - 1
                           for _ in range(100_000)])
        se = counts.std(ddof=1) / np.sqrt(counts.size)
        assert abs(counts.mean() - 2.0) <= 3 * se

    def test_poisson_path_contains_jump_times(self):
        spec = ProcessSpec("compound_poisson", atoms=((0.5, 5.0),))
        p = simulate_path(spec, [0.0, 0.5, 1.0], RngStream(1))
        jt, dk = p.jumps()
        np.testing.assert_allclose(dk, 0.5 * np.round(dk / 0.5))
        assert np.all(jt > 0) and np.all(jt <= 1.0)

    def test_cauchy_branch_quartiles(self):
        x = stable_rvs(1.0, 200_000, RngStream(2).generator())
        np.testing.assert_allclose(np.quantile(x, [0.25, 0.75]), [-1.0, 1.0], atol=0.02)

    def test_stable_characteristic_function(self):
        beta = 1.5
        x = stable_rvs(beta, 200_000, RngStream(8).generator())
        for u in (0.5, 1.0, 2.0):
            emp = np.mean(np.cos(u * x))
            assert abs(emp - np.exp(-u**beta)) < 0.01
