import math

import numpy as np
import pytest
from scipy import integrate, stats

from fracpath.bmo_oscillation import (ConditionalKernel, ConstantWeight, DeterministicWeight,
                                      GBMPowerWeight, NormEstimate, OscillationCurve,
                                      brownian_increment_kernel, drifted_max_exp_moment,
                                      estimate_b_inf_q_alpha, estimate_bmo, estimate_smp,
                                      fit_exponential_tail,
                                      maximal_oscillation_certificate, moment_equivalence_check,
                                      oscillation_curve, oscillation_rate_regression)
from fracpath.bs_hedging import MarkovKernelModel, delta_oscillation_curve, kernel_phi
from fracpath.core_paths import RngStream
from fracpath.holder_spaces import call, h_theta_a

ONE = lambda a, x: 1.0


# ---------------------------------------------------------------------------
# BMO
# ---------------------------------------------------------------------------

class TestBMO:
    def test_zero_process(self):
        k = ConditionalKernel(lambda a, x, t, p: 0.0)
        est = estimate_bmo(k, ONE, 2.0, "bmo", [0.0, 0.5], [0.0], [0.5, 1.0])
        assert est.value == 0.0

    def test_brownian(self):
        grid = np.linspace(0, 1, 11)
        est = estimate_bmo(brownian_increment_kernel(), ONE, 2.0, "bmo", grid, [0.0], grid)
        assert est.value == pytest.approx(1.0, abs=1e-14)
        assert est.kind == "bmo_p^Phi"

    def test_variants_agree_for_continuous(self):
        grid = np.linspace(0, 1, 6)
        k = brownian_increment_kernel(0.7)
        a = estimate_bmo(k, ONE, 3.0, "BMO", grid, [0.0], grid).value
        b = estimate_bmo(k, ONE, 3.0, "bmo", grid, [0.0], grid).value
        assert a == b

    def test_grid_refinement_monotone(self):
        k = brownian_increment_kernel()
        phi = lambda a, x: 1.0 + a
        coarse = estimate_bmo(k, phi, 2.0, "bmo", [0.0, 0.5], [0.0], [0.5, 1.0]).value
        fine = estimate_bmo(k, phi, 2.0, "bmo", np.linspace(0, 1, 21), [0.0],
                            np.linspace(0, 1, 21)).value
        assert fine >= coarse

    def test_nested_mc_mode(self):
        def f(a, x, t, p):
            rng = np.random.default_rng(0)
            z = np.abs(rng.standard_normal(20000) * math.sqrt(t - a)) ** p
            return z.mean(), z.std(ddof=1) / math.sqrt(z.size)
        est = estimate_bmo(ConditionalKernel(f, "nested_mc"), ONE, 2.0, "bmo", [0.0], [0.0], [1.0])
        assert abs(est.value - 1.0) <= 4 * est.stderr and est.stderr > 0

    @pytest.mark.parametrize("kwargs", [dict(p=0.0), dict(variant="xyz"), dict(a_grid=[])])
    def test_errors(self, kwargs):
        args = dict(y_kernel=brownian_increment_kernel(), phi_kernel=ONE, p=2.0, variant="bmo",
                    a_grid=[0.0], state_grid=[0.0], t_grid=[1.0])
        args.update(kwargs)
        with pytest.raises(ValueError):
            estimate_bmo(**args)

    def test_norm_estimate_validation(self):
        with pytest.raises(ValueError):
            NormEstimate(-1.0, "SM_p")
        with pytest.raises(ValueError):
            NormEstimate(1.0, "nope")
        row = NormEstimate(1.5, "SM_p", p=2.0).to_csv().splitlines()
        assert row[0] == "kind,p,q,alpha,value,stderr,grid_a,grid_state"


# ---------------------------------------------------------------------------
# SM_p
# ---------------------------------------------------------------------------

def max_exp_moment_oracle(c, mu, h):
    """E exp(c M_h) by integrating against the density of the drifted maximum."""
    rh = math.sqrt(h)

    def dens(m):
        return (2 / rh * stats.norm.pdf((m - mu * h) / rh)
                - 2 * mu * math.exp(2 * mu * m) * stats.norm.cdf((-m - mu * h) / rh))
    top = abs(mu) * h + 40 * rh
    val, _ = integrate.quad(lambda m: math.exp(c * m) * dens(m), 0, top, epsabs=1e-13,
                            limit=200)
    return val


class TestSMp:
    def test_constant(self):
        assert estimate_smp(ConstantWeight(2.0), 2.0, [0.0, 0.5]).value == 1.0

    def test_nonincreasing(self):
        est = estimate_smp(DeterministicWeight(lambda t: 2.0 - t), 2.0, np.linspace(0, 1, 11))
        assert est.value == pytest.approx(1.0)

    @pytest.mark.parametrize("c,mu,h", [(1.0, -0.5, 1.0), (2.0, -0.5, 0.3), (0.5, 0.5, 2.0)])
    def test_reflection_formula(self, c, mu, h):
        assert drifted_max_exp_moment(c, mu, h) == pytest.approx(max_exp_moment_oracle(c, mu, h),
                                                                 rel=1e-9)

    def test_gbm_mc_between_bounds(self):
        w = GBMPowerWeight(1.0)
        exact = estimate_smp(w, 1.0, [0.0]).value
        mc = estimate_smp(w, 1.0, [0.0], method="mc", replicas=20000, rng=RngStream(1), steps=256)
        # E sup Y over the horizon equals the p = 1 ratio at a = 0
        assert mc.value <= 1.05 * exact
        assert mc.value >= exact - 0.05 * exact

    def test_ordering_in_p(self):
        w = GBMPowerWeight(1.0)
        vals = [estimate_smp(w, p, [0.0, 0.5]).value for p in (1.0, 2.0, 4.0)]
        assert vals[0] <= vals[1] <= vals[2]


# ---------------------------------------------------------------------------
# B_{inf,q}^alpha
# ---------------------------------------------------------------------------

class TestBesov:
    def test_zero(self):
        assert estimate_b_inf_q_alpha(lambda t: 0.0, 0.5, 2.0).value == 0.0

    def test_exact_cancellation(self):
        est = estimate_b_inf_q_alpha(lambda t: (1 - t) ** -0.5, 0.5, np.inf)
        assert est.value == pytest.approx(1.0)

    @pytest.mark.parametrize("alpha,q", [(0.25, 1.0), (0.5, 2.0), (1.0, 4.0)])
    def test_relation(self, alpha, q):
        curve = lambda t: math.sqrt(t)
        inf = estimate_b_inf_q_alpha(curve, alpha, np.inf).value
        fin = estimate_b_inf_q_alpha(curve, alpha, q).value
        assert inf <= (alpha * q) ** (1 / q) * fin * (1 + 1e-9)

    def test_closed_integral(self):
        # curve 1: int_0^1 (1-t)^(alpha q) dt/(1-t) = 1/(alpha q)
        est = estimate_b_inf_q_alpha(lambda t: 1.0, 0.5, 2.0)
        assert est.value == pytest.approx(1.0, rel=1e-9)

    def test_sampled_curve_warns(self):
        t = np.linspace(0, 0.9, 10)
        with pytest.warns(RuntimeWarning):
            estimate_b_inf_q_alpha((t, 1.0 - t), 0.5, 2.0)


# ---------------------------------------------------------------------------
# Oscillation
# ---------------------------------------------------------------------------

class TestOscillation:
    def test_constant_field(self):
        c = oscillation_curve(lambda t, y: np.zeros_like(y), np.linspace(-1, 1, 5), [0.2, 0.5])
        assert np.all(c.under_osc == 0) and np.all(c.over_osc == 0)

    def test_time_independent_field(self):
        c = oscillation_curve(lambda t, y: y, np.linspace(-1, 1, 5), [0.2, 0.5])
        assert np.all(c.under_osc == 2.0)

    def test_curve_validation(self):
        with pytest.raises(ValueError):
            OscillationCurve(np.array([0.5]), np.array([2.0]), np.array([1.0]))

    def test_empty_support(self):
        with pytest.raises(ValueError):
            oscillation_curve(lambda t, y: y, [], [0.5])

    def test_exact_power_law(self):
        d = np.geomspace(1e-1, 1e-3, 21)
        c = OscillationCurve(1 - d, d ** -0.25, d ** -0.25)
        assert oscillation_rate_regression(c).slope == pytest.approx(-0.25, abs=1e-9)

    def test_regression_errors(self):
        d = np.geomspace(1e-1, 1e-3, 21)
        with pytest.raises(ValueError):
            oscillation_rate_regression(OscillationCurve(1 - d, 0 * d, 0 * d))

    def test_binary_type_rate_and_certificate(self):
        # kink placed at the money in the Brownian coordinate at maturity
        m = MarkovKernelModel("C2", h_theta_a(0.5, 0.0, 2.0, shift=math.exp(-0.5)))
        t = 1 - np.geomspace(1e-1, 1e-6, 26)
        curve = delta_oscillation_curve(m, t)
        rate = oscillation_rate_regression(curve)
        assert rate.slope == pytest.approx(-0.25, abs=0.05)
        ok, _ = maximal_oscillation_certificate(curve, float(kernel_phi(m, 0.0, 1.0)))
        assert ok
        assert np.all(2 * curve.under_osc >= curve.over_osc * (1 - 1e-12))

    def test_lipschitz_rate(self):
        m = MarkovKernelModel("C2", call(1.0))
        t = 1 - np.geomspace(1e-1, 1e-5, 17)
        assert oscillation_rate_regression(delta_oscillation_curve(m, t)).slope >= -0.05


# ---------------------------------------------------------------------------
# Moment equivalence
# ---------------------------------------------------------------------------

class TestMomentEquivalence:
    def test_gaussian(self):
        k = brownian_increment_kernel()
        mk = lambda a, x, r: k(a, x, 1.0, r)[0]
        ratio, _ = moment_equivalence_check(mk, ONE, [0.0, 0.5], [0.0])
        assert ratio == pytest.approx(3 ** 0.25, abs=1e-12)

    def test_zero(self):
        ratio, _ = moment_equivalence_check(lambda a, x, r: 0.0, ONE, [0.0], [0.0])
        assert ratio == 1.0

    def test_degenerate_weight(self):
        with pytest.raises(ValueError):
            moment_equivalence_check(lambda a, x, r: 1.0, lambda a, x: 0.0, [0.0], [0.0])

    def test_exponential_tail_fit(self):
        x = np.random.default_rng(8).exponential(0.5, 200_000)
        b, beta, probs = fit_exponential_tail(x, np.linspace(0.5, 3.0, 8))
        assert beta == pytest.approx(2.0, rel=0.03)
        assert b == pytest.approx(1.0, rel=0.05)
        assert np.all(np.diff(probs) < 0)

    def test_exponential_tail_errors(self):
        with pytest.raises(ValueError):
            fit_exponential_tail(np.ones(10), [2.0, 3.0])
        with pytest.raises(ValueError):
            fit_exponential_tail(np.ones(10), [0.5])

