import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from fracpath.holder_spaces import binary, custom_table, h_theta_a, linear, polynomial
from fracpath.levy_gradient import (LatticeLaw, LevyModel, MeasureProfile, certify_classes,
                                    d_rho_F, d_rho_F_dual, density, gamma_density, gamma_mass,
                                    gradient_sup_curve, singularity_regression, transition_F,
                                    tv_profile)

CAUCHY = LevyModel("cauchy")
GAUSS = LevyModel("gaussian")
SKELLAM = LevyModel("compound_poisson", atoms=((1.0, 1.0), (-1.0, 1.0)))
SKELLAM_F = (1 + math.exp(-2) * special.iv(0, 2)) / 2


def law_mass(law):
    if isinstance(law, LatticeLaw):
        return law.probs.sum() + law.truncated_mass
    return law.mass()


# ---------------------------------------------------------------------------
# Models and laws
# ---------------------------------------------------------------------------

class TestModels:
    @pytest.mark.parametrize("kw", [dict(kind="levy"), dict(kind="symmetric_stable", beta=2.0),
                                    dict(kind="compound_poisson"),
                                    dict(kind="compound_poisson", atoms=((0.0, 1.0),)),
                                    dict(kind="cauchy", T=0.0)])
    def test_invalid_model(self, kw):
        with pytest.raises(ValueError):
            LevyModel(**kw)

    @pytest.mark.parametrize("kw", [dict(kind="dirac", z=0.0), dict(kind="power_density", eps=1.0),
                                    dict(kind="atoms", atoms=((1.0, 0.5),)), dict(kind="other")])
    def test_invalid_measure(self, kw):
        with pytest.raises(ValueError):
            MeasureProfile(**kw)

    def test_engines(self):
        assert CAUCHY.engine == "closed_form"
        assert LevyModel("symmetric_stable", beta=1.5).engine == "fft_inversion"
        assert SKELLAM.engine == "lattice_sum"


class TestDensity:
    def test_cauchy_value(self):
        assert float(density(CAUCHY, 1.0).pdf(np.array([0.0]))[0]) == pytest.approx(1 / math.pi)

    @pytest.mark.parametrize("model", [CAUCHY, GAUSS, SKELLAM, LevyModel("symmetric_stable", beta=1.5),
                                       LevyModel("symmetric_stable", beta=0.7)])
    @pytest.mark.parametrize("s", [0.01, 1.0])
    def test_normalization(self, model, s):
        assert law_mass(density(model, s)) == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("beta", [0.7, 1.5])
    def test_self_similarity(self, beta):
        m = LevyModel("symmetric_stable", beta=beta)
        x = np.array([-3.0, -0.4, 0.0, 0.2, 1.7, 6.0])
        for s in (0.05, 0.4):
            c = s ** (-1 / beta)
            lhs = density(m, s).pdf(x)
            rhs = c * density(m, 1.0).pdf(c * x)
            np.testing.assert_allclose(lhs, rhs, atol=1e-6, rtol=1e-6)

    def test_fft_matches_cauchy(self):
        x = np.linspace(-20, 20, 41)
        fft = density(LevyModel("symmetric_stable", beta=1.0), 0.5).pdf(x)
        np.testing.assert_allclose(fft, density(CAUCHY, 0.5).pdf(x), atol=1e-9)

    def test_stable_cdf_symmetry(self):
        law = density(LevyModel("symmetric_stable", beta=1.3), 1.0)
        x = np.array([0.3, 1.0, 5.0])
        np.testing.assert_allclose(law.cdf(x) + law.cdf(-x), 1.0, atol=1e-9)

    def test_skellam_pmf(self):
        law = density(SKELLAM, 1.0)
        for k in (0, 1, 3):
            assert float(law.pmf(np.array([float(k)]))[0]) == pytest.approx(
                math.exp(-2) * special.iv(k, 2), rel=1e-10)

    def test_bad_time(self):
        with pytest.raises(ValueError):
            density(CAUCHY, 0.0)
        with pytest.raises(ValueError):
            density(CAUCHY, 2.0)


# ---------------------------------------------------------------------------
# Transition operator and difference operators
# ---------------------------------------------------------------------------

class TestTransition:
    def test_constant(self):
        f = polynomial([3.0])
        assert transition_F(CAUCHY, f, 0.5, 0.3) == pytest.approx(3.0, abs=1e-10)

    def test_skellam(self):
        assert float(transition_F(SKELLAM, binary(0.0), 0.0, 0.0)) == pytest.approx(SKELLAM_F, abs=1e-12)

    def test_terminal(self):
        f = h_theta_a(0.5)
        assert transition_F(CAUCHY, f, 1.0, 0.25) == pytest.approx(0.5)

    def test_growth_probe(self):
        with pytest.raises(ValueError):
            transition_F(CAUCHY, polynomial([0.0, 0.0, 1.0]), 0.5, 0.0)

    def test_gaussian_binary(self):
        v = transition_F(GAUSS, binary(0.0), 0.75, np.array([0.0, 0.5]))
        np.testing.assert_allclose(v, stats.norm.cdf(np.array([0.0, 0.5]) / 0.5), atol=1e-14)

    def test_cauchy_quadrature(self):
        # F(t, x) = E h(x + X) against an independent quadrature of the same integral
        f = h_theta_a(0.5)
        s = 0.2
        pdf = lambda y: s / (math.pi * (s * s + y * y))
        want = integrate.quad(lambda y: math.sqrt(y) * pdf(y - 0.1), 0, 1, limit=200)[0] \
            + integrate.quad(pdf, 0.9, np.inf)[0]
        assert transition_F(CAUCHY, f, 0.8, 0.1) == pytest.approx(want, abs=1e-10)


class TestDifferenceOperators:
    def test_constant(self):
        f = polynomial([2.0])
        assert d_rho_F(GAUSS, f, MeasureProfile("dirac", z=0.5), 0.5, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_dirac_skellam(self):
        F = lambda x: float(transition_F(SKELLAM, binary(0.0), 0.0, x))
        got = d_rho_F(SKELLAM, binary(0.0), MeasureProfile("dirac", z=1.0), 0.0, 0.0)
        assert got == pytest.approx(F(1.0) - F(0.0), abs=1e-14)

    def test_linearity(self):
        rho = MeasureProfile("atoms", atoms=((0.5, 0.25), (-0.3, 0.75)))
        f, g = binary(0.0), h_theta_a(0.5)
        both = custom_table(np.linspace(-3, 3, 601), 2 * binary(0.0)(np.linspace(-3, 3, 601)))
        a = d_rho_F(GAUSS, f, rho, 0.5, 0.1)
        b = d_rho_F(GAUSS, g, rho, 0.5, 0.1)
        # linear combination through the defining difference quotients
        F = lambda h, x: float(transition_F(GAUSS, h, 0.5, x))
        comb = sum(p * ((2 * F(f, 0.1 + z) + 3 * F(g, 0.1 + z)) - (2 * F(f, 0.1) + 3 * F(g, 0.1))) / z
                   for z, p in rho.atoms)
        assert 2 * a + 3 * b == pytest.approx(comb, abs=1e-12)
        assert both.kind == "custom"

    def test_divergence_flag(self):
        with pytest.raises(ValueError):
            d_rho_F(SKELLAM, binary(0.0), MeasureProfile("power_density", eps=0.5), 0.0, -1e-13)

    def test_dual_matches_direct(self):
        rho = MeasureProfile("dirac", z=0.5)
        f = h_theta_a(0.5)
        x = np.array([-0.5, 0.0, 0.3, 1.2])
        dual = d_rho_F_dual(GAUSS, f, rho, 0.75, x)
        direct = [d_rho_F(GAUSS, f, rho, 0.75, xv) for xv in x]
        np.testing.assert_allclose(dual, direct, atol=1e-8)


# ---------------------------------------------------------------------------
# gamma_{t, rho}
# ---------------------------------------------------------------------------

class TestGamma:
    def test_dirac_form(self):
        rho = MeasureProfile("dirac", z=0.5)
        v = np.array([-1.0, 0.0, 0.2, 0.7])
        got = gamma_density(GAUSS, rho, 0.75, v)
        want = (stats.norm.cdf(v / 0.5) - stats.norm.cdf((v - 0.5) / 0.5)) / 0.5
        np.testing.assert_allclose(got, want, atol=1e-14)

    @pytest.mark.parametrize("model,rho,t", [
        (CAUCHY, MeasureProfile("power_density", eps=0.25), 0.9),
        (LevyModel("compound_poisson", atoms=((0.5, 1.0), (-0.3, 2.0))),
         MeasureProfile("power_density", eps=0.5), 0.0),
        (GAUSS, MeasureProfile("dirac", z=0.5), 0.75),
        (GAUSS, MeasureProfile("dirac", z=-0.4), 0.5),
        (LevyModel("symmetric_stable", beta=1.5), MeasureProfile("atoms", atoms=((0.2, 0.5), (-1.0, 0.5))), 0.5),
    ])
    def test_mass(self, model, rho, t):
        assert gamma_mass(model, rho, t) == pytest.approx(1.0, abs=1e-6)

    def test_duality_binary(self):
        rho = MeasureProfile("power_density", eps=0.5)
        model = LevyModel("compound_poisson", atoms=((0.5, 1.0), (-0.3, 2.0)))
        g0 = float(gamma_density(model, rho, 0.0, np.array([0.0]))[0])
        assert d_rho_F(model, binary(0.0), rho, 0.0, 0.0) == pytest.approx(g0, abs=1e-6)

    def test_terminal_time(self):
        with pytest.raises(ValueError):
            gamma_density(GAUSS, MeasureProfile("dirac", z=0.5), 1.0, [0.0])


# ---------------------------------------------------------------------------
# Sup curves and regression
# ---------------------------------------------------------------------------

class TestSingularity:
    rho = MeasureProfile("power_density", eps=0.25)
    t_grid = 1.0 - np.geomspace(1e-4, 1e-5, 9)

    def test_singular_branch(self):
        fit = singularity_regression(CAUCHY, h_theta_a(0.25), self.rho, self.t_grid, eta=0.25)
        assert fit.expected == pytest.approx(-0.5)
        assert fit.slope == pytest.approx(-0.5, abs=0.07)
        assert fit.branch() == "singular"

    def test_bounded_branch(self):
        f = custom_table([0.0, 1.0], [0.0, 1.0])
        fit = singularity_regression(CAUCHY, f, self.rho, self.t_grid, eta=1.0)
        assert fit.slope == pytest.approx(0.0, abs=0.05)
        assert fit.branch() == "bounded"

    def test_constant_skipped(self):
        with pytest.raises(ValueError):
            singularity_regression(CAUCHY, polynomial([1.0]), self.rho, self.t_grid)

    def test_sup_curve_monotone(self):
        t = np.linspace(0.2, 0.95, 6)
        curve = gradient_sup_curve(GAUSS, binary(0.0), MeasureProfile("dirac", z=0.5), t)
        assert np.all(np.diff(curve.sup) >= -1e-10)
        assert curve.to_csv(1.0).splitlines()[0] == "t,sup_grad,T_minus_t"

    def test_martingale_in_t(self):
        rho = MeasureProfile("dirac", z=0.5)
        d0 = float(gamma_density(GAUSS, rho, 0.0, np.array([0.0]))[0])
        rng = np.random.default_rng(3)
        for t in (0.25, 0.5, 0.75):
            x = rng.normal(0.0, math.sqrt(t), 100_000)
            vals = gamma_density(GAUSS, rho, t, -x)
            assert abs(vals.mean() - d0) <= 3 * vals.std(ddof=1) / math.sqrt(x.size)


# ---------------------------------------------------------------------------
# Total variation and classes
# ---------------------------------------------------------------------------

class TestTV:
    def test_zero_shift(self):
        assert tv_profile(GAUSS, [0.0], [1.0]).tv[0, 0] == 0.0

    def test_gaussian(self):
        tv = tv_profile(GAUSS, [1.0, 0.3], [1.0, 0.2])
        np.testing.assert_allclose(tv.tv, tv.closed, atol=1e-10)
        assert tv.tv[0, 0] == pytest.approx(2 * (2 * stats.norm.cdf(0.5) - 1), abs=1e-10)

    def test_gaussian_small_z_slope(self):
        z = np.geomspace(1e-8, 1e-5, 6)
        tv = tv_profile(GAUSS, z, [1.0]).tv[:, 0]
        assert np.polyfit(z, tv, 1)[0] == pytest.approx(math.sqrt(2 / math.pi), abs=1e-3)

    def test_cauchy_closed_and_envelope(self):
        z = np.array([1e-3, 0.5, 4.0])
        tv = tv_profile(CAUCHY, z, [0.1, 1.0])
        np.testing.assert_allclose(tv.tv, tv.closed, atol=1e-9)
        assert np.all(tv.tv / z[:, None] <= tv.envelope * (1 + 1e-9))

    def test_lattice(self):
        tv = tv_profile(SKELLAM, [1.0], [1.0]).tv[0, 0]
        law = density(SKELLAM, 1.0)
        k = np.arange(-60, 61, dtype=float)
        assert tv == pytest.approx(np.abs(law.pmf(k - 1) - law.pmf(k)).sum(), abs=1e-12)

    def test_csv(self):
        assert tv_profile(GAUSS, [0.5], [1.0]).to_csv().splitlines()[0] == "z,s,tv"


class TestClasses:
    def test_power_density_constants(self):
        rep = certify_classes(CAUCHY, MeasureProfile("power_density", eps=0.25), 1.0, 0.25)
        assert rep.results["U"] == pytest.approx(1.0)
        assert rep.results["L"] == pytest.approx(1.0)
        assert rep.results["calU"] == pytest.approx(2 / math.pi, rel=1e-3)
        assert rep.results["calL"] >= 1 / (2 * math.pi)
        assert rep.passed

    def test_zero_exponent(self):
        rep = certify_classes(CAUCHY, MeasureProfile("dirac", z=0.3), 1.0, 0.0,
                              s_grid=[0.5, 1.0], z_grid=[0.1, 1.0])
        assert rep.results["U"] <= 1.0
