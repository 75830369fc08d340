"""Transition laws of Levy models and weighted difference operators of their semigroups.

For a Levy process ``X``, a test function ``f`` and a probability measure
``rho`` on the real line this module evaluates

    F(t, x)      = E f(x + X_{T-t}),
    D_rho F(t,x) = int (F(t, x+z) - F(t, x)) / z  rho(dz),
    gamma(v)     = int P(X_{T-t} in v + [-z^+, z^-)) / |z|  rho(dz),

together with total-variation profiles of the shifted laws and empirical
certificates for the small-ball and coupling conditions used by the
gradient bounds.  ``D_rho F(t, x) = int gamma(u - x) df(u)`` links the two
last objects; it is the route used for the singularity regressions.
"""

from __future__ import annotations

import functools
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, interpolate, optimize, special, stats

from .core_paths import ProcessSpec
from .holder_spaces import TestFunction
from .square_functions import ExperimentReport

__all__ = [
    "LevyModel",
    "MeasureProfile",
    "ContinuousLaw",
    "LatticeLaw",
    "density",
    "transition_F",
    "d_rho_F",
    "gamma_density",
    "gamma_table",
    "gamma_mass",
    "d_rho_F_dual",
    "GradientSupCurve",
    "gradient_sup_curve",
    "TVProfile",
    "tv_profile",
    "certify_classes",
    "SingularityFit",
    "singularity_regression",
]


# ---------------------------------------------------------------------------
# Models and measures
# ---------------------------------------------------------------------------

_MODEL_KINDS = ("symmetric_stable", "cauchy", "compound_poisson", "gaussian")


@dataclass(frozen=True)
class LevyModel:
    """A Levy process on [0, T].

    ``symmetric_stable`` has characteristic function ``exp(-s|u|^beta)``,
    ``cauchy`` is its ``beta = 1`` case, ``gaussian`` is ``sigma W`` and
    ``compound_poisson`` jumps by ``z`` at rate ``lam`` for each atom.
    """

    kind: str
    T: float = 1.0
    beta: float = 1.0
    sigma: float = 1.0
    atoms: tuple = ()

    def __post_init__(self):
        if self.kind not in _MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if not self.T > 0:
            raise ValueError("horizon must be positive")
        if self.kind == "symmetric_stable" and not (0 < self.beta < 2):
            raise ValueError("stable index must lie in (0, 2)")
        if self.kind == "cauchy":
            object.__setattr__(self, "beta", 1.0)
        if self.kind == "gaussian":
            object.__setattr__(self, "beta", 2.0)
        if self.kind == "compound_poisson":
            if not self.atoms:
                raise ValueError("compound_poisson needs atoms")
            atoms = tuple((float(z), float(lam)) for z, lam in self.atoms)
            if any(lam <= 0 or z == 0 for z, lam in atoms):
                raise ValueError("atoms need nonzero sizes and positive rates")
            object.__setattr__(self, "atoms", atoms)

    @property
    def engine(self) -> str:
        return {"cauchy": "closed_form", "gaussian": "closed_form",
                "symmetric_stable": "fft_inversion", "compound_poisson": "lattice_sum"}[self.kind]

    def width(self, s: float) -> float:
        """Typical spread of X_s (used to grade quadrature meshes)."""
        if self.kind == "gaussian":
            return self.sigma * math.sqrt(s)
        if self.kind == "compound_poisson":
            return 1.0
        return s ** (1.0 / self.beta)

    def to_spec(self) -> ProcessSpec:
        if self.kind == "gaussian":
            return ProcessSpec("brownian", self.T, {"sigma": self.sigma})
        if self.kind == "compound_poisson":
            return ProcessSpec("compound_poisson", self.T, atoms=self.atoms)
        if self.kind == "cauchy":
            return ProcessSpec("cauchy", self.T)
        return ProcessSpec("symmetric_stable", self.T, {"beta": self.beta})


@dataclass(frozen=True)
class MeasureProfile:
    """A probability measure rho on the real line.

    kinds: ``dirac`` (at ``z``), ``power_density`` (``eps z^{eps-1}`` on
    ``(0, 1]``) and ``atoms`` (pairs ``(z, weight)``).
    """

    kind: str
    z: float = 1.0
    eps: float = 0.5
    atoms: tuple = ()

    def __post_init__(self):
        if self.kind == "dirac":
            if self.z == 0:
                raise ValueError("rho({0}) must vanish")
        elif self.kind == "power_density":
            if not (0 < self.eps < 1):
                raise ValueError("eps must lie in (0, 1)")
        elif self.kind == "atoms":
            w = np.array([p for _, p in self.atoms], dtype=float)
            if w.size == 0 or np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError("atom weights must be positive and sum to 1")
            if any(z == 0 for z, _ in self.atoms):
                raise ValueError("rho({0}) must vanish")
        else:
            raise ValueError(f"unknown measure kind {self.kind!r}")

    def ball_mass(self, d):
        """rho([-d, d])."""
        d = np.asarray(d, dtype=float)
        if self.kind == "dirac":
            return (abs(self.z) <= d).astype(float)
        if self.kind == "power_density":
            return np.minimum(d, 1.0) ** self.eps
        out = np.zeros_like(d)
        for z, p in self.atoms:
            out = out + p * (abs(z) <= d)
        return out

    def discrete(self):
        if self.kind == "dirac":
            return ((self.z, 1.0),)
        if self.kind == "atoms":
            return self.atoms
        return None


# ---------------------------------------------------------------------------
# Laws of X_s
# ---------------------------------------------------------------------------

@dataclass
class ContinuousLaw:
    pdf: object
    cdf: object
    width: float
    p0: float

    def sf(self, x):
        return 1.0 - self.cdf(x)

    def prob_interval(self, lo, hi):
        """P(lo <= X < hi)."""
        return self.cdf(hi) - self.cdf(lo)

    def mass(self) -> float:
        val, _ = integrate.quad(self.pdf, -np.inf, np.inf, epsabs=1e-13, limit=400)
        return float(val)


@dataclass
class LatticeLaw:
    points: np.ndarray
    probs: np.ndarray
    truncated_mass: float = 0.0

    def prob_interval(self, lo, hi):
        """P(lo <= X < hi), vectorized in lo/hi."""
        c = np.concatenate(([0.0], np.cumsum(self.probs)))
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        i = np.searchsorted(self.points, lo, side="left")
        j = np.searchsorted(self.points, hi, side="left")
        return c[j] - c[i]

    def cdf(self, x):
        """P(X <= x)."""
        c = np.concatenate(([0.0], np.cumsum(self.probs)))
        return c[np.searchsorted(self.points, np.asarray(x, dtype=float), side="right")]

    def pmf(self, x):
        x = np.asarray(x, dtype=float)
        i = np.clip(np.searchsorted(self.points, x), 0, self.points.size - 1)
        return np.where(np.abs(self.points[i] - x) < 1e-9, self.probs[i], 0.0)

    def mass(self) -> float:
        return float(self.probs.sum())


def _cauchy_law(s):
    return ContinuousLaw(pdf=lambda x: s / (np.pi * (s * s + np.asarray(x, dtype=float) ** 2)),
                         cdf=lambda x: 0.5 + np.arctan(np.asarray(x, dtype=float) / s) / np.pi,
                         width=s, p0=1.0 / (np.pi * s))


def _gaussian_law(sd):
    return ContinuousLaw(pdf=lambda x: stats.norm.pdf(x, scale=sd),
                         cdf=lambda x: special.ndtr(np.asarray(x, dtype=float) / sd),
                         width=sd, p0=1.0 / (sd * math.sqrt(2 * math.pi)))


def _tail_series(beta: float, s: float, x_ref: float, k_max: int = 400):
    """Coefficients ``(a_k, k beta)`` of ``p(x) = sum_k a_k |x|^(-1 - k beta)``.

    The series converges for ``beta < 1`` and is summed until the envelope
    ``Gamma(k beta + 1) s^k / k! x_ref^(-k beta)`` falls below 1e-18 of its
    maximum; for ``beta >= 1`` it is asymptotic and is cut at the smallest
    envelope term.
    """
    terms = []
    peak = 0.0
    prev = math.inf
    for k in range(1, k_max + 1):
        log_env = (special.gammaln(k * beta + 1.0) - special.gammaln(k + 1.0)
                   + k * math.log(s) - k * beta * math.log(x_ref))
        env = math.exp(log_env)
        if beta >= 1.0 and env > prev:
            break
        prev = env
        peak = max(peak, env)
        a = ((-1.0) ** (k + 1) * math.sin(k * math.pi * beta / 2.0) / math.pi
             * math.exp(log_env + k * beta * math.log(x_ref)))
        terms.append((a, k * beta))
        if env < 1e-18 * peak:
            break
    return terms


def _stable_fft(beta: float, s: float, n: int = 2 ** 20, oversample: int = 16):
    """Density of the symmetric stable law on an FFT grid.

    The frequency cut-off is where ``exp(-s u^beta) < 1e-16``.  The periodic
    images created by the discrete transform are removed with the tail
    series of the density summed by Hurwitz zeta values.
    """
    u_max = (36.85 / s) ** (1.0 / beta)
    k = n // oversample
    du = u_max / k
    u = du * np.arange(n)
    phi = np.exp(-s * u ** beta)
    phi[0] *= 0.5
    dx = 2.0 * np.pi / (n * du)
    vals = np.fft.fft(phi).real * du / np.pi
    vals = np.fft.fftshift(vals)
    x = dx * (np.arange(n) - n // 2)
    period = n * dx
    tail = _tail_series(beta, s, 0.25 * period)
    y = x / period
    images = np.zeros_like(x)
    for a, e in tail:
        images += a * period ** (-1.0 - e) * (special.zeta(1.0 + e, 1.0 + y)
                                              + special.zeta(1.0 + e, 1.0 - y))
    vals = vals - images
    clipped = float(-np.sum(np.minimum(vals, 0.0)) * dx)
    return x, np.maximum(vals, 0.0), tail, clipped


def _stable_law(beta, s):
    x, p, tail, clipped = _stable_fft(beta, s)
    half = 0.5 * x[-1]
    keep = np.abs(x) <= half
    xs, ps = x[keep], p[keep]
    spl = interpolate.CubicSpline(xs, ps)
    anti = spl.antiderivative()

    def far_pdf(r):
        return sum(a * r ** (-1.0 - e) for a, e in tail)

    def far_sf(r):
        """P(X > r) for r >= half."""
        return sum(a * r ** (-e) / e for a, e in tail)

    tail_mass = far_sf(half)

    def pdf(z):
        z = np.asarray(z, dtype=float)
        inside = np.abs(z) <= half
        out = np.where(inside, spl(np.clip(z, -half, half)), 0.0)
        return np.where(inside, out, far_pdf(np.maximum(np.abs(z), half)))

    def cdf(z):
        z = np.asarray(z, dtype=float)
        zc = np.clip(z, -half, half)
        mid = tail_mass + anti(zc) - anti(-half)
        lo = far_sf(np.maximum(-z, half))
        hi = 1.0 - far_sf(np.maximum(z, half))
        return np.where(z < -half, lo, np.where(z > half, hi, mid))

    law = ContinuousLaw(pdf=pdf, cdf=cdf, width=s ** (1.0 / beta), p0=float(spl(0.0)))
    law.clipped_mass = clipped
    law.grid_mass = float(anti(half) - anti(-half) + 2.0 * tail_mass)
    return law


def _lattice_law(atoms, s, tol=1e-12):
    """Exact law of sum_k z_k N_k, N_k ~ Poisson(lam_k s), truncated at mass 1e-12."""
    law = {0.0: 1.0}
    lost = 0.0
    for z, lam in atoms:
        m = lam * s
        nmax = int(stats.poisson.isf(tol / len(atoms), m)) + 2 if m > 0 else 0
        pk = stats.poisson.pmf(np.arange(nmax + 1), m)
        lost += 1.0 - pk.sum()
        new = {}
        for x, p in law.items():
            for n, q in enumerate(pk):
                key = round(x + n * z, 12)
                new[key] = new.get(key, 0.0) + p * q
        law = new
    pts = np.array(sorted(law))
    return LatticeLaw(pts, np.array([law[k] for k in pts]), lost)


@functools.lru_cache(maxsize=256)
def _density_cached(model: LevyModel, s: float):
    if model.kind == "cauchy":
        return _cauchy_law(s)
    if model.kind == "gaussian":
        return _gaussian_law(model.sigma * math.sqrt(s))
    if model.kind == "symmetric_stable":
        if model.beta == 1.0:
            return _cauchy_law(s)
        return _stable_law(model.beta, s)
    return _lattice_law(model.atoms, s)


def density(model: LevyModel, s: float):
    """Law of X_s: a ContinuousLaw (with ``pdf``) or a LatticeLaw."""
    if not s > 0:
        raise ValueError("s must be positive")
    if s > model.T * (1 + 1e-12):
        raise ValueError("s exceeds the horizon")
    return _density_cached(model, float(s))


# ---------------------------------------------------------------------------
# Transition operator and difference operators
# ---------------------------------------------------------------------------

def _growth_probe(model, f: TestFunction):
    if model.kind in ("compound_poisson", "gaussian"):
        return
    x = np.array([1e4, 1e6, -1e4, -1e6])
    v = np.abs(np.asarray(f(x), dtype=float))
    # need E|f(x + X)| < inf: growth strictly below |x|^beta
    if np.any(v[1::2] > 10.0 * np.maximum(v[0::2], 1.0) * 100.0 ** (0.99 * model.beta)):
        raise ValueError("test function grows too fast for the heavy-tailed law")
    if np.any(v > 1e6 ** (0.99 * model.beta) * (1.0 + np.abs(f(np.array([0.0])))[0])):
        raise ValueError("test function grows too fast for the heavy-tailed law")


def transition_F(model: LevyModel, f: TestFunction, t: float, x):
    """F(t, x) = E f(x + X_{T-t}), vectorized in ``x``."""
    _growth_probe(model, f)
    x = np.asarray(x, dtype=float)
    s = model.T - t
    if s < 0:
        raise ValueError("t exceeds the horizon")
    if s == 0:
        return f(x)
    law = density(model, s)
    if isinstance(law, LatticeLaw):
        vals = f(x[..., None] + law.points)
        return np.sum(vals * law.probs, axis=-1)
    if f.kind == "binary":
        return f.scale * (1.0 - law.cdf(f.shift - x))
    if f.kind == "linear":
        return f.scale * (x - f.shift)
    out = np.empty(x.size)
    for i, xv in enumerate(x.ravel()):
        out[i] = _conv_quad(f, law, xv)
    return out.reshape(x.shape) if x.ndim else float(out[0])


def _conv_quad(f, law, x):
    brk = sorted({k - x for k in f.kinks()} | {0.0})
    edges = [-np.inf] + brk + [np.inf]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        g = lambda y: float(f(np.array([x + y]))[0]) * float(law.pdf(np.array([y]))[0])
        val, _ = integrate.quad(g, lo, hi, epsabs=1e-13, epsrel=1e-11, limit=400)
        total += val
    return total


def d_rho_F(model: LevyModel, f: TestFunction, rho: MeasureProfile, t: float, x) -> float:
    """D_rho F(t, x) by direct quadrature of the difference quotients."""
    x = float(x)
    F = lambda y: np.asarray(transition_F(model, f, t, np.asarray(y, dtype=float)), dtype=float)
    disc = rho.discrete()
    if disc is not None:
        Fx = float(F(np.array([x]))[0])
        return float(sum(p * (float(F(np.array([x + z]))[0]) - Fx) / z for z, p in disc))
    eps = rho.eps
    Fx = float(F(np.array([x]))[0])
    # integrability probe at z -> 0
    probe = abs(float(F(np.array([x + 1e-12]))[0]) - Fx)
    if probe > 1e-9:
        raise ValueError("D_rho F diverges: F is not continuous at x")
    def q(z):
        z = max(z, 1e-10)
        return (float(F(np.array([x + z]))[0]) - Fx) / z
    s = model.T - t
    z1 = min(0.5, 0.5 * model.width(s)) if s > 0 else 0.5
    head, _ = integrate.quad(q, 0.0, z1, weight="alg", wvar=(eps - 1.0, 0.0),
                             epsabs=1e-13, epsrel=1e-11, limit=400)
    pts = [p for p in (k - x for k in f.kinks()) if z1 < p < 1.0]
    tail, _ = integrate.quad(lambda z: q(z) * z ** (eps - 1.0), z1, 1.0, points=pts or None,
                             epsabs=1e-13, epsrel=1e-11, limit=400)
    return float(eps * (head + tail))


# ---------------------------------------------------------------------------
# The density gamma_{t, rho}
# ---------------------------------------------------------------------------

def _gl(order):
    return np.polynomial.legendre.leggauss(order)


def _graded_breaks(a, b, centers, h, levels=40, base=16):
    """Breakpoints on [a, b]: uniform base plus geometric grading at ``centers``."""
    pts = [np.linspace(a, b, base + 1)]
    offs = h * 2.0 ** (-np.arange(-int(math.ceil(math.log2(max((b - a) / h, 1.0)))), levels))
    for c in centers:
        pts.append(c + offs)
        pts.append(c - offs)
        pts.append([c])
    br = np.unique(np.clip(np.concatenate(pts), a, b))
    return br


def _rule(br, order=8):
    x, w = _gl(order)
    lo, hi = br[:-1], br[1:]
    nodes = (0.5 * (lo + hi))[:, None] + (0.5 * (hi - lo))[:, None] * x
    wts = (0.5 * (hi - lo))[:, None] * w
    return nodes.ravel(), wts.ravel()


def _jacobi_rule(delta, mu, order=12):
    """Nodes/weights for int_0^delta g(u) u^mu du (exact for polynomial g)."""
    x, w = special.roots_jacobi(order, 0.0, mu)
    nodes = 0.5 * delta * (x + 1.0)
    wts = w * (0.5 * delta) ** (1.0 + mu)
    return nodes, wts


def _gamma_power_continuous(law, eps, v):
    """int_0^1 p(v - d) eps/(1-eps) (d^{eps-1} - 1) dd for each v."""
    h = law.width
    c = eps / (1.0 - eps)
    out = np.empty(np.size(v))
    delta = min(1e-3 * h, 1e-3)
    jn, jw = _jacobi_rule(delta, eps - 1.0)
    ln, lw = _rule(np.array([0.0, delta]))
    for i, vv in enumerate(np.atleast_1d(v)):
        centers = [delta] + ([vv] if 0.0 < vv < 1.0 else [])
        br = _graded_breaks(delta, 1.0, centers, h, levels=30)
        n, w = _rule(br)
        pv = law.pdf(vv - n)
        main = np.sum(w * pv * (n ** (eps - 1.0) - 1.0))
        head = np.sum(jw * law.pdf(vv - jn)) - np.sum(lw * law.pdf(vv - ln))
        out[i] = c * (main + head)
    return out


def gamma_density(model: LevyModel, rho: MeasureProfile, t: float, v_grid):
    """gamma_{t, rho}(v) on ``v_grid``."""
    s = model.T - t
    if not s > 0:
        raise ValueError("gamma needs t < T")
    law = density(model, s)
    v = np.asarray(v_grid, dtype=float)
    disc = rho.discrete()
    if disc is not None:
        out = np.zeros_like(v)
        for z, p in disc:
            lo = v - max(z, 0.0)
            hi = v + max(-z, 0.0)
            out = out + p * law.prob_interval(lo, hi) / abs(z)
        return out
    eps = rho.eps
    if isinstance(law, LatticeLaw):
        d = v[:, None] - law.points[None, :]
        inside = (d > 0) & (d <= 1.0)
        g = np.where(inside, eps / (1.0 - eps) * (np.where(inside, d, 1.0) ** (eps - 1.0) - 1.0), 0.0)
        return g @ law.probs
    return _gamma_power_continuous(law, eps, v)


def gamma_mass(model: LevyModel, rho: MeasureProfile, t: float, w_max: float = 50.0) -> float:
    """Numerical total mass of gamma_{t, rho} (equal to 1 in exact arithmetic).

    The window [-w_max, w_max + 1] uses graded Gauss-Legendre panels; the two
    tails are integrated exactly through the distribution function of X_{T-t}.
    """
    s = model.T - t
    law = density(model, s)
    if isinstance(law, LatticeLaw):
        if rho.kind == "power_density":
            kern, _ = integrate.quad(lambda d: rho.eps / (1 - rho.eps), 0.0, 1.0, weight="alg",
                                     wvar=(rho.eps - 1.0, 0.0), epsabs=1e-15)
            kern -= rho.eps / (1 - rho.eps)
        else:
            kern = 1.0
        return float(kern * law.probs.sum())
    h = law.width
    br = _graded_breaks(-w_max, w_max + 1.0, [0.0, 1.0], h, levels=25, base=64)
    disc = rho.discrete()
    if disc is not None:
        br = np.unique(np.concatenate([br] + [br - z for z, _ in disc]))
        br = br[(br >= -w_max) & (br <= w_max + 1.0)]
    n, w = _rule(br)
    body = float(np.sum(w * gamma_density(model, rho, t, n)))
    lo, hi = -w_max, w_max + 1.0
    if disc is not None:
        tail = 0.0
        for z, p in disc:
            a, b = -max(z, 0.0), max(-z, 0.0)
            # tails of int P(v + a <= X < v + b) dv beyond the window
            r, _ = integrate.quad(lambda u: float(1.0 - law.cdf(u)), hi + a, hi + b, epsabs=1e-15)
            l, _ = integrate.quad(lambda u: float(law.cdf(u)), lo + a, lo + b, epsabs=1e-15)
            tail += p * (r + l) / abs(z)
        return body + tail
    eps = rho.eps
    c = eps / (1.0 - eps)
    tail_fn = lambda d: float(law.cdf(lo - d) + 1.0 - law.cdf(hi - d))
    ta, _ = integrate.quad(tail_fn, 0.0, 1.0, weight="alg", wvar=(eps - 1.0, 0.0), epsabs=1e-15)
    tb, _ = integrate.quad(tail_fn, 0.0, 1.0, epsabs=1e-15)
    return body + c * (ta - tb)


def gamma_table(model: LevyModel, rho: MeasureProfile, t: float, w_max: float = 4.0):
    """Spline of log gamma on a grid graded at the scale of X_{T-t} near 0 and 1."""
    s = model.T - t
    h = model.width(s)
    d = h * np.geomspace(1e-4, max(w_max / h, 10.0), 160)
    pts = [np.linspace(-w_max, w_max + 1.0, 161), d, -d, 1.0 + d, 1.0 - d, [0.0, 1.0]]
    w = np.unique(np.concatenate(pts))
    w = w[(w >= -w_max) & (w <= w_max + 1.0)]
    g = gamma_density(model, rho, t, w)
    if np.any(g < 0):
        raise ValueError("gamma table needs a nonnegative density")
    # light (Gaussian) tails underflow; the floor keeps the log finite and
    # only perturbs values already below 1e-300
    spl = interpolate.CubicSpline(w, np.log(np.maximum(g, 1e-300)))
    lo, hi = w[0], w[-1]

    def table(x):
        x = np.asarray(x, dtype=float)
        inside = (x >= lo) & (x <= hi)
        out = np.exp(spl(np.clip(x, lo, hi)))
        if not np.all(inside):
            out = np.where(inside, out, 0.0)
            out[~inside] = gamma_density(model, rho, t, x[~inside])
        return out

    return table


def _endpoint_exponent(fprime, a, side, h):
    """Local power exponent mu of f' at the endpoint ``a`` (f' ~ |u - a|^mu)."""
    d1, d2 = 1e-3 * h, 0.5e-3 * h
    u1, u2 = (a + d1, a + d2) if side > 0 else (a - d1, a - d2)
    f1, f2 = abs(float(fprime(np.array([u1]))[0])), abs(float(fprime(np.array([u2]))[0]))
    if f1 == 0 or f2 == 0:
        return 0.0
    mu = math.log(f1 / f2) / math.log(2.0)
    return 0.0 if abs(mu) < 1e-3 else max(mu, -0.999)


def d_rho_F_dual(model: LevyModel, f: TestFunction, rho: MeasureProfile, t: float, x_grid,
                 gamma=None):
    """D_rho F(t, x) = int gamma(u - x) df(u) for piecewise smooth ``f``.

    The absolutely continuous part uses Gauss-Legendre panels graded at
    the support ends of ``f'`` and at ``u = x``; an integrable power
    singularity of ``f'`` at an end is handled by a Gauss-Jacobi panel.
    Jumps of ``f`` add ``J gamma(u_J - x)``.
    """
    s = model.T - t
    h = model.width(s)
    g = gamma if gamma is not None else gamma_table(model, rho, t)
    ks = sorted(f.kinks())
    if f.kind == "custom":
        ks = [ks[0], ks[-1]]
    xs = np.atleast_1d(np.asarray(x_grid, dtype=float))
    jumps = list(f.jumps())
    if len(ks) < 2:
        if f.kind != "binary":
            raise ValueError("f' must have compact support [k0, k1]")
        # pure jump: df is a point mass
        return np.array([sum(size * float(g(np.array([loc - x]))[0]) for loc, size in jumps)
                         for x in xs])
    a, b = ks[0], ks[-1]
    mu_a = _endpoint_exponent(f.derivative, a, +1, min(h, b - a))
    delta = min(1e-4 * h, 1e-4 * (b - a))
    jn, jw = _jacobi_rule(delta, mu_a) if mu_a else _rule(np.array([0.0, delta]))
    out = np.empty(xs.size)
    for i, x in enumerate(xs):
        centers = [a + delta] + [c for c in (x, x + 1.0) if a < c < b]
        br = _graded_breaks(a + delta, b, centers, h, levels=30)
        n, w = _rule(br)
        val = np.sum(w * f.derivative(n) * g(n - x))
        un = a + jn
        dens = f.derivative(un)
        if mu_a:
            dens = dens / (jn ** mu_a)
        val += np.sum(jw * dens * g(un - x))
        for loc, size in jumps:
            val += size * float(g(np.array([loc - x]))[0])
        out[i] = val
    return out


@dataclass
class GradientSupCurve:
    t_grid: np.ndarray
    sup: np.ndarray
    inf: np.ndarray
    argmax: np.ndarray

    def to_csv(self, T: float) -> str:
        buf = io.StringIO()
        buf.write("t,sup_grad,T_minus_t\n")
        for t, v in zip(self.t_grid, self.sup):
            buf.write(f"{t:.17g},{v:.17g},{T - t:.17g}\n")
        return buf.getvalue()


def _x_grid(model, s, f):
    h = model.width(s)
    ks = sorted(f.kinks())
    pts = [np.linspace(-3.0, 3.0, 121)]
    d = h * np.geomspace(1e-3, 1e2, 80)
    for k in ks:
        pts += [k + d, k - d, [k]]
    return np.unique(np.concatenate(pts))


def gradient_sup_curve(model: LevyModel, f: TestFunction, rho: MeasureProfile, t_grid,
                       refine: bool = True) -> GradientSupCurve:
    """sup_x |D_rho F(t, x)| (and inf) per t on grids graded at the scale of X_{T-t}."""
    sups, infs, args = [], [], []
    for t in t_grid:
        s = model.T - t
        g = gamma_table(model, rho, t)
        xs = _x_grid(model, s, f)
        v = d_rho_F_dual(model, f, rho, t, xs, gamma=g)
        j = int(np.argmax(np.abs(v)))
        best, arg = float(abs(v[j])), float(xs[j])
        if refine and 0 < j < xs.size - 1:
            res = optimize.minimize_scalar(
                lambda x: -abs(float(d_rho_F_dual(model, f, rho, t, [x], gamma=g)[0])),
                bounds=(xs[j - 1], xs[j + 1]), method="bounded",
                options={"xatol": 1e-6 * model.width(s)})
            if -res.fun > best:
                best, arg = float(-res.fun), float(res.x)
        sups.append(best)
        infs.append(float(v.min()))
        args.append(arg)
    return GradientSupCurve(np.asarray(t_grid, dtype=float), np.array(sups), np.array(infs),
                            np.array(args))


@dataclass
class SingularityFit:
    slope: float
    ci: tuple
    curve: GradientSupCurve
    expected: float | None = None

    def branch(self, tol: float = 0.05) -> str:
        return "bounded" if abs(self.slope) <= tol else "singular"


def singularity_regression(model: LevyModel, f: TestFunction, rho: MeasureProfile, t_grid,
                           eta: float | None = None) -> SingularityFit:
    """OLS slope of log sup_x |D_rho F(t, x)| against log(T - t).

    ``eta`` (the Hoelder exponent of ``f``) fixes the reference slope
    ``-(1 - (eps + eta))/beta`` when ``eps + eta < 1`` and 0 otherwise.
    """
    if f.is_constant:
        raise ValueError("constant f has a vanishing gradient; regression skipped")
    curve = gradient_sup_curve(model, f, rho, t_grid)
    d = model.T - curve.t_grid
    if np.any(curve.sup <= 0):
        raise ValueError("sup curve must be positive on the regression window")
    res = stats.linregress(np.log(d), np.log(curve.sup))
    tq = stats.t.ppf(0.975, d.size - 2)
    ci = (float(res.slope - tq * res.stderr), float(res.slope + tq * res.stderr))
    expected = None
    if eta is not None:
        eps = rho.eps if rho.kind == "power_density" else 0.0
        expected = -max(1.0 - (eps + eta), 0.0) / model.beta
    return SingularityFit(float(res.slope), ci, curve, expected)


# ---------------------------------------------------------------------------
# Total variation of shifted laws
# ---------------------------------------------------------------------------

@dataclass
class TVProfile:
    z_grid: np.ndarray
    s_grid: np.ndarray
    tv: np.ndarray
    closed: np.ndarray | None
    envelope: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("z,s,tv\n")
        for j, s in enumerate(self.s_grid):
            for i, z in enumerate(self.z_grid):
                buf.write(f"{z:.17g},{s:.17g},{self.tv[i, j]:.17g}\n")
        return buf.getvalue()


def _tv_numeric(law, z):
    if z == 0:
        return 0.0
    if isinstance(law, LatticeLaw):
        pts = np.union1d(law.points, law.points + z)
        return float(np.abs(law.pmf(pts - z) - law.pmf(pts)).sum())
    g = lambda x: abs(float(law.pdf(np.array([x - z]))[0] - law.pdf(np.array([x]))[0]))
    m = 0.5 * z
    h = law.width
    tot = 0.0
    for lo, hi in ((-np.inf, min(0.0, z) - h), (min(0.0, z) - h, m), (m, max(0.0, z) + h),
                   (max(0.0, z) + h, np.inf)):
        v, _ = integrate.quad(g, lo, hi, epsabs=1e-14, epsrel=1e-12, limit=400)
        tot += v
    return tot


def tv_profile(model: LevyModel, z_grid, s_grid) -> TVProfile:
    """||P_{z + X_s} - P_{X_s}||_TV by quadrature, with closed forms where known.

    ``envelope`` holds min{2/|z|, ||p_s'||_{L1}} which bounds TV/|z|; for
    the symmetric unimodal laws ``||p_s'||_{L1} = 2 p_s(0)``.
    """
    z = np.asarray(z_grid, dtype=float)
    s = np.asarray(s_grid, dtype=float)
    tv = np.zeros((z.size, s.size))
    closed = np.full((z.size, s.size), np.nan)
    env = np.full((z.size, s.size), np.inf)
    for j, sv in enumerate(s):
        law = density(model, sv)
        for i, zv in enumerate(z):
            tv[i, j] = _tv_numeric(law, zv)
            if model.kind == "gaussian":
                closed[i, j] = 2.0 * (2.0 * special.ndtr(abs(zv) / (2.0 * model.sigma * math.sqrt(sv))) - 1.0)
            elif model.kind == "cauchy" or (model.kind == "symmetric_stable" and model.beta == 1.0):
                closed[i, j] = 4.0 / np.pi * math.atan(abs(zv) / (2.0 * sv))
            if isinstance(law, ContinuousLaw) and zv != 0:
                env[i, j] = min(2.0 / abs(zv), 2.0 * law.p0)
    has_closed = not np.all(np.isnan(closed))
    return TVProfile(z, s, tv, closed if has_closed else None, env)


# ---------------------------------------------------------------------------
# Class certification
# ---------------------------------------------------------------------------

def certify_classes(model: LevyModel, rho: MeasureProfile, beta_hypothesis: float,
                    eps_hypothesis: float, d_grid=None, z_grid=None, s_grid=None,
                    window: float = 1e-2, rect_width: float = 0.1) -> ExperimentReport:
    """Measured constants of the small-ball and coupling classes.

    * ``U``: sup_d rho([-d,d]) / d^eps over ``d_grid``;
    * ``L``: inf of the same ratio over ``d <= window``;
    * ``calU``: sup over (z, s) of s^{1/beta} TV(z, s) / |z|;
    * ``calL``: inf over s and intervals (a, b) inside [-1, 1] of
      P(s^{-1/beta} X_s in (a, b)) / (b - a).
    """
    d = np.geomspace(1e-8, 1.0, 81) if d_grid is None else np.asarray(d_grid, dtype=float)
    z = np.geomspace(1e-4, 10.0, 41) if z_grid is None else np.asarray(z_grid, dtype=float)
    s = np.geomspace(1e-4, model.T, 9) if s_grid is None else np.asarray(s_grid, dtype=float)
    ratio = rho.ball_mass(d) / d ** eps_hypothesis
    u_const = float(ratio.max())
    small = d <= window
    l_const = float(ratio[small].min()) if small.any() else float("nan")
    tvp = tv_profile(model, z, s)
    scaled = tvp.tv * (s[None, :] ** (1.0 / beta_hypothesis)) / z[:, None]
    cal_u = float(scaled.max())
    edges = np.arange(-1.0, 1.0 + 1e-12, rect_width)
    cal_l = np.inf
    for sv in s:
        law = density(model, sv)
        sc = sv ** (1.0 / beta_hypothesis)
        probs = law.prob_interval(edges[:-1] * sc, edges[1:] * sc) / rect_width
        cal_l = min(cal_l, float(np.min(probs)))
    rep = ExperimentReport("certify_classes", {"model": model.kind, "rho": rho.kind,
                                               "beta": beta_hypothesis, "eps": eps_hypothesis},
                           columns=("class", "constant"))
    for name, val in (("U", u_const), ("L", l_const), ("calU", cal_u), ("calL", cal_l)):
        rep.rows.append({"class": name, "constant": val})
    rep.results.update({"U": u_const, "L": l_const, "calU": cal_u, "calL": cal_l})
    rep.verdicts.update({"U_finite": bool(np.isfinite(u_const)), "L_positive": bool(l_const > 0),
                         "calU_finite": bool(np.isfinite(cal_u)), "calL_positive": bool(cal_l > 0)})
    return rep
