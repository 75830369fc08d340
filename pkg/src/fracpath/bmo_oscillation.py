"""Weighted BMO estimators, weight classes, Besov-type martingale norms and oscillation.

All sup-based estimates are inner approximations: they are maxima over
finite grids of times and states and can only grow when the grids are
refined.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special, stats

__all__ = [
    "ConditionalKernel",
    "NormEstimate",
    "brownian_increment_kernel",
    "estimate_bmo",
    "ConstantWeight",
    "DeterministicWeight",
    "GBMPowerWeight",
    "drifted_max_exp_moment",
    "estimate_smp",
    "estimate_b_inf_q_alpha",
    "OscillationCurve",
    "oscillation_curve",
    "sup_inf_profile",
    "maximal_oscillation_certificate",
    "OscillationRate",
    "oscillation_rate_regression",
    "moment_equivalence_check",
    "fit_exponential_tail",
]


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass
class ConditionalKernel:
    """Conditional moments of increments of a process.

    ``func(a, state, t, p)`` returns ``E[|Y_t - Y_a|^p | state at a]``, either
    as a float (exact mode) or as ``(value, stderr)`` (nested Monte Carlo).
    """

    func: Callable
    mode: str = "exact"

    def __post_init__(self):
        if self.mode not in ("exact", "nested_mc"):
            raise ValueError("mode must be 'exact' or 'nested_mc'")

    def __call__(self, a, state, t, p):
        out = self.func(a, state, t, p)
        if self.mode == "exact":
            return float(out), 0.0
        val, se = out
        return float(val), float(se)


@dataclass
class NormEstimate:
    value: float
    kind: str
    p: float = float("nan")
    q: float = float("nan")
    alpha: float = float("nan")
    stderr: float = 0.0
    grid: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("BMO_p^Phi", "bmo_p^Phi", "SM_p", "B_inf_q_alpha"):
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if not self.value >= 0:
            raise ValueError("norm estimates are nonnegative")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("kind,p,q,alpha,value,stderr,grid_a,grid_state\n")
        g = self.grid
        buf.write(f"{self.kind},{self.p:.17g},{self.q:.17g},{self.alpha:.17g},"
                  f"{self.value:.17g},{self.stderr:.17g},{g.get('n_a', 0)},{g.get('n_state', 0)}\n")
        return buf.getvalue()


def brownian_increment_kernel(sigma: float = 1.0) -> ConditionalKernel:
    """E|sigma (W_t - W_a)|^p = sigma^p (t - a)^{p/2} 2^{p/2} Gamma((p+1)/2) / sqrt(pi)."""
    def f(a, state, t, p):
        m = 2.0 ** (p / 2.0) * special.gamma((p + 1.0) / 2.0) / math.sqrt(math.pi)
        return sigma ** p * max(t - a, 0.0) ** (p / 2.0) * m
    return ConditionalKernel(f)


# ---------------------------------------------------------------------------
# Weighted BMO
# ---------------------------------------------------------------------------

def estimate_bmo(y_kernel: ConditionalKernel, phi_kernel: Callable, p: float, variant: str,
                 a_grid, state_grid, t_grid) -> NormEstimate:
    """sup over (a, state, t >= a) of (E^{F_a}|Y_t - Y_a|^p)^{1/p} / Phi_a.

    ``state_grid`` is either a sequence shared by all ``a`` or a callable
    ``a -> states``.  For continuous processes ``Y_{a-} = Y_a`` and the two
    variants coincide; the kernel is expected to implement the requested one.
    """
    if not p > 0:
        raise ValueError("p must be positive")
    if variant not in ("BMO", "bmo"):
        raise ValueError("variant must be 'BMO' or 'bmo'")
    a_grid = np.asarray(a_grid, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    if a_grid.size == 0 or t_grid.size == 0:
        raise ValueError("empty grid")
    best, best_se, n_state = 0.0, 0.0, 0
    for a in a_grid:
        states = state_grid(a) if callable(state_grid) else state_grid
        states = np.atleast_1d(states)
        if states.size == 0:
            raise ValueError("empty state grid")
        n_state = max(n_state, states.size)
        for x in states:
            w = float(phi_kernel(a, x))
            if w <= 0:
                raise ValueError("weight must be positive on the grid")
            for t in t_grid[t_grid >= a]:
                m, se = y_kernel(a, x, t, p)
                val = max(m, 0.0) ** (1.0 / p) / w
                if val > best:
                    best = val
                    best_se = (se / (p * max(m, 1e-300) ** (1.0 - 1.0 / p)) / w) if se else 0.0
    kind = "BMO_p^Phi" if variant == "BMO" else "bmo_p^Phi"
    return NormEstimate(best, kind, p=p, stderr=best_se,
                        grid={"n_a": a_grid.size, "n_state": n_state, "n_t": t_grid.size})


# ---------------------------------------------------------------------------
# The weight class SM_p
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantWeight:
    c: float = 1.0


@dataclass(frozen=True)
class DeterministicWeight:
    func: Callable


@dataclass(frozen=True)
class GBMPowerWeight:
    """Phi_t = Y_t^beta with Y a geometric Brownian motion of volatility sigma_hat."""
    beta: float
    sigma_hat: float = 1.0


def drifted_max_exp_moment(c: float, mu: float, h: float) -> float:
    """E exp(c M_h), M_h = max_{0<=s<=h} (B_s + mu s), for c >= 0.

    Uses P(M_h > m) = 1 - N((m - mu h)/sqrt h) + exp(2 mu m) N((-m - mu h)/sqrt h)
    and E e^{cM} = 1 + int_0^inf c e^{cm} P(M > m) dm.
    """
    if h <= 0 or c == 0:
        return 1.0
    if c < 0:
        raise ValueError("c must be nonnegative")
    rh = math.sqrt(h)

    def tail(m):
        # both terms in log-space to avoid overflow of exp(c m)
        t1 = c * m + special.log_ndtr(-(m - mu * h) / rh)
        t2 = c * m + 2.0 * mu * m + special.log_ndtr((-m - mu * h) / rh)
        return c * (math.exp(t1) + math.exp(t2))

    upper = max(mu * h, 0.0) + (c + abs(mu)) * h + 40.0 * rh
    val, _ = integrate.quad(tail, 0.0, upper, epsabs=1e-13, epsrel=1e-11, limit=400)
    return 1.0 + val


def estimate_smp(phi, p: float, a_grid, state_grid=None, T: float = 1.0, method: str = "closed",
                 replicas: int = 20000, rng=None, steps: int = 512) -> NormEstimate:
    """sup over (a, state) of (E^{F_a} sup_{t in [a,T]} Phi_t^p)^{1/p} / Phi_a.

    For ``GBMPowerWeight`` the ratio does not depend on the state and is
    given in closed form by the running maximum of a drifted Brownian motion;
    ``method="mc"`` replaces it by a discretely monitored pathwise maximum
    (an inner approximation).
    """
    if not p > 0:
        raise ValueError("p must be positive")
    a_grid = np.asarray(a_grid, dtype=float)
    if a_grid.size == 0:
        raise ValueError("empty grid")
    n_state = 0 if state_grid is None else np.atleast_1d(state_grid).size
    grid = {"n_a": a_grid.size, "n_state": n_state}
    if isinstance(phi, ConstantWeight):
        if phi.c <= 0:
            raise ValueError("weight must be positive")
        return NormEstimate(1.0, "SM_p", p=p, grid=grid)
    if isinstance(phi, DeterministicWeight):
        best = 0.0
        tt = np.linspace(0.0, T, 2049)
        vals = np.asarray([phi.func(t) for t in tt], dtype=float)
        if np.any(vals <= 0):
            raise ValueError("weight must be positive")
        for a in a_grid:
            sel = tt >= a
            best = max(best, float(vals[sel].max() / phi.func(a)))
        return NormEstimate(best, "SM_p", p=p, grid=grid)
    if not isinstance(phi, GBMPowerWeight):
        raise TypeError("unsupported weight description")
    s, b = phi.sigma_hat, phi.beta
    # Phi_t/Phi_a = exp(beta s (B + mu u)) with mu = -s/2, B a standard BM
    c = abs(b) * s * p
    mu = -0.5 * s * (1.0 if b >= 0 else -1.0)
    best, se_best = 0.0, 0.0
    if method == "closed":
        for a in a_grid:
            best = max(best, drifted_max_exp_moment(c, mu, T - a) ** (1.0 / p))
    elif method == "mc":
        gen = (rng.generator() if rng is not None else np.random.default_rng(0))
        for a in a_grid:
            h = T - a
            if h <= 0:
                best = max(best, 1.0)
                continue
            dt = h / steps
            inc = gen.standard_normal((replicas, steps)) * math.sqrt(dt) + mu * dt
            m = np.maximum(np.cumsum(inc, axis=1).max(axis=1), 0.0)
            e = np.exp(c * m)
            val = e.mean() ** (1.0 / p)
            if val > best:
                best = val
                se_best = e.std(ddof=1) / math.sqrt(replicas) * val / (p * e.mean())
    else:
        raise ValueError("method must be 'closed' or 'mc'")
    return NormEstimate(best, "SM_p", p=p, stderr=se_best, grid=grid)


# ---------------------------------------------------------------------------
# Besov-type norms of martingales
# ---------------------------------------------------------------------------

def estimate_b_inf_q_alpha(sup_curve, alpha: float, q: float, T: float = 1.0,
                           r_max: float = 24.0, panel_order: int = 10) -> NormEstimate:
    """|| t -> (T-t)^alpha ||L_t||_inf ||_{L_q([0,T), dt/(T-t))}.

    ``sup_curve`` is either a callable ``t -> ||L_t||_inf`` (composite
    Gauss-Legendre quadrature after the substitution ``r = log(T/(T-t))`` up to ``r_max``,
    with the remaining tail closed by an exponential fit in ``r``) or a pair
    ``(t_grid, values)`` (trapezoidal rule in ``r``).  ``q = inf`` returns the
    supremum over the available points.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not q >= 1:
        raise ValueError("q must be >= 1")
    if callable(sup_curve):
        def integrand_r(r):
            t = T * (-math.expm1(-r))
            return (T * math.exp(-r)) ** alpha * float(sup_curve(t))
        if math.isinf(q):
            rr = np.linspace(0.0, r_max, 2401)
            return NormEstimate(max(integrand_r(r) for r in rr), "B_inf_q_alpha", q=q, alpha=alpha)
        # composite Gauss-Legendre on unit panels: the sup curve is only piecewise
        # smooth at the level of its own optimizer tolerance, which makes
        # adaptive quadrature subdivide needlessly
        x, wq = np.polynomial.legendre.leggauss(panel_order)
        edges = np.linspace(0.0, r_max, int(math.ceil(r_max)) + 1)
        val = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            for xi, wi in zip(x, wq):
                val += 0.5 * (hi - lo) * wi * integrand_r(0.5 * (lo + hi) + 0.5 * (hi - lo) * xi) ** q
        # tail beyond r_max: exponential fit of the integrand on [r_max - 4, r_max]
        rr = np.linspace(r_max - 4.0, r_max, 5)
        gg = np.array([integrand_r(r) ** q for r in rr])
        if np.all(gg > 0):
            lam = -np.polyfit(rr, np.log(gg), 1)[0]
            val += gg[-1] / lam if lam > 0 else np.inf
        return NormEstimate(val ** (1.0 / q), "B_inf_q_alpha", q=q, alpha=alpha)
    t, v = (np.asarray(x, dtype=float) for x in sup_curve)
    if np.any(np.diff(t) <= 0) or t[0] < 0 or t[-1] >= T:
        raise ValueError("t_grid must increase inside [0, T)")
    if np.any(np.diff(v) < -1e-12 * np.abs(v).max()):
        warnings.warn("sup curve is not nondecreasing", RuntimeWarning)
    f = (T - t) ** alpha * v
    if math.isinf(q):
        return NormEstimate(float(f.max()), "B_inf_q_alpha", q=q, alpha=alpha,
                            grid={"n_t": t.size})
    r = np.log(T / (T - t))
    val = float(integrate.trapezoid(f ** q, r))
    return NormEstimate(val ** (1.0 / q), "B_inf_q_alpha", q=q, alpha=alpha, grid={"n_t": t.size})


# ---------------------------------------------------------------------------
# Oscillation
# ---------------------------------------------------------------------------

@dataclass
class OscillationCurve:
    t_grid: np.ndarray
    under_osc: np.ndarray
    over_osc: np.ndarray
    sup: np.ndarray = None
    inf: np.ndarray = None

    def __post_init__(self):
        if np.any(self.under_osc > self.over_osc * (1 + 1e-12) + 1e-300):
            raise ValueError("lower oscillation must not exceed the upper one")


def sup_inf_profile(field_fn: Callable, support, times):
    """Per-time sup and inf of ``field_fn(t, y)`` over the support grid ``support(t)``."""
    sups, infs = [], []
    for t in times:
        y = np.asarray(support(t) if callable(support) else support, dtype=float)
        if y.size == 0:
            raise ValueError("empty support grid")
        v = np.asarray(field_fn(t, y), dtype=float)
        sups.append(float(v.max()))
        infs.append(float(v.min()))
    return np.array(sups), np.array(infs)


def _dist(sup_t, inf_t, sup_s, inf_s):
    """||H(t, Y_t) - H(s, Y_s)||_inf when the joint support is a product."""
    return np.maximum(sup_t - inf_s, sup_s - inf_t)


def oscillation_curve(field_fn: Callable, support, t_grid, s_subgrid=None) -> OscillationCurve:
    """Lower and upper oscillation of t -> H(t, Y_t) on ``t_grid``.

    Osc_lower(t) = inf_{s<t} ||H_t - H_s||_inf and
    Osc_upper(t) = inf_{s<t} sup_{u in [s,t]} ||H_t - H_u||_inf, with ``s``
    running through ``s_subgrid`` (default: 0 and the earlier points of
    ``t_grid``) and ``u`` through the subgrid points in ``[s, t)``.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if s_subgrid is None:
        s_subgrid = np.concatenate(([0.0], t_grid))
    s_grid = np.unique(np.concatenate((np.asarray(s_subgrid, dtype=float), t_grid)))
    sup_s, inf_s = sup_inf_profile(field_fn, support, s_grid)
    under, over = [], []
    sup_t_all, inf_t_all = [], []
    for t in t_grid:
        j = int(np.searchsorted(s_grid, t))
        st, it = sup_s[j], inf_s[j]
        sup_t_all.append(st)
        inf_t_all.append(it)
        if j == 0:
            under.append(0.0)
            over.append(0.0)
            continue
        d = _dist(st, it, sup_s[:j], inf_s[:j])
        under.append(float(d.min()))
        # running sup from s up to t: reverse cumulative max
        run = np.maximum.accumulate(d[::-1])[::-1]
        over.append(float(run.min()))
    return OscillationCurve(t_grid, np.array(under), np.array(over),
                            np.array(sup_t_all), np.array(inf_t_all))


def maximal_oscillation_certificate(curve: OscillationCurve, phi0: float, c: float = 2.0):
    """Check Osc_lower(t) >= ||phi_t - phi_0||_inf / c at every grid point.

    Returns ``(ok, margins)`` with margins = Osc_lower - ||phi_t - phi_0|| / c.
    """
    dev = np.maximum(curve.sup - phi0, phi0 - curve.inf)
    margins = curve.under_osc - dev / c
    return bool(np.all(margins >= -1e-12 * np.maximum(dev, 1.0))), margins


@dataclass
class OscillationRate:
    slope: float
    ci: tuple
    window: tuple
    n_points: int
    hypothesis: float | None = None

    def consistent_with(self, exponent: float | None = None, tol: float = 0.05) -> bool:
        e = self.hypothesis if exponent is None else exponent
        if e is None:
            raise ValueError("no exponent to compare with")
        return abs(self.slope - e) <= tol


def oscillation_rate_regression(curve: OscillationCurve, exponent_hypothesis: float | None = None,
                                T: float = 1.0, window=None, values=None) -> OscillationRate:
    """OLS of log Osc_lower(t) on log(T - t) over the last decade before T.

    The default window is ``T - t`` in ``[d_min, 10 d_min]`` where ``d_min``
    is the smallest distance to ``T`` on the grid.  ``values`` overrides the
    regressed curve (for instance the sup-gradient curve).
    """
    y = np.asarray(curve.under_osc if values is None else values, dtype=float)
    d = T - np.asarray(curve.t_grid, dtype=float)
    if window is None:
        dmin = d.min()
        window = (dmin, 10.0 * dmin)
    sel = (d >= window[0] * (1 - 1e-12)) & (d <= window[1] * (1 + 1e-12))
    if np.any(y[sel] <= 0):
        raise ValueError("curve must be positive on the regression window")
    if sel.sum() < 3:
        raise ValueError("regression window needs at least 3 points")
    x = np.log(d[sel])
    res = stats.linregress(x, np.log(y[sel]))
    tq = stats.t.ppf(0.975, sel.sum() - 2)
    ci = (float(res.slope - tq * res.stderr), float(res.slope + tq * res.stderr))
    return OscillationRate(float(res.slope), ci, tuple(window), int(sel.sum()), exponent_hypothesis)


# ---------------------------------------------------------------------------
# Moment equivalence
# ---------------------------------------------------------------------------

def moment_equivalence_check(moment_kernel: Callable, phi_kernel: Callable, a_grid, state_grid,
                             p: float = 2.0, q: float = 4.0):
    """Ratio of the weighted L_q and L_p oscillation sizes over a grid.

    ``moment_kernel(a, state, r)`` returns ``E^{F_a} sup_{t>=a}|Y_t - Y_a|^r``
    (a float, or ``(value, stderr)``).  The result is

        sup (E^{F_a} sup|.|^q)^{1/q} / Phi_a  /  sup (E^{F_a} sup|.|^p)^{1/p} / Phi_a ,

    defined as 1 when the process vanishes on the grid.  Returns
    ``(ratio, details)``.
    """
    if not (0 < p < q):
        raise ValueError("need 0 < p < q")
    num, den = 0.0, 0.0
    rows = []
    for a in a_grid:
        states = state_grid(a) if callable(state_grid) else state_grid
        for x in np.atleast_1d(states):
            w = float(phi_kernel(a, x))
            if w <= 0:
                raise ValueError("degenerate weight on the grid")
            mq = moment_kernel(a, x, q)
            mp = moment_kernel(a, x, p)
            mq = mq[0] if isinstance(mq, tuple) else mq
            mp = mp[0] if isinstance(mp, tuple) else mp
            vq = max(mq, 0.0) ** (1.0 / q) / w
            vp = max(mp, 0.0) ** (1.0 / p) / w
            rows.append((float(a), float(x), vq, vp))
            num, den = max(num, vq), max(den, vp)
    ratio = 1.0 if den == 0 else num / den
    return ratio, rows


def fit_exponential_tail(samples, lam_grid):
    """Fit ``P(S >= lam) ~ b exp(-beta lam)`` by least squares on the log scale.

    ``samples`` are already normalized oscillations (for instance
    ``sup_{t>=a}|Y_t - Y_a| / Phi_a``).  The constants of the exponential
    tail bound are not known in closed form, so they are only measured here;
    nothing is asserted about their values.  Returns ``(b, beta, probs)``.
    """
    s = np.sort(np.asarray(samples, dtype=float))
    lam = np.asarray(lam_grid, dtype=float)
    if lam.size < 2:
        raise ValueError("need at least two levels")
    probs = 1.0 - np.searchsorted(s, lam, side="left") / s.size
    if np.any(probs <= 0):
        raise ValueError("no exceedances at the top of the level grid")
    slope, icpt = np.polyfit(lam, np.log(probs), 1)
    return float(math.exp(icpt)), float(-slope), probs
