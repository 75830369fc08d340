"""Brownian hedging laboratory with constant coefficients.

Two state processes driven by a Brownian motion ``W`` are supported:

* ``C1`` (Bachelier): ``Y_t = y0 + s W_t`` with ``sigma(y) = s``;
* ``C2`` (Black-Scholes): ``Y_t = y0 exp(s W_t - s^2 t / 2)`` with ``sigma(y) = s y``.

Everything is computed in the Brownian coordinate ``w = W_t``.  With
``G^(t, w) = G(t, Y(t, w))`` one has

    Z^ = d_w G^ = sigma(Y) dG/dy ,    d_w^2 G^ = H + sigma' Z^ ,

where ``H = sigma^2 d^2G/dy^2`` and ``sigma'`` is 0 (C1) or ``s`` (C2).  The
field ``G^`` is space-time harmonic for the standard heat operator, so
``Z^(t, W_t)`` and ``d_w^2 G^(t, W_t)`` are martingales.

Gaussian expectations use Gauss-Legendre panels on [-L, L] in the standard
normal variable, split at the payoff kinks and graded geometrically towards
them.  The derivative kernels use the difference forms

    Z^ = E[(g^(w + sqrt(s) xi) - g^(w)) xi] / sqrt(s),
    d_w^2 G^ = E[(g^(w + sqrt(s) xi) - g^(w)) (xi^2 - 1)] / s,

which avoid cancellation for small ``s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import interpolate, optimize, special, stats

from .core_paths import RngStream
from .holder_spaces import TestFunction
from .square_functions import ExperimentReport
from .time_nets import TimeNet, adapted_net, bracketing_knots, mesh_theta, uniform_net

__all__ = [
    "MarkovKernelModel",
    "kernel_G",
    "kernel_phi",
    "kernel_H",
    "g_field",
    "z_field",
    "d2_field",
    "gauss_expect",
    "conditional_error_sq",
    "l2_error_oracle",
    "conditional_rl_tail",
    "sup_abs_z",
    "HedgingErrorStats",
    "hedging_error_simulate",
    "RateResult",
    "rate_regression",
    "bmo_error_bound_check",
    "rl_gradient_bmo_check",
    "rl_limit_cauchy_check",
    "fit_log_tail",
    "tail_probe",
    "rl_besov_bmo_check",
    "state_support_grid",
    "delta_oscillation_curve",
    "hedging_moment_kernel",
    "moment_ratio_experiment",
]

_L = 9.0           # truncation of the standard normal variable
_ORDER = 6         # Gauss-Legendre order per panel
_J_INNER = 7       # grading levels towards kinks for inner expectations


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MarkovKernelModel:
    case: str
    payoff: TestFunction
    sigma_hat: float = 1.0
    y0: float = 1.0
    T: float = 1.0
    closed_form: bool = True

    def __post_init__(self):
        if self.case not in ("C1", "C2"):
            raise ValueError("case must be 'C1' or 'C2'")
        if not self.sigma_hat > 0:
            raise ValueError("sigma_hat must be positive")
        if not self.T > 0:
            raise ValueError("horizon must be positive")
        if self.case == "C2" and not self.y0 > 0:
            raise ValueError("C2 needs a positive initial state")
        self._growth_probe()

    def _growth_probe(self):
        g = self.payoff
        if self.case == "C2":
            y = np.logspace(-8, 8, 161)
            ratio = np.abs(g(y)) / (1.0 + y)
            # affine domination: the ratio must stay bounded up to the far end
            if not np.all(np.isfinite(ratio)) or ratio[-1] > 10.0 * max(ratio[:-40].max(), 1.0):
                raise ValueError("payoff is not dominated by A + B y (C2 admission)")
        else:
            y = np.concatenate((-np.logspace(-6, 8, 141), np.logspace(-6, 8, 141)))
            ratio = np.abs(g(y)) / (1.0 + np.abs(y)) ** 8
            if not np.all(np.isfinite(ratio)) or ratio.max() > 1e6:
                raise ValueError("payoff is not polynomially bounded (C1 admission)")

    # -- coordinates --------------------------------------------------------
    @property
    def dsigma(self) -> float:
        return 0.0 if self.case == "C1" else self.sigma_hat

    def Y(self, t, w):
        w = np.asarray(w, dtype=float)
        s = self.sigma_hat
        if self.case == "C1":
            return self.y0 + s * w
        return self.y0 * np.exp(s * w - 0.5 * s * s * np.asarray(t, dtype=float))

    def w_of_y(self, t, y):
        y = np.asarray(y, dtype=float)
        s = self.sigma_hat
        if self.case == "C1":
            return (y - self.y0) / s
        if np.any(y <= 0):
            raise ValueError("C2 states must be positive")
        return (np.log(y / self.y0) + 0.5 * s * s * np.asarray(t, dtype=float)) / s

    def sigma_y(self, y):
        y = np.asarray(y, dtype=float)
        return self.sigma_hat * (np.ones_like(y) if self.case == "C1" else y)

    def sigma_w(self, t, w):
        return self.sigma_y(self.Y(t, w))

    def payoff_w(self, w):
        return self.payoff(self.Y(self.T, w))

    def kinks_w(self) -> np.ndarray:
        ks = []
        for k in self.payoff.kinks():
            if self.case == "C2" and k <= 0:
                continue
            ks.append(float(self.w_of_y(self.T, k)))
        return np.array(sorted(ks))


# ---------------------------------------------------------------------------
# Graded Gauss-Legendre rules in the standard normal variable
# ---------------------------------------------------------------------------

_GL_CACHE = {}


def _gl(order):
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


_BASE_BREAKS = np.linspace(-_L, _L, 13)


def _normal_rule(centers, J, order=_ORDER, L=_L):
    """Nodes and weights (times the normal density) on [-L, L] per row.

    ``centers`` has shape (M, K): breakpoints per row (already in xi units).
    Panels are a uniform base partition plus points ``c +- 2^-j`` that grade
    the mesh geometrically towards each centre.  Returns arrays of shape (M, P).
    """
    M, K = centers.shape
    offs = 2.0 ** (-np.arange(0, J + 1, dtype=float))
    parts = [np.broadcast_to(_BASE_BREAKS, (M, _BASE_BREAKS.size))]
    if K:
        parts.append(centers)
        parts.append((centers[:, :, None] + offs).reshape(M, -1))
        parts.append((centers[:, :, None] - offs).reshape(M, -1))
    br = np.sort(np.clip(np.concatenate(parts, axis=1), -L, L), axis=1)
    a, b = br[:, :-1], br[:, 1:]
    x, wq = _gl(order)
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    nodes = (mid[..., None] + half[..., None] * x).reshape(M, -1)
    wts = (half[..., None] * wq).reshape(M, -1)
    wts = wts * np.exp(-0.5 * nodes * nodes) / math.sqrt(2.0 * math.pi)
    return nodes, wts


def gauss_expect(func, mean, sd, kinks=(), J=_J_INNER, order=_ORDER):
    """E[func(mean + sd xi)] for xi standard normal, vectorized over ``mean``.

    ``kinks`` are points (in the argument of ``func``) where it is not
    smooth; the panels are split and graded towards them.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    sd = np.broadcast_to(np.asarray(sd, dtype=float), mean.shape)
    ks = np.asarray(kinks, dtype=float)
    if ks.size:
        cen = (ks[None, :] - mean[:, None]) / np.where(sd > 0, sd, 1.0)[:, None]
    else:
        cen = np.zeros((mean.size, 0))
    xi, wt = _normal_rule(cen, J, order)
    vals = func(mean[:, None] + sd[:, None] * xi)
    out = np.sum(vals * wt, axis=1)
    degenerate = sd == 0
    if np.any(degenerate):
        out[degenerate] = func(mean[degenerate, None])[:, 0]
    return out


# ---------------------------------------------------------------------------
# Kernels in the Brownian coordinate
# ---------------------------------------------------------------------------

def _closed_kind(model):
    if not model.closed_form:
        return None
    k = model.payoff.kind
    if k in ("call", "binary", "linear"):
        return k
    if k == "polynomial" and model.case == "C1" and len(model.payoff.params["coef"]) <= 3:
        return k
    return None


def _closed_fields(model, t, w):
    """(G, Z, D2) from closed forms for calls, binaries, affine and quadratics."""
    kind = _closed_kind(model)
    s_h = model.sigma_hat
    s = model.T - t
    Y = model.Y(t, w)
    K = model.payoff.shift
    c = model.payoff.scale
    rs = np.sqrt(s)
    if kind == "linear":
        if model.case == "C1":
            return c * (Y - K), c * s_h * np.ones_like(Y), np.zeros_like(Y)
        return c * (Y - K), c * s_h * Y, c * s_h * s_h * Y
    if kind == "polynomial":
        c0, c1, c2 = (tuple(model.payoff.params["coef"]) + (0.0, 0.0, 0.0))[:3]
        m = Y - K
        G = c0 + c1 * m + c2 * (m * m + s_h * s_h * s)
        Z = s_h * (c1 + 2.0 * c2 * m)
        D2 = 2.0 * c2 * s_h * s_h * np.ones_like(Y)
        return c * G, c * Z, c * D2
    with np.errstate(divide="ignore", invalid="ignore"):
        if model.case == "C1":
            sd = s_h * rs
            d = (Y - K) / sd
            if kind == "call":
                G = (Y - K) * special.ndtr(d) + sd * _npdf(d)
                Z = s_h * special.ndtr(d)
                D2 = s_h * _npdf(d) / rs
            else:
                G = special.ndtr(d)
                Z = _npdf(d) / rs
                D2 = -d * _npdf(d) / s
        else:
            if K <= 0:
                raise ValueError("closed forms in C2 need a positive strike")
            d1 = (np.log(Y / K) + 0.5 * s_h * s_h * s) / (s_h * rs)
            d2 = d1 - s_h * rs
            if kind == "call":
                G = Y * special.ndtr(d1) - K * special.ndtr(d2)
                Z = s_h * Y * special.ndtr(d1)
                D2 = s_h * Y * _npdf(d1) / rs + s_h * s_h * Y * special.ndtr(d1)
            else:
                G = special.ndtr(d2)
                Z = _npdf(d2) / rs
                D2 = -d2 * _npdf(d2) / s
    return c * G, c * Z, c * D2


def _npdf(x):
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _fields(model, t, w, need=(True, True, True)):
    """Return (G^, Z^, d_w^2 G^) at times ``t`` and coordinates ``w``.

    ``t`` may be a scalar or an array broadcastable with ``w``; ``t < T``.
    """
    w = np.asarray(w, dtype=float)
    t = np.broadcast_to(np.asarray(t, dtype=float), w.shape)
    if np.any(t >= model.T):
        raise ValueError("kernels are evaluated for t < T only")
    if _closed_kind(model) is not None:
        return _closed_fields(model, t, w)
    shape = w.shape
    wf = w.ravel()
    tf = t.ravel()
    s = model.T - tf
    rs = np.sqrt(s)
    ks = model.kinks_w()
    G = np.empty(wf.size)
    Z = np.empty(wf.size)
    D2 = np.empty(wf.size)
    chunk = 2048
    for i0 in range(0, wf.size, chunk):
        sl = slice(i0, i0 + chunk)
        m = wf[sl]
        sd = rs[sl]
        cen = (ks[None, :] - m[:, None]) / sd[:, None] if ks.size else np.zeros((m.size, 0))
        xi, wt = _normal_rule(cen, _J_INNER)
        g0 = model.payoff_w(m)
        diff = model.payoff_w(m[:, None] + sd[:, None] * xi) - g0[:, None]
        G[sl] = g0 + np.sum(diff * wt, axis=1)
        Z[sl] = np.sum(diff * xi * wt, axis=1) / sd
        D2[sl] = np.sum(diff * (xi * xi - 1.0) * wt, axis=1) / (sd * sd)
    return G.reshape(shape), Z.reshape(shape), D2.reshape(shape)


def g_field(model, t, w):
    return _fields(model, t, w)[0]


def z_field(model, t, w):
    """Z^(t, w) = sigma(Y) dG/dy."""
    return _fields(model, t, w)[1]


def d2_field(model, t, w):
    """d_w^2 G^(t, w) = H + sigma' Z^."""
    return _fields(model, t, w)[2]


def kernel_G(model, t, y):
    if t == model.T:
        return model.payoff(y)
    return g_field(model, t, model.w_of_y(t, y))


def kernel_phi(model, t, y):
    """phi = dG/dy."""
    if t >= model.T:
        raise ValueError("phi is defined for t < T")
    w = model.w_of_y(t, y)
    return z_field(model, t, w) / model.sigma_y(y)


def kernel_H(model, t, y):
    """H = sigma^2 d^2G/dy^2."""
    if t >= model.T:
        raise ValueError("H is defined for t < T")
    w = model.w_of_y(t, y)
    _, Z, D2 = _fields(model, t, w)
    return D2 - model.dsigma * Z


# ---------------------------------------------------------------------------
# Outer expectations over the Brownian state
# ---------------------------------------------------------------------------

def _outer_J(sd_outer, s_inner):
    """Grading depth resolving a feature of width sqrt(s_inner) under sd_outer."""
    r = 2.0 * _L * sd_outer / max(0.1 * math.sqrt(max(s_inner, 1e-300)), 1e-300)
    return int(min(max(math.ceil(math.log2(max(r, 2.0))) + 1, 4), 45))


def _outer(model, func, mean, var, t_inner, extra_kinks=()):
    """E[func(mean + sqrt(var) xi)] where func has features at the payoff kinks."""
    if var <= 0:
        return float(func(np.array([[mean]]))[0, 0])
    sd = math.sqrt(var)
    ks = np.concatenate((model.kinks_w(), np.asarray(extra_kinks, dtype=float)))
    J = _outer_J(sd, model.T - t_inner)
    return float(gauss_expect(lambda x: func(x), np.array([mean]), sd, ks, J=J)[0])


def _z_table(model, t, lo, hi, n_base=101, n_kink=60, field="Z"):
    """Cubic-spline table of Z^(t, .) on [lo, hi], graded towards the kinks.

    ``field`` selects ``"Z"``, ``"D2"`` (d_w Z^) or ``"H"``.

    Used for payoffs without closed-form kernels so that the outer Gaussian
    expectations do not repeat the inner quadrature at every node.
    """
    s = model.T - t
    pts = [np.linspace(lo, hi, n_base)]
    d = np.geomspace(1e-4 * math.sqrt(s), max(hi - lo, 1.0), n_kink)
    for k in model.kinks_w():
        if lo - 1.0 < k < hi + 1.0:
            pts += [k + d, k - d, [k]]
    w = np.unique(np.concatenate(pts))
    w = w[(w >= lo) & (w <= hi)]
    return interpolate.CubicSpline(w, _field_values(model, t, w, field))


def _field_values(model, t, w, field):
    _, Z, D2 = _fields(model, t, w)
    if field == "Z":
        return Z
    if field == "D2":
        return D2
    if field == "H":
        return D2 - model.dsigma * Z
    raise ValueError("field must be 'Z', 'D2' or 'H'")


def _z_callable(model, t, lo, hi, field="Z"):
    if _closed_kind(model) is not None:
        return lambda x: _field_values(model, t, x, field)
    return _z_table(model, t, lo, hi, field=field)


def _A(model, u, a, w_a):
    """E[Z^(u, W_u)^2 | W_a = w_a]."""
    r = 1.01 * _L * math.sqrt(u - a)
    z = _z_callable(model, u, w_a - r, w_a + r)
    return _outer(model, lambda x: z(x) ** 2, w_a, u - a, u)


def _C(model, b, c, a, w_a):
    """E[Z^(b, W_b) Z^(b, W_b + c) | W_a = w_a]."""
    if c == 0:
        return _A(model, b, a, w_a)
    r = 1.01 * _L * math.sqrt(b - a)
    z = _z_callable(model, b, w_a - r, w_a + r + c)
    f = lambda x: z(x) * z(x + c)
    return _outer(model, f, w_a, b - a, b, extra_kinks=model.kinks_w() - c)


def _u_rule(b, c, T, order=4, depth=28):
    """Gauss-Legendre nodes on [b, c]; graded towards T when c == T."""
    x, wq = _gl(order)
    if c < T:
        return 0.5 * (b + c) + 0.5 * (c - b) * x, 0.5 * (c - b) * wq
    h = c - b
    edges = c - h * 2.0 ** (-np.arange(depth + 1, dtype=float))
    lo, hi = edges[:-1], edges[1:]
    nodes = (0.5 * (lo + hi))[:, None] + (0.5 * (hi - lo))[:, None] * x
    wts = (0.5 * (hi - lo))[:, None] * wq
    return nodes.ravel(), wts.ravel()


def conditional_error_sq(model: MarkovKernelModel, net: TimeNet, a: float = 0.0,
                         w_a: float = 0.0, anchor=None, u_order: int = 4) -> float:
    """E[|E_T - E_a|^2 | W_a = w_a] for the hedging error along ``net``.

    Equals the conditional remaining square function
    ``E^{F_a} int_a^T (phi_u - phi_{anchor(u)})^2 sigma_u^2 du``.  When ``a``
    is not a knot, ``anchor = (a_lo, w_lo)`` gives the state at the
    preceding knot, which fixes the hedge held at time ``a``.
    """
    T = model.T
    if not (0 <= a < T):
        raise ValueError("a must lie in [0, T)")
    if net.T != T:
        raise ValueError("net and model horizons differ")
    a_lo, a_hi = bracketing_knots(net, a)
    if a == a_lo:
        w_lo = w_a
    else:
        if anchor is None:
            raise ValueError("a is not a knot: pass anchor=(a_lo, w_lo)")
        if abs(anchor[0] - a_lo) > 1e-14:
            raise ValueError("anchor time must be the knot preceding a")
        w_lo = float(anchor[1])
    s_h = model.sigma_hat
    c2 = model.case == "C2"
    total = 0.0
    gross = 0.0
    # first (possibly partial) interval: hedge phi held at a_lo is a constant
    z_lo = float(z_field(model, a_lo, np.array([w_lo]))[0])
    phi_lo = z_lo / float(model.sigma_w(a_lo, w_lo))
    Y_a = float(model.Y(a, w_a))
    z_a = float(z_field(model, a, np.array([w_a]))[0])
    un, uw = _u_rule(a, a_hi, T, u_order)
    for u, wt in zip(un, uw):
        A_u = _A(model, u, a, w_a)
        if c2:
            cross = s_h * Y_a * float(z_field(model, a, np.array([w_a + s_h * (u - a)]))[0])
            sig2 = (s_h * Y_a) ** 2 * math.exp(s_h * s_h * (u - a))
        else:
            cross = s_h * z_a
            sig2 = s_h * s_h
        total += wt * (A_u - 2.0 * phi_lo * cross + phi_lo ** 2 * sig2)
        gross += wt * (A_u + 2.0 * abs(phi_lo * cross) + phi_lo ** 2 * sig2)
    # later full intervals
    k = net.knots
    for b, c in zip(k[:-1], k[1:]):
        if b < a_hi:
            continue
        A_b = _A(model, b, a, w_a)
        un, uw = _u_rule(b, c, T, u_order)
        for u, wt in zip(un, uw):
            A_u = _A(model, u, a, w_a)
            if c2:
                h = u - b
                C = _C(model, b, s_h * h, a, w_a)
                val = A_u - 2.0 * C + math.exp(s_h * s_h * h) * A_b
                mag = A_u + 2.0 * abs(C) + math.exp(s_h * s_h * h) * A_b
            else:
                val = A_u - A_b
                mag = A_u + A_b
            total += wt * val
            gross += wt * mag
    # the terms carry ~1e-10 relative quadrature error, so a remainder below
    # this floor is cancellation noise (e.g. an exactly replicable payoff)
    if total <= 1e-9 * gross:
        return 0.0
    return float(total)


def l2_error_oracle(model: MarkovKernelModel, net: TimeNet) -> float:
    """||E_T(g; tau)||_{L2}^2 without Monte Carlo."""
    return conditional_error_sq(model, net, 0.0, 0.0)


def conditional_rl_tail(model, a: float, w_a: float, power: float, field: str = "H",
                        depth: int = 28, order: int = 4, start: float | None = None) -> float:
    """E[int_s^T ((T-u)/T)^power F_u^2 du | W_a = w_a] with ``s = start`` (default ``a``).

    ``field="H"`` integrates the martingale integrand ``H`` of ``M``;
    ``field="D2"`` integrates ``d_w Z^`` so that the result is the conditional
    second moment of the transformed gradient ``I^{power/2} Z``.
    """
    if field not in ("H", "D2"):
        raise ValueError("field must be 'H' or 'D2'")
    T = model.T
    s = a if start is None else float(start)
    if not (a <= s < T):
        raise ValueError("start must lie in [a, T)")
    un, uw = _u_rule(s, T, T, order, depth)
    total = 0.0
    for u, wt in zip(un, uw):
        r = 1.01 * _L * math.sqrt(u - a)
        F = _z_callable(model, u, w_a - r, w_a + r, field=field)
        total += wt * ((T - u) / T) ** power * _outer(model, lambda x: F(x) ** 2, w_a, u - a, u)
    return float(total)


def sup_abs_z(model, t: float, center: float = 0.0, n_grid: int = 161):
    """sup_w |Z^(t, w) - center| on a kink-graded grid with local refinement."""
    s = model.T - t
    ks = model.kinks_w()
    span = 8.0 * math.sqrt(model.T) + (np.abs(ks).max() if ks.size else 0.0)
    pts = [np.linspace(-span, span, n_grid)]
    for k in ks:
        d = math.sqrt(s) * np.logspace(-3, 1.5, 60)
        pts += [k + d, k - d, [k]]
    w = np.unique(np.concatenate(pts))
    v = np.abs(z_field(model, t, w) - center)
    j = int(np.argmax(v))
    best = float(v[j])
    lo, hi = w[max(j - 1, 0)], w[min(j + 1, w.size - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(
            lambda x: -abs(float(z_field(model, t, np.array([x]))[0]) - center),
            bounds=(lo, hi), method="bounded", options={"xatol": 1e-12 + 1e-6 * math.sqrt(s)})
        best = max(best, -float(res.fun))
    return best


# ---------------------------------------------------------------------------
# Monte Carlo of the hedging error
# ---------------------------------------------------------------------------

@dataclass
class HedgingErrorStats:
    net: TimeNet
    terminal: np.ndarray
    running_sup: np.ndarray | None
    l2: float
    l2_stderr: float
    l4: float
    weights: np.ndarray | None = None

    def moment(self, r: float, running: bool = False):
        """Weighted Monte Carlo estimate of E|error|^r with its standard error."""
        x = np.abs(self.running_sup if running else self.terminal) ** r
        if self.weights is not None:
            x = x * self.weights
        return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))

    @property
    def replicas(self) -> int:
        return self.terminal.size


class _FieldTable:
    """Cubic-spline tables of G^ and Z^ at fixed times on kink-graded grids."""

    def __init__(self, model, times, span_sd=9.0, n_grid=241):
        self.model = model
        self.times = np.asarray(times, dtype=float)
        self.G = []
        self.Z = []
        ks = model.kinks_w()
        for t in self.times:
            span = span_sd * math.sqrt(max(t, 1e-12)) + 1.0
            if ks.size:
                span = max(span, np.abs(ks).max() + 6.0 * math.sqrt(model.T - t) + 1.0)
            pts = [np.linspace(-span, span, n_grid)]
            for k in ks:
                d = math.sqrt(model.T - t) * np.logspace(-3, 1.3, 70)
                pts += [k + d, k - d, [k]]
            w = np.unique(np.concatenate(pts))
            w = w[np.abs(w) <= span]
            G, Z, _ = _fields(model, t, w)
            self.G.append(interpolate.CubicSpline(w, G, extrapolate=True))
            self.Z.append(interpolate.CubicSpline(w, Z, extrapolate=True))

    def g(self, i, w):
        return self.G[i](w)

    def z(self, i, w):
        return self.Z[i](w)


def _field_eval(model, table, i, t, w, which):
    if _closed_kind(model) is not None:
        G, Z, _ = _closed_fields(model, t, w)
        return G if which == "G" else Z
    return table.g(i, w) if which == "G" else table.z(i, w)


def hedging_error_simulate(model: MarkovKernelModel, net: TimeNet, replicas: int,
                           rng: RngStream, record_running: bool = False, substeps: int = 4,
                           start: tuple | None = None, method: str = "exact",
                           ito_refinement: int = 64, batch: int = 20000,
                           drift: float = 0.0) -> HedgingErrorStats:
    """Simulate E_t(g; tau) along ``net``.

    method
        ``"exact"`` uses ``int_0^t phi dY = G(t, Y_t) - G(0, y0)``, so the only
        randomness is the exact Gaussian sampling of ``W``.  ``"ito"`` replaces
        the integral by a fine-grid Ito sum with ``ito_refinement`` cells per
        net interval (cross-check only).
    start
        ``(a, w_a)`` with ``a`` a knot: simulate conditionally on ``W_a = w_a``
        and report ``E_t - E_a`` for ``t >= a``.
    drift
        importance-sampling drift added to ``W``; the likelihood ratios are
        returned in ``weights`` and used by all reported moments.
    """
    T = model.T
    k = net.knots
    a, w_a = (0.0, 0.0) if start is None else (float(start[0]), float(start[1]))
    if a not in set(k[:-1].tolist()):
        raise ValueError("start time must be a knot of the net")
    i0 = int(np.searchsorted(k, a))
    knots = k[i0:]
    sub = substeps if record_running else 1
    if method == "ito":
        sub = max(sub, ito_refinement)
        if ito_refinement < 1:
            raise ValueError("refinement grid coarser than the net")
    frac = np.arange(sub) / sub
    fine = np.concatenate(((knots[:-1, None] + np.diff(knots)[:, None] * frac[None, :]).ravel(), [T]))
    is_knot = np.zeros(fine.size, dtype=bool)
    is_knot[::sub] = True
    closed = _closed_kind(model) is not None
    table_times = fine[:-1] if (method == "ito" or record_running) else knots[:-1]
    table = None if closed else _FieldTable(model, table_times)
    tindex = {float(t): i for i, t in enumerate(table_times)}
    gen = rng.generator()
    dt = np.diff(fine)
    G_start = float(g_field(model, a, np.array([w_a]))[0])
    term = np.empty(replicas)
    run = np.empty(replicas) if record_running else None
    lr = np.ones(replicas) if drift else None
    for s0 in range(0, replicas, batch):
        nb = min(batch, replicas - s0)
        inc = gen.standard_normal((nb, dt.size)) * np.sqrt(dt) + drift * dt
        if drift:
            lr[s0:s0 + nb] = np.exp(-drift * inc.sum(axis=1) + 0.5 * drift ** 2 * (T - a))
        W = w_a + np.concatenate((np.zeros((nb, 1)), np.cumsum(inc, axis=1)), axis=1)
        Yp = model.Y(fine[None, :], W)
        hedge = np.zeros(nb)
        err_run = np.zeros(nb)
        sup = np.zeros(nb)
        phi = np.zeros(nb)
        ito = np.zeros(nb)
        for j in range(fine.size - 1):
            t = fine[j]
            if is_knot[j]:
                z = _field_eval(model, table, tindex.get(float(t)), t, W[:, j], "Z")
                phi = z / model.sigma_y(Yp[:, j])
            dY = Yp[:, j + 1] - Yp[:, j]
            hedge += phi * dY
            if method == "ito":
                zf = _field_eval(model, table, tindex.get(float(t)), t, W[:, j], "Z")
                ito += zf / model.sigma_y(Yp[:, j]) * dY
            if record_running:
                t1 = fine[j + 1]
                if t1 < T:
                    G1 = _field_eval(model, table, tindex.get(float(t1)), t1, W[:, j + 1], "G")
                else:
                    G1 = model.payoff(Yp[:, j + 1])
                err_run = (G1 - G_start) - hedge
                sup = np.maximum(sup, np.abs(err_run))
        if method == "ito":
            term[s0:s0 + nb] = ito - hedge
        else:
            term[s0:s0 + nb] = model.payoff(Yp[:, -1]) - G_start - hedge
        if record_running:
            run[s0:s0 + nb] = sup
    m2 = term ** 2 * (1.0 if lr is None else lr)
    l2 = math.sqrt(m2.mean())
    se = m2.std(ddof=1) / math.sqrt(replicas) / (2.0 * l2) if l2 > 0 else 0.0
    m4 = np.mean(term ** 4 * (1.0 if lr is None else lr))
    return HedgingErrorStats(net, term, run, l2, se, float(m4 ** 0.25), lr)


# ---------------------------------------------------------------------------
# Rate regression and weighted BMO checks
# ---------------------------------------------------------------------------

@dataclass
class RateResult:
    slope: float
    ci: tuple
    n_list: np.ndarray
    errors: np.ndarray


def _ols(x, y):
    res = stats.linregress(x, y)
    tq = stats.t.ppf(0.975, x.size - 2) if x.size > 2 else np.inf
    return float(res.slope), (float(res.slope - tq * res.stderr), float(res.slope + tq * res.stderr))


def rate_regression(model: MarkovKernelModel, theta: float, net_family: str, n_list) -> RateResult:
    """OLS slope of log ||E_T||_{L2} against log n (deterministic oracle)."""
    n = np.asarray(n_list, dtype=int)
    if n.size < 5:
        raise ValueError("rate regression needs at least 5 values of n")
    if net_family not in ("adapted", "uniform"):
        raise ValueError("net_family must be 'adapted' or 'uniform'")
    errs = []
    for m in n:
        net = adapted_net(model.T, theta, int(m)) if net_family == "adapted" else uniform_net(model.T, int(m))
        errs.append(math.sqrt(l2_error_oracle(model, net)))
    errs = np.array(errs)
    slope, ci = _ols(np.log(n), np.log(errs))
    return RateResult(slope, ci, n, errs)


def _state_grid(a, n_affine=5, kinks=()):
    if a == 0:
        return np.array([0.0])
    q = stats.norm.ppf(np.linspace(1e-4, 1 - 1e-4, n_affine)) * math.sqrt(a)
    return np.unique(np.concatenate((q, np.asarray(kinks, dtype=float))))


def bmo_error_bound_check(model: MarkovKernelModel, theta: float, n_list, weight: str = "sigma",
                          a_fracs=(0.0, 0.5, 0.75, 0.9), n_affine: int = 5,
                          tolerance: float = 0.25) -> ExperimentReport:
    """Fit c in sup_{a,y} (E^{F_a}|E_T - E_a|^2)^{1/2} / Phi_a <= c sqrt(||tau_n^theta||_theta).

    ``a`` runs over the knots nearest to ``a_fracs * T`` and over the
    midpoints of the following intervals (with the preceding knot state on
    the same grid).  ``weight`` is ``"sigma"`` or ``"phi_theta"`` for
    ``sigma_a^theta + sigma_{a_lo}^{theta-1} sigma_a``.
    """
    T = model.T
    rep = ExperimentReport("bmo_error_bound", {"theta": theta, "weight": weight,
                                               "n_list": list(n_list)},
                           columns=("n", "theta", "bmo2", "mesh", "c_fit"))
    ks = model.kinks_w()
    cs = []
    for n in n_list:
        net = adapted_net(T, theta, int(n))
        k = net.knots
        best = 0.0
        for fr in a_fracs:
            i = int(np.argmin(np.abs(k[:-1] - fr * T)))
            a_knot = float(k[i])
            a_mid = 0.5 * (k[i] + k[i + 1])
            for w_lo in _state_grid(a_knot, n_affine, ks):
                for a, wa_list in ((a_knot, [w_lo]),
                                   (a_mid, w_lo + math.sqrt(a_mid - a_knot) * np.array([-1.0, 0.0, 1.0]))):
                    for w_a in wa_list:
                        v = conditional_error_sq(model, net, a, float(w_a),
                                                 anchor=(a_knot, float(w_lo)))
                        sig_a = float(model.sigma_w(a, w_a))
                        if weight == "sigma":
                            phi_w = sig_a
                        else:
                            sig_lo = float(model.sigma_w(a_knot, w_lo))
                            phi_w = sig_a ** theta + sig_lo ** (theta - 1.0) * sig_a
                        best = max(best, math.sqrt(v) / phi_w)
        mesh = mesh_theta(net, theta)
        c = best / math.sqrt(mesh)
        cs.append(c)
        rep.rows.append({"n": int(n), "theta": theta, "bmo2": best, "mesh": mesh, "c_fit": c})
    cs = np.array(cs)
    rep.results["c_fit"] = cs
    # a replicable payoff gives c = 0 at every n, which counts as stable
    rep.results["spread"] = float(np.max(np.abs(cs / cs[0] - 1.0))) if cs[0] > 0 else float(np.max(cs))
    rep.verdicts["stable"] = bool(rep.results["spread"] <= tolerance)
    return rep


def rl_gradient_bmo_check(model: MarkovKernelModel, theta: float, a_grid, n_affine: int = 5,
                          field: str = "D2") -> ExperimentReport:
    """Estimate sup_{a,y} (E^{F_a}|I_T^alpha Z - I_a^alpha Z|^2)^{1/2} / sigma(y)^theta.

    ``alpha = (1 - theta)/2``.  Because ``dZ = (d_w Z^) dW`` the conditional
    second moment equals ``E^{F_a} int_a^T ((T-u)/T)^{1-theta} (d_w Z^)^2 du``;
    ``field="H"`` uses the integrand of ``M`` instead.
    """
    rep = ExperimentReport("rl_gradient_bmo", {"theta": theta, "field": field},
                           columns=("a", "w", "value"))
    ks = model.kinks_w()
    best = 0.0
    per_a = []
    for a in a_grid:
        loc = 0.0
        for w in _state_grid(a, n_affine, ks):
            v = conditional_rl_tail(model, a, float(w), 1.0 - theta, field=field)
            val = math.sqrt(v) / float(model.sigma_w(a, w)) ** theta
            rep.rows.append({"a": a, "w": float(w), "value": val})
            loc = max(loc, val)
        per_a.append(loc)
        best = max(best, loc)
    rep.results["estimate"] = best
    rep.results["per_a"] = np.array(per_a)
    rep.verdicts["finite"] = bool(np.isfinite(best))
    return rep


def rl_limit_cauchy_check(model: MarkovKernelModel, alpha: float, s_grid,
                          field: str = "D2") -> ExperimentReport:
    """L_2 Cauchy surrogate for the limit of I_t^alpha Z as t -> T.

    For each ``s`` the tail ``E int_s^T ((T-u)/T)^(2 alpha) F_u^2 du`` bounds
    the squared increments of the transformed martingale part after ``s``.
    The verdict ``cauchy`` asks for nonincreasing tails whose log-log slope
    against ``T - s`` is positive.  Almost sure convergence is out of reach
    of any finite computation; only this L_2 surrogate is reported.
    """
    s_grid = np.sort(np.asarray(s_grid, dtype=float))
    if s_grid.size < 3:
        raise ValueError("need at least three values of s")
    T = model.T
    rep = ExperimentReport("rl_limit_cauchy", {"alpha": alpha, "field": field},
                           columns=("s", "T_minus_s", "tail"))
    tails = np.array([conditional_rl_tail(model, 0.0, 0.0, 2.0 * alpha, field=field, start=float(s))
                      for s in s_grid])
    for s, v in zip(s_grid, tails):
        rep.rows.append({"s": float(s), "T_minus_s": float(T - s), "tail": float(v)})
    pos = tails > 0
    if pos.sum() >= 2:
        slope = float(np.polyfit(np.log(T - s_grid[pos]), np.log(tails[pos]), 1)[0])
    else:
        slope = math.inf
    rep.results.update({"tails": tails, "slope": slope})
    rep.verdicts["cauchy"] = bool(np.all(np.diff(tails) <= 1e-12 * max(tails[0], 1e-300)) and slope > 0)
    return rep


# ---------------------------------------------------------------------------
# Conditional tail of the running error
# ---------------------------------------------------------------------------

def fit_log_tail(samples, lam_grid, n_boot: int = 200, seed: int = 0):
    """Quadratic fit of log P(S >= lam) in log lam, with a bootstrap CI.

    Returns ``(coef, (lo, hi), probs, counts)`` where ``coef`` is the
    coefficient of ``(log lam)^2``.
    """
    s = np.sort(np.asarray(samples, dtype=float))
    lam = np.asarray(lam_grid, dtype=float)
    N = s.size

    def probs_of(sorted_s):
        return 1.0 - np.searchsorted(sorted_s, lam, side="left") / sorted_s.size

    p = probs_of(s)
    counts = np.round(p * N).astype(int)
    x = np.log(lam)
    if np.any(p <= 0):
        raise ValueError("no exceedances at the top of the lambda grid")
    coef = np.polyfit(x, np.log(p), 2)[0]
    gen = np.random.default_rng(seed)
    boots = []
    for _ in range(n_boot):
        pb = probs_of(np.sort(gen.choice(s, N, replace=True)))
        if np.all(pb > 0):
            boots.append(np.polyfit(x, np.log(pb), 2)[0])
    lo, hi = np.percentile(boots, [2.5, 97.5])
    return float(coef), (float(lo), float(hi)), p, counts


def tail_probe(model: MarkovKernelModel, theta: float, n: int, a: float, replicas: int,
               rng: RngStream, lam_grid=None, c: float = 1.0, substeps: int = 4,
               n_bins: int = 4) -> ExperimentReport:
    """Conditional tail of sup_{t in [a,T]} |E_t - E_a| scaled by (Y_a v Y_a^theta)/sqrt(n).

    ``W_a`` is drawn from its law, then the error is simulated from ``a``
    with the exact running-error representation.  ``lam_grid`` defaults to
    one decade ending at the empirical 0.999 quantile.
    """
    if model.case != "C2":
        raise ValueError("tail probe runs in the Black-Scholes case")
    net = adapted_net(model.T, theta, n)
    if a not in set(net.knots[:-1].tolist()):
        raise ValueError("a must be a knot of the adapted net")
    gen = rng.generator()
    w_a = gen.standard_normal(replicas) * math.sqrt(a)
    Y_a = model.Y(a, w_a)
    scale = np.maximum(Y_a, Y_a ** theta) / math.sqrt(n)
    S = _conditional_sup(model, net, a, w_a, rng.child(1), substeps) / (c * scale)
    if lam_grid is None:
        hi = np.quantile(S, 0.999)
        lam_grid = np.geomspace(hi / 10.0, hi, 9)
    coef, ci, p, counts = fit_log_tail(S, lam_grid)
    rep = ExperimentReport("tail_probe", {"theta": theta, "n": n, "a": a, "replicas": replicas},
                           columns=("lam", "prob", "count"))
    for l_, p_, c_ in zip(lam_grid, p, counts):
        rep.rows.append({"lam": float(l_), "prob": float(p_), "count": int(c_)})
    # per-bin tails by Y_a quantile
    edges = np.quantile(Y_a, np.linspace(0, 1, n_bins + 1))
    bins = []
    for j in range(n_bins):
        sel = (Y_a >= edges[j]) & (Y_a <= edges[j + 1])
        bins.append([float(np.mean(S[sel] >= l_)) for l_ in lam_grid])
    rep.results.update({"quad_coef": coef, "ci": ci, "probs": p, "bins": bins,
                        "lam_grid": np.asarray(lam_grid), "widened_ci": bool(counts[-1] < 30)})
    rep.verdicts["concave"] = bool(ci[1] < 0)
    rep.verdicts["monotone"] = bool(np.all(np.diff(p) <= 0))
    return rep


def _conditional_sup(model, net, a, w_a, rng, substeps):
    """sup_{t in [a,T]} |E_t - E_a| on knots refined by ``substeps``, per start state."""
    T = model.T
    k = net.knots
    knots = k[k >= a]
    frac = np.arange(substeps) / substeps
    fine = np.concatenate(((knots[:-1, None] + np.diff(knots)[:, None] * frac[None, :]).ravel(), [T]))
    closed = _closed_kind(model) is not None
    table = None if closed else _FieldTable(model, fine[:-1], n_grid=321)
    gen = rng.generator()
    nb = w_a.size
    dt = np.diff(fine)
    if closed:
        G0 = _closed_fields(model, a, w_a)[0]
    else:
        G0 = table.g(0, w_a)
    W = w_a.copy()
    Y = model.Y(a, W)
    hedge = np.zeros(nb)
    sup = np.zeros(nb)
    phi = np.zeros(nb)
    is_knot = np.zeros(fine.size, dtype=bool)
    is_knot[::substeps] = True
    for j in range(fine.size - 1):
        t = fine[j]
        if is_knot[j]:
            z = _closed_fields(model, t, W)[1] if closed else table.z(j, W)
            phi = z / model.sigma_y(Y)
        W = W + gen.standard_normal(nb) * math.sqrt(dt[j])
        Y1 = model.Y(fine[j + 1], W)
        hedge += phi * (Y1 - Y)
        Y = Y1
        if fine[j + 1] < T:
            G1 = _closed_fields(model, fine[j + 1], W)[0] if closed else table.g(j + 1, W)
        else:
            G1 = model.payoff(Y)
        sup = np.maximum(sup, np.abs(G1 - G0 - hedge))
    return sup


# ---------------------------------------------------------------------------
# Besov-type norm of the gradient martingale against the BMO norm of its transform
# ---------------------------------------------------------------------------

def rl_besov_bmo_check(model: MarkovKernelModel, alpha: float, a_grid, n_affine: int = 7,
                       q: float = 2.0) -> ExperimentReport:
    """Compare ||I^alpha L||_{BMO_2} with 3 sqrt(2 alpha) T^-alpha ||L||_{B^alpha_{inf,2}}.

    ``L = Z - Z_0`` is the gradient martingale.  The left side is estimated
    from below by the sup over the grid of
    ``(E^{F_a} int_a^T ((T-u)/T)^{2 alpha} (d_w Z^)^2 du)^{1/2}``; the right
    side uses ``||L_t||_inf = sup_w |Z^(t, w) - Z_0|``.
    """
    from .bmo_oscillation import estimate_b_inf_q_alpha

    T = model.T
    z0 = float(z_field(model, 0.0, np.array([0.0]))[0])
    curve = lambda t: sup_abs_z(model, t, center=z0)
    b_norm = estimate_b_inf_q_alpha(curve, alpha, q, T).value
    rhs = 3.0 * math.sqrt(2.0 * alpha) / T ** alpha * b_norm
    rep = ExperimentReport("rl_besov_bmo", {"alpha": alpha, "case": model.case,
                                            "payoff": model.payoff.kind},
                           columns=("a", "w", "lhs"))
    ks = model.kinks_w()
    lhs = 0.0
    for a in a_grid:
        for w in _state_grid(a, n_affine, ks):
            v = math.sqrt(conditional_rl_tail(model, a, float(w), 2.0 * alpha, field="D2"))
            rep.rows.append({"a": float(a), "w": float(w), "lhs": v})
            lhs = max(lhs, v)
    rep.results.update({"lhs": lhs, "rhs": rhs, "b_norm": b_norm, "z0": z0})
    rep.verdicts["inequality"] = bool(lhs <= rhs)
    return rep


# ---------------------------------------------------------------------------
# Oscillation of the hedge
# ---------------------------------------------------------------------------

def state_support_grid(model: MarkovKernelModel, t: float, n_base: int = 241, n_local: int = 241):
    """State grid for sup/inf of kernel fields at time ``t``.

    Returns ``[y0]`` at ``t = 0``; otherwise a wide grid in the Brownian
    coordinate refined linearly within ``6 sqrt(T - t)`` of each kink.
    """
    if t == 0:
        return np.array([model.y0])
    s = model.T - t
    ks = model.kinks_w()
    span = 9.0 * math.sqrt(max(t, s)) + (np.abs(ks).max() if ks.size else 0.0)
    pts = [np.linspace(-span, span, n_base)]
    for k in ks:
        pts.append(k + math.sqrt(s) * np.linspace(-6.0, 6.0, n_local))
    w = np.unique(np.concatenate(pts))
    return model.Y(t, w)


def delta_oscillation_curve(model: MarkovKernelModel, t_grid, s_subgrid=None):
    """Lower/upper oscillation of the hedge phi(t, Y_t) on ``t_grid``."""
    from .bmo_oscillation import oscillation_curve

    return oscillation_curve(lambda t, y: kernel_phi(model, t, y),
                             lambda t: state_support_grid(model, t), t_grid, s_subgrid)


# ---------------------------------------------------------------------------
# Conditional moments of the running hedging error
# ---------------------------------------------------------------------------

def hedging_moment_kernel(model: MarkovKernelModel, net: TimeNet, replicas: int, rng: RngStream,
                          substeps: int = 4, control_variate: bool = True,
                          importance: bool = True):
    """Kernel ``(a, w_a, r) -> (E^{F_a} sup_{t>=a} |E_t - E_a|^r, stderr)``.

    Simulations are cached per start state.  For ``r = 2`` the exact
    conditional second moment of ``E_T - E_a`` serves as a control variate.
    Start states away from the payoff kinks are simulated with a Girsanov
    drift steering the paths to the nearest kink at ``T``, where the error
    accumulates.
    """
    cache = {}
    ks = model.kinks_w()

    def sims(a, w):
        key = (float(a), float(w))
        if key not in cache:
            sub = rng.child(len(cache))
            drift = 0.0
            if importance and ks.size:
                target = ks[int(np.argmin(np.abs(ks - w)))]
                drift = (target - w) / (model.T - a)
            st = hedging_error_simulate(model, net, replicas, sub, record_running=True,
                                        substeps=substeps, start=key, drift=drift)
            exact = conditional_error_sq(model, net, key[0], key[1]) if control_variate else None
            cache[key] = (st, exact)
        return cache[key]

    def kernel(a, w, r):
        st, exact = sims(a, w)
        lr = 1.0 if st.weights is None else st.weights
        x = st.running_sup ** r * lr
        if r == 2 and exact is not None:
            y = st.terminal ** 2 * lr
            cov = np.cov(x, y)
            beta = cov[0, 1] / cov[1, 1] if cov[1, 1] > 0 else 0.0
            adj = x - beta * (y - exact)
            return float(adj.mean()), float(adj.std(ddof=1) / math.sqrt(adj.size))
        return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))

    return kernel


def moment_ratio_experiment(model: MarkovKernelModel, theta: float, n_list, replicas: int,
                            rng: RngStream, a_fracs=(0.0, 0.25, 0.5, 0.75), n_states: int = 5,
                            substeps: int = 4, tolerance: float = 0.25, bound: float = 5.0,
                            monitor: int = 512):
    """L4/L2 ratio of the sigma-weighted conditional running error over adapted nets."""
    from .bmo_oscillation import moment_equivalence_check

    rep = ExperimentReport("moment_equivalence", {"theta": theta, "n_list": list(n_list),
                                                  "replicas": replicas},
                           columns=("n", "ratio", "l4", "l2"))
    ratios = []
    for j, n in enumerate(n_list):
        net = adapted_net(model.T, theta, int(n))
        k = net.knots[:-1]
        a_grid = sorted({float(k[int(np.argmin(np.abs(k - f * model.T)))]) for f in a_fracs})
        # the running sup is monitored on at least ``monitor`` points for every n
        sub = max(substeps, int(math.ceil(monitor / int(n))))
        kern = hedging_moment_kernel(model, net, replicas, rng.child(j), sub)
        states = lambda a: _state_grid(a, n_states)
        ratio, rows = moment_equivalence_check(kern, lambda a, w: float(model.sigma_w(a, w)),
                                               a_grid, states, p=2.0, q=4.0)
        ratios.append(ratio)
        rep.rows.append({"n": int(n), "ratio": ratio, "l4": max(r[2] for r in rows),
                         "l2": max(r[3] for r in rows)})
    ratios = np.array(ratios)
    med = float(np.median(ratios))
    rep.results.update({"ratios": ratios, "median": med,
                        "spread": float(np.max(np.abs(ratios / med - 1.0)))})
    rep.verdicts["stable"] = bool(rep.results["spread"] <= tolerance)
    rep.verdicts["bounded"] = bool(ratios.max() <= bound)
    return rep
