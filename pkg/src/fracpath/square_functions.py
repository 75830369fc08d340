"""Square functions of step integrands against time-nets and their scaling limits.

For a time-net ``tau = {t_i}`` and an integrand ``phi`` the square function is

    [phi; tau]_a^sigma = int_0^a |phi_u - sum_i phi_{t_{i-1}} 1_{(t_{i-1}, t_i]}(u)|^2 sigma_u^2 du .

For step paths this is a finite sum over the joint constancy intervals of
``phi``, ``sigma`` and the net.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .core_paths import ProcessSpec, RngStream, SampledPath, evaluate
from .time_nets import TimeNet, adapted_net, mesh_theta, randomized_net

__all__ = [
    "SquareFunctionSeries",
    "ExperimentReport",
    "square_function",
    "square_function_series",
    "scaled_sq_expectation_oracle",
    "brownian_target",
    "expectation_gap_order",
    "brownian_scaled_sq_samples",
    "randomized_cp_scaled_sq",
    "scaling_limit_experiment",
    "randomized_scaling_experiment",
    "reverse_hoelder_ratio",
    "conditional_sq_upper_bound_check",
]


@dataclass
class ExperimentReport:
    """Structured outcome of an experiment: inputs, table rows and verdicts."""

    name: str
    inputs: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    columns: tuple = ()
    results: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(bool(v) for v in self.verdicts.values())

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.columns) + "\n")
        for row in self.rows:
            buf.write(",".join(_fmt(row[c]) for c in self.columns) + "\n")
        return buf.getvalue()


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


# ---------------------------------------------------------------------------
# Exact square function of step paths
# ---------------------------------------------------------------------------

@dataclass
class SquareFunctionSeries:
    net: TimeNet
    query: np.ndarray
    values: np.ndarray


def _sq_increments(phi: SampledPath, net: TimeNet, sigma, a_max: float):
    """Cell edges and per-cell contributions of the square function up to ``a_max``."""
    T = net.T
    pts = [phi.times, net.knots]
    if isinstance(sigma, SampledPath):
        pts.append(sigma.times)
    edges = np.union1d(np.concatenate(pts), [a_max])
    edges = edges[(edges >= 0) & (edges <= a_max)]
    lo, hi = edges[:-1], edges[1:]
    if lo.size == 0:
        return edges, np.zeros(0)
    phi_c = np.atleast_1d(evaluate(phi, lo))
    # anchor: value of phi at the last knot <= cell start
    k = np.searchsorted(net.knots, lo, side="right") - 1
    anchor = np.atleast_1d(evaluate(phi, np.minimum(net.knots[k], T)))
    if isinstance(sigma, SampledPath):
        sig2 = np.atleast_1d(evaluate(sigma, lo)) ** 2
    else:
        sig2 = float(sigma) ** 2
    return edges, (phi_c - anchor) ** 2 * sig2 * (hi - lo)


def square_function(phi: SampledPath, net: TimeNet, sigma=1.0, a: float | None = None) -> float:
    """[phi; tau]_a^sigma computed exactly for step paths."""
    T = net.T
    if phi.T != T:
        raise ValueError("path and net horizons differ")
    a = T if a is None else float(a)
    if a < 0 or a > T:
        raise ValueError("a must lie in [0, T]")
    _, inc = _sq_increments(phi, net, sigma, a)
    return float(inc.sum())


def square_function_series(phi: SampledPath, net: TimeNet, query, sigma=1.0) -> SquareFunctionSeries:
    """Values of ``a -> [phi; tau]_a^sigma`` on a query grid."""
    q = np.asarray(query, dtype=float)
    if np.any(q < 0) or np.any(q > net.T):
        raise ValueError("query times must lie in [0, T]")
    edges, inc = _sq_increments(phi, net, sigma, net.T)
    cum = np.concatenate(([0.0], np.cumsum(inc)))
    # linear inside a cell since the integrand is constant there
    vals = np.interp(q, edges, cum)
    return SquareFunctionSeries(net, q, vals)


# ---------------------------------------------------------------------------
# Deterministic oracles for the Brownian scaling limit
# ---------------------------------------------------------------------------

def scaled_sq_expectation_oracle(theta: float, n: int, b: float, T: float = 1.0,
                                 net: TimeNet | None = None) -> float:
    """E[(2 theta n / T) [W; tau_n^theta]_b] in closed form."""
    if not (0 <= b <= T):
        raise ValueError("b must lie in [0, T]")
    k = adapted_net(T, theta, n).knots if net is None else net.knots
    lo = k[:-1]
    hi = np.minimum(k[1:], b)
    d = np.where(hi > lo, hi - lo, 0.0)
    return float(2.0 * theta * n / T * np.sum(d * d) / 2.0)


def brownian_target(theta: float, b: float, T: float = 1.0) -> float:
    """[I^{(1-theta)/2} W]_b = int_0^b ((T-u)/T)^{1-theta} du."""
    if not (0 <= b <= T):
        raise ValueError("b must lie in [0, T]")
    p = 2.0 - theta
    return float(T / p * (1.0 - ((T - b) / T) ** p))


def expectation_gap_order(theta: float, b: float, n_list, T: float = 1.0):
    """Fitted order of |oracle(n) - target| against n, with the gaps."""
    n = np.asarray(n_list, dtype=float)
    target = brownian_target(theta, b, T)
    gaps = np.array([abs(scaled_sq_expectation_oracle(theta, int(m), b, T) - target) for m in n])
    slope = np.polyfit(np.log(n), np.log(gaps), 1)[0]
    return float(-slope), gaps


# ---------------------------------------------------------------------------
# Monte Carlo for the Brownian scaling limit
# ---------------------------------------------------------------------------

def brownian_scaled_sq_samples(theta: float, n: int, b: float, replicas: int,
                               rng: RngStream, T: float = 1.0, substeps: int = 16,
                               batch: int = 2000) -> np.ndarray:
    """Samples of (2 theta n / T) [W; tau_n^theta]_b.

    W is sampled exactly on the knots refined by ``substeps`` equal cells per
    interval.  Inside each cell the squared deviation is integrated by its
    Brownian-bridge conditional mean ``d (x^2 + x y + y^2)/3 + d^2/6``, where
    ``x, y`` are the end values relative to the anchor.  The remaining
    within-cell fluctuation has variance of relative order ``substeps^-3``.
    """
    k = adapted_net(T, theta, n).knots
    lo = k[:-1][k[:-1] < b]
    hi = np.minimum(k[1:len(lo) + 1], b)
    m = substeps
    frac = np.arange(m + 1) / m
    # fine grid per interval: rows = intervals, cols = m+1 points
    pts = lo[:, None] + (hi - lo)[:, None] * frac[None, :]
    d = (hi - lo) / m
    gen = rng.generator()
    out = np.empty(replicas)
    n_int = lo.size
    for s0 in range(0, replicas, batch):
        nb = min(batch, replicas - s0)
        # increments over each cell
        z = gen.standard_normal((nb, n_int, m)) * np.sqrt(d)[None, :, None]
        # relative to the anchor of each interval
        rel = np.concatenate([np.zeros((nb, n_int, 1)), np.cumsum(z, axis=2)], axis=2)
        x, y = rel[:, :, :-1], rel[:, :, 1:]
        cell = d[None, :, None] * (x * x + x * y + y * y) / 3.0 + (d * d)[None, :, None] / 6.0
        out[s0:s0 + nb] = cell.sum(axis=(1, 2))
    del pts
    return 2.0 * theta * n / T * out


def scaling_limit_experiment(theta: float, b: float, n_list, replicas: int, rng: RngStream,
                             T: float = 1.0, substeps: int = 16) -> ExperimentReport:
    """L1 distance of the scaled square function to its deterministic limit."""
    if not (0 <= b < T):
        raise ValueError("b must lie in [0, T)")
    target = brownian_target(theta, b, T)
    rep = ExperimentReport("scaling_limit", {"theta": theta, "b": b, "T": T,
                                             "replicas": replicas, "n_list": list(n_list)},
                           columns=("n", "theta", "b", "l1_distance", "stderr", "target"))
    dist = []
    for j, n in enumerate(n_list):
        s = brownian_scaled_sq_samples(theta, int(n), b, replicas, rng.child(j), T, substeps)
        dev = np.abs(s - target)
        dist.append(dev.mean())
        rep.rows.append({"n": int(n), "theta": theta, "b": b, "l1_distance": float(dev.mean()),
                         "stderr": float(dev.std(ddof=1) / math.sqrt(replicas)),
                         "target": target})
    dist = np.array(dist)
    last = rep.rows[-1]
    rep.results["distances"] = dist
    rep.verdicts["monotone"] = bool(np.all(np.diff(dist) < 0))
    rep.verdicts["threshold"] = bool(last["l1_distance"] <= max(0.02 * target, 3 * last["stderr"]))
    return rep


# ---------------------------------------------------------------------------
# Randomized nets for a compound-Poisson martingale
# ---------------------------------------------------------------------------

def randomized_cp_scaled_sq(path: SampledPath, theta: float, n: int, b: float) -> float:
    """int_0^1 (2 theta n / T) [L; tau_n^{theta,r}]_b dr, exactly.

    The square function of a step path is piecewise linear in ``r``: the
    knots move linearly and the anchor values change only when a knot
    crosses a jump time or ``b``.  Splitting [0, 1) at those crossings and
    taking the midpoint of each piece integrates it exactly.
    """
    T = path.T
    base = adapted_net(T, theta, n).knots
    gaps = np.diff(base)
    jt = path.times[1:]
    events = np.concatenate((jt[jt < b], [b]))
    # r at which knot t_{i} + r gap_i equals an event e
    i = np.searchsorted(base, events, side="right") - 1
    i = np.clip(i, 0, n - 1)
    r_cross = (events - base[i]) / gaps[i]
    br = np.unique(np.concatenate(([0.0, 1.0], r_cross[(r_cross > 0) & (r_cross < 1)])))
    total = 0.0
    for r0, r1 in zip(br[:-1], br[1:]):
        rm = 0.5 * (r0 + r1)
        net = randomized_net(T, theta, n, rm)
        total += (r1 - r0) * square_function(path, net, 1.0, b)
    return 2.0 * theta * n / T * total


def randomized_scaling_experiment(spec: ProcessSpec, theta: float, b: float, n_list,
                                  replicas: int, rng: RngStream) -> ExperimentReport:
    """L1 distance of the r-averaged scaled square function to [I^alpha L]_b.

    ``L`` is the compound-Poisson path of ``spec`` with symmetric atoms, so it
    is a martingale without compensator.  The limit is
    ``sum_{s <= b} ((T-s)/T)^{1-theta} (dL_s)^2``.
    """
    if spec.kind != "compound_poisson":
        raise ValueError("randomized variant runs on compound_poisson")
    drift = sum(z * lam for z, lam in spec.atoms)
    if abs(drift) > 1e-14:
        raise ValueError("atoms must be symmetric so that L is a martingale")
    T = spec.T
    rep = ExperimentReport("randomized_scaling", {"theta": theta, "b": b,
                                                  "replicas": replicas, "n_list": list(n_list)},
                           columns=("n", "theta", "b", "l1_distance", "stderr", "target"))
    paths = [_cp_path(spec, rng.child(k)) for k in range(replicas)]
    targets = np.empty(replicas)
    for k, p in enumerate(paths):
        jt, dk = p.jumps()
        sel = jt <= b
        targets[k] = np.sum(((T - jt[sel]) / T) ** (1.0 - theta) * dk[sel] ** 2)
    dist = []
    for n in n_list:
        vals = np.array([randomized_cp_scaled_sq(p, theta, int(n), b) for p in paths])
        dev = np.abs(vals - targets)
        dist.append(dev.mean())
        rep.rows.append({"n": int(n), "theta": theta, "b": b, "l1_distance": float(dev.mean()),
                         "stderr": float(dev.std(ddof=1) / math.sqrt(replicas)),
                         "target": float(targets.mean())})
    rep.results["distances"] = np.array(dist)
    rep.verdicts["monotone"] = bool(np.all(np.diff(dist) < 0))
    return rep


def _cp_path(spec, stream):
    from .core_paths import simulate_path
    return simulate_path(spec, [0.0], stream)


# ---------------------------------------------------------------------------
# Reverse-Hoelder surrogate for the geometric Brownian weight
# ---------------------------------------------------------------------------

def reverse_hoelder_ratio(a: float, b: float, sigma_hat: float = 1.0) -> float:
    """E^{F_a}[(1/(b-a)) int_a^b Y_u^2 du] / Y_a^2 for Y geometric Brownian.

    Uses E[Y_u^2 | Y_a] = Y_a^2 exp(sigma^2 (u - a)).
    """
    if not (b > a):
        raise ValueError("need b > a")
    h = b - a
    c = sigma_hat ** 2
    return float(math.expm1(c * h) / (c * h))


# ---------------------------------------------------------------------------
# Two-sided conditional structure in the Brownian laboratory
# ---------------------------------------------------------------------------

def conditional_sq_upper_bound_check(model, net: TimeNet, theta: float, a_grid, state_grid,
                                     offsets=(-1.5, 0.0, 1.5)) -> ExperimentReport:
    """Fit the constants of the two-sided conditional square-function bounds.

    For every ``a`` in ``a_grid`` with bracketing knots ``(a_lo, a_hi)``,
    every Brownian coordinate ``w_lo`` of the state at ``a_lo`` in
    ``state_grid`` and ``w_a = w_lo + offset sqrt(a - a_lo)``, it computes

    * ``lhs = E^{F_a}[R_T - R_a] / ||tau||_theta`` (remaining square function),
    * ``tail = E^{F_a} int_a^T ((T-u)/T)^{1-theta} H_u^2 du``, which is within
      a factor 4 of the conditional sup of the transformed martingale,
    * ``local = (T-a)/(T-a_lo)^theta |phi_a - phi_{a_lo}|^2 sigma_a^2``,

    and reports ``c_upper = max lhs / (tail + local)``.  The lower leg uses
    the net ``{0, s, T}`` with ``s = a_lo`` and reports
    ``c_lower = max local / lhs_s``.
    """
    from . import bs_hedging as bh

    mesh = mesh_theta(net, theta)
    rep = ExperimentReport("conditional_sq", {"theta": theta, "n": net.n},
                           columns=("a", "w_lo", "w_a", "lhs", "tail", "local"))
    ratios_up = []
    ratios_lo = []
    for a in a_grid:
        a_lo, _ = _bracket(net, a)
        for w_lo in state_grid:
            for off in offsets if a > a_lo else (0.0,):
                w_a = w_lo + off * math.sqrt(max(a - a_lo, 0.0))
                rem = bh.conditional_error_sq(model, net, a, w_a, anchor=(a_lo, w_lo))
                tail = bh.conditional_rl_tail(model, a, w_a, 1.0 - theta)
                zl = bh.z_field(model, a_lo, w_lo)
                za = bh.z_field(model, a, w_a)
                sig_a = model.sigma_w(a, w_a)
                phi_lo = zl / model.sigma_w(a_lo, w_lo)
                phi_a = za / sig_a
                local = (model.T - a) / (model.T - a_lo) ** theta * (phi_a - phi_lo) ** 2 * sig_a ** 2
                lhs = rem / mesh
                rep.rows.append({"a": a, "w_lo": w_lo, "w_a": w_a, "lhs": lhs,
                                 "tail": tail, "local": local})
                if tail + local > 0:
                    ratios_up.append(lhs / (tail + local))
                if a_lo > 0 and local > 0:
                    ext = TimeNet(model.T, np.array([0.0, a_lo, model.T]))
                    lhs_ext = bh.conditional_error_sq(model, ext, a, w_a, anchor=(a_lo, w_lo))
                    ratios_lo.append(local / (lhs_ext / mesh_theta(ext, theta)))
    rep.results["c_upper"] = float(max(ratios_up)) if ratios_up else 0.0
    rep.results["c_lower"] = float(max(ratios_lo)) if ratios_lo else 0.0
    rep.verdicts["finite"] = bool(np.isfinite(rep.results["c_upper"])
                                  and np.isfinite(rep.results["c_lower"]))
    return rep


def _bracket(net, a):
    k = int(np.searchsorted(net.knots, a, side="right"))
    return float(net.knots[k - 1]), float(net.knots[min(k, net.n)])
