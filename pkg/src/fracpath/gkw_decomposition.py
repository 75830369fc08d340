"""Orthogonal martingale decomposition of f(X_T) for finite-activity jump models.

For a compound Poisson process with jump atoms ``(z_k, lam_k)`` put
``mu = sum_k z_k^2 lam_k delta_{z_k}``.  An orthonormal basis ``(D_j)`` of
``L_2(mu)`` defines the strongly orthogonal martingales

    X^D_t = sum_{jumps <= t} D(dX) dX - t sum_k lam_k D(z_k) z_k ,

with ``<X^D>_t = t``, and every square integrable ``f(X_T)`` splits as

    f(X_T) = E f(X_T) + sum_j int_0^T psi^j_{t-} dX^{D_j}_t ,
    psi^j(t, x) = sum_k D_j(z_k) lam_k z_k (F(t, x + z_k) - F(t, x)),

``F(t, x) = E f(x + X_{T-t})``.  Everything here is exact up to the
truncation of the lattice laws at mass 1e-12: psi is tabulated per lattice
state as a Chebyshev series in t, whose antiderivative integrates the
compensator legs between jump times.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy import stats

from .core_paths import SampledPath
from .holder_spaces import TestFunction
from .levy_gradient import LevyModel, density, transition_F
from .time_nets import TimeNet

__all__ = [
    "JumpBasis",
    "build_basis",
    "rotate_basis",
    "DirectionalPath",
    "directional_martingale",
    "psi_field",
    "psi_oracle",
    "GKWDecomposition",
    "JumpSample",
    "simulate_jumps",
    "ReconstructionStats",
    "reconstruct",
    "GKWErrorStats",
    "gkw_error",
    "gkw_error_rate",
    "gkw_error_to_csv",
    "parseval_terms",
]


# ---------------------------------------------------------------------------
# Basis of L_2(mu)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JumpBasis:
    """Orthonormal functions on the atoms of ``mu``.

    ``values[j, k] = D_j(z_k)``; ``mu_mass[k] = z_k^2 lam_k``.
    """

    z: np.ndarray
    lam: np.ndarray
    values: np.ndarray

    @property
    def mu_mass(self) -> np.ndarray:
        return self.z ** 2 * self.lam

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def gram(self) -> np.ndarray:
        return (self.values * self.mu_mass) @ self.values.T

    def parts(self, j: int):
        """``(D_j^+, D_j^-)`` as nonnegative vectors over the atoms."""
        d = self.values[j]
        return np.maximum(d, 0.0), np.maximum(-d, 0.0)

    def l1_masses(self, j: int):
        """``(||D_j^+||_{L1(mu)}, ||D_j^-||_{L1(mu)})``."""
        dp, dm = self.parts(j)
        return float(dp @ self.mu_mass), float(dm @ self.mu_mass)

    def rho(self, j: int):
        """Probability vectors rho_j^{+-} over the atoms (None for a vanishing part)."""
        out = []
        for part in self.parts(j):
            w = part * self.mu_mass
            s = w.sum()
            out.append(w / s if s > 0 else None)
        return tuple(out)

    def compensator_rates(self) -> np.ndarray:
        """``c_j = sum_k lam_k D_j(z_k) z_k`` (drift of X^{D_j} is ``-c_j t``)."""
        return self.values @ (self.lam * self.z)


def build_basis(model: LevyModel, n_functions: int | None = None) -> JumpBasis:
    """Gram-Schmidt of ``1, z, z^2, ...`` in ``L_2(mu)``.

    Orthogonalization runs in exact rational arithmetic (floats are binary
    rationals); only the final normalization is rounded.  Monomials that are
    dependent on the atoms are skipped.
    """
    if model.kind != "compound_poisson":
        raise ValueError("the jump basis needs a finite-activity model")
    z = np.array([a for a, _ in model.atoms], dtype=float)
    lam = np.array([b for _, b in model.atoms], dtype=float)
    K = z.size
    n = K if n_functions is None else int(n_functions)
    if n > K:
        raise ValueError(f"only {K} independent functions exist on {K} atoms")
    if n < 1:
        raise ValueError("need at least one basis function")
    zf = [Fraction(v) for v in z]
    mass = [Fraction(v) ** 2 * Fraction(l) for v, l in zip(z, lam)]
    ip = lambda u, v: sum(a * b * m for a, b, m in zip(u, v, mass))
    ortho = []
    power = 0
    while len(ortho) < n:
        if power > 4 * K + 8:
            raise ValueError("could not find enough independent monomials")
        v = [x ** power for x in zf]
        power += 1
        for u in ortho:
            c = ip(v, u) / ip(u, u)
            v = [a - c * b for a, b in zip(v, u)]
        if ip(v, v) == 0:
            continue
        ortho.append(v)
    vals = np.array([np.array([float(a) for a in u]) / math.sqrt(float(ip(u, u))) for u in ortho])
    return JumpBasis(z, lam, vals)


def rotate_basis(basis: JumpBasis, Q) -> JumpBasis:
    """The basis ``D'_i = sum_j Q_ij D_j`` for an orthogonal matrix ``Q``."""
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (basis.size, basis.size) or not np.allclose(Q @ Q.T, np.eye(basis.size), atol=1e-12):
        raise ValueError("rotation must be an orthogonal matrix of the basis size")
    return JumpBasis(basis.z, basis.lam, Q @ basis.values)


# ---------------------------------------------------------------------------
# Directional martingales
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DirectionalPath:
    """``X^D_t = J(t) - drift * t`` with ``J`` a step path of weighted jumps."""

    jumps: SampledPath
    drift: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.jumps(t) - self.drift * t


def directional_martingale(basis: JumpBasis, j: int, path: SampledPath) -> DirectionalPath:
    """X^{D_j} along a compound Poisson path carrying its full jump record."""
    times, sizes = path.jumps()
    if times.size and not np.all(np.isin(np.round(sizes, 12), np.round(basis.z, 12))):
        raise ValueError("path jumps do not match the atoms (missing or merged jump record)")
    idx = np.array([int(np.argmin(np.abs(basis.z - s))) for s in sizes], dtype=int)
    w = basis.values[j, idx] * sizes
    J = SampledPath.from_jumps(path.T, 0.0, times, w)
    return DirectionalPath(J, float(basis.compensator_rates()[j]))


# ---------------------------------------------------------------------------
# Integrands
# ---------------------------------------------------------------------------

def psi_field(model: LevyModel, f: TestFunction, basis: JumpBasis, j: int, t: float, x):
    """psi^j(t, x) = ||D^+||_1 D_{rho^+}F - ||D^-||_1 D_{rho^-}F, via exact lattice sums."""
    x = np.asarray(x, dtype=float)
    if f.is_constant:
        return np.zeros_like(x)
    F0 = transition_F(model, f, t, x)
    out = np.zeros_like(F0, dtype=float)
    mp, mm = basis.l1_masses(j)
    rp, rm = basis.rho(j)
    for mass, r, sign in ((mp, rp, 1.0), (mm, rm, -1.0)):
        if r is None:
            continue
        d = np.zeros_like(out)
        for k, zk in enumerate(basis.z):
            if r[k] > 0:
                d = d + r[k] * (transition_F(model, f, t, x + zk) - F0) / zk
        out = out + sign * mass * d
    return out


def psi_oracle(model: LevyModel, f: TestFunction, basis: JumpBasis, j: int, t: float, x: float,
               tol: float = 1e-15) -> float:
    """psi^j(t, x) = E[f(x + X_s) X^{D_j}_s] / s, s = T - t, by enumerating jump counts.

    Since psi^j(t + u, x + X_u) is a martingale in u, the covariance of
    f(x + X_s) with X^{D_j}_s equals s psi^j(t, x).
    """
    s = model.T - t
    if s <= 0:
        raise ValueError("oracle needs t < T")
    z, lam = basis.z, basis.lam
    ranges, pmfs = [], []
    for l in lam:
        m = l * s
        nmax = int(stats.poisson.isf(tol, m)) + 2
        n = np.arange(nmax + 1)
        ranges.append(n)
        pmfs.append(stats.poisson.pmf(n, m))
    grids = np.meshgrid(*ranges, indexing="ij")
    prob = np.ones_like(grids[0], dtype=float)
    for g, p in zip(grids, pmfs):
        prob = prob * p[g]
    xs = sum(zk * g for zk, g in zip(z, grids))
    xd = sum(basis.values[j, k] * z[k] * g for k, g in enumerate(grids)) - s * basis.compensator_rates()[j]
    fv = f(x + xs.ravel()).reshape(xs.shape)
    return float(np.sum(prob * fv * xd) / s)


# ---------------------------------------------------------------------------
# Tabulated integrands on lattice states
# ---------------------------------------------------------------------------

class GKWDecomposition:
    """Chebyshev-in-t tables of all psi^j on lattice states, built on demand."""

    def __init__(self, model: LevyModel, f: TestFunction, basis: JumpBasis, degree: int = 48):
        if model.kind != "compound_poisson":
            raise ValueError("finite-activity model required")
        self.model, self.f, self.basis, self.degree = model, f, basis, degree
        T = model.T
        k = np.arange(degree + 1)
        self._u = np.cos(np.pi * (k + 0.5) / (degree + 1))  # Chebyshev nodes in (-1, 1)
        self._t = 0.5 * T * (self._u + 1.0)
        self._laws = [density(model, T - t) for t in self._t]
        self._tables: dict = {}
        if f.is_constant:
            # no lattice sums: the mean is exact and every psi vanishes
            self.mean = float(f(np.array([0.0]))[0])
        else:
            self.mean = float(transition_F(model, f, 0.0, np.array([0.0]))[0])

    # map t in [0, T] to [-1, 1]
    def _u_of(self, t):
        return 2.0 * np.asarray(t, dtype=float) / self.model.T - 1.0

    def _F_nodes(self, x):
        """F(t_i, x) at all Chebyshev nodes, vectorized in x."""
        x = np.asarray(x, dtype=float)
        return np.array([np.sum(self.f(x[:, None] + law.points) * law.probs, axis=1)
                         for law in self._laws])  # (n_nodes, n_x)

    def _build(self, states):
        states = np.asarray(states, dtype=float)
        if self.f.is_constant:
            zero = np.zeros((self.basis.size, self.degree + 1))
            for x in states:
                self._tables[_key(x)] = (zero, zero)
            return
        F0 = self._F_nodes(states)
        dF = [(self._F_nodes(states + zk) - F0) for zk in self.basis.z]
        w = self.basis.values * (self.basis.lam * self.basis.z)  # (J, K)
        for i, x in enumerate(states):
            vals = np.stack([sum(w[j, k] * dF[k][:, i] for k in range(self.basis.z.size))
                             for j in range(self.basis.size)])  # (J, n_nodes)
            coef = np.stack([C.chebfit(self._u, v, self.degree) for v in vals])
            anti = np.stack([C.chebint(c) for c in coef])
            self._tables[_key(x)] = (coef, anti)

    def _ensure(self, states):
        keys = np.unique(np.round(np.asarray(states, dtype=float), 12))
        missing = [x for x in keys if _key(x) not in self._tables]
        if missing:
            self._build(missing)

    def psi(self, t, x):
        """psi^j(t, x) for all j: array of shape (J, n)."""
        return self._eval(t, x, 0)

    def psi_integral(self, a, b, x):
        """int_a^b psi^j(u, x) du for all j (x fixed on [a, b])."""
        half = 0.5 * self.model.T
        return half * (self._eval(b, x, 1) - self._eval(a, x, 1))

    def _eval(self, t, x, which):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = np.atleast_1d(np.asarray(x, dtype=float))
        t, x = np.broadcast_arrays(t, x)
        self._ensure(x)
        xr = np.round(x, 12)
        out = np.empty((self.basis.size, x.size))
        u = self._u_of(t)
        for s in np.unique(xr):
            m = xr == s
            tab = self._tables[_key(s)][which]
            for j in range(self.basis.size):
                out[j, m] = C.chebval(u[m], tab[j])
        return out


def _key(x) -> float:
    v = round(float(x), 12)
    return 0.0 if v == 0 else v


# ---------------------------------------------------------------------------
# Batched exact simulation
# ---------------------------------------------------------------------------

@dataclass
class JumpSample:
    """Flat jump record of many replicas, sorted by (replica, time)."""

    T: float
    replicas: int
    rep: np.ndarray
    times: np.ndarray
    atom: np.ndarray
    start: np.ndarray  # offsets into the flat arrays, length replicas + 1

    def sizes(self, z):
        return np.asarray(z)[self.atom]


def simulate_jumps(model: LevyModel, replicas: int, rng) -> JumpSample:
    z = np.array([a for a, _ in model.atoms])
    lam = np.array([b for _, b in model.atoms])
    total = lam.sum()
    counts = rng.poisson(total * model.T, size=replicas)
    rep = np.repeat(np.arange(replicas), counts)
    times = rng.uniform(0.0, model.T, size=rep.size)
    order = np.lexsort((times, rep))
    rep, times = rep[order], times[order]
    atom = rng.choice(z.size, size=rep.size, p=lam / total)
    start = np.concatenate(([0], np.cumsum(counts)))
    return JumpSample(model.T, replicas, rep, times, atom, start)


def _pre_jump_states(sample: JumpSample, z):
    """X_{tau-} at every jump and X_T per replica."""
    sz = sample.sizes(z)
    cs = np.cumsum(sz)
    before = cs - sz
    base = np.concatenate(([0.0], cs))[sample.start[:-1]]
    x_minus = before - base[sample.rep]
    x_T = np.concatenate(([0.0], cs))[sample.start[1:]] - base
    return x_minus, x_T


def _stochastic_integrals(dec: GKWDecomposition, sample: JumpSample):
    """int_0^T psi^j_{t-} dX^{D_j}_t per replica, all j: shape (J, replicas)."""
    b = dec.basis
    z = b.z
    x_minus, x_T = _pre_jump_states(sample, z)
    J = b.size
    out = np.zeros((J, sample.replicas))
    if sample.times.size:
        psi = dec.psi(sample.times, np.round(x_minus, 12))
        weight = b.values[:, sample.atom] * z[sample.atom]
        for j in range(J):
            out[j] = np.bincount(sample.rep, weights=psi[j] * weight[j], minlength=sample.replicas)
    # compensator legs over the constancy intervals
    c = b.compensator_rates()
    if np.any(c != 0):
        n = sample.times.size
        first = np.zeros(n, dtype=bool)
        first[sample.start[:-1][np.diff(sample.start) > 0]] = True
        left = np.where(first, 0.0, np.concatenate(([0.0], sample.times[:-1])))
        leg = dec.psi_integral(left, sample.times, np.round(x_minus, 12)) if n else np.zeros((J, 0))
        # last interval [last jump, T] at state X_T
        last_t = np.zeros(sample.replicas)
        has = np.diff(sample.start) > 0
        last_t[has] = sample.times[sample.start[1:][has] - 1]
        tail = dec.psi_integral(last_t, np.full(sample.replicas, sample.T), np.round(x_T, 12))
        for j in range(J):
            comp = np.bincount(sample.rep, weights=leg[j], minlength=sample.replicas) + tail[j]
            out[j] -= c[j] * comp
    return out, x_T


@dataclass
class ReconstructionStats:
    replicas: int
    relative_residual: float
    residual_rms: float
    std_f: float
    mean_f: float
    max_abs_residual: float


def reconstruct(model: LevyModel, f: TestFunction, basis: JumpBasis, replicas: int, rng,
                dec: GKWDecomposition | None = None) -> ReconstructionStats:
    """Pathwise check of f(X_T) = E f + sum_j int psi^j dX^{D_j}."""
    dec = dec or GKWDecomposition(model, f, basis)
    sample = simulate_jumps(model, replicas, rng)
    integrals, x_T = _stochastic_integrals(dec, sample)
    fx = f(x_T)
    res = fx - dec.mean - integrals.sum(axis=0)
    sd = float(np.std(fx))
    rms = float(np.sqrt(np.mean(res ** 2)))
    rel = rms / sd if sd > 0 else (0.0 if rms == 0 else math.inf)
    return ReconstructionStats(replicas, rel, rms, sd, dec.mean, float(np.max(np.abs(res))))


def parseval_terms(model: LevyModel, f: TestFunction, basis: JumpBasis, order: int = 16,
                   panels: int = 32, dec: GKWDecomposition | None = None) -> np.ndarray:
    """int_0^T E psi^j(u, X_u)^2 du per j (their sum equals Var f(X_T))."""
    dec = dec or GKWDecomposition(model, f, basis)
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, model.T, panels + 1)
    tot = np.zeros(basis.size)
    for a, b in zip(edges[:-1], edges[1:]):
        for xi, wi in zip(x, w):
            u = 0.5 * (a + b) + 0.5 * (b - a) * xi
            tot += 0.5 * (b - a) * wi * _mean_sq(dec, u, 0.0)
    return tot


def _law_at(model, s):
    return density(model, s) if s > 0 else None


def _mean_sq(dec, u, x0, a=0.0):
    """E psi^j(u, x0 + X_{u-a})^2 for all j."""
    law = _law_at(dec.model, u - a)
    if law is None:
        return dec.psi(np.array([u]), np.array([x0]))[:, 0] ** 2
    keep = law.probs > 1e-14
    pts = np.round(x0 + law.points[keep], 12)
    ps = dec.psi(np.full(pts.size, u), pts)
    return (ps ** 2) @ law.probs[keep]


# ---------------------------------------------------------------------------
# Riemann approximation error
# ---------------------------------------------------------------------------

@dataclass
class GKWErrorStats:
    j: int
    n: int
    l2_oracle: float
    bmo2_oracle: float
    mc_l2: float
    stderr: float
    cross: np.ndarray
    cross_stderr: np.ndarray
    slope: float = float("nan")


def _error_oracle(dec: GKWDecomposition, j: int, knots, a_index: int = 0, x0: float = 0.0,
                  order: int = 6) -> float:
    """E^{a, x0} |E_T - E_a|^2 = sum_{i > a} int (E psi(u)^2 - E psi(t_{i-1})^2) du."""
    x, w = np.polynomial.legendre.leggauss(order)
    a = knots[a_index]
    tot = 0.0
    for lo, hi in zip(knots[a_index:-1], knots[a_index + 1:]):
        base = _mean_sq(dec, lo, x0, a)[j]
        for xi, wi in zip(x, w):
            u = 0.5 * (lo + hi) + 0.5 * (hi - lo) * xi
            tot += 0.5 * (hi - lo) * wi * (_mean_sq(dec, u, x0, a)[j] - base)
    return float(tot)


def gkw_error(model: LevyModel, f: TestFunction, basis: JumpBasis, j: int, net: TimeNet,
              replicas: int, rng, dec: GKWDecomposition | None = None, n_anchor: int = 4,
              state_mass: float = 1e-4) -> GKWErrorStats:
    """Riemann error E_T(f; tau, D_j) = int psi^j dX^{D_j} - sum psi^j(t_{i-1}) dX^{D_j}.

    The oracle uses the conditional isometry (the density of <X^{D_j}> is
    ``int D_j^2 dmu = 1``) with exact lattice laws; the bmo_2 value is the
    largest conditional second moment over ``n_anchor`` knots and the lattice
    states of mass at least ``state_mass``.  Monte Carlo errors of every
    basis direction are returned for the orthogonality check.
    """
    dec = dec or GKWDecomposition(model, f, basis)
    knots = net.knots
    l2 = _error_oracle(dec, j, knots)
    bmo = l2
    idx = np.unique(np.linspace(0, knots.size - 2, n_anchor).astype(int))
    for i in idx[1:]:
        law = density(model, knots[i])
        for x0, p in zip(law.points, law.probs):
            if p >= state_mass:
                bmo = max(bmo, _error_oracle(dec, j, knots, int(i), float(x0)))
    sample = simulate_jumps(model, replicas, rng)
    integrals, x_T = _stochastic_integrals(dec, sample)
    riemann = _riemann_sums(dec, sample, knots)
    err = integrals - riemann  # (J, replicas)
    e2 = err[j] ** 2
    mc = float(np.mean(e2))
    se = float(np.std(e2, ddof=1) / math.sqrt(replicas))
    prod = err[j][None, :] * err
    cross = prod.mean(axis=1)
    cross_se = prod.std(axis=1, ddof=1) / math.sqrt(replicas)
    return GKWErrorStats(j, net.n, l2, bmo, mc, se, cross, cross_se)


def _riemann_sums(dec: GKWDecomposition, sample: JumpSample, knots):
    """sum_i psi^j(t_{i-1}, X_{t_{i-1}}) (X^{D_j}_{t_i} - X^{D_j}_{t_{i-1}}) for all j."""
    b = dec.basis
    z = b.z
    R = sample.replicas
    J = b.size
    sz = sample.sizes(z)
    cs = np.concatenate(([0.0], np.cumsum(sz)))
    w = b.values[:, sample.atom] * sz  # weighted jumps for X^D
    csw = np.concatenate((np.zeros((J, 1)), np.cumsum(w, axis=1)), axis=1)
    c = b.compensator_rates()
    key = sample.rep * (2.0 * sample.T + 1.0) + sample.times
    offs = np.arange(R) * (2.0 * sample.T + 1.0)

    def at(t):
        pos = np.searchsorted(key, offs + t, side="right")
        st = sample.start[:-1]
        x = cs[pos] - cs[st]
        xd = csw[:, pos] - csw[:, st] - c[:, None] * t
        return x, xd

    out = np.zeros((J, R))
    x_prev, xd_prev = at(knots[0])
    for lo, hi in zip(knots[:-1], knots[1:]):
        x_hi, xd_hi = at(hi)
        psi = dec.psi(np.full(R, lo), np.round(x_prev, 12))
        out += psi * (xd_hi - xd_prev)
        x_prev, xd_prev = x_hi, xd_hi
    return out


def gkw_error_rate(model: LevyModel, f: TestFunction, basis: JumpBasis, j: int, nets,
                   dec: GKWDecomposition | None = None):
    """Oracle L2 error per net and the OLS slope of log L2 against log n."""
    dec = dec or GKWDecomposition(model, f, basis)
    n = np.array([net.n for net in nets], dtype=float)
    l2 = np.array([math.sqrt(max(_error_oracle(dec, j, net.knots), 0.0)) for net in nets])
    slope = float(stats.linregress(np.log(n), np.log(l2)).slope)
    return n, l2, slope


def gkw_error_to_csv(rows) -> str:
    """CSV ``j,n,bmo2,stderr,slope`` for a list of GKWErrorStats."""
    buf = io.StringIO()
    buf.write("j,n,bmo2,stderr,slope\n")
    for r in rows:
        buf.write(f"{r.j},{r.n},{r.bmo2_oracle:.17g},{r.stderr:.17g},{r.slope:.17g}\n")
    return buf.getvalue()
