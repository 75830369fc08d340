"""Piecewise-constant cadlag paths, seeded random streams and path simulators.

A :class:`SampledPath` stores a path as an explicit jump list: the value
``values[i]`` holds on ``[times[i], times[i+1])`` and the last value holds up to
the horizon.  Every integral against ``du`` of such a path is a finite sum,
which is what makes the Riemann-Liouville and square-function code exact.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "SampledPath",
    "RngStream",
    "ProcessSpec",
    "simulate_path",
    "simulate_increments",
    "evaluate",
    "left_limit",
    "path_to_csv",
    "stable_rvs",
]


# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SampledPath:
    """Cadlag step path on ``[0, T]``.

    Parameters
    ----------
    T : float
        Horizon.
    times : array_like
        Strictly increasing change points starting at 0.
    values : array_like
        Value taken from ``times[i]`` until the next change point.
    """

    T: float
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if self.T <= 0:
            raise ValueError("horizon T must be positive")
        if t.ndim != 1 or t.size == 0:
            raise ValueError("path needs at least one time point")
        if t.shape != v.shape:
            raise ValueError("times and values must have the same length")
        if t[0] != 0.0:
            raise ValueError("times must start at 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if t[-1] > self.T:
            raise ValueError("last time exceeds the horizon")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, T: float, c: float) -> "SampledPath":
        return cls(T, np.array([0.0]), np.array([float(c)]))

    @classmethod
    def from_jumps(cls, T, x0, jump_times, jump_sizes) -> "SampledPath":
        """Build a path from a start value and a list of jumps.

        Jumps at equal times are merged; a jump at time 0 shifts the start
        value.
        """
        jt = np.asarray(jump_times, dtype=float)
        js = np.asarray(jump_sizes, dtype=float)
        order = np.argsort(jt, kind="stable")
        jt, js = jt[order], js[order]
        at0 = jt == 0.0
        x0 = float(x0) + js[at0].sum()
        jt, js = jt[~at0], js[~at0]
        if jt.size:
            uniq, inv = np.unique(jt, return_inverse=True)
            js = np.bincount(inv, weights=js, minlength=uniq.size)
            jt = uniq
        times = np.concatenate(([0.0], jt))
        values = x0 + np.concatenate(([0.0], np.cumsum(js)))
        return cls(T, times, values)

    @property
    def n_pieces(self) -> int:
        return self.times.size

    def interval_bounds(self):
        """Left and right ends of the constancy intervals, the last ending at T."""
        right = np.append(self.times[1:], self.T)
        return self.times, right

    def jumps(self):
        """Jump times in (0, T] and the corresponding jump sizes."""
        return self.times[1:], np.diff(self.values)

    def __call__(self, t):
        return evaluate(self, t)


def _check_time(path: SampledPath, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > path.T):
        raise ValueError("evaluation time outside [0, T]")
    return t


def evaluate(path: SampledPath, t):
    """Right-continuous evaluation at ``t`` (scalar or array)."""
    t = _check_time(path, t)
    idx = np.searchsorted(path.times, t, side="right") - 1
    out = path.values[idx]
    return float(out) if np.ndim(out) == 0 else out


def left_limit(path: SampledPath, t):
    """Left limit at ``t``; at ``t = 0`` the value at 0 is returned."""
    t = _check_time(path, t)
    idx = np.searchsorted(path.times, t, side="left") - 1
    idx = np.maximum(idx, 0)
    out = path.values[idx]
    return float(out) if np.ndim(out) == 0 else out


def path_to_csv(path: SampledPath) -> str:
    """Serialize as ``t,value`` with 17 significant digits and LF endings."""
    buf = io.StringIO()
    buf.write("t,value\n")
    for t, v in zip(path.times, path.values):
        buf.write(f"{t:.17g},{v:.17g}\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RngStream:
    """Splittable random stream identified by ``(seed, index)``.

    The generator for a pair is built from ``SeedSequence(seed,
    spawn_key=(index,))`` so that results never depend on the order in
    which streams are consumed.
    """

    seed: int = 0
    index: int = 0

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        if int(self.index) < 0:
            raise ValueError("stream index must be nonnegative")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.index),))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, k: int) -> "RngStream":
        """A distinct stream derived from this one."""
        return RngStream(self.seed, int(self.index) * 1_000_003 + 1 + int(k))


# ---------------------------------------------------------------------------
# Process descriptions
# ---------------------------------------------------------------------------

_KINDS = ("brownian", "geometric_brownian", "symmetric_stable", "cauchy",
          "compound_poisson")


@dataclass(frozen=True)
class ProcessSpec:
    """Description of a process to simulate.

    ``params`` holds ``beta`` for ``symmetric_stable`` and ``sigma`` for the
    Brownian kinds; ``atoms`` is a tuple of ``(jump size, rate)`` pairs for
    ``compound_poisson``.  Stable processes use the characteristic function
    ``exp(-s |u|^beta)``.
    """

    kind: str
    T: float = 1.0
    params: dict = field(default_factory=dict)
    atoms: tuple = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown process kind {self.kind!r}")
        if self.T <= 0:
            raise ValueError("horizon must be positive")
        if self.kind == "symmetric_stable":
            beta = self.params.get("beta")
            if beta is None or not (0 < beta < 2):
                raise ValueError("stable index beta must lie in (0, 2)")
        if self.kind == "compound_poisson":
            if len(self.atoms) == 0:
                raise ValueError("compound_poisson needs at least one atom")
            for z, lam in self.atoms:
                if lam <= 0:
                    raise ValueError("jump rates must be positive")
                if z == 0:
                    raise ValueError("jump sizes must be nonzero")

    @property
    def beta(self) -> float:
        if self.kind == "cauchy":
            return 1.0
        return float(self.params["beta"])

    @property
    def sigma(self) -> float:
        return float(self.params.get("sigma", 1.0))

    @property
    def total_rate(self) -> float:
        return float(sum(lam for _, lam in self.atoms))


def stable_rvs(beta: float, size, rng: np.random.Generator) -> np.ndarray:
    """Symmetric stable draws with characteristic function ``exp(-|u|^beta)``.

    Chambers-Mallows-Stuck construction; ``beta = 1`` uses the exact Cauchy
    branch ``tan(U)``.
    """
    u = rng.uniform(-np.pi / 2, np.pi / 2, size)
    if beta == 1.0:
        return np.tan(u)
    w = rng.standard_exponential(size)
    return (np.sin(beta * u) / np.cos(u) ** (1.0 / beta)
            * (np.cos((1.0 - beta) * u) / w) ** ((1.0 - beta) / beta))


def _check_grid(grid, T):
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise ValueError("grid must be a nonempty 1-d sequence")
    if g[0] != 0.0:
        raise ValueError("grid must start at 0")
    if np.any(np.diff(g) <= 0):
        raise ValueError("grid must be strictly increasing")
    if g[-1] > T:
        raise ValueError("grid exceeds the horizon")
    return g


def simulate_increments(spec: ProcessSpec, grid, n_paths: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Vectorized exact values of a continuous-state process on ``grid``.

    Returns an array of shape ``(n_paths, len(grid))``.  Only the Brownian,
    geometric Brownian and stable kinds are supported here since jump paths
    need their exact jump times (see :func:`simulate_path`).
    """
    g = _check_grid(grid, spec.T)
    dt = np.diff(g)
    out = np.zeros((n_paths, g.size))
    if spec.kind in ("brownian", "geometric_brownian"):
        sig = spec.sigma
        inc = rng.standard_normal((n_paths, dt.size)) * np.sqrt(dt)
        w = np.concatenate([np.zeros((n_paths, 1)), np.cumsum(inc, axis=1)], axis=1)
        if spec.kind == "brownian":
            return sig * w
        return np.exp(sig * w - 0.5 * sig**2 * g)
    if spec.kind in ("symmetric_stable", "cauchy"):
        beta = spec.beta
        inc = stable_rvs(beta, (n_paths, dt.size), rng) * dt ** (1.0 / beta)
        out[:, 1:] = np.cumsum(inc, axis=1)
        return out
    raise ValueError("use simulate_path for compound_poisson")


def simulate_path(spec: ProcessSpec, grid: Sequence[float], rng) -> SampledPath:
    """Simulate one path with exact increment laws on ``grid``.

    ``rng`` may be an :class:`RngStream` or a numpy ``Generator``.  For
    ``compound_poisson`` the returned path contains every jump time (drawn
    from exponential clocks), not only the grid points.
    """
    g = _check_grid(grid, spec.T)
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    if spec.kind == "compound_poisson":
        sizes = np.array([z for z, _ in spec.atoms], dtype=float)
        rates = np.array([lam for _, lam in spec.atoms], dtype=float)
        total = rates.sum()
        times = []
        t = gen.exponential(1.0 / total)
        while t <= spec.T:
            times.append(t)
            t += gen.exponential(1.0 / total)
        k = gen.choice(sizes.size, size=len(times), p=rates / total)
        return SampledPath.from_jumps(spec.T, 0.0, times, sizes[k])
    vals = simulate_increments(spec, g, 1, gen)[0]
    return SampledPath(spec.T, g, vals)
