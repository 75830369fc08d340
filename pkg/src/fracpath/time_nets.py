"""Deterministic time-nets on [0, T] and their theta-weighted mesh sizes."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TimeNet",
    "mesh_theta",
    "adapted_net",
    "uniform_net",
    "randomized_net",
    "bracketing_knots",
    "quantization_masses",
    "net_to_csv",
]


@dataclass(frozen=True)
class TimeNet:
    """Partition ``0 = t_0 < t_1 < ... < t_n = T``.

    ``dist`` optionally holds the normalized distances ``(T - t_i)/T``
    computed without cancellation.  Knots of strongly graded nets can
    coincide in floating point near ``T`` (the gaps of ``tau_n^theta`` end at
    ``T n^(-1/theta)``); the net is then validated on ``dist`` and the
    mesh functionals use it.
    """

    T: float
    knots: np.ndarray
    dist: np.ndarray | None = None
    gaps: np.ndarray | None = None

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        if self.T <= 0:
            raise ValueError("horizon must be positive")
        if k.ndim != 1 or k.size < 2:
            raise ValueError("a net needs at least two knots")
        if k[0] != 0.0 or k[-1] != self.T:
            raise ValueError("knots must start at 0 and end at T")
        if self.dist is None:
            if np.any(np.diff(k) <= 0):
                raise ValueError("knots must be strictly increasing")
        else:
            d = np.asarray(self.dist, dtype=float)
            if d.shape != k.shape or d[0] != 1.0 or d[-1] != 0.0 or np.any(np.diff(d) >= 0):
                raise ValueError("distances to T must decrease strictly from 1 to 0")
            if np.any(np.diff(k) < 0):
                raise ValueError("knots must be nondecreasing")
            d.setflags(write=False)
            object.__setattr__(self, "dist", d)
        if self.gaps is not None:
            g = np.asarray(self.gaps, dtype=float)
            if self.dist is None or g.shape != (k.size - 1,) or np.any(g <= 0):
                raise ValueError("normalized gaps need distances and must be positive")
            g.setflags(write=False)
            object.__setattr__(self, "gaps", g)
        k.setflags(write=False)
        object.__setattr__(self, "knots", k)

    def normalized_dist(self) -> np.ndarray:
        """``(T - t_i)/T``, exact when ``dist`` is stored."""
        return self.dist if self.dist is not None else (self.T - self.knots) / self.T

    def normalized_gaps(self) -> np.ndarray:
        """``(t_i - t_{i-1})/T``, free of cancellation when ``gaps`` is stored."""
        if self.gaps is not None:
            return self.gaps
        x = self.normalized_dist()
        return x[:-1] - x[1:]

    @property
    def n(self) -> int:
        """Number of intervals."""
        return self.knots.size - 1

    def __len__(self):
        return self.knots.size


def mesh_theta(net: TimeNet, theta: float) -> float:
    """max_i (t_i - t_{i-1}) / (T - t_{i-1})^(1 - theta)."""
    if not (0 < theta <= 1):
        raise ValueError("theta must lie in (0, 1]")
    x = net.normalized_dist()
    T = net.T
    return float(np.max(T * net.normalized_gaps() / (T * x[:-1]) ** (1.0 - theta)))


def adapted_net(T: float, theta: float, n: int) -> TimeNet:
    """Knots ``T - T (1 - i/n)^(1/theta)``, last knot pinned to ``T``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not (0 < theta <= 1):
        raise ValueError("theta must lie in (0, 1]")
    i = np.arange(n + 1)
    dist = ((n - i) / n) ** (1.0 / theta)
    knots = T - T * dist
    knots[0] = 0.0
    knots[-1] = T
    # x_{i-1} - x_i = x_{i-1} (1 - (1 - 1/(n-i+1))^(1/theta)) without cancellation
    m = n - i[1:] + 1.0
    with np.errstate(divide="ignore"):
        gaps = -dist[:-1] * np.expm1(np.log1p(-1.0 / m) / theta)
    return TimeNet(T, knots, dist, gaps)


def uniform_net(T: float, n: int) -> TimeNet:
    return adapted_net(T, 1.0, n)


def randomized_net(T: float, theta: float, n: int, r: float) -> TimeNet:
    """Shift every knot of the adapted net by ``r`` times the following gap.

    The result is ``{0, r t_1, t_1 + r (t_2 - t_1), ..., t_{n-1} + r (T -
    t_{n-1}), T}``; for ``r = 0`` the duplicated knots are merged.
    """
    if not (0 <= r < 1):
        raise ValueError("r must lie in [0, 1)")
    base = adapted_net(T, theta, n).knots
    shifted = base[:-1] + r * np.diff(base)
    knots = np.concatenate(([0.0], shifted, [T]))
    knots = knots[np.concatenate(([True], np.diff(knots) != 0))]
    return TimeNet(T, knots)


def bracketing_knots(net: TimeNet, a: float):
    """Return ``(t_{k-1}, t_k)`` with ``a`` in ``[t_{k-1}, t_k)``."""
    if a < 0 or a >= net.T:
        raise ValueError("a must lie in [0, T)")
    k = int(np.searchsorted(net.knots, a, side="right"))
    return float(net.knots[k - 1]), float(net.knots[k])


def quantization_masses(net: TimeNet, theta: float) -> np.ndarray:
    """(theta/T^theta) * integral of (T-u)^(theta-1) over each interval."""
    # ((T - t_{i-1})^theta - (T - t_i)^theta) / T^theta, written with the
    # normalised distance to T to keep precision for small theta.
    x = net.normalized_dist()
    if net.gaps is not None:
        # x_{i-1}^theta - x_i^theta = -x_{i-1}^theta expm1(theta log(x_i/x_{i-1}))
        with np.errstate(divide="ignore"):
            ratio = np.log1p(-net.gaps / np.where(x[:-1] > 0, x[:-1], 1.0))
            return -x[:-1] ** theta * np.expm1(theta * ratio)
    return x[:-1] ** theta - x[1:] ** theta


def net_to_csv(net: TimeNet) -> str:
    buf = io.StringIO()
    buf.write("t\n")
    for t in net.knots:
        buf.write(f"{t:.17g}\n")
    return buf.getvalue()
