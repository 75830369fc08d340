"""Stochastic numerics for fractional smoothing, time-nets and hedging errors."""

__version__ = "0.1.0"

from .core_paths import (ProcessSpec, RngStream, SampledPath, evaluate,
                         left_limit, simulate_path)
from .riemann_liouville import RLTransform, apply, compose_check
from .time_nets import TimeNet, adapted_net, mesh_theta, randomized_net, uniform_net
from .holder_spaces import TestFunction, h_theta_a, holder_seminorm, k_functional
from .bs_hedging import MarkovKernelModel, l2_error_oracle, rate_regression
from .levy_gradient import LevyModel, MeasureProfile, d_rho_F, density
from .gkw_decomposition import GKWDecomposition, build_basis

__all__ = [
    "__version__",
    "ProcessSpec",
    "RngStream",
    "SampledPath",
    "evaluate",
    "left_limit",
    "simulate_path",
    "RLTransform",
    "apply",
    "compose_check",
    "TimeNet",
    "adapted_net",
    "mesh_theta",
    "randomized_net",
    "uniform_net",
    "TestFunction",
    "h_theta_a",
    "holder_seminorm",
    "k_functional",
    "MarkovKernelModel",
    "l2_error_oracle",
    "rate_regression",
    "LevyModel",
    "MeasureProfile",
    "d_rho_F",
    "density",
    "GKWDecomposition",
    "build_basis",
]
