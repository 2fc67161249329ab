"""Adaptive output regulation with an online-learned feedforward map.

A hybrid regulator drives a nonlinear plant to track the output of an
autonomous oscillator.  The steady-state input the regulator needs is not
known in closed form; it is learned online by Gaussian-process regression
on samples collected at timed resets, and the learned map comes with
probabilistic error certificates that translate into regulation-error
bounds.
"""

from .bounds import (
    BoundReport,
    covering_radius,
    kernel_lipschitz_constant,
    local_variance_bound,
    posterior_lipschitz_constants,
    regulation_error_bound,
    uniform_error_bound,
)
from .config import RunConfig, build_components, parse_config
from .errors import ConfigError, NumericalError, SimulationDiverged
from .gp import (
    GpPosteriorModel,
    KernelHyperparams,
    SampleSet,
    fit,
    kernel_eval,
    log_marginal_likelihood,
    optimize_hyperparams,
    posterior_mean_gradient,
    posterior_predict,
)
from .hybrid_sim import HybridTrajectory, SimConfig, simulate_closed_loop, steady_state_metrics
from .regulator import (
    InternalModelConfig,
    JumpKind,
    ObserverConfig,
    RegulatorSetup,
    TimerConfig,
    build_regulator_gains,
    initial_state,
)
from .vdp import VdpBenchConfig, VdpTrackingSystem, ideal_friend, run_benchmark

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "ConfigError",
    "GpPosteriorModel",
    "HybridTrajectory",
    "InternalModelConfig",
    "JumpKind",
    "KernelHyperparams",
    "NumericalError",
    "ObserverConfig",
    "RegulatorSetup",
    "RunConfig",
    "SampleSet",
    "SimConfig",
    "SimulationDiverged",
    "TimerConfig",
    "VdpBenchConfig",
    "VdpTrackingSystem",
    "build_components",
    "build_regulator_gains",
    "covering_radius",
    "fit",
    "ideal_friend",
    "initial_state",
    "kernel_eval",
    "kernel_lipschitz_constant",
    "local_variance_bound",
    "log_marginal_likelihood",
    "optimize_hyperparams",
    "parse_config",
    "posterior_lipschitz_constants",
    "posterior_mean_gradient",
    "posterior_predict",
    "regulation_error_bound",
    "run_benchmark",
    "simulate_closed_loop",
    "steady_state_metrics",
    "uniform_error_bound",
    "__version__",
]
