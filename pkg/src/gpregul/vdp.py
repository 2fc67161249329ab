"""Van der Pol tracking benchmark.

Forced oscillator chi'' = -chi + a (1 - chi^2) chi' + u asked to track a
triangular-wave reference generated by a harmonic exosystem with unknown
frequency.  Provides the reference output, its first two derivatives along
the exosystem flow, the ideal steady-state input (the quantity the
identifier has to learn) and the error-coordinate change used by the
regulator's measurement path.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import bounds as bnd
from . import gp
from .hybrid_sim import HybridTrajectory, SimConfig, simulate_closed_loop, steady_state_metrics
from .regulator import RegulatorSetup

__all__ = [
    "VdpBenchConfig",
    "FriendInfo",
    "VdpTrackingSystem",
    "BenchmarkResult",
    "vdp_flow",
    "exo_flow",
    "triangular_output",
    "ideal_friend",
    "error_coords",
    "inverse_error_coords",
    "run_benchmark",
    "benchmark_bound_report",
    "estimate_friend_lipschitz",
]

_CORNER_RTOL = 1e-9


@dataclass(frozen=True)
class VdpBenchConfig:
    """Benchmark data: plant/exosystem parameters, initial conditions, sweep sizes."""

    a: float = 2.0
    rho: float = 2.0
    w0: tuple = (1.0, 0.0)
    chi0: tuple = (0.0, 0.0)
    n_values: tuple = (50, 100, 200)
    identifier: str = "gp"

    def __post_init__(self):
        if not self.rho > 0.0:
            raise ValueError("exosystem rate rho must be positive")
        w0 = np.asarray(self.w0, dtype=float)
        if w0.size != 2 or float(np.linalg.norm(w0)) == 0.0:
            raise ValueError("w0 must be a nonzero 2-vector")
        if len(np.asarray(self.chi0, dtype=float)) != 2:
            raise ValueError("chi0 must be a 2-vector")
        if self.identifier not in ("gp", "ls"):
            raise ValueError("identifier must be gp or ls")
        if any(int(n) < 1 for n in self.n_values):
            raise ValueError("n_values must be positive")


class FriendInfo(NamedTuple):
    u_star: float
    ydot_star: float
    yddot_star: float
    corner: bool


def vdp_flow(chi, u: float, a: float) -> np.ndarray:
    """Forced Van der Pol vector field."""
    chi = np.asarray(chi, dtype=float)
    return np.array([chi[1], -chi[0] + a * (1.0 - chi[0] ** 2) * chi[1] + float(u)])


def exo_flow(w, rho: float) -> np.ndarray:
    """Harmonic exosystem w1' = w2, w2' = -rho w1."""
    w = np.asarray(w, dtype=float)
    return np.array([w[1], -rho * w[0]])


def triangular_output(w) -> float:
    """Triangular-wave reference (2 ||w|| / pi) arcsin(w1 / ||w||).

    Continuous everywhere; the derivative kinks where |w1| = ||w||.  The
    zero exosystem state is degenerate and maps to 0.
    """
    w = np.asarray(w, dtype=float)
    r = math.hypot(w[0], w[1])
    if r == 0.0:
        warnings.warn("triangular output at w = 0 is degenerate", RuntimeWarning)
        return 0.0
    s = min(1.0, max(-1.0, w[0] / r))
    return (2.0 * r / math.pi) * math.asin(s)


def _lie_derivatives(w, rho: float) -> tuple[float, float, float, bool]:
    """(y*, Ly*, L^2y*, corner) along the exosystem flow.

    At a corner (w2 = 0 up to relative tolerance) the one-sided values for
    w2 -> 0+ are returned and the corner flag set; the first Lie derivative
    is genuinely discontinuous there.
    """
    w1, w2 = float(w[0]), float(w[1])
    r = math.hypot(w1, w2)
    if r == 0.0:
        warnings.warn("reference derivatives at w = 0 are degenerate", RuntimeWarning)
        return 0.0, 0.0, 0.0, True
    corner = abs(w2) <= _CORNER_RTOL * r
    s = min(1.0, max(-1.0, w1 / r))
    p = math.asin(s)
    sg = 1.0 if w2 >= 0.0 else -1.0
    q = rho * w1 * w1 + w2 * w2  # first integral of the exosystem
    ystar = (2.0 * r / math.pi) * p
    lie1 = (2.0 / math.pi) * ((1.0 - rho) * (w1 * w2 / r) * p + sg * q / r)
    lie2 = (
        (2.0 / math.pi)
        * (1.0 - rho)
        * p
        * ((w2 * w2 - rho * w1 * w1) / r - (1.0 - rho) * (w1 * w1 * w2 * w2) / r**3)
    )
    return ystar, lie1, lie2, corner


def ideal_friend(w, a: float, rho: float) -> FriendInfo:
    """Steady-state input making the zero-error manifold invariant.

    u* = y* + L^2 y* - a (1 - y*^2) L y*, with the Lie derivatives taken
    along the exosystem flow.  Corner points return one-sided values and a
    raised flag.
    """
    ystar, lie1, lie2, corner = _lie_derivatives(w, rho)
    u_star = ystar + lie2 - a * (1.0 - ystar * ystar) * lie1
    return FriendInfo(u_star, lie1, lie2, corner)


def error_coords(chi, w, rho: float) -> tuple[np.ndarray, bool]:
    """Map plant state to tracking-error coordinates (e1, e2).

    e1 = chi1 - y*(w), e2 = chi2 - Ly*(w); e2 inherits the corner
    discontinuity of Ly*, reported through the flag.
    """
    chi = np.asarray(chi, dtype=float)
    ystar, lie1, _, corner = _lie_derivatives(w, rho)
    return np.array([chi[0] - ystar, chi[1] - lie1]), corner


def inverse_error_coords(e, w, rho: float) -> np.ndarray:
    """Inverse of :func:`error_coords`."""
    e = np.asarray(e, dtype=float)
    ystar, lie1, _, _ = _lie_derivatives(w, rho)
    return np.array([e[0] + ystar, e[1] + lie1])


class VdpTrackingSystem:
    """Closed-loop plant interface consumed by the simulator.

    The tracking task is posed in error coordinates: the integrated plant
    state is e = (chi1 - y*, chi2 - L y*) and the regulator measures
    y = e1 directly.  The reference terms entering the flow are evaluated
    along the exosystem state, so corner crossings show up as bounded
    discontinuities of the vector field, never as state jumps.
    """

    exo_dim = 2
    plant_dim = 2

    def __init__(self, a: float = 2.0, rho: float = 2.0):
        self.a = float(a)
        self.rho = float(rho)

    def exo_flow(self, w) -> np.ndarray:
        return np.array([w[1], -self.rho * w[0]])

    def plant_flow(self, e, w, u) -> np.ndarray:
        ui = float(u[0]) if np.ndim(u) else float(u)
        ystar, lie1, lie2, _ = _lie_derivatives(w, self.rho)
        chi1 = e[0] + ystar
        chi2 = e[1] + lie1
        return np.array(
            [e[1], -e[0] - ystar - lie2 + self.a * (1.0 - chi1 * chi1) * chi2 + ui]
        )

    def measure(self, e, w) -> np.ndarray:
        return np.array([e[0]])

    def initial_error(self, chi0, w0) -> np.ndarray:
        e0, _ = error_coords(np.asarray(chi0, dtype=float), np.asarray(w0, dtype=float), self.rho)
        return e0

    def diagnostics(self, e, w) -> dict:
        ystar, lie1, lie2, corner = _lie_derivatives(w, self.rho)
        u_star = ystar + lie2 - self.a * (1.0 - ystar * ystar) * lie1
        chi = np.array([e[0] + ystar, e[1] + lie1])
        return {"chi": chi, "y_star": ystar, "u_star": u_star, "corner": corner}


@dataclass
class BenchmarkResult:
    """One closed-loop run plus its derived report data."""

    label: str
    identifier: str
    capacity: int
    trajectory: HybridTrajectory
    metrics: dict
    dataset_inputs: np.ndarray
    dataset_outputs: np.ndarray
    rho_star: float
    bound_report: bnd.BoundReport | None
    claim_bound: float
    noise_floor: float
    elapsed: float


def estimate_friend_lipschitz(traj: HybridTrajectory, window: float) -> float:
    """Difference-quotient estimate of the friend's Lipschitz constant.

    Taken over consecutive window records of (eta, u*); steps touching a
    reference corner are excluded since the friend is allowed to jump
    there.
    """
    mask = traj.window_mask(traj.t[-1] - window)
    eta = traj.eta[mask]
    ustar = traj.u_star[mask]
    corner = traj.corner[mask]
    w2 = traj.w[mask][:, 1]
    if eta.shape[0] < 2:
        return 0.0
    d_eta = np.linalg.norm(np.diff(eta, axis=0), axis=1)
    d_u = np.abs(np.diff(ustar))
    crosses = (np.sign(w2[:-1]) != np.sign(w2[1:])) | corner[:-1] | corner[1:]
    ok = (~crosses) & (d_eta > 1e-12)
    if not np.any(ok):
        return 0.0
    return float(np.max(d_u[ok] / d_eta[ok]))


def benchmark_bound_report(
    hyper: gp.KernelHyperparams,
    dataset_inputs: np.ndarray,
    dataset_outputs: np.ndarray,
    traj: HybridTrajectory,
    window: float,
    delta: float,
    reference_eta: np.ndarray | None = None,
) -> tuple[bnd.BoundReport, float, float, float]:
    """Certificate for one run: (report, rho_star, bound, noise_floor).

    The reference set defaults to the run's own steady-state window of
    internal-model states; pass ``reference_eta`` to evaluate coverage
    against a common window when comparing runs.
    """
    if reference_eta is None:
        mask = traj.window_mask(traj.t[-1] - window)
        reference_eta = traj.eta[mask]
    samples = gp.SampleSet(max(len(dataset_inputs), 1), hyper.input_dim)
    for x, u in zip(dataset_inputs, dataset_outputs):
        samples.insert(x, u)
    model = gp.fit(samples, hyper)
    rho_star = bnd.covering_radius(dataset_inputs, reference_eta)
    if not math.isfinite(rho_star):
        raise ValueError("cannot certify an empty dataset")
    l_f = estimate_friend_lipschitz(traj, window)
    l_mean, l_var = bnd.posterior_lipschitz_constants(model, rho_star)
    report = bnd.BoundReport.build(
        rho_star, delta, max(model.count, 1), l_f, l_mean, l_var, hyper
    )
    bound, floor = bnd.regulation_error_bound(hyper, rho_star, report)
    return report, rho_star, bound, floor


def run_benchmark(
    bench: VdpBenchConfig,
    setup: RegulatorSetup,
    sim: SimConfig,
    delta: float = 0.01,
    reference_eta: np.ndarray | None = None,
) -> BenchmarkResult:
    """Wire exosystem, plant and regulator; run one closed-loop episode.

    Metrics are computed over the trailing steady-state window; for GP
    runs the coverage radius and error certificate are attached (the
    baseline has no predictive variance, so its certificate fields are
    NaN).
    """
    system = VdpTrackingSystem(bench.a, bench.rho)
    start = time.perf_counter()
    traj = simulate_closed_loop(system, setup, sim, bench.w0, bench.chi0)
    elapsed = time.perf_counter() - start
    metrics = steady_state_metrics(traj, sim.ss_window)

    # final buffer contents, recovered from the jump log for provenance-free reuse
    mask = traj.jump_kind == "collect"
    eta_all = traj.eta[mask]
    u_all = traj.u[mask]
    keep = min(setup.capacity, eta_all.shape[0])
    ds_in = eta_all[eta_all.shape[0] - keep :]
    ds_out = u_all[u_all.shape[0] - keep :]

    label = setup.identifier_kind
    if setup.identifier_kind == "gp":
        label = f"gp-{setup.capacity}"
        report, rho_star, bound, floor = benchmark_bound_report(
            setup.hyper, ds_in, ds_out, traj, sim.ss_window, delta, reference_eta
        )
    else:
        report, rho_star, bound, floor = None, math.nan, math.nan, math.nan
        if reference_eta is not None and len(ds_in):
            rho_star = bnd.covering_radius(ds_in, reference_eta)
        elif len(ds_in):
            m = traj.window_mask(traj.t[-1] - sim.ss_window)
            rho_star = bnd.covering_radius(ds_in, traj.eta[m])
    return BenchmarkResult(
        label=label,
        identifier=setup.identifier_kind,
        capacity=setup.capacity,
        trajectory=traj,
        metrics=metrics,
        dataset_inputs=ds_in,
        dataset_outputs=ds_out,
        rho_star=rho_star,
        bound_report=report,
        claim_bound=bound,
        noise_floor=floor,
        elapsed=elapsed,
    )
