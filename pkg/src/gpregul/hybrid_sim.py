"""Fixed-step closed-loop simulation of the hybrid regulator.

Flows integrate with classic RK4; jumps are detected at step boundaries
and applied before the next step, collect taking priority whenever both
flowing and jumping are admissible.  The trajectory log is columnar and
carries everything the report path needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError, SimulationDiverged
from .regulator import (
    JumpKind,
    RegulatorSetup,
    control_output,
    in_jump_set,
    initial_state,
    regulator_flow,
    regulator_jump,
)

__all__ = ["SimConfig", "HybridTrajectory", "rk4_step", "simulate_closed_loop", "steady_state_metrics"]

_DIVERGENCE_LIMIT = 1e9


@dataclass(frozen=True)
class SimConfig:
    """Integration grid and logging cadence."""

    dt: float = 1e-3
    horizon: float = 150.0
    ss_window: float = 30.0
    log_stride: int = 10

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ConfigError("dt must be positive")
        if not self.horizon > 0.0:
            raise ConfigError("horizon must be positive")
        if not 0.0 < self.ss_window < self.horizon:
            raise ConfigError("ss_window must lie strictly inside the horizon")
        if int(self.log_stride) < 1 or int(self.log_stride) != self.log_stride:
            raise ConfigError("log_stride must be a positive integer")
        object.__setattr__(self, "log_stride", int(self.log_stride))


class HybridTrajectory:
    """Columnar log of one closed-loop run.

    One record per log_stride steps plus one per jump; jump records carry
    the pre-jump variance/mean at eta (the gating values), the post-jump
    counter j and the post-jump buffer count.
    """

    _SCALARS = ("t", "j", "y", "u", "u_star", "mu", "var", "buffer_count")

    def __init__(self, n_eta: int):
        self.n_eta = n_eta
        self._cols = {k: [] for k in self._SCALARS}
        self._cols.update({k: [] for k in ("w", "chi", "e", "xi", "eta", "sigma_hat")})
        self._kinds: list[str] = []
        self._corner: list[bool] = []
        self._arrays: dict | None = None

    def append(self, *, t, j, kind, w, chi, e, y, u, u_star, mu, var, sigma_hat, xi, eta,
               buffer_count, corner=False):
        c = self._cols
        c["t"].append(float(t))
        c["j"].append(int(j))
        c["y"].append(float(y))
        c["u"].append(float(u))
        c["u_star"].append(float(u_star))
        c["mu"].append(float(mu))
        c["var"].append(float(var))
        c["buffer_count"].append(int(buffer_count))
        c["w"].append(np.array(w, dtype=float))
        c["chi"].append(np.array(chi, dtype=float))
        c["e"].append(np.array(e, dtype=float))
        c["xi"].append(np.array(xi, dtype=float))
        c["eta"].append(np.array(eta, dtype=float))
        c["sigma_hat"].append(np.atleast_1d(np.array(sigma_hat, dtype=float)))
        self._kinds.append(kind.value if isinstance(kind, JumpKind) else str(kind))
        self._corner.append(bool(corner))
        self._arrays = None

    def __len__(self) -> int:
        return len(self._cols["t"])

    def _finalized(self) -> dict:
        if self._arrays is None:
            arrs = {k: np.asarray(self._cols[k]) for k in self._SCALARS}
            for k in ("w", "chi", "e", "xi", "eta", "sigma_hat"):
                arrs[k] = (
                    np.vstack(self._cols[k]) if self._cols[k] else np.empty((0, 0))
                )
            arrs["jump_kind"] = np.array(self._kinds, dtype=object)
            arrs["corner"] = np.array(self._corner, dtype=bool)
            self._arrays = arrs
        return self._arrays

    def __getattr__(self, name):
        if name.startswith("_"):
            raise AttributeError(name)
        arrs = self._finalized()
        if name in arrs:
            return arrs[name]
        raise AttributeError(name)

    def window_mask(self, t_start: float) -> np.ndarray:
        return self.t >= t_start - 1e-12

    def jump_mask(self) -> np.ndarray:
        return self.jump_kind != "flow"


def rk4_step(vector_field, x: np.ndarray, t: float, dt: float) -> np.ndarray:
    """One classic Runge-Kutta step of size dt.

    Raises on a non-finite result, carrying the offending state for
    diagnosis.
    """
    k1 = vector_field(t, x)
    k2 = vector_field(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = vector_field(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = vector_field(t + dt, x + dt * k3)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NumericalError(
            "non-finite state after integration step",
            t=float(t),
            state=np.array(x),
            derivative=np.array(k1),
        )
    return out


def simulate_closed_loop(system, setup: RegulatorSetup, sim: SimConfig, w0, chi0,
                         state=None) -> HybridTrajectory:
    """Run the closed loop from t = 0 to the horizon.

    ``system`` supplies exo_flow, plant_flow, measure, initial_error and
    diagnostics; the plant is integrated in error coordinates, so the
    state flows continuously and reference corners enter only through the
    vector field.  The regulator starts from all-zero states with an empty
    buffer unless an explicit state is given.  After every step the jump
    set is evaluated and at most one jump applied.
    """
    if sim.dt > setup.timer.t_min / 10.0 + 1e-15:
        raise ConfigError("dt must not exceed t_min / 10")
    w0 = np.asarray(w0, dtype=float).reshape(-1)
    chi0 = np.asarray(chi0, dtype=float).reshape(-1)
    e0 = system.initial_error(chi0, w0)
    if state is None:
        state = initial_state(setup)

    n_w, n_e = w0.size, e0.size
    n_eta, n_y = setup.n_eta, setup.n_y
    n_xi = setup.chain.r * n_y
    s_w = slice(0, n_w)
    s_p = slice(n_w, n_w + n_e)
    s_e = slice(n_w + n_e, n_w + n_e + n_eta)
    s_x = slice(s_e.stop, s_e.stop + n_xi)
    s_s = slice(s_x.stop, s_x.stop + n_y)

    im_f, im_g = setup.internal_model.f, setup.internal_model.g
    ch_a, ch_b = setup.chain.a, setup.chain.b
    b_bar, b_inv = setup.observer.b_bar, setup.observer.b_bar_inv
    sat = setup.observer.sat_level
    k_stab = setup.k_stab
    dh, sgain = setup.innovation_gain, setup.sigma_gain

    def field(t, xv):
        w = xv[s_w]
        err = xv[s_p]
        eta = xv[s_e]
        xi = xv[s_x]
        sh = xv[s_s]
        y = system.measure(err, w)
        u = b_inv @ np.clip(-sh + k_stab @ xi, -sat, sat)
        innov = y - xi[:n_y]
        deta = im_f @ eta + im_g @ u
        dxi = ch_a @ xi + ch_b @ (sh + b_bar @ u) + dh @ innov
        jac = state.model.mean_gradient(eta)
        dsh = -(b_bar @ (jac @ deta)) + sgain * innov
        return np.concatenate(
            (system.exo_flow(w), system.plant_flow(err, w, u), deta, dxi, dsh)
        )

    x = np.concatenate((w0, e0, state.eta, state.xi, state.sigma_hat))
    traj = HybridTrajectory(n_eta)
    dt = sim.dt
    n_steps = int(round(sim.horizon / dt))
    j = 0
    k_reset = 0

    def refresh_views(xv):
        state.eta = xv[s_e]
        state.xi = xv[s_x]
        state.sigma_hat = xv[s_s]

    def log(t, kind, mu=None, var=None):
        w = x[s_w]
        err = x[s_p]
        diag = system.diagnostics(err, w)
        u = control_output(state, setup.observer, k_stab)
        if mu is None:
            mu = float(state.model.mean(state.eta)[0])
        if var is None:
            var = state.model.variance(state.eta)
        traj.append(
            t=t, j=j, kind=kind, w=w, chi=diag["chi"], e=err,
            y=float(system.measure(err, w)[0]), u=float(u[0]),
            u_star=diag["u_star"], mu=mu, var=var,
            sigma_hat=state.sigma_hat, xi=state.xi, eta=state.eta,
            buffer_count=state.buffer.count, corner=diag["corner"],
        )

    refresh_views(x)
    log(0.0, JumpKind.FLOW)
    for k in range(1, n_steps + 1):
        t_prev = (k - 1) * dt
        x = rk4_step(field, x, t_prev, dt)
        if float(np.max(np.abs(x))) > _DIVERGENCE_LIMIT:
            raise SimulationDiverged(
                "closed-loop state norm exceeded limit",
                t=float(k * dt),
                state=np.array(x),
                trajectory=traj,
            )
        refresh_views(x)
        state.clock = (k - k_reset) * dt
        t = k * dt
        decision = in_jump_set(state, setup.timer)
        if decision is JumpKind.FLOW:
            if k % sim.log_stride == 0:
                log(t, JumpKind.FLOW)
            continue
        # pre-jump gating values, post-jump counters
        mu_pre = float(state.model.mean(state.eta)[0])
        var_pre = state.model.gate_variance(state.eta, setup.timer.sigma_thr2)
        u = control_output(state, setup.observer, k_stab)
        regulator_jump(state, u, decision)
        k_reset = k
        j += 1
        log(t, decision, mu=mu_pre, var=var_pre)
    return traj


def steady_state_metrics(traj: HybridTrajectory, window: float) -> dict:
    """Error metrics over the trailing ``window`` seconds of the log.

    Returns max |y|, rms y and the worst identifier mismatch
    max |u_star - mu| over that window.
    """
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    t = traj.t
    span = t[-1] - t[0]
    if window > span + 1e-12 or window <= 0.0:
        raise ValueError(f"window {window} outside trajectory span {span}")
    mask = traj.window_mask(t[-1] - window)
    y = traj.y[mask]
    mism = np.abs(traj.u_star[mask] - traj.mu[mask])
    return {
        "max_abs_y": float(np.max(np.abs(y))),
        "rms_y": float(np.sqrt(np.mean(y * y))),
        "max_friend_err": float(np.max(mism)),
    }
