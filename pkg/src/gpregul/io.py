"""Delimited artifacts: trajectory/dataset/metrics CSVs, bound reports, manifest.

All floating-point values are written in decimal with 9 significant
digits, which round-trips to about 5e-9 relative precision.
"""

from __future__ import annotations

import csv
import math
import os

import numpy as np

from .hybrid_sim import HybridTrajectory

__all__ = [
    "trajectory_columns",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_dataset_csv",
    "read_dataset_csv",
    "write_metrics_csv",
    "write_bounds_txt",
    "write_manifest",
]

METRICS_COLUMNS = (
    "identifier",
    "N",
    "max_abs_y_ss",
    "rms_y_ss",
    "max_friend_err",
    "rho_star",
    "claim2_bound",
)


def _g9(v: float) -> str:
    return format(float(v), ".9g")


def trajectory_columns(n_eta: int) -> list[str]:
    head = [
        "t", "j", "jump_kind",
        "w1", "w2", "chi1", "chi2", "e1", "e2",
        "y", "u", "u_star", "mu", "var", "sigma_hat", "xi1", "xi2",
    ]
    return head + [f"eta{i + 1}" for i in range(n_eta)]


def write_trajectory_csv(traj: HybridTrajectory, path: str) -> int:
    """Write one run's log; returns the number of data rows."""
    n = len(traj)
    if n and (traj.w.shape[1] != 2 or traj.chi.shape[1] != 2 or traj.xi.shape[1] != 2):
        raise ValueError("trajectory CSV schema expects 2 exosystem/plant/observer states")
    cols = trajectory_columns(traj.n_eta)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(n):
            row = [
                _g9(traj.t[i]),
                str(int(traj.j[i])),
                str(traj.jump_kind[i]),
                _g9(traj.w[i, 0]), _g9(traj.w[i, 1]),
                _g9(traj.chi[i, 0]), _g9(traj.chi[i, 1]),
                _g9(traj.e[i, 0]), _g9(traj.e[i, 1]),
                _g9(traj.y[i]), _g9(traj.u[i]), _g9(traj.u_star[i]),
                _g9(traj.mu[i]), _g9(traj.var[i]), _g9(traj.sigma_hat[i, 0]),
                _g9(traj.xi[i, 0]), _g9(traj.xi[i, 1]),
            ]
            row.extend(_g9(traj.eta[i, k]) for k in range(traj.n_eta))
            fh.write(",".join(row) + "\n")
    return n


def read_trajectory_csv(path: str) -> dict:
    """Read a trajectory CSV back into a dict of numpy columns."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    out: dict = {}
    for idx, name in enumerate(header):
        raw = [r[idx] for r in rows]
        if name == "jump_kind":
            out[name] = np.array(raw, dtype=object)
        elif name == "j":
            out[name] = np.array([int(v) for v in raw])
        else:
            out[name] = np.array([float(v) for v in raw])
    return out


def write_dataset_csv(inputs: np.ndarray, outputs: np.ndarray, path: str) -> int:
    """Write collected (eta, u) pairs; returns the row count."""
    inputs = np.asarray(inputs, dtype=float)
    if inputs.size:
        inputs = np.atleast_2d(inputs)
    elif inputs.ndim != 2:
        inputs = inputs.reshape(0, 0)
    outputs = np.asarray(outputs, dtype=float).reshape(len(inputs), -1) if len(inputs) else np.empty((0, 1))
    d = inputs.shape[1]
    cols = [f"eta{i + 1}" for i in range(d)] + ["u"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for x, u in zip(inputs, outputs):
            fh.write(",".join([_g9(v) for v in x] + [_g9(u[0])]) + "\n")
    return len(inputs)


def read_dataset_csv(path: str) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in r] for r in reader]
    if not rows:
        return np.empty((0, max(len(header) - 1, 0))), np.empty(0)
    arr = np.asarray(rows)
    return arr[:, :-1], arr[:, -1]


def write_metrics_csv(rows: list[dict], path: str) -> int:
    """One row per run with the fixed metric columns."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(METRICS_COLUMNS) + "\n")
        for row in rows:
            out = []
            for col in METRICS_COLUMNS:
                v = row[col]
                if col == "identifier":
                    out.append(str(v))
                elif col == "N":
                    out.append(str(int(v)))
                else:
                    out.append("nan" if (isinstance(v, float) and math.isnan(v)) else _g9(v))
            fh.write(",".join(out) + "\n")
    return len(rows)


def write_bounds_txt(report, path: str, extra: dict | None = None) -> int:
    text = report.as_text(extra)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return text.count("\n")


def write_manifest(out_dir: str, entries: list[tuple[str, int]], config_hash: str) -> str:
    """Record every emitted file with its row count and the config hash."""
    path = os.path.join(out_dir, "manifest.txt")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"config_hash={config_hash}\n")
        for name, rows in entries:
            fh.write(f"file={name} rows={rows}\n")
    return path
