"""Report rendering: matplotlib figures plus gnuplot-compatible scripts.

The report path renders PNG figures next to the delimited output so a run
is inspectable without extra tooling; the emitted .gp scripts reproduce
the same panels from the CSVs with stock gnuplot.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "render_error_figures",
    "render_feedforward_figure",
    "write_gnuplot_scripts",
]

_COLORS = {
    "ls": "tab:blue",
    "gp-50": "#1b7837",
    "gp-100": "#5aae61",
    "gp-200": "#a6dba0",
}
_TRANSIENT_SPAN = 20.0


def _color(label: str) -> str:
    return _COLORS.get(label, "tab:gray")


def render_error_figures(results: dict, window: float, out_dir: str) -> list[str]:
    """Steady-state and transient regulation-error panels.

    ``results`` maps labels to trajectories; returns the written paths.
    """
    paths = []

    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(8.0, 6.0), sharex=True)
    zoom = 0.0
    for label, traj in results.items():
        m = traj.window_mask(traj.t[-1] - window)
        ax0.plot(traj.t[m], traj.y[m], color=_color(label), lw=0.9, label=label)
        ax1.plot(traj.t[m], traj.y[m], color=_color(label), lw=0.9)
        if label != "ls":
            zoom = max(zoom, float(np.max(np.abs(traj.y[m]))))
    ax0.set_ylabel("y")
    ax0.legend(loc="upper right", ncol=len(results))
    if zoom > 0.0:
        ax1.set_ylim(-1.5 * zoom, 1.5 * zoom)
    ax1.set_xlabel("t [s]")
    ax1.set_ylabel("y (zoom)")
    fig.suptitle("steady-state regulation error")
    path = os.path.join(out_dir, "fig_error_steady.png")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(8.0, 3.2))
    for label, traj in results.items():
        m = traj.t <= _TRANSIENT_SPAN
        ax.plot(traj.t[m], traj.y[m], color=_color(label), lw=0.9, label=label)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("y")
    ax.legend(loc="upper right", ncol=len(results))
    ax.set_title("transient regulation error")
    path = os.path.join(out_dir, "fig_error_transient.png")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    paths.append(path)
    return paths


def render_feedforward_figure(results: dict, window: float, out_dir: str) -> str:
    """Ideal steady-state input against each identifier's estimate."""
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(8.0, 6.0), sharex=True)
    ref = next(iter(results.values()))
    m_ref = ref.window_mask(ref.t[-1] - window)
    for ax in (ax0, ax1):
        ax.plot(ref.t[m_ref], ref.u_star[m_ref], color="tab:orange", lw=1.4, label="u*")
    lo, hi = np.min(ref.u_star[m_ref]), np.max(ref.u_star[m_ref])
    for label, traj in results.items():
        m = traj.window_mask(traj.t[-1] - window)
        ax0.plot(traj.t[m], traj.mu[m], color=_color(label), lw=0.9, label=label)
        ax1.plot(traj.t[m], traj.mu[m], color=_color(label), lw=0.9)
    ax0.set_ylabel("feedforward")
    ax0.legend(loc="upper right", ncol=len(results) + 1)
    pad = 0.25 * max(hi - lo, 1e-9)
    ax1.set_ylim(lo - pad, hi + pad)
    ax1.set_xlabel("t [s]")
    ax1.set_ylabel("feedforward (zoom)")
    fig.suptitle("ideal input vs identifier estimates")
    path = os.path.join(out_dir, "fig_feedforward.png")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def write_gnuplot_scripts(
    labels_to_csv: dict, out_dir: str, config_hash: str, window: float, horizon: float
) -> list[str]:
    """Emit plot scripts reproducing the PNG panels from the CSVs.

    Column indices follow the trajectory schema: t=1, y=10, u_star=12,
    mu=13.  Scripts are plain gnuplot and reference the CSVs by relative
    name, so they run from inside the output directory.
    """
    t0 = horizon - window
    paths = []

    def lines(ycol: int) -> str:
        parts = [
            f"    '{csv}' every ::1 using 1:{ycol} with lines title '{label}'"
            for label, csv in labels_to_csv.items()
        ]
        return ", \\\n".join(parts)

    header = (
        "#!/usr/bin/env gnuplot\n"
        f"# config_hash={config_hash}\n"
        'set datafile separator ","\n'
        "set grid\n"
        'set xlabel "t [s]"\n'
    )

    body = (
        header
        + f"set xrange [{t0:.6g}:{horizon:.6g}]\n"
        + 'set ylabel "y"\n'
        + "plot \\\n"
        + lines(10)
        + "\n"
    )
    path = os.path.join(out_dir, "fig_error_steady.gp")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(body)
    paths.append(path)

    body = (
        header
        + f"set xrange [0:{_TRANSIENT_SPAN:.6g}]\n"
        + 'set ylabel "y"\n'
        + "plot \\\n"
        + lines(10)
        + "\n"
    )
    path = os.path.join(out_dir, "fig_error_transient.gp")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(body)
    paths.append(path)

    first_csv = next(iter(labels_to_csv.values()))
    body = (
        header
        + f"set xrange [{t0:.6g}:{horizon:.6g}]\n"
        + 'set ylabel "feedforward"\n'
        + "plot \\\n"
        + f"    '{first_csv}' every ::1 using 1:12 with lines lw 2 title 'u*', \\\n"
        + lines(13)
        + "\n"
    )
    path = os.path.join(out_dir, "fig_feedforward.gp")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(body)
    paths.append(path)
    return paths
