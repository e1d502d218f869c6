"""Matplotlib rendering of run results to files."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .simulate import TraceLog

_COLORS = ["tab:blue", "tab:orange", "tab:green", "tab:red", "tab:purple",
           "tab:brown", "tab:pink", "tab:gray"]


def figure_data_csv(trace: TraceLog) -> str:
    """Plot-ready (t, psi) series per chain, one row per dense sample."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["t", "chain_id", "psi0", "psi_top"])
    for step in trace.steps:
        for name in trace.chain_names:
            dense = (step.dense_psi or {}).get(name)
            if dense is None:
                continue
            psi0, psi_top = dense
            for t, p0, pt in zip(step.dense_t, psi0, psi_top):
                writer.writerow([f"{t:.10g}", name, f"{p0:.12g}", f"{pt:.12g}"])
    return buf.getvalue()


def _chain_series(trace: TraceLog, name: str):
    ts, psi0, psi_top = [], [], []
    for step in trace.steps:
        dense = (step.dense_psi or {}).get(name)
        if dense is None:
            continue
        ts.append(step.dense_t)
        psi0.append(dense[0])
        psi_top.append(dense[1])
    if not ts:
        return None
    return np.concatenate(ts), np.concatenate(psi0), np.concatenate(psi_top)


def render_figures(trace: TraceLog, outdir) -> list:
    """Write trajectory, barrier, and input figures as PNG files; returns
    the created paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    created = []

    # Trajectory with obstacles and targets.
    fig, ax = plt.subplots(figsize=(6, 6))
    states = np.array([s.state for s in trace.steps])
    dense = np.vstack([s.dense_states for s in trace.steps])
    ax.plot(dense[:, 0], dense[:, 1], color="tab:blue", lw=1.5,
            label=trace.config.controller)
    infeasible = [s for s in trace.steps if s.status != "optimal"]
    if infeasible:
        pts = np.array([s.state for s in infeasible])
        ax.plot(pts[:, 0], pts[:, 1], "x", color="red", ms=6,
                label="infeasible step")
    for decl in trace.config.chains:
        circle_color = "k" if decl.kind == "safety" else "tab:green"
        style = "-" if decl.kind == "safety" else "--"
        circ = plt.Circle(decl.center, decl.radius, fill=decl.kind == "safety",
                          alpha=0.25 if decl.kind == "safety" else 1.0,
                          color=circle_color, ls=style, lw=1.0)
        circ.set_fill(decl.kind == "safety")
        ax.add_patch(circ)
    ax.plot(states[0, 0], states[0, 1], "o", color="tab:blue")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_aspect("equal")
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    path = outdir / "trajectory.png"
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    created.append(path)

    # Barrier levels over time.
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for i, name in enumerate(trace.chain_names):
        series = _chain_series(trace, name)
        if series is None:
            continue
        t, psi0, psi_top = series
        color = _COLORS[i % len(_COLORS)]
        ax0.plot(t, psi0, color=color, lw=1.2, label=name)
        ax1.plot(t, psi_top, color=color, lw=1.2, label=name)
    ax0.axhline(0.0, color="k", lw=0.8)
    ax1.axhline(0.0, color="k", lw=0.8)
    ax0.set_ylabel("psi_0")
    ax1.set_ylabel("psi_top")
    ax1.set_xlabel("t [s]")
    ax0.legend(loc="best", fontsize=8)
    ax0.grid(alpha=0.3)
    ax1.grid(alpha=0.3)
    path = outdir / "barriers.png"
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    created.append(path)

    # Inputs (and relaxation variables when present).
    have_omega = any(rec.omega is not None
                     for s in trace.steps for rec in s.chains.values())
    n_axes = 3 if have_omega else 2
    fig, axes = plt.subplots(n_axes, 1, figsize=(7, 2.2 * n_axes), sharex=True)
    ts = np.array([s.t for s in trace.steps])
    us = np.array([s.input for s in trace.steps])
    axes[0].step(ts, us[:, 0], where="post", color="tab:blue")
    axes[0].set_ylabel("u1")
    axes[1].step(ts, us[:, 1] if us.shape[1] > 1 else us[:, 0],
                 where="post", color="tab:orange")
    axes[1].set_ylabel("u2")
    if have_omega:
        for i, name in enumerate(trace.chain_names):
            omega = [s.chains[name].omega if name in s.chains else np.nan
                     for s in trace.steps]
            if all(o is None or np.isnan(o) if o is None else False
                   for o in omega):
                continue
            omega = [np.nan if o is None else o for o in omega]
            axes[2].step(ts, omega, where="post",
                         color=_COLORS[i % len(_COLORS)], label=name)
        axes[2].set_ylabel("omega")
        axes[2].set_ylim(-0.05, 1.05)
        axes[2].legend(loc="best", fontsize=8)
    axes[-1].set_xlabel("t [s]")
    for ax in axes:
        ax.grid(alpha=0.3)
    path = outdir / "inputs.png"
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    created.append(path)
    return created
