"""Trace persistence and static plot emission (CSV, JSON, SVG)."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .scenario import ScenarioConfig
from .simulate import SimTrace
from .verification import SafetyReport

_AGENT_COLORS = ["tab:red", "tab:blue", "tab:green", "tab:cyan",
                 "tab:orange", "tab:purple", "tab:brown", "tab:olive"]


def agent_color(i: int) -> str:
    return _AGENT_COLORS[i % len(_AGENT_COLORS)]


def write_report(report: SafetyReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True)
                    + "\n", encoding="utf-8")


def plot_states_inputs(trace: SimTrace, path) -> None:
    """Velocity, path position and acceleration of every agent over time."""
    fig, axes = plt.subplots(3, 1, figsize=(7.0, 8.0), sharex=True)
    for i in range(trace.n_agents):
        color = agent_color(i)
        label = f"agent {i + 1}"
        axes[0].plot(trace.t, trace.v[:, i], color=color, label=label)
        axes[1].plot(trace.t, trace.s[:, i], color=color, label=label)
        axes[2].plot(trace.t, trace.u[:, i], color=color, label=label)
    axes[0].set_ylabel("v [m/s]")
    axes[1].set_ylabel("s [m]")
    axes[2].set_ylabel("u [m/s$^2$]")
    axes[2].set_xlabel("t [s]")
    axes[0].legend(loc="lower right", ncol=2, fontsize=8)
    for ax in axes:
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_cbf_values(trace: SimTrace, path) -> None:
    """Barrier values, one column of the figure per agent.

    Dashed / dash-dotted lines in the agent's own color are its upper and
    lower velocity barriers; solid lines are collision barriers drawn in the
    color of the conflicting agent.
    """
    n = trace.n_agents
    fig, axes = plt.subplots(1, max(n, 1), figsize=(3.2 * max(n, 1), 3.6),
                             sharey=True)
    if n <= 1:
        axes = [axes]
    col = {name: c for c, name in enumerate(trace.cbf_names)}
    for i in range(n):
        ax = axes[i]
        name_hi = f"h_vhi_{i + 1}"
        name_lo = f"h_vlo_{i + 1}"
        if name_hi in col:
            ax.plot(trace.t, trace.h[:, col[name_hi]], "--",
                    color=agent_color(i), label=name_hi)
        if name_lo in col:
            ax.plot(trace.t, trace.h[:, col[name_lo]], "-.",
                    color=agent_color(i), label=name_lo)
        for name, c in col.items():
            if not name.startswith("h_c_"):
                continue
            pair = name[len("h_c_"):]
            members = [int(ch) - 1 for ch in pair]
            if i in members:
                partner = members[1] if members[0] == i else members[0]
                ax.plot(trace.t, trace.h[:, c], "-",
                        color=agent_color(partner), label=name)
        ax.axhline(0.0, color="black", linestyle="--", linewidth=0.8)
        ax.set_title(f"agent {i + 1}", fontsize=10)
        ax.set_xlabel("t [s]")
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=7, loc="upper right")
    axes[0].set_ylabel("barrier value")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def emit_outputs(trace: SimTrace, report: SafetyReport, out_dir,
                 csv_only: bool = False) -> dict:
    """Write trace CSV, safety report JSON and (unless csv_only) SVG plots.

    Returns the mapping of artifact name to written path.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    trace_path = out / "trace.csv"
    trace.to_csv(trace_path)
    written["trace"] = trace_path
    report_path = out / "safety_report.json"
    write_report(report, report_path)
    written["report"] = report_path
    if not csv_only and trace.n_steps > 0:
        states_path = out / "states_inputs.svg"
        plot_states_inputs(trace, states_path)
        written["states_inputs"] = states_path
        cbf_path = out / "cbf_values.svg"
        plot_cbf_values(trace, cbf_path)
        written["cbf_values"] = cbf_path
    return written
