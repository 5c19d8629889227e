"""Figures written next to the tab-separated scenario outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

from semdeg.degrees import BehavioralDegree, DegreePair, StructuralDegree, TechnologyEntry  # noqa: E402
from semdeg.linectl import State, TraceRow  # noqa: E402

STATE_COLORS = {
    State.IDLE: "#bdbdbd",
    State.STARTING: "#9ecae1",
    State.PRODUCING: "#31a354",
    State.SUSPENDED: "#fdae6b",
    State.ABORTED: "#de2d26",
    State.RESETTING: "#756bb1",
}


def _save(fig, path) -> None:
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def plot_line_traces(traces: dict[str, list[TraceRow]], path, title: str = "") -> None:
    """Buffer fill per policy on top, machine states of the first trace below."""
    fig, (ax_buf, ax_state) = plt.subplots(2, 1, figsize=(8, 5), sharex=True,
                                           gridspec_kw={"height_ratios": [3, 2]})
    for label, rows in traces.items():
        ticks = sorted({r.tick for r in rows})
        first = {r.tick: r for r in rows}
        buffer_ids = [b for b, _, _ in rows[0].buffers]
        for i, bid in enumerate(buffer_ids):
            fill = [first[t].buffers[i][1] for t in ticks]
            ax_buf.step(ticks, fill, where="post", label=f"{bid} ({label})",
                        linestyle="-" if i == 0 else "--")
    ax_buf.set_ylabel("items in buffer")
    ax_buf.legend(fontsize=8, loc="upper right")
    ax_buf.grid(alpha=0.3)

    rows = next(iter(traces.values()))
    machines = list(dict.fromkeys(r.machine for r in rows))
    for y, mid in enumerate(machines):
        for r in rows:
            if r.machine == mid:
                ax_state.add_patch(Rectangle((r.tick, y - 0.4), 1, 0.8,
                                             color=STATE_COLORS[r.state], linewidth=0))
    ax_state.set_yticks(range(len(machines)), machines)
    ax_state.set_ylim(-0.6, len(machines) - 0.4)
    ax_state.set_xlim(0, max(r.tick for r in rows) + 1)
    ax_state.set_xlabel("tick")
    handles = [Rectangle((0, 0), 1, 1, color=c) for c in STATE_COLORS.values()]
    ax_state.legend(handles, [str(s) for s in STATE_COLORS], fontsize=7, ncol=6,
                    loc="upper center", bbox_to_anchor=(0.5, -0.35))
    if title:
        fig.suptitle(title)
    _save(fig, path)


def plot_degree_map(catalog: list[TechnologyEntry], requirement: DegreePair, path) -> None:
    """Technologies on the structural x behavioral grid; the shaded region dominates ``requirement``."""
    fig, ax = plt.subplots(figsize=(7, 5))
    s0, b0 = int(requirement.structural), int(requirement.behavioral)
    ax.add_patch(Rectangle((s0 - 0.5, b0 - 0.5), 6 - s0, 7 - b0, color="#c7e9c0", zorder=0))
    cells: dict[tuple[int, int], list[str]] = {}
    for e in catalog:
        cells.setdefault((int(e.degrees.structural), int(e.degrees.behavioral)), []).append(e.label)
    for (s, b), labels in cells.items():
        ax.scatter([s], [b], color="#3182bd", zorder=2)
        ax.annotate("\n".join(labels), (s, b), xytext=(4, 4), textcoords="offset points", fontsize=6)
    ax.set_xticks(range(6), [str(s) for s in StructuralDegree], rotation=30, ha="right", fontsize=7)
    ax.set_yticks(range(7), [str(b) for b in BehavioralDegree], fontsize=7)
    ax.set_xlim(-0.5, 5.5)
    ax.set_ylim(-0.5, 6.5)
    ax.set_title(f"technologies at or above {requirement.short}")
    ax.grid(alpha=0.3)
    _save(fig, path)
