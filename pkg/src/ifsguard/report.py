"""Report emission: JSON, CSV, and rendered figures.

JSON is the machine interface and must be byte-stable for identical
inputs, so nothing time- or path-dependent goes in unless the caller
asks for it (timing is opt-in for that reason).
"""

from __future__ import annotations

import csv
import json
import math
from typing import Optional

from . import ifs
from .netlist import CircuitGraph
from .trigger import StateTransitionGraph


def report_to_json(
    graph: CircuitGraph,
    report: ifs.FlowReport,
    timing: Optional[dict] = None,
) -> dict:
    """Schema:
    {asset, levels: [{level, points: [{name, kind, depth, stimulus, path}]}],
     malicious, verdict, abandoned, trigger?, timing?}
    """
    mal_reasons = {}
    for m in report.malicious:
        mal_reasons.setdefault(graph.point_name(m.point), []).append(m.reason)
    doc = {
        "asset": {
            "name": report.asset.label,
            "kind": report.asset.kind,
        },
        "params": {
            "depth": report.params.depth,
            "adaptive": report.params.adaptive,
            "max_depth": report.params.max_depth,
            "budget": report.params.budget,
            "theta": report.params.theta,
        },
        "levels": [
            {
                "level": li,
                "points": [
                    {
                        "name": graph.point_name(rp.point),
                        "kind": rp.point.kind,
                        "depth": rp.depth,
                        "frame": rp.frame,
                        "stimulus": rp.stimulus.to_json(graph),
                        "path": rp.path.to_json(graph),
                    }
                    for rp in sorted(lvl, key=lambda r: r.point)
                ],
            }
            for li, lvl in enumerate(report.levels)
        ],
        "malicious": [
            {"name": name, "reasons": sorted(reasons)}
            for name, reasons in sorted(mal_reasons.items())
        ],
        "verdict": report.verdict,
        "abandoned": sorted(graph.point_name(p) for p in report.abandoned),
    }
    if report.trigger is not None:
        doc["trigger"] = report.trigger
    if timing is not None:
        doc["timing"] = timing
    return doc


def render_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_json(path: str, doc: dict):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_json(doc))


def write_csv(path: str, graph: CircuitGraph, report: ifs.FlowReport):
    """Flat points table, one row per reported observe/control point."""
    mal = {}
    for m in report.malicious:
        mal.setdefault(graph.point_name(m.point), []).append(m.reason)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "name", "kind", "depth", "frame", "malicious", "reasons"])
        for li, lvl in enumerate(report.levels):
            for rp in sorted(lvl, key=lambda r: r.point):
                name = graph.point_name(rp.point)
                reasons = mal.get(name, [])
                w.writerow(
                    [li, name, rp.point.kind, rp.depth, rp.frame,
                     int(bool(reasons)), ";".join(sorted(reasons))]
                )


def write_stg_text(path: str, graph: CircuitGraph, stg: StateTransitionGraph):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(stg.to_text(graph))


# ---------------------------------------------------------------------------
# Figures


def _agg_pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_depth_chart(path: str, graph: CircuitGraph, report: ifs.FlowReport):
    """Bar chart of propagation depth per reported point; malicious points
    highlighted, with the depth-analysis threshold line when it applies."""
    plt = _agg_pyplot()
    pts = sorted(report.points(), key=lambda r: (r.level, r.point))
    names = [graph.point_name(rp.point) for rp in pts]
    depths = [rp.depth for rp in pts]
    mal = {graph.point_name(m.point) for m in report.malicious}
    colors = ["#c0392b" if n in mal else "#2c6fbb" for n in names]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.55 * len(names) + 1.5), 3.2))
    ax.bar(range(len(names)), depths, color=colors)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("propagation depth (gates)")
    ax.set_title(f"{report.asset.label}: {report.verdict}")
    valid = [rp.depth for rp in pts if graph.point_name(rp.point) not in mal]
    if len(valid) >= 2 and report.params.theta > 0:
        med = sorted(valid)[len(valid) // 2] if len(valid) % 2 else (
            sorted(valid)[len(valid) // 2 - 1] + sorted(valid)[len(valid) // 2]
        ) / 2
        ax.axhline(
            report.params.theta * med, color="#777", linestyle="--", linewidth=1,
            label=f"θ·median = {report.params.theta * med:.1f}",
        )
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_stg_figure(path: str, graph: CircuitGraph, stg: StateTransitionGraph):
    """State transition diagram: states on a circle, trigger states
    highlighted, wait edges labeled with their repeat count."""
    plt = _agg_pyplot()
    states = sorted(stg.states)
    n = max(len(states), 1)
    pos = {
        st: (math.cos(2 * math.pi * i / n), math.sin(2 * math.pi * i / n))
        for i, st in enumerate(states)
    }
    fig, ax = plt.subplots(figsize=(6, 6))
    for tr in stg.transitions:
        x0, y0 = pos[tr.src]
        x1, y1 = pos[tr.dst]
        if tr.src == tr.dst:
            label_xy = (x0 * 1.22, y0 * 1.22)
            ax.annotate(
                "", xy=(x0, y0), xytext=label_xy,
                arrowprops=dict(arrowstyle="->", color="#999",
                                connectionstyle="arc3,rad=0.9"),
            )
        else:
            label_xy = ((x0 + x1) / 2, (y0 + y1) / 2)
            ax.annotate(
                "", xy=(x1, y1), xytext=(x0, y0),
                arrowprops=dict(arrowstyle="->", color="#555",
                                connectionstyle="arc3,rad=0.12"),
            )
        if tr.repeat > 1:
            ax.text(*label_xy, f"×{tr.repeat}", fontsize=7, color="#c0392b",
                    ha="center")
    for st in states:
        x, y = pos[st]
        trigger = st in stg.trigger_states
        ax.plot(x, y, "o", markersize=26,
                color="#c0392b" if trigger else "#2c6fbb", zorder=3)
        ax.text(x, y, stg.state_name(st), fontsize=7, color="white",
                ha="center", va="center", zorder=4)
    ax.set_xlim(-1.5, 1.5)
    ax.set_ylim(-1.5, 1.5)
    ax.set_aspect("equal")
    ax.axis("off")
    title = "trigger FSM"
    for gi, dist in stg.counter_waits:
        names = ",".join(graph.flipflops[f].name for f in stg.counter_groups[gi].ffs)
        title += f"  [counter {names}: wait {dist}]"
    ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
