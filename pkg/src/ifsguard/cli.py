"""Command-line front end.

Subcommands map onto the library pipelines; the exit code is the
machine-readable verdict:

    0  no violation found
    2  violation found
    3  analysis incomplete (some checks abandoned within budget)
    1  usage or input errors

Human-readable summary goes to stdout, the machine report to ``--json``.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
import time
from typing import Optional

from . import atpg, benchgen, ifs, report as reporting, trigger as trig
from .netlist import (
    CircuitGraph,
    NetlistError,
    Point,
    parse_netlist,
    report_unanalyzable,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VIOLATION = 2
EXIT_INCOMPLETE = 3

_BUS_RE = re.compile(r"^(?P<base>.+)\[(?P<hi>\d+):(?P<lo>\d+)\]$")


class CliError(Exception):
    pass


def expand_bus(spec: str) -> list:
    """`ct[7:0]` -> ct[7] .. ct[0]; anything else passes through."""
    m = _BUS_RE.match(spec)
    if not m:
        return [spec]
    hi, lo = int(m.group("hi")), int(m.group("lo"))
    step = -1 if hi >= lo else 1
    return [f"{m.group('base')}[{i}]" for i in range(hi, lo + step, step)]


def _load_graph(path: str) -> CircuitGraph:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_netlist(fh.read())
    except OSError as e:
        raise CliError(f"cannot read netlist: {e}")
    except NetlistError as e:
        raise CliError(f"netlist error: {e}")


def _resolve_point(graph: CircuitGraph, name: str) -> Point:
    try:
        return Point("ff", graph.ff_by_name(name).id)
    except NetlistError:
        pass
    try:
        net = graph.net_by_name(name)
    except NetlistError:
        raise CliError(f"unknown point {name!r}")
    if net.id in graph.output_set:
        return Point("po", net.id)
    if net.id in graph.input_set:
        return Point("pi", net.id)
    raise CliError(f"{name!r} is not a primary input/output or flip-flop")


def _resolve_points(graph: CircuitGraph, specs: list) -> list:
    return [_resolve_point(graph, n) for s in specs for n in expand_bus(s)]


def _asset_net(graph: CircuitGraph, name: str) -> int:
    try:
        return graph.net_by_name(name).id
    except NetlistError:
        try:
            return graph.ff_by_name(name).q
        except NetlistError:
            raise CliError(f"unknown asset net {name!r}")


def _params(args) -> ifs.VerifyParams:
    p = ifs.VerifyParams()
    if args.depth is not None:
        p.depth = args.depth
        p.adaptive = False
    if args.budget is not None:
        p.budget = args.budget
    if args.theta is not None:
        p.theta = args.theta
    return p


def _stimulus_from_json(graph: CircuitGraph, d: dict) -> atpg.Stimulus:
    init = {
        graph.ff_by_name(name).id: v
        for name, v in d.get("initial_state", {}).items()
    }
    frames = [
        {graph.net_by_name(n).id: v for n, v in f.items()}
        for f in d.get("frames", [])
    ]
    return atpg.Stimulus(init, frames, d.get("depth", len(frames)))


# ---------------------------------------------------------------------------
# Trigger pipeline glue


def _trigger_from_detection(
    graph: CircuitGraph,
    asset_net: int,
    stim: atpg.Stimulus,
    point: Point,
    frame: Optional[int],
):
    """Direct conditions first; register conditions escalate to STG
    recovery and sequence extraction.  Returns (trigger dict, stg or None)."""
    direct = trig.extract_direct_trigger(graph, asset_net, stim, point, frame)
    if direct["kind"] == "always-on" or not direct.get("registers"):
        return direct, None
    cond = {
        graph.ff_by_name(r["name"]).id: r["value"] for r in direct["registers"]
    }
    state_regs, leftover = trig.trigger_state_registers(graph, cond)
    if not state_regs:
        return direct, None
    try:
        stg = trig.extract_stg(
            graph, state_regs, {f: v for f, v in cond.items() if f in state_regs}
        )
        seq = trig.extract_trigger_sequence(graph, stg)
    except trig.TriggerError as e:
        direct = dict(direct)
        direct["stg_error"] = str(e)
        return direct, None
    out = {
        "kind": "sequence",
        "sequence": seq.to_json(graph),
        "total_cycles": seq.total_cycles,
        "condition": direct,
    }
    if leftover:
        out["direct_registers"] = [
            {"name": graph.flipflops[f].name, "value": cond[f]} for f in leftover
        ]
    return out, stg


def _pick_trigger_point(graph: CircuitGraph, rep: ifs.FlowReport):
    """The point to extract a trigger from: a malicious point if any,
    otherwise nothing (no Trojan evidence, no trigger)."""
    mal = {m.point for m in rep.malicious}
    for rp in sorted(rep.points(), key=lambda r: (r.level, r.point)):
        if rp.point in mal:
            return rp
    return None


# ---------------------------------------------------------------------------
# Output emission


def _emit(args, graph, rep, stg, elapsed):
    timing = {"seconds": round(elapsed, 3)} if args.timing else None
    doc = reporting.report_to_json(graph, rep, timing)
    if args.json:
        reporting.write_json(args.json, doc)
    if args.csv:
        reporting.write_csv(args.csv, graph, rep)
    if args.figures:
        os.makedirs(args.figures, exist_ok=True)
        if rep.points():
            reporting.render_depth_chart(
                os.path.join(args.figures, "depths.png"), graph, rep
            )
        if stg is not None:
            reporting.render_stg_figure(
                os.path.join(args.figures, "stg.png"), graph, stg
            )
            reporting.write_stg_text(
                os.path.join(args.figures, "stg.txt"), graph, stg
            )
    _summary(graph, rep, elapsed if args.timing else None)


def _summary(graph: CircuitGraph, rep: ifs.FlowReport, elapsed):
    total = len(rep.points())
    print(f"asset {rep.asset.label} ({rep.asset.kind})")
    for li, lvl in enumerate(rep.levels):
        names = ", ".join(
            graph.point_name(rp.point) for rp in sorted(lvl, key=lambda r: r.point)
        )
        print(f"  level {li}: {len(lvl)} point(s)  {names}")
    if rep.abandoned:
        names = ", ".join(sorted(graph.point_name(p) for p in rep.abandoned))
        print(f"  abandoned: {names}")
    mal = {}
    for m in rep.malicious:
        mal.setdefault(graph.point_name(m.point), []).append(m.reason)
    for name, reasons in sorted(mal.items()):
        print(f"  malicious: {name} ({', '.join(sorted(reasons))})")
    line = f"verdict: {rep.verdict}  ({total} point(s))"
    if elapsed is not None:
        line += f"  [{elapsed:.2f}s]"
    print(line)


def _exit_code(rep: ifs.FlowReport) -> int:
    if rep.verdict != ifs.VERDICT_NONE:
        return EXIT_VIOLATION
    if rep.abandoned:
        return EXIT_INCOMPLETE
    return EXIT_OK


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_verify_conf(args) -> int:
    graph = _load_graph(args.netlist)
    _warn_unanalyzable(graph)
    asset = ifs.Asset(_asset_net(graph, args.asset), args.asset, "confidentiality")
    params = _params(args)
    t0 = time.monotonic()
    rep = ifs.confidentiality_verify(graph, asset, params)
    if args.valid_out:
        valid = _resolve_points(graph, args.valid_out)
        rep = ifs.intersect_analysis(graph, rep, valid)
    rep = ifs.depth_analysis(rep, params.theta)
    stg = None
    rp = _pick_trigger_point(graph, rep)
    if rp is not None:
        rep.trigger, stg = _trigger_from_detection(
            graph, asset.net, rp.stimulus, rp.point, rp.frame
        )
    _emit(args, graph, rep, stg, time.monotonic() - t0)
    return _exit_code(rep)


def _cmd_verify_int(args) -> int:
    graph = _load_graph(args.netlist)
    _warn_unanalyzable(graph)
    asset = ifs.Asset(_asset_net(graph, args.asset), args.asset, "integrity")
    params = _params(args)
    t0 = time.monotonic()
    rep = ifs.integrity_verify(graph, asset, params)
    if args.valid_in:
        valid = _resolve_points(graph, args.valid_in)
        rep = ifs.intersect_analysis(graph, rep, valid)
    group = sorted(
        m.point.ref
        for m in rep.malicious
        if m.point.kind == "ff" and m.reason == ifs.REASON_OUTSIDE_CONE
    )
    if group:
        rp = _pick_trigger_point(graph, rep)
        if rp is not None:
            try:
                rep.trigger = trig.extract_control_trigger(
                    graph, asset.net, rp.stimulus, group
                )
            except trig.TriggerError as e:
                rep.trigger = {"kind": "unknown", "error": str(e)}
    _emit(args, graph, rep, None, time.monotonic() - t0)
    return _exit_code(rep)


def _cmd_extract_trigger(args) -> int:
    graph = _load_graph(args.netlist)
    try:
        with open(args.report, "r", encoding="utf-8") as fh:
            saved = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise CliError(f"cannot read report: {e}")
    asset_net = _asset_net(graph, saved["asset"]["name"])
    wanted = args.point
    chosen = None
    mal = {m["name"] for m in saved.get("malicious", [])}
    for lvl in saved.get("levels", []):
        for p in lvl["points"]:
            if wanted is not None:
                if p["name"] == wanted:
                    chosen = p
            elif chosen is None and p["name"] in mal:
                chosen = p
    if chosen is None:
        raise CliError(
            "no trigger point: " + ("point not in report" if wanted else "report has no malicious points")
        )
    stim = _stimulus_from_json(graph, chosen["stimulus"])
    point = _resolve_point(graph, chosen["name"])
    result, stg = _trigger_from_detection(
        graph, asset_net, stim, point, chosen.get("frame")
    )
    out = json.dumps(result, indent=2, sort_keys=True)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(out + "\n")
    if args.figures and stg is not None:
        os.makedirs(args.figures, exist_ok=True)
        reporting.render_stg_figure(os.path.join(args.figures, "stg.png"), graph, stg)
        reporting.write_stg_text(os.path.join(args.figures, "stg.txt"), graph, stg)
    print(out)
    return EXIT_OK


def _cmd_check_property(args) -> int:
    graph = _load_graph(args.netlist)
    source = _asset_net(graph, args.source)
    sink = _asset_net(graph, args.sink)
    result = ifs.check_equality_property(graph, source, sink)
    if isinstance(result, ifs.Holds):
        print(f"holds: no assignment makes {args.sink} track {args.source}")
        return EXIT_OK
    print(f"violated: {args.sink} can {result.relation} {args.source}")
    # contrast with the flow analysis: a violated equality property is
    # only correlation; report whether an actual flow exists
    asset = ifs.Asset(source, args.source, "confidentiality")
    rep = ifs.confidentiality_verify(graph, asset, _params(args))
    sink_names = {
        graph.point_name(rp.point) for rp in rep.points()
    }
    if args.sink in sink_names:
        print(f"note: flow check agrees — information flows from {args.source} to {args.sink}")
    else:
        print(
            f"note: flow check disagrees — no information flow from "
            f"{args.source} to {args.sink}; the property violation is a false positive"
        )
    return EXIT_VIOLATION


def _cmd_gen_bench(args) -> int:
    seed = _effective_seed(args.seed)
    try:
        if args.random:
            text = benchgen.random_fixture(seed)
            manifest = {"module": "random", "seed": seed}
        else:
            spec = benchgen.FixtureSpec(
                core=args.core,
                trigger=args.trigger,
                payload=args.payload,
                counter_width=args.counter_width,
                seq_len=args.seq_len,
                seed=seed,
                plant=args.plant,
            )
            text, manifest = benchgen.generate(spec)
    except (benchgen.IncompatibleSpec, ValueError) as e:
        raise CliError(str(e))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    mpath = args.manifest
    if mpath is None and args.out:
        mpath = args.out + ".manifest.json"
    if mpath:
        with open(mpath, "w", encoding="utf-8") as fh:
            fh.write(benchgen.manifest_json(manifest) + "\n")
        print(f"wrote {mpath}")
    return EXIT_OK


def _cmd_lint(args) -> int:
    graph = _load_graph(args.netlist)
    entries = report_unanalyzable(graph)
    for name, reason in entries:
        print(f"{name}: {reason}")
    if not entries:
        print("no unanalyzable elements")
    return EXIT_OK


def _warn_unanalyzable(graph: CircuitGraph):
    for name, reason in report_unanalyzable(graph):
        print(f"warning: {name}: {reason} — excluded from analysis", file=sys.stderr)


def _effective_seed(flag_seed: Optional[int]) -> int:
    env = os.environ.get("IFSGUARD_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CliError(f"IFSGUARD_SEED must be an integer, got {env!r}")
    return flag_seed if flag_seed is not None else 0


# ---------------------------------------------------------------------------
# Argument parsing


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--netlist", required=True, help="netlist file")
    p.add_argument("--json", help="write machine report to this path")
    p.add_argument("--csv", help="write points table to this path")
    p.add_argument("--figures", help="render figures into this directory")
    p.add_argument("--depth", type=int, help="fixed unroll depth (disables adaptive)")
    p.add_argument("--budget", type=int, help="solver decision budget per check")
    p.add_argument("--theta", type=float, help="depth-analysis threshold ratio")
    p.add_argument("--seed", type=int, help="seed (IFSGUARD_SEED overrides)")
    p.add_argument("--jobs", type=int, default=1, help="worker cap (reserved)")
    p.add_argument("--timing", action="store_true", help="include timing in outputs")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ifsguard",
        description="Gate-level information-flow security verification",
    )
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("verify-conf", help="confidentiality flow analysis")
    _add_common(p)
    p.add_argument("--asset", required=True, help="asset net name")
    p.add_argument("--valid-out", nargs="*", default=[], help="valid observe points (bus ranges ok)")
    p.set_defaults(fn=_cmd_verify_conf)

    p = sub.add_parser("verify-int", help="integrity flow analysis")
    _add_common(p)
    p.add_argument("--asset", required=True, help="asset net name")
    p.add_argument("--valid-in", nargs="*", default=[], help="valid control points (bus ranges ok)")
    p.set_defaults(fn=_cmd_verify_int)

    p = sub.add_parser("extract-trigger", help="re-run trigger extraction from a saved report")
    p.add_argument("--netlist", required=True)
    p.add_argument("--report", required=True, help="JSON report from verify-conf")
    p.add_argument("--point", help="reported point to extract from (default: first malicious)")
    p.add_argument("--json", help="write trigger JSON to this path")
    p.add_argument("--figures", help="render STG figure into this directory")
    p.set_defaults(fn=_cmd_extract_trigger)

    p = sub.add_parser("check-property", help="single-frame equality-property baseline")
    _add_common(p)
    p.add_argument("--source", required=True)
    p.add_argument("--sink", required=True)
    p.set_defaults(fn=_cmd_check_property)

    p = sub.add_parser("gen-bench", help="generate a benchmark fixture")
    p.add_argument("--core", choices=benchgen.CORES, default="toy-cipher")
    p.add_argument("--trigger", choices=benchgen.TRIGGERS)
    p.add_argument("--payload", choices=benchgen.PAYLOADS)
    p.add_argument("--counter-width", type=int, default=4)
    p.add_argument("--seq-len", type=int, default=4)
    p.add_argument("--plant", choices=("latch", "uncontrollable-ff"))
    p.add_argument("--random", action="store_true", help="small random circuit instead of a core")
    p.add_argument("--seed", type=int, help="seed (IFSGUARD_SEED overrides)")
    p.add_argument("--out", help="netlist output path (default stdout)")
    p.add_argument("--manifest", help="manifest output path")
    p.set_defaults(fn=_cmd_gen_bench)

    p = sub.add_parser("lint", help="list unanalyzable elements")
    p.add_argument("--netlist", required=True)
    p.set_defaults(fn=_cmd_lint)

    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    try:
        return args.fn(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NetlistError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
