"""Level-by-level flow verification and malicious-point classification.

Confidentiality: starting from the asset's fan-out cone, each observe
point is tested in isolation (everything else capture-masked); detected
flip-flop points lose scan ability so the next level must be reached
sequentially through them.  Integrity runs the dual loop over fan-in
control points with fault activation instead of detection.

Classification is two-fold: intersect analysis (set difference against
the transitive cone of user-declared valid points) marks functionally
separated leak logic, and depth analysis flags suspiciously shallow
bypass paths into valid points.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from . import atpg, cone
from .netlist import (
    CircuitGraph,
    NetlistError,
    Point,
    ScanConfig,
    full_scan,
    mask,
    remove_scan_ability,
    unmask,
)

REASON_OUTSIDE_CONE = "outside-valid-cone"
REASON_SHALLOW = "shallow-depth"

VERDICT_NONE = "none-found"
VERDICT_TYPE1 = "Type I"
VERDICT_TYPE2 = "Type II"
VERDICT_BOTH = "both"


@dataclass(frozen=True)
class Asset:
    net: int
    label: str
    kind: str  # "confidentiality" | "integrity"

    def __post_init__(self):
        if self.kind not in ("confidentiality", "integrity"):
            raise ValueError(f"bad asset kind {self.kind!r}")


@dataclass
class VerifyParams:
    depth: int = atpg.DEFAULT_DEPTH
    adaptive: bool = True
    max_depth: int = atpg.MAX_ADAPTIVE_DEPTH
    budget: int = atpg.DEFAULT_BUDGET
    reset_convention: bool = True
    theta: float = 0.5


@dataclass
class ReportedPoint:
    point: Point
    level: int
    stimulus: atpg.Stimulus
    path: atpg.PropagationPath
    frame: int  # detection (confidentiality) or activation frame

    @property
    def depth(self) -> int:
        return self.path.depth


@dataclass
class MaliciousMark:
    point: Point
    reason: str  # REASON_OUTSIDE_CONE | REASON_SHALLOW


@dataclass
class FlowReport:
    asset: Asset
    levels: list  # list of list of ReportedPoint
    malicious: list  # of MaliciousMark
    verdict: str
    abandoned: list  # of Point
    params: VerifyParams
    trigger: Optional[dict] = None

    def points(self) -> list:
        return [rp for lvl in self.levels for rp in lvl]

    def reported_set(self) -> frozenset:
        return frozenset(rp.point for rp in self.points())

    def find(self, point: Point) -> Optional[ReportedPoint]:
        for rp in self.points():
            if rp.point == point:
                return rp
        return None


def _detect_both(
    graph: CircuitGraph,
    cfg: ScanConfig,
    asset_net: int,
    point: Point,
    params: VerifyParams,
):
    """Algorithm-1 inner check: both stuck-at values must be detected at
    the point before a flow is declared.  Deepens adaptively on a clean
    Undetectable when enabled."""
    depth = params.depth
    while True:
        m0 = atpg.build_unrolled_model(
            graph, cfg, atpg.StuckAtFault(asset_net, 0), depth, params.reset_convention
        )
        r0 = atpg.detect_fault(m0, [point], params.budget)
        if isinstance(r0, atpg.Detected):
            m1 = atpg.build_unrolled_model(
                graph,
                cfg,
                atpg.StuckAtFault(asset_net, 1),
                depth,
                params.reset_convention,
            )
            r1 = atpg.detect_fault(m1, [point], params.budget)
            if isinstance(r1, atpg.Detected):
                return r0
            return r1
        if isinstance(r0, atpg.Abandoned):
            return r0
        if params.adaptive and depth < params.max_depth:
            depth = min(depth * 2, params.max_depth)
            continue
        return r0


def confidentiality_verify(
    graph: CircuitGraph, asset: Asset, params: Optional[VerifyParams] = None
) -> FlowReport:
    """Find every observe point the asset can propagate to, level by level."""
    if asset.kind != "confidentiality":
        raise ValueError("confidentiality_verify requires a confidentiality asset")
    params = params or VerifyParams()
    cfg = full_scan(graph)
    frontier = sorted(cone.fanout_endpoints(graph, asset.net).endpoints)
    cfg = mask(graph, cfg, frontier)
    processed = set(frontier)
    levels = []
    abandoned = []
    level = 1
    while frontier:
        this_level = []
        expansion = []
        for fo in frontier:
            test_cfg = unmask(graph, cfg, fo)
            res = _detect_both(graph, test_cfg, asset.net, fo, params)
            if isinstance(res, atpg.Detected):
                this_level.append(
                    ReportedPoint(fo, level, res.stimulus, res.path, res.frame)
                )
                if fo.kind == "ff":
                    q = graph.flipflops[fo.ref].q
                    expansion.extend(sorted(cone.fanout_endpoints(graph, q).endpoints))
                    cfg = remove_scan_ability(graph, cfg, fo.ref)
                # a detected PO stays masked so later levels cannot be
                # attributed to it
            elif isinstance(res, atpg.Abandoned):
                abandoned.append(fo)
        if this_level:
            levels.append(this_level)
        nxt = []
        for p in sorted(set(expansion)):
            if p in processed:
                continue
            processed.add(p)
            if p.kind == "ff" and p.ref not in cfg.scan_enabled:
                continue
            nxt.append(p)
        if nxt:
            cfg = mask(graph, cfg, nxt)
        frontier = nxt
        level += 1
    return FlowReport(asset, levels, [], VERDICT_NONE, abandoned, params)


def _structural_path(
    graph: CircuitGraph, src_net: int, dst_net: int
) -> atpg.PropagationPath:
    """Fewest-cells chain from src to dst, crossing FF boundaries freely
    (used for control paths, where no single sensitizing run exists)."""
    from collections import deque

    dist = {src_net: 0}
    pred = {}
    dq = deque([src_net])
    while dq:
        n = dq.popleft()
        if n == dst_net:
            break
        d = dist[n]
        for kind, eid, pin in graph.nets[n].sinks:
            if kind == "cell":
                c = graph.cells[eid]
                if c.id in graph.latch_cells():
                    continue
                if c.output not in dist:
                    dist[c.output] = d + 1
                    pred[c.output] = (n, c.id)
                    dq.append(c.output)
            elif kind == "ff" and pin == "D":
                q = graph.flipflops[eid].q
                if q not in dist:
                    dist[q] = d
                    pred[q] = (n, None)
                    dq.appendleft(q)
    steps = []
    n = dst_net
    if n not in dist:
        return atpg.PropagationPath([])
    while n in pred:
        prev, cid = pred[n]
        if cid is not None:
            steps.append((0, cid))
        n = prev
    steps.reverse()
    return atpg.PropagationPath(steps)


def integrity_verify(
    graph: CircuitGraph, asset: Asset, params: Optional[VerifyParams] = None
) -> FlowReport:
    """Find every control point that can influence the asset, level by
    level backward through the fan-in, re-proving fault activation
    (both asset values justified) at each level."""
    if asset.kind != "integrity":
        raise ValueError("integrity_verify requires an integrity asset")
    params = params or VerifyParams()
    cfg = full_scan(graph)
    frontier = sorted(cone.fanin_startpoints(graph, asset.net).endpoints)
    processed = set(frontier)
    levels = []
    abandoned = []
    level = 1
    while frontier:
        act = _activate_both(graph, cfg, asset.net, params)
        if act is None:  # activation impossible at this level
            break
        if isinstance(act, atpg.Abandoned):
            abandoned.extend(frontier)
            break
        stim, frame = act
        this_level = []
        expansion = []
        for fi in frontier:
            src = graph.point_net(fi)
            path = _structural_path(graph, src, asset.net)
            this_level.append(ReportedPoint(fi, level, stim, path, frame))
            if fi.kind == "ff":
                d = graph.flipflops[fi.ref].d
                expansion.extend(sorted(cone.fanin_startpoints(graph, d).endpoints))
                cfg = remove_scan_ability(graph, cfg, fi.ref)
        levels.append(this_level)
        nxt = []
        for p in sorted(set(expansion)):
            if p in processed:
                continue
            processed.add(p)
            nxt.append(p)
        frontier = nxt
        level += 1
    return FlowReport(asset, levels, [], VERDICT_NONE, abandoned, params)


def _activate_both(graph, cfg, asset_net, params):
    """Justify both asset values (stuck-at activation); returns the
    asset=1 activation witness, None when unreachable, Abandoned on
    budget exhaustion."""
    depth = params.depth
    while True:
        r1 = atpg.justify_net_value(
            graph, cfg, asset_net, 1, depth, params.budget, params.reset_convention
        )
        if isinstance(r1, atpg.Reachable):
            r0 = atpg.justify_net_value(
                graph, cfg, asset_net, 0, depth, params.budget, params.reset_convention
            )
            if isinstance(r0, atpg.Reachable):
                return (r1.stimulus, r1.frame)
            if isinstance(r0, atpg.Abandoned):
                return atpg.Abandoned()
            return None
        if isinstance(r1, atpg.Abandoned):
            return atpg.Abandoned()
        if params.adaptive and depth < params.max_depth:
            depth = min(depth * 2, params.max_depth)
            continue
        return None


# ---------------------------------------------------------------------------
# Classification


def _verdict(malicious: list) -> str:
    reasons = {m.reason for m in malicious}
    t1 = REASON_SHALLOW in reasons
    t2 = REASON_OUTSIDE_CONE in reasons
    if t1 and t2:
        return VERDICT_BOTH
    if t1:
        return VERDICT_TYPE1
    if t2:
        return VERDICT_TYPE2
    return VERDICT_NONE


def intersect_analysis(
    graph: CircuitGraph, report: FlowReport, valid_points: Iterable[Point]
) -> FlowReport:
    """Mark reported points outside the valid points' transitive cone."""
    valid = frozenset(valid_points)
    for p in valid:
        if p.kind == "ff":
            if not (0 <= p.ref < len(graph.flipflops)):
                raise NetlistError(f"unknown flip-flop id {p.ref}")
        elif not (0 <= p.ref < len(graph.nets)):
            raise NetlistError(f"unknown net id {p.ref}")
    if report.asset.kind == "confidentiality":
        cone_ffs = cone.transitive_fanin_elements(graph, valid)
    else:
        cone_ffs = cone.transitive_fanout_elements(graph, valid)
    allowed = set(valid) | {Point("ff", f) for f in cone_ffs}
    marks = [
        m for m in report.malicious if m.reason != REASON_OUTSIDE_CONE
    ]
    for rp in report.points():
        if rp.point not in allowed:
            marks.append(MaliciousMark(rp.point, REASON_OUTSIDE_CONE))
    marks.sort(key=lambda m: (m.point, m.reason))
    return replace(report, malicious=marks, verdict=_verdict(marks))


def depth_analysis(report: FlowReport, theta: float = 0.5) -> FlowReport:
    """Flag valid points whose shortest sensitized path is anomalously
    shallow (depth < theta x median over valid points)."""
    flagged_malicious = {m.point for m in report.malicious}
    valid_rps = [rp for rp in report.points() if rp.point not in flagged_malicious]
    marks = [m for m in report.malicious if m.reason != REASON_SHALLOW]
    if len(valid_rps) >= 2 and theta > 0:
        med = statistics.median(rp.depth for rp in valid_rps)
        for rp in valid_rps:
            if rp.depth < theta * med:
                marks.append(MaliciousMark(rp.point, REASON_SHALLOW))
    marks.sort(key=lambda m: (m.point, m.reason))
    return replace(report, malicious=marks, verdict=_verdict(marks))


# ---------------------------------------------------------------------------
# Equality-property baseline


@dataclass
class Violated:
    witness: atpg.Stimulus
    relation: str  # "equal" | "complement"


@dataclass
class Holds:
    pass


def check_equality_property(graph: CircuitGraph, source: int, sink: int):
    """Single-frame baseline: does some input assignment make the sink
    equal the source (or its complement)?

    This is the assertion-style property `never (s == o or ~s == o)`.
    It conflates functional correlation with information flow, so a
    satisfying assignment here is NOT evidence of a flow — the stuck-at
    detection check is the discriminating analysis.
    """
    for n in (source, sink):
        if not (0 <= n < len(graph.nets)):
            raise NetlistError(f"unknown net id {n}")
    enc = atpg._single_rail_encoder(graph, full_scan(graph), 1, False)
    s = enc.lit(0, 0, source)
    o = enc.lit(0, 0, sink)
    x = enc.xor_lit(s, o)
    for relation, lit in (("equal", -x), ("complement", x)):
        if enc.solver.solve(assumptions=[lit]) is True:
            return Violated(enc.extract_stimulus(enc.solver.model()), relation)
    return Holds()
