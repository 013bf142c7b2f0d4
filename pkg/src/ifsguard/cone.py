"""Structural cone analysis over the circuit graph.

Fan-out cones stop at observe boundaries (primary outputs, FF d pins);
fan-in cones stop at control boundaries (primary inputs, FF q pins).
These are structural over-approximations; the search engine refines
them with actual stimuli.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .netlist import CircuitGraph, NetlistError, Point


@dataclass(frozen=True)
class ConeResult:
    origin: int  # net id
    endpoints: frozenset  # of Point
    interior: frozenset  # of cell ids


def _check_net(graph: CircuitGraph, net: int):
    if not (0 <= net < len(graph.nets)):
        raise NetlistError(f"unknown net id {net}")


def fanout_endpoints(graph: CircuitGraph, net: int) -> ConeResult:
    """Observe points reachable from `net` without crossing an FF."""
    _check_net(graph, net)
    endpoints = set()
    interior = set()
    seen = set()
    stack = [net]
    while stack:
        nid = stack.pop()
        if nid in seen:
            continue
        seen.add(nid)
        if nid in graph.output_set:
            endpoints.add(Point("po", nid))
        for kind, eid, pin in graph.nets[nid].sinks:
            if kind == "ff":
                if pin == "D":
                    endpoints.add(Point("ff", eid))
                # clock/reset pins are not data flow boundaries
            else:
                cell = graph.cells[eid]
                if cell.id in graph.latch_cells():
                    continue
                interior.add(cell.id)
                stack.append(cell.output)
    return ConeResult(net, frozenset(endpoints), frozenset(interior))


def fanin_startpoints(graph: CircuitGraph, net: int) -> ConeResult:
    """Control points feeding `net` without crossing an FF."""
    _check_net(graph, net)
    startpoints = set()
    interior = set()
    seen = set()
    stack = [net]
    while stack:
        nid = stack.pop()
        if nid in seen:
            continue
        seen.add(nid)
        drv = graph.nets[nid].driver
        if drv is None:
            continue
        if drv[0] == "pi":
            startpoints.add(Point("pi", nid))
        elif drv[0] == "ff":
            startpoints.add(Point("ff", drv[1]))
        else:
            cell = graph.cells[drv[1]]
            if cell.id in graph.latch_cells():
                continue
            interior.add(cell.id)
            stack.extend(cell.inputs)
    return ConeResult(net, frozenset(startpoints), frozenset(interior))


def _point_source_net(graph: CircuitGraph, p: Point) -> int:
    """Net to expand from when walking backward out of a point."""
    if p.kind == "ff":
        return graph.flipflops[p.ref].d
    return p.ref


def _point_drive_net(graph: CircuitGraph, p: Point) -> int:
    """Net to expand from when walking forward out of a point."""
    if p.kind == "ff":
        return graph.flipflops[p.ref].q
    return p.ref


def transitive_fanin_elements(graph: CircuitGraph, points: Iterable[Point]) -> frozenset:
    """All FFs that transitively feed `points`, crossing FF boundaries."""
    result = set()
    frontier = list(points)
    while frontier:
        p = frontier.pop()
        cone = fanin_startpoints(graph, _point_source_net(graph, p))
        for sp in cone.endpoints:
            if sp.kind == "ff" and sp.ref not in result:
                result.add(sp.ref)
                frontier.append(sp)
    return frozenset(result)


def transitive_fanout_elements(graph: CircuitGraph, points: Iterable[Point]) -> frozenset:
    """All FFs transitively fed by `points`, crossing FF boundaries."""
    result = set()
    frontier = list(points)
    while frontier:
        p = frontier.pop()
        cone = fanout_endpoints(graph, _point_drive_net(graph, p))
        for ep in cone.endpoints:
            if ep.kind == "ff" and ep.ref not in result:
                result.add(ep.ref)
                frontier.append(ep)
    return frozenset(result)


def ff_feedback_graph(graph: CircuitGraph) -> dict:
    """ff -> set of ffs whose d-cone contains its q (one-cycle edges)."""
    edges = {ff.id: set() for ff in graph.flipflops}
    for ff in graph.flipflops:
        cone = fanin_startpoints(graph, ff.d)
        for sp in cone.endpoints:
            if sp.kind == "ff":
                edges[sp.ref].add(ff.id)
    return edges


def _sccs(nodes, edges):
    """Iterative Tarjan; yields strongly connected components."""
    index = {}
    low = {}
    on_stack = set()
    stack = []
    counter = [0]
    out = []
    for root in nodes:
        if root in index:
            continue
        work = [(root, iter(sorted(edges.get(root, ()))))]
        index[root] = low[root] = counter[0]
        counter[0] += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(sorted(edges.get(w, ())))))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                pv = work[-1][0]
                low[pv] = min(low[pv], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                out.append(comp)
    return out


def identify_state_registers(graph: CircuitGraph) -> frozenset:
    """FFs whose output feeds back to their input, directly or through a
    register group forming a sequential cycle."""
    edges = ff_feedback_graph(graph)
    state = set()
    for comp in _sccs([ff.id for ff in graph.flipflops], edges):
        if len(comp) > 1:
            state.update(comp)
        else:
            fid = comp[0]
            if fid in edges.get(fid, ()):
                state.add(fid)
    return frozenset(state)


def directed_feedback_components(graph: CircuitGraph, regs: Iterable[int]) -> list:
    """Partition `regs` into strongly connected feedback groups.

    Unlike :func:`feedback_components`, one-way coupling does not merge
    groups: a counter enabled by an FSM stays a separate group, which
    is what counter collapsing needs.
    """
    regs = sorted(set(regs))
    edges = ff_feedback_graph(graph)
    restricted = {r: {v for v in edges.get(r, ()) if v in regs} for r in regs}
    return sorted(sorted(c) for c in _sccs(regs, restricted))


def feedback_components(graph: CircuitGraph, regs: Iterable[int]) -> list:
    """Partition `regs` into mutual-feedback groups, merging groups that
    are combinationally coupled in either direction.

    Returns sorted lists, deterministically ordered.
    """
    regs = set(regs)
    edges = ff_feedback_graph(graph)
    undirected = {r: set() for r in regs}
    for a in regs:
        for b in edges.get(a, ()):
            if b in regs and b != a:
                undirected[a].add(b)
                undirected[b].add(a)
    seen = set()
    comps = []
    for r in sorted(regs):
        if r in seen:
            continue
        comp = []
        stack = [r]
        seen.add(r)
        while stack:
            v = stack.pop()
            comp.append(v)
            for w in undirected[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        comps.append(sorted(comp))
    return comps
