"""Two-valued logic simulation and the brute-force taint oracle.

The simulator here is deliberately independent of the search engine in
:mod:`ifsguard.atpg`: it is the replay/oracle side of every witness
check, so it never shares code with the unrolled-model encoding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .netlist import CircuitGraph, NetlistError, Point, topo_cells

_EVAL = {
    "AND": lambda a, b: a & b,
    "OR": lambda a, b: a | b,
    "NAND": lambda a, b: 1 ^ (a & b),
    "NOR": lambda a, b: 1 ^ (a | b),
    "XOR": lambda a, b: a ^ b,
    "XNOR": lambda a, b: 1 ^ (a ^ b),
    "NOT": lambda a: 1 ^ a,
    "BUF": lambda a: a,
}


def eval_cell(kind: str, ins) -> int:
    if kind == "MUX2":
        s, a, b = ins
        return b if s else a
    return _EVAL[kind](*ins)


def reset_inactive_forcings(graph: CircuitGraph) -> dict:
    """Hold every primary-input reset net at its inactive level."""
    forced = {}
    for ff in graph.flipflops:
        if ff.reset is not None and graph.nets[ff.reset.net].driver[0] == "pi":
            forced[ff.reset.net] = 1 - ff.reset.polarity
    return forced


def clock_nets(graph: CircuitGraph) -> frozenset:
    return frozenset(ff.clock for ff in graph.flipflops)


def data_inputs(graph: CircuitGraph) -> list:
    """PI nets that carry data: not clocks, not reset pins."""
    excluded = set(clock_nets(graph)) | set(reset_inactive_forcings(graph))
    return [nid for nid in graph.inputs if nid not in excluded]


class CompiledCircuit:
    """Levelized single-frame evaluator over dense net arrays.

    Values are plain ints, so the same code runs scalar (0/1) and
    bit-parallel (one bit per stimulus pattern) simulations.
    """

    def __init__(self, graph: CircuitGraph):
        self.graph = graph
        self.order = topo_cells(graph)
        self.latch_outputs = {o for g in graph.latches for o in g.outputs}
        self.ops = []
        for cid in self.order:
            c = graph.cells[cid]
            self.ops.append((c.kind, c.output, c.inputs))

    def frame(self, state: dict, pi_values: dict, forced: dict, width_mask: int = 1):
        """Evaluate one frame; returns (net value list, next FF state dict).

        `state` maps FF id -> value; `pi_values` maps PI net -> value;
        `forced` maps net -> value overriding the driver.  `width_mask`
        is all-ones over the bit-parallel width.
        """
        g = self.graph
        values = [0] * len(g.nets)
        for nid in g.inputs:
            values[nid] = pi_values.get(nid, 0)
        for ff in g.flipflops:
            values[ff.q] = state.get(ff.id, 0)
        for nid in self.latch_outputs:
            values[nid] = 0
        for nid, v in forced.items():
            values[nid] = v
        for kind, out, ins in self.ops:
            if out in forced:
                continue
            if kind == "MUX2":
                s, a, b = (values[i] for i in ins)
                v = (a & ~s) | (b & s)
            elif kind == "AND":
                v = values[ins[0]] & values[ins[1]]
            elif kind == "OR":
                v = values[ins[0]] | values[ins[1]]
            elif kind == "NAND":
                v = ~(values[ins[0]] & values[ins[1]])
            elif kind == "NOR":
                v = ~(values[ins[0]] | values[ins[1]])
            elif kind == "XOR":
                v = values[ins[0]] ^ values[ins[1]]
            elif kind == "XNOR":
                v = ~(values[ins[0]] ^ values[ins[1]])
            elif kind == "NOT":
                v = ~values[ins[0]]
            else:  # BUF
                v = values[ins[0]]
            values[out] = v & width_mask
        next_state = {}
        for ff in self.graph.flipflops:
            next_state[ff.id] = values[ff.d]
        return values, next_state


@dataclass
class Trace:
    """Net values per frame plus the FF state timeline (q[0] = initial)."""

    values: list  # per frame: list of net values
    states: list  # per time 0..D: dict ff -> value

    def net(self, frame: int, nid: int) -> int:
        return self.values[frame][nid]

    def ff_q(self, time: int, fid: int) -> int:
        return self.states[time].get(fid, 0)


def simulate(
    graph: CircuitGraph,
    init_state: dict,
    frames: list,
    forced: Optional[dict] = None,
) -> Trace:
    """Run `len(frames)` clock cycles; each frame is a PI-net value map."""
    sim = CompiledCircuit(graph)
    all_forced = dict(reset_inactive_forcings(graph))
    if forced:
        all_forced.update(forced)
    state = dict(init_state)
    values = []
    states = [dict(state)]
    for pi_values in frames:
        v, state = sim.frame(state, pi_values, all_forced)
        values.append(v)
        states.append(dict(state))
    return Trace(values, states)


def observation(trace: Trace, graph: CircuitGraph, point: Point) -> list:
    """The observed value sequence at a point (PO per frame, FF per capture)."""
    if point.kind == "ff":
        return [trace.ff_q(t, point.ref) for t in range(1, len(trace.states))]
    return [trace.net(t, point.ref) for t in range(len(trace.values))]


def two_run_difference(
    graph: CircuitGraph,
    asset_net: int,
    init_state: dict,
    frames: list,
    point: Point,
    forced: Optional[dict] = None,
) -> Optional[int]:
    """First time index at which asset=0 and asset=1 runs differ at `point`.

    Returns None when the two observations agree everywhere.  The asset
    net is cut from its driver and held constant in each run.
    """
    fa = dict(forced or {})
    fb = dict(forced or {})
    fa[asset_net] = 0
    fb[asset_net] = 1
    ta = simulate(graph, init_state, frames, fa)
    tb = simulate(graph, init_state, frames, fb)
    oa = observation(ta, graph, point)
    ob = observation(tb, graph, point)
    for i, (x, y) in enumerate(zip(oa, ob)):
        if x != y:
            return i
    return None


# ---------------------------------------------------------------------------
# Brute-force taint oracle


def _free_init_states(graph: CircuitGraph, reset_convention: bool):
    """Enumerate shared initial FF states (reset-able FFs pinned if asked)."""
    free = []
    fixed = {}
    for ff in graph.flipflops:
        if reset_convention and ff.reset is not None:
            fixed[ff.id] = ff.reset.value
        else:
            free.append(ff.id)
    if len(free) > 14:
        raise NetlistError(
            f"taint oracle limited to 14 free state bits, got {len(free)}"
        )
    for bits in range(1 << len(free)):
        st = dict(fixed)
        for i, fid in enumerate(free):
            st[fid] = (bits >> i) & 1
        yield st


def taint_oracle(
    graph: CircuitGraph,
    asset_net: int,
    depth: int,
    observe_points: Optional[Iterable[Point]] = None,
    reset_convention: bool = False,
    max_input_bits: int = 12,
) -> set:
    """Ground-truth information flow by exhaustive two-run simulation.

    Returns every point (primary output or FF) whose observation can
    differ between the asset=0 and asset=1 runs within `depth` frames,
    over all shared stimuli (initial state + per-frame inputs).

    Pair-state BFS over (run0 state, run1 state) with bit-parallel input
    enumeration keeps this exhaustive yet tractable at desk scale.
    """
    sim = CompiledCircuit(graph)
    pis = [nid for nid in data_inputs(graph) if nid != asset_net]
    if len(pis) > max_input_bits:
        raise NetlistError(
            f"taint oracle limited to {max_input_bits} input bits, got {len(pis)}"
        )
    width = 1 << len(pis)
    wmask = (1 << width) - 1
    # pattern column for each PI: bit w of column i = value of pi i in pattern w
    columns = {}
    for i, nid in enumerate(pis):
        col = 0
        for w in range(width):
            if (w >> i) & 1:
                col |= 1 << w
        columns[nid] = col
    base_forced = reset_inactive_forcings(graph)
    forced0 = dict(base_forced)
    forced1 = dict(base_forced)
    forced0[asset_net] = 0
    forced1[asset_net] = wmask

    ffs = graph.flipflops
    observed = set()
    candidates = set(
        observe_points
        if observe_points is not None
        else [Point("po", nid) for nid in graph.outputs]
        + [Point("ff", ff.id) for ff in ffs]
    )
    po_candidates = [p for p in candidates if p.kind == "po"]
    ff_candidates = [p for p in candidates if p.kind == "ff"]

    def pack(st0, st1):
        key = 0
        for ff in ffs:
            key = (key << 2) | (st0[ff.id] << 1) | st1[ff.id]
        return key

    frontier = []
    visited = set()
    for st in _free_init_states(graph, reset_convention):
        key = pack(st, st)
        if key not in visited:
            visited.add(key)
            frontier.append((st, dict(st)))

    for t in range(depth):
        next_frontier = []
        for st0, st1 in frontier:
            v0, _ = sim.frame(st0, columns, forced0, wmask)
            v1, _ = sim.frame(st1, columns, forced1, wmask)
            for p in po_candidates:
                if p not in observed and (v0[p.ref] ^ v1[p.ref]) & wmask:
                    observed.add(p)
            for p in ff_candidates:
                ff = ffs[p.ref]
                if p not in observed and (v0[ff.d] ^ v1[ff.d]) & wmask:
                    observed.add(p)
            if t + 1 >= depth and len(observed) == len(candidates):
                break
            # split patterns into successor pair-states
            d0 = {ff.id: v0[ff.d] for ff in ffs}
            d1 = {ff.id: v1[ff.d] for ff in ffs}
            seen_here = set()
            for w in range(width):
                ns0 = {fid: (d0[fid] >> w) & 1 for fid in d0}
                ns1 = {fid: (d1[fid] >> w) & 1 for fid in d1}
                key = pack(ns0, ns1)
                if key not in visited and key not in seen_here:
                    seen_here.add(key)
                    visited.add(key)
                    next_frontier.append((ns0, ns1))
        frontier = next_frontier
        if not frontier:
            break
    return observed
