"""Bounded partial-scan sequential test generation for flow witnesses.

The asset net is cut from its driver and held at complementary constants
on two rails of a time-frame-expanded model; a satisfying assignment of
the model is a stimulus whose two replays differ at an unmasked observe
point.  The decision procedure is a reduction to SAT (complete within
the decision budget), so every verdict is one of Detected /
Undetectable / Abandoned, never a guess.

Observation convention: primary outputs are observable in every frame,
scan flip-flops capture at every frame boundary (1..D).  This keeps
detection monotone in the unrolling depth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import sim as simulation
from .netlist import CircuitGraph, NetlistError, Point, ScanConfig
from .sat import Solver

DEFAULT_DEPTH = 8
MAX_ADAPTIVE_DEPTH = 32
DEFAULT_BUDGET = 1_000_000


@dataclass(frozen=True)
class StuckAtFault:
    net: int
    value: int


@dataclass
class Stimulus:
    """Witness input sequence; absent keys are don't-cares (replay as 0)."""

    initial_state: dict  # ff id -> 0/1, scan loads plus free non-scan state
    frames: list  # per frame: dict pi net -> 0/1
    depth: int

    def pi_value(self, t: int, net: int) -> int:
        return self.frames[t].get(net, 0) if t < len(self.frames) else 0

    def to_json(self, graph: CircuitGraph) -> dict:
        return {
            "initial_state": {
                graph.flipflops[fid].name: v
                for fid, v in sorted(self.initial_state.items())
            },
            "frames": [
                {graph.nets[nid].name: v for nid, v in sorted(f.items())}
                for f in self.frames
            ],
            "depth": self.depth,
        }


@dataclass
class PropagationPath:
    steps: list  # ordered (frame, cell id)

    @property
    def depth(self) -> int:
        return len(self.steps)

    def to_json(self, graph: CircuitGraph) -> list:
        return [
            {"frame": t, "cell": graph.cells[c].name, "op": graph.cells[c].kind}
            for t, c in self.steps
        ]


@dataclass
class Detected:
    stimulus: Stimulus
    path: PropagationPath
    point: Point
    frame: int


@dataclass
class Undetectable:
    pass


@dataclass
class Abandoned:
    pass


@dataclass
class Reachable:
    stimulus: Stimulus
    frame: int = 0


@dataclass
class UnreachableAtDepth:
    pass


class UnrolledModel:
    """Dual-rail time-frame expansion with virtual scan semantics."""

    def __init__(
        self,
        graph: CircuitGraph,
        scan_cfg: ScanConfig,
        fault: StuckAtFault,
        depth: int,
        reset_convention: bool = True,
    ):
        if depth < 1:
            raise ValueError(f"depth must be >= 1, got {depth}")
        if not (0 <= fault.net < len(graph.nets)):
            raise NetlistError(f"unknown net id {fault.net}")
        self.graph = graph
        self.scan_cfg = scan_cfg
        self.fault = fault
        self.depth = depth
        self.reset_convention = reset_convention


class _Encoder:
    """Builds CNF for the cone of influence of the requested targets.

    Rail 0 holds the fault net at the complement of the fault value,
    rail 1 at the fault value; all other inputs and the initial state
    are shared between rails, so a model is a single two-run stimulus.
    Signals with no structural asset dependence share one variable.
    """

    def __init__(self, model: UnrolledModel, asset_forced: bool = True):
        g = model.graph
        self.model = model
        self.graph = g
        self.solver = Solver()
        self.true_lit = self.solver.new_var()
        self.solver.add_clause([self.true_lit])
        self.asset_forced = asset_forced
        self.global_forced = dict(simulation.reset_inactive_forcings(g))
        self.latch_outputs = {o for grp in g.latches for o in grp.outputs}
        self.pi_vars = {}  # (t, net) -> lit
        self.init_vars = {}  # ff -> lit
        self.cache = {}  # (rail, t, net) -> lit ; rail "s" when shared
        self.dep_cache = {}

    def _const(self, v: int) -> int:
        return self.true_lit if v else -self.true_lit

    def depends_on_asset(self, t: int, net: int) -> bool:
        stack = [(t, net)]
        while stack:
            tt, n = stack[-1]
            key = (tt, n)
            if key in self.dep_cache:
                stack.pop()
                continue
            if self.asset_forced and n == self.model.fault.net:
                self.dep_cache[key] = True
                stack.pop()
                continue
            if n in self.global_forced or n in self.latch_outputs:
                self.dep_cache[key] = False
                stack.pop()
                continue
            drv = self.graph.nets[n].driver
            if drv is None or drv[0] == "pi":
                self.dep_cache[key] = False
                stack.pop()
                continue
            if drv[0] == "ff":
                if tt == 0:
                    self.dep_cache[key] = False
                    stack.pop()
                else:
                    d = self.graph.flipflops[drv[1]].d
                    if (tt - 1, d) in self.dep_cache:
                        self.dep_cache[key] = self.dep_cache[(tt - 1, d)]
                        stack.pop()
                    else:
                        stack.append((tt - 1, d))
                continue
            cell = self.graph.cells[drv[1]]
            missing = [i for i in cell.inputs if (tt, i) not in self.dep_cache]
            if missing:
                stack.extend((tt, i) for i in missing)
                continue
            self.dep_cache[key] = any(self.dep_cache[(tt, i)] for i in cell.inputs)
            stack.pop()
        return self.dep_cache[(t, net)]

    def _rail_key(self, rail: int, t: int, net: int):
        if not self.depends_on_asset(t, net):
            return ("s", t, net)
        return (rail, t, net)

    def _init_lit(self, fid: int) -> int:
        if fid in self.init_vars:
            return self.init_vars[fid]
        ff = self.graph.flipflops[fid]
        if (
            self.model.reset_convention
            and ff.reset is not None
            and fid not in self.model.scan_cfg.scan_enabled
        ):
            lit = self._const(ff.reset.value)
        else:
            lit = self.solver.new_var()
        self.init_vars[fid] = lit
        return lit

    def _pi_lit(self, t: int, net: int) -> int:
        key = (t, net)
        if key not in self.pi_vars:
            self.pi_vars[key] = self.solver.new_var()
        return self.pi_vars[key]

    def _encode_cell(self, kind: str, out: int, ins: list):
        add = self.solver.add_clause
        if kind in ("BUF", "NOT"):
            a = ins[0] if kind == "BUF" else -ins[0]
            add([-out, a])
            add([out, -a])
        elif kind in ("AND", "NAND"):
            o = out if kind == "AND" else -out
            a, b = ins
            add([-o, a])
            add([-o, b])
            add([o, -a, -b])
        elif kind in ("OR", "NOR"):
            o = out if kind == "OR" else -out
            a, b = ins
            add([o, -a])
            add([o, -b])
            add([-o, a, b])
        elif kind in ("XOR", "XNOR"):
            o = out if kind == "XOR" else -out
            a, b = ins
            add([-o, a, b])
            add([-o, -a, -b])
            add([o, -a, b])
            add([o, a, -b])
        elif kind == "MUX2":
            s, a, b = ins
            add([s, -out, a])
            add([s, out, -a])
            add([-s, -out, b])
            add([-s, out, -b])
        else:  # pragma: no cover
            raise AssertionError(kind)

    def lit(self, rail: int, t: int, net: int) -> int:
        stack = [(rail, t, net)]
        while stack:
            r, tt, n = stack[-1]
            key = self._rail_key(r, tt, n)
            if key in self.cache:
                stack.pop()
                continue
            if self.asset_forced and n == self.model.fault.net:
                v = self.model.fault.value if r == 1 else 1 - self.model.fault.value
                self.cache[(r, tt, n)] = self._const(v)
                stack.pop()
                continue
            if n in self.global_forced:
                self.cache[key] = self._const(self.global_forced[n])
                stack.pop()
                continue
            if n in self.latch_outputs:
                self.cache[key] = self._const(0)
                stack.pop()
                continue
            drv = self.graph.nets[n].driver
            if drv is None:
                self.cache[key] = self._const(0)
                stack.pop()
                continue
            if drv[0] == "pi":
                self.cache[key] = self._pi_lit(tt, n)
                stack.pop()
                continue
            if drv[0] == "ff":
                fid = drv[1]
                if tt == 0:
                    self.cache[key] = self._init_lit(fid)
                    stack.pop()
                    continue
                d = self.graph.flipflops[fid].d
                dkey = self._rail_key(r, tt - 1, d)
                if dkey in self.cache:
                    self.cache[key] = self.cache[dkey]
                    stack.pop()
                else:
                    stack.append((r, tt - 1, d))
                continue
            cell = self.graph.cells[drv[1]]
            in_keys = [self._rail_key(r, tt, i) for i in cell.inputs]
            missing = [
                (r, tt, i)
                for i, k in zip(cell.inputs, in_keys)
                if k not in self.cache
            ]
            if missing:
                stack.extend(missing)
                continue
            out_lit = self.solver.new_var()
            self._encode_cell(cell.kind, out_lit, [self.cache[k] for k in in_keys])
            self.cache[key] = out_lit
            stack.pop()
        return self.cache[self._rail_key(rail, t, net)]

    def xor_lit(self, a: int, b: int) -> int:
        if a == b:
            return -self.true_lit
        if a == -b:
            return self.true_lit
        x = self.solver.new_var()
        self._encode_cell("XOR", x, [a, b])
        return x

    def extract_stimulus(self, model: dict) -> Stimulus:
        frames = [dict() for _ in range(self.model.depth)]
        for (t, net), lit in self.pi_vars.items():
            frames[t][net] = 1 if model[abs(lit)] == (lit > 0) else 0
        init = {}
        for fid, lit in self.init_vars.items():
            if abs(lit) == abs(self.true_lit):
                init[fid] = 1 if lit == self.true_lit else 0
            else:
                init[fid] = 1 if model[abs(lit)] == (lit > 0) else 0
        return Stimulus(init, frames, self.model.depth)


def build_unrolled_model(
    graph: CircuitGraph,
    scan_cfg: ScanConfig,
    fault: StuckAtFault,
    depth: int = DEFAULT_DEPTH,
    reset_convention: bool = True,
) -> UnrolledModel:
    return UnrolledModel(graph, scan_cfg, fault, depth, reset_convention)


def observation_times(model: UnrolledModel, point: Point):
    if point.kind == "po":
        return range(model.depth)
    return range(1, model.depth + 1)


def _observable(model: UnrolledModel, point: Point) -> bool:
    cfg = model.scan_cfg
    if point in cfg.capture_masked:
        return False
    if point.kind == "po":
        return point.ref in model.graph.output_set
    if point.kind == "ff":
        return point.ref in cfg.scan_enabled
    return False


def _point_value_pos(model: UnrolledModel, point: Point, time: int):
    """(frame, net) carrying the point's observed value at `time`."""
    if point.kind == "po":
        return (time, point.ref)
    ff = model.graph.flipflops[point.ref]
    return (time - 1, ff.d)


def detect_fault(
    model: UnrolledModel,
    observe_points: Iterable[Point],
    budget: int = DEFAULT_BUDGET,
):
    """Search for a stimulus exposing the fault at an unmasked point."""
    points = sorted(p for p in observe_points if _observable(model, p))
    if not points:
        return Undetectable()
    enc = _Encoder(model)
    diff_lits = []
    positions = []  # aligned with diff_lits: (point, time)
    for p in points:
        for time in observation_times(model, p):
            t, net = _point_value_pos(model, p, time)
            if not enc.depends_on_asset(t, net):
                continue
            a = enc.lit(0, t, net)
            b = enc.lit(1, t, net)
            x = enc.xor_lit(a, b)
            if x == -enc.true_lit:
                continue
            diff_lits.append(x)
            positions.append((p, time))
    if not diff_lits:
        return Undetectable()
    # prefix selectors let the same solver answer "any detection at
    # time <= t", so a found witness can be tightened to the earliest
    # detection time (isolating fast bypass paths from slower valid
    # flows that would otherwise blur the stimulus)
    times = sorted({t for _, t in positions})
    sel = {}
    for t in times:
        s = enc.solver.new_var()
        sel[t] = s
        enc.solver.add_clause(
            [-s] + [d for d, (_, tt) in zip(diff_lits, positions) if tt <= t]
        )
    res = enc.solver.solve(assumptions=[sel[times[-1]]], max_decisions=budget)
    if res is None:
        return Abandoned()
    if not res:
        return Undetectable()
    stim = enc.extract_stimulus(enc.solver.model())
    det = _locate_detection(model, stim, points)
    assert det is not None, "SAT witness failed independent replay"
    while True:
        earlier = [t for t in times if t < det[1]]
        if not earlier:
            break
        res = enc.solver.solve(assumptions=[sel[earlier[-1]]], max_decisions=budget)
        if res is not True:
            break
        stim2 = enc.extract_stimulus(enc.solver.model())
        det2 = _locate_detection(model, stim2, points)
        assert det2 is not None and det2[1] < det[1]
        stim, det = stim2, det2
    point, frame = det
    path = extract_path(model.graph, model.fault.net, stim, point, frame)
    return Detected(stim, path, point, frame)


def _replay_pair(graph: CircuitGraph, asset_net: int, stim: Stimulus):
    frames = [
        {nid: stim.pi_value(t, nid) for nid in graph.inputs}
        for t in range(stim.depth)
    ]
    init = {ff.id: stim.initial_state.get(ff.id, 0) for ff in graph.flipflops}
    ta = simulation.simulate(graph, init, frames, {asset_net: 0})
    tb = simulation.simulate(graph, init, frames, {asset_net: 1})
    return ta, tb


def _locate_detection(model: UnrolledModel, stim: Stimulus, points):
    g = model.graph
    ta, tb = _replay_pair(g, model.fault.net, stim)
    best = None
    for p in points:
        oa = simulation.observation(ta, g, p)
        ob = simulation.observation(tb, g, p)
        for i, (x, y) in enumerate(zip(oa, ob)):
            if x != y:
                time = i if p.kind == "po" else i + 1
                if best is None or time < best[1] or (time == best[1] and p < best[0]):
                    best = (p, time)
                break
    return best


def extract_path(
    graph: CircuitGraph,
    asset_net: int,
    stim: Stimulus,
    point: Point,
    frame: int,
) -> PropagationPath:
    """Shortest sensitized path (fewest cells) from the asset to the
    detecting point, traced on the good/faulty difference marking."""
    ta, tb = _replay_pair(graph, asset_net, stim)
    depth = stim.depth
    diff = [
        [ta.values[t][n] != tb.values[t][n] for n in range(len(graph.nets))]
        for t in range(depth)
    ]
    if point.kind == "po":
        target = (frame, point.ref)
    else:
        target = (frame - 1, graph.flipflops[point.ref].d)
    from collections import deque

    dist = {}
    pred = {}
    dq = deque()
    for t in range(depth):
        if diff[t][asset_net]:
            dist[(t, asset_net)] = 0
            dq.append((t, asset_net))
    while dq:
        node = dq.popleft()
        if node == target:
            break
        t, n = node
        d = dist[node]
        for kind, eid, pin in graph.nets[n].sinks:
            if kind == "cell":
                cell = graph.cells[eid]
                if cell.id in graph.latch_cells():
                    continue
                nxt = (t, cell.output)
                if diff[t][cell.output] and nxt not in dist:
                    dist[nxt] = d + 1
                    pred[nxt] = (node, cell.id)
                    dq.append(nxt)
            elif kind == "ff" and pin == "D" and t + 1 < depth:
                ff = graph.flipflops[eid]
                nxt = (t + 1, ff.q)
                if diff[t + 1][ff.q] and nxt not in dist:
                    dist[nxt] = d
                    pred[nxt] = (node, None)
                    dq.appendleft(nxt)
    steps = []
    node = target
    if node not in dist:
        return PropagationPath([])  # asset observed directly at the boundary
    while node in pred:
        prev, cell_id = pred[node]
        if cell_id is not None:
            steps.append((node[0], cell_id))
        node = prev
    steps.reverse()
    return PropagationPath(steps)


def minimize_stimulus(
    graph: CircuitGraph,
    asset_net: int,
    stim: Stimulus,
    point: Point,
    frame: Optional[int] = None,
) -> Stimulus:
    """Drop stimulus bits whose single flip does not kill the detection.

    The surviving bits are the conditions actually required for the
    flow, which is what trigger extraction inspects.  With `frame` set,
    the difference must survive at that observation time specifically —
    otherwise a slower parallel flow can mask the conditions of the
    path under analysis (e.g. a triggered bypass next to the valid
    logic).
    """
    if frame is not None:
        idx = frame if point.kind == "po" else frame - 1

    def detects(s: Stimulus) -> bool:
        ta, tb = _replay_pair(graph, asset_net, s)
        oa = simulation.observation(ta, graph, point)
        ob = simulation.observation(tb, graph, point)
        if frame is None:
            return oa != ob
        return oa[idx] != ob[idx]

    assert detects(stim)
    init = dict(stim.initial_state)
    frames = [dict(f) for f in stim.frames]
    for fid in sorted(init):
        trial = Stimulus({**init, fid: 1 - init[fid]}, frames, stim.depth)
        if detects(trial):
            del init[fid]
    for t in range(len(frames)):
        for nid in sorted(frames[t]):
            tf = [dict(f) for f in frames]
            tf[t][nid] = 1 - tf[t][nid]
            if detects(Stimulus(init, tf, stim.depth)):
                del frames[t][nid]
    return Stimulus(init, frames, stim.depth)


# ---------------------------------------------------------------------------
# Justification queries (single rail)


def _single_rail_encoder(
    graph: CircuitGraph,
    scan_cfg: ScanConfig,
    depth: int,
    reset_convention: bool,
) -> _Encoder:
    dummy = StuckAtFault(net=0, value=0)
    model = UnrolledModel(graph, scan_cfg, dummy, depth, reset_convention)
    return _Encoder(model, asset_forced=False)


def justify_state(
    graph: CircuitGraph,
    scan_cfg: ScanConfig,
    target: dict,
    depth: int,
    budget: int = DEFAULT_BUDGET,
    reset_convention: bool = True,
):
    """Find a stimulus driving the FFs in `target` to their values after
    `depth` frames (depth 0 checks the initial-state convention)."""
    for fid in target:
        if not (0 <= fid < len(graph.flipflops)):
            raise NetlistError(f"unknown flip-flop id {fid}")
    if depth == 0:
        for fid, v in sorted(target.items()):
            ff = graph.flipflops[fid]
            pinned = (
                reset_convention
                and ff.reset is not None
                and fid not in scan_cfg.scan_enabled
            )
            if pinned and ff.reset.value != v:
                return UnreachableAtDepth()
        return Reachable(Stimulus({}, [], 0), 0)
    enc = _single_rail_encoder(graph, scan_cfg, depth, reset_convention)
    for fid, v in sorted(target.items()):
        ff = graph.flipflops[fid]
        lit = enc.lit(0, depth - 1, ff.d)
        enc.solver.add_clause([lit if v else -lit])
    res = enc.solver.solve(max_decisions=budget)
    if res is None:
        return Abandoned()
    if not res:
        return UnreachableAtDepth()
    stim = enc.extract_stimulus(enc.solver.model())
    return Reachable(stim, depth)


def justify_net_value(
    graph: CircuitGraph,
    scan_cfg: ScanConfig,
    net: int,
    value: int,
    depth: int,
    budget: int = DEFAULT_BUDGET,
    reset_convention: bool = True,
):
    """Find a stimulus making `net` take `value` in some frame."""
    if not (0 <= net < len(graph.nets)):
        raise NetlistError(f"unknown net id {net}")
    enc = _single_rail_encoder(graph, scan_cfg, depth, reset_convention)
    lits = []
    for t in range(depth):
        lit = enc.lit(0, t, net)
        lits.append(lit if value else -lit)
    enc.solver.add_clause(lits)
    res = enc.solver.solve(max_decisions=budget)
    if res is None:
        return Abandoned()
    if not res:
        return UnreachableAtDepth()
    stim = enc.extract_stimulus(enc.solver.model())
    # locate the frame where the value appears
    frames = [
        {nid: stim.pi_value(t, nid) for nid in graph.inputs}
        for t in range(stim.depth)
    ]
    init = {ff.id: stim.initial_state.get(ff.id, 0) for ff in graph.flipflops}
    trace = simulation.simulate(graph, init, frames)
    hit = next(t for t in range(depth) if trace.net(t, net) == value)
    return Reachable(stim, hit)
