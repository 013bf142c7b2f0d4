"""Trojan trigger extraction.

Two routes: simple triggers fall out of the detection stimulus directly
(the bits that survive don't-care minimization are the activation
conditions), while FSM-based triggers need the state transition graph
of the trigger circuit recovered from the netlist.

Counter registers are collapsed into parametric wait edges before STG
enumeration, so recovery cost does not grow with counter width — a
2^20-cycle wait is one edge, not 2^20 states.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import atpg, cone, sim as simulation
from .netlist import CircuitGraph, Point


class TriggerError(Exception):
    pass


@dataclass
class StgBounds:
    max_states: int = 4096
    max_input_bits: int = 12
    max_free_bits: int = 4
    max_context_bits: int = 8


@dataclass(frozen=True)
class CounterGroup:
    ffs: tuple  # ordered ff ids
    cycle: tuple  # state tuples in successor order, starting at the entry state

    @property
    def width(self) -> int:
        return len(self.ffs)

    def distance_to(self, target: dict) -> Optional[int]:
        """Steps from the entry state to the first state matching the
        (partial) target assignment; None if never reached."""
        for i, st in enumerate(self.cycle):
            if all(st[self.ffs.index(f)] == v for f, v in target.items()):
                return i
        return None


@dataclass(frozen=True)
class Transition:
    src: tuple  # bit tuple over stg.regs
    dst: tuple
    condition: tuple  # sorted ((pi net, value), ...); empty = any input
    repeat: int = 1  # > 1 for collapsed counter wait edges


@dataclass
class StateTransitionGraph:
    regs: tuple  # ordered ff ids (counter groups excluded)
    states: frozenset  # of bit tuples
    transitions: tuple  # of Transition
    trigger_states: frozenset
    counter_groups: tuple  # of CounterGroup
    counter_waits: tuple = ()  # (group index, cycles-to-target) pairs
    partial: bool = False

    def state_name(self, st: tuple) -> str:
        return "S" + "".join(str(b) for b in st)

    def to_text(self, graph: CircuitGraph) -> str:
        """One line per transition: `from -> to [inputs=...]`."""
        lines = [
            "# regs: " + ",".join(graph.flipflops[f].name for f in self.regs),
            "# trigger: "
            + ",".join(sorted(self.state_name(s) for s in self.trigger_states)),
        ]
        if self.partial:
            lines.append("# partial: state bound exceeded")
        for gi, dist in self.counter_waits:
            cg = self.counter_groups[gi]
            names = ",".join(graph.flipflops[f].name for f in cg.ffs)
            lines.append(f"# counter: {names} wait={dist}")
        for tr in sorted(
            self.transitions, key=lambda t: (t.src, t.dst, t.condition)
        ):
            cond = ",".join(
                f"{graph.nets[n].name}={v}" for n, v in tr.condition
            )
            attrs = f"inputs={cond}"
            if tr.repeat > 1:
                attrs += f" repeat={tr.repeat}"
            lines.append(
                f"{self.state_name(tr.src)} -> {self.state_name(tr.dst)} [{attrs}]"
            )
        return "\n".join(lines) + "\n"


@dataclass
class TriggerSequence:
    steps: list  # of (condition dict pi net -> bit, repeat)

    @property
    def total_cycles(self) -> int:
        return sum(r for _, r in self.steps)

    def to_json(self, graph: CircuitGraph) -> list:
        return [
            {
                "inputs": {graph.nets[n].name: v for n, v in sorted(c.items())},
                "repeat": r,
            }
            for c, r in self.steps
        ]


# ---------------------------------------------------------------------------
# Direct extraction from stimulus vectors


def extract_direct_trigger(
    graph: CircuitGraph,
    asset_net: int,
    stimulus: atpg.Stimulus,
    point: Point,
    frame: Optional[int] = None,
) -> dict:
    """Project a detection stimulus onto its necessary bits.

    Bits whose single flip leaves the flow intact are dropped; what
    remains is the activation condition (comparator constants, counter
    states).  An empty residue means the flow needs no trigger at all.
    """
    ms = atpg.minimize_stimulus(graph, asset_net, stimulus, point, frame)
    inputs = [
        {"frame": t, "name": graph.nets[n].name, "value": v}
        for t in range(len(ms.frames))
        for n, v in sorted(ms.frames[t].items())
    ]
    registers = [
        {"name": graph.flipflops[f].name, "value": v}
        for f, v in sorted(ms.initial_state.items())
    ]
    if not inputs and not registers:
        return {"kind": "always-on"}
    return {"kind": "condition", "inputs": inputs, "registers": registers}


def extract_control_trigger(
    graph: CircuitGraph,
    asset_net: int,
    stimulus: atpg.Stimulus,
    group: Iterable[int],
) -> dict:
    """Activation values of a malicious register group for an integrity
    violation: hold the group at each possible value during the
    activation stimulus and keep the minority of values under which the
    asset behaves differently."""
    group = sorted(group)
    if not group:
        return {"kind": "always-on"}
    if len(group) > 12:
        raise TriggerError(f"register group too wide to sweep ({len(group)} bits)")
    frames = [
        {nid: stimulus.pi_value(t, nid) for nid in graph.inputs}
        for t in range(max(stimulus.depth, 1))
    ]
    init = {ff.id: stimulus.initial_state.get(ff.id, 0) for ff in graph.flipflops}
    traces = {}
    for v in range(1 << len(group)):
        forced = {
            graph.flipflops[f].q: (v >> i) & 1 for i, f in enumerate(group)
        }
        tr = simulation.simulate(graph, init, frames, forced)
        traces[v] = tuple(tr.net(t, asset_net) for t in range(len(frames)))
    counts = Counter(traces.values())
    majority_trace, _ = counts.most_common(1)[0]
    active = [v for v in sorted(traces) if traces[v] != majority_trace]
    if not active or len(active) * 2 > len(traces):
        return {"kind": "always-on"}
    return {
        "kind": "condition",
        "registers": [
            {graph.flipflops[f].name: (v >> i) & 1 for i, f in enumerate(group)}
            for v in active
        ],
    }


def trigger_state_registers(graph: CircuitGraph, cond_regs: Iterable[int]):
    """Split trigger-condition registers into (state regs for STG
    extraction, leftover non-state regs reported as direct conditions).

    The state side is the union of the strongly connected feedback
    groups containing any condition register.
    """
    cond = set(cond_regs)
    state = cone.identify_state_registers(graph)
    chosen = set()
    for comp in cone.directed_feedback_components(graph, state):
        if cond & set(comp):
            chosen.update(comp)
    return sorted(chosen), sorted(cond - state)


# ---------------------------------------------------------------------------
# STG recovery


def _d_support(graph: CircuitGraph, ffs: Iterable[int]):
    """(data PIs, source FFs) in the one-frame support of the FFs' d nets."""
    pis = set()
    src_ffs = set()
    data = set(simulation.data_inputs(graph))
    for fid in ffs:
        for sp in cone.fanin_startpoints(graph, graph.flipflops[fid].d).endpoints:
            if sp.kind == "pi" and sp.ref in data:
                pis.add(sp.ref)
            elif sp.kind == "ff":
                src_ffs.add(sp.ref)
    return sorted(pis), sorted(src_ffs)


def _entry_state(graph: CircuitGraph, ffs) -> tuple:
    return tuple(
        graph.flipflops[f].reset.value if graph.flipflops[f].reset else 0
        for f in ffs
    )


class _OneStep:
    """One-frame next-state evaluator over a chosen register subset."""

    def __init__(self, graph: CircuitGraph):
        self.graph = graph
        self.sim = simulation.CompiledCircuit(graph)
        self.forced = simulation.reset_inactive_forcings(graph)

    def next(self, state: dict, pi_values: dict) -> dict:
        full = {ff.id: 0 for ff in self.graph.flipflops}
        full.update(state)
        _, nxt = self.sim.frame(full, pi_values, self.forced)
        return nxt


def _detect_counter_group(
    graph: CircuitGraph,
    comp: list,
    other_regs: list,
    bounds: StgBounds,
) -> Optional[CounterGroup]:
    """Verify that `comp` behaves as a counter: in every context over
    the other state registers its next-state map is a reset constant,
    a hold, or one fixed successor walk covering all its states; and at
    least one context actually walks."""
    k = len(comp)
    if k < 2 or k > 10:
        return None
    pis, src_ffs = _d_support(graph, comp)
    if pis:
        return None  # data-dependent: not an autonomous counter
    ctx_regs = sorted(set(src_ffs) - set(comp))
    if not set(ctx_regs) <= set(other_regs) or len(ctx_regs) > bounds.max_context_bits:
        return None
    step = _OneStep(graph)
    successor = None
    has_walk = False
    for cbits in range(1 << len(ctx_regs)):
        ctx = {f: (cbits >> i) & 1 for i, f in enumerate(ctx_regs)}
        fmap = {}
        for v in range(1 << k):
            st = dict(ctx)
            st.update({f: (v >> i) & 1 for i, f in enumerate(comp)})
            nxt = step.next(st, {})
            fmap[v] = sum(nxt[f] << i for i, f in enumerate(comp))
        values = set(fmap.values())
        if len(values) == 1:
            continue  # reset context
        if all(fmap[v] == v for v in fmap):
            continue  # hold context
        # successor walk: injective, and identical across walking contexts
        if len(values) < (1 << k) - 1:
            return None
        if successor is None:
            successor = fmap
        elif successor != fmap:
            return None
        has_walk = True
    if not has_walk or successor is None:
        return None
    entry = _entry_state(graph, comp)
    v0 = sum(b << i for i, b in enumerate(entry))
    cycle = [v0]
    seen = {v0}
    v = v0
    for _ in range(1 << k):
        v = successor[v]
        if v in seen:
            break
        cycle.append(v)
        seen.add(v)
    if len(cycle) < (1 << k) - 1:
        return None  # walk does not cover the state space from entry
    ffs = tuple(comp)
    states = tuple(
        tuple((v >> i) & 1 for i in range(k)) for v in cycle
    )
    return CounterGroup(ffs, states)


def extract_stg(
    graph: CircuitGraph,
    state_regs: Iterable[int],
    trig_condition: dict,
    bounds: Optional[StgBounds] = None,
) -> StateTransitionGraph:
    """Recover the trigger FSM's STG backward from the trigger condition.

    `trig_condition` partially assigns state registers (typically the
    register values surviving direct-trigger minimization).  Counter
    groups among the registers are collapsed to wait edges; remaining
    registers are enumerated exactly, input conditions are summarized
    as cubes over the relevant data inputs.
    """
    bounds = bounds or StgBounds()
    state_regs = sorted(set(state_regs))
    for f in trig_condition:
        if f not in state_regs:
            raise TriggerError(
                f"trigger condition register {graph.flipflops[f].name} "
                "is not a state register"
            )
    # counter candidates: registers with no data input in their one-frame
    # support, grouped by combinational coupling (a ripple counter's
    # carry chain is one-directional, so directed SCCs would split it)
    pi_free = [f for f in state_regs if not _d_support(graph, [f])[0]]
    counters = []
    fsm_regs = [f for f in state_regs if f not in pi_free]
    for comp in cone.feedback_components(graph, pi_free):
        others = [f for f in state_regs if f not in comp]
        cg = _detect_counter_group(graph, comp, others, bounds)
        if cg is not None:
            counters.append(cg)
        else:
            fsm_regs.extend(comp)
    fsm_regs = tuple(sorted(fsm_regs))
    partial = False
    if (1 << len(fsm_regs)) > bounds.max_states:
        partial = True
        fsm_regs = fsm_regs[: bounds.max_states.bit_length() - 1]
        fsm_regs = tuple(fsm_regs)
    pis, src_ffs = _d_support(graph, fsm_regs)
    if len(pis) > bounds.max_input_bits:
        pis = pis[: bounds.max_input_bits]
        partial = True
    free_ffs = sorted(set(src_ffs) - set(fsm_regs) - {f for c in counters for f in c.ffs})
    if len(free_ffs) > bounds.max_free_bits:
        free_ffs = free_ffs[: bounds.max_free_bits]
        partial = True

    # counter representative values: entry plus the trigger target
    ctr_reprs = []  # per counter: list of (value dict, repeat-to-reach)
    counter_waits = []
    for cg in counters:
        target = {f: trig_condition[f] for f in cg.ffs if f in trig_condition}
        reprs = [(dict(zip(cg.ffs, cg.cycle[0])), 0)]
        if target:
            dist = cg.distance_to(target)
            if dist is None:
                raise TriggerError(
                    "trigger counter value unreachable from the counter's entry state"
                )
            if dist > 0:
                full = dict(zip(cg.ffs, cg.cycle[dist]))
                reprs.append((full, dist))
                counter_waits.append((len(ctr_reprs), dist))
        ctr_reprs.append(reprs)

    step = _OneStep(graph)

    def enumerate_next(src_bits: tuple):
        """Yields (dst, pi assignment tuple, counter-choice index tuple)."""
        base = dict(zip(fsm_regs, src_bits))
        for pibits in range(1 << len(pis)):
            pi_vals = {n: (pibits >> i) & 1 for i, n in enumerate(pis)}
            for frbits in range(1 << len(free_ffs)):
                fr = {f: (frbits >> i) & 1 for i, f in enumerate(free_ffs)}
                for choice in _choices(ctr_reprs):
                    st = dict(base)
                    st.update(fr)
                    for (vals, _rep) in choice:
                        st.update(vals)
                    nxt = step.next(st, pi_vals)
                    dst = tuple(nxt[f] for f in fsm_regs)
                    yield dst, tuple(
                        (pis[i], (pibits >> i) & 1) for i in range(len(pis))
                    ), tuple(rep for (_vals, rep) in choice)

    n_states = 1 << len(fsm_regs)
    trigger_states = frozenset(
        st
        for st in _completions(fsm_regs, trig_condition)
    )
    # backward fixpoint: keep states that can reach the trigger set
    raw = {}  # (src, dst) -> set of (pi assign, ctr reps)
    for sbits in range(n_states):
        src = tuple((sbits >> i) & 1 for i in range(len(fsm_regs)))
        for dst, pia, reps in enumerate_next(src):
            raw.setdefault((src, dst), set()).add((pia, reps))
    recovered = set(trigger_states)
    changed = True
    while changed:
        changed = False
        for (src, dst) in raw:
            if dst in recovered and src not in recovered:
                recovered.add(src)
                changed = True
    transitions = []
    for (src, dst), combos in sorted(raw.items()):
        if src not in recovered or dst not in recovered:
            continue
        # split by counter-wait requirement: a combo whose counter reps
        # include a nonzero repeat is a wait edge
        plain = {pia for pia, reps in combos if not any(reps)}
        waits = {}
        for pia, reps in combos:
            r = max(reps) if reps else 0
            if r > 0 and pia not in plain:
                waits.setdefault(r, set()).add(pia)
        for cond in _summarize(pis, plain):
            transitions.append(Transition(src, dst, cond, 1))
        for r, pias in sorted(waits.items()):
            for cond in _summarize(pis, pias):
                transitions.append(Transition(src, dst, cond, r))
    return StateTransitionGraph(
        regs=fsm_regs,
        states=frozenset(recovered),
        transitions=tuple(sorted(transitions, key=lambda t: (t.src, t.dst, t.repeat, t.condition))),
        trigger_states=frozenset(recovered & trigger_states),
        counter_groups=tuple(counters),
        counter_waits=tuple(counter_waits),
        partial=partial,
    )


def _choices(ctr_reprs):
    if not ctr_reprs:
        yield ()
        return
    head, *rest = ctr_reprs
    for h in head:
        for r in _choices(rest):
            yield (h,) + r


def _completions(regs, condition):
    free = [f for f in regs if f not in condition]
    for bits in range(1 << len(free)):
        vals = dict(condition)
        for i, f in enumerate(free):
            vals[f] = (bits >> i) & 1
        yield tuple(vals[f] for f in regs)


def _summarize(pis, assignments) -> list:
    """Cover a set of full PI assignments with maximal cubes (partial
    assignments), greedily and deterministically."""
    if not pis:
        return [()] if assignments else []
    full = {tuple(a) for a in assignments}
    if len(full) == (1 << len(pis)):
        return [()]
    remaining = set(full)
    cubes = []
    for a in sorted(full):
        if a not in remaining:
            continue
        cube = dict(a)
        for n, _ in a:
            trial = {k: v for k, v in cube.items() if k != n}
            if _cube_within(pis, trial, full):
                cube = trial
        key = tuple(sorted(cube.items()))
        cubes.append(key)
        for covered in _cube_members(pis, cube):
            remaining.discard(covered)
    return sorted(set(cubes))


def _cube_members(pis, cube):
    free = [n for n in pis if n not in cube]
    for bits in range(1 << len(free)):
        a = dict(cube)
        for i, n in enumerate(free):
            a[n] = (bits >> i) & 1
        yield tuple((n, a[n]) for n in pis)


def _cube_within(pis, cube, full) -> bool:
    return all(m in full for m in _cube_members(pis, cube))


# ---------------------------------------------------------------------------
# Sequence extraction


def extract_trigger_sequence(
    graph: CircuitGraph, stg: StateTransitionGraph
) -> TriggerSequence:
    """Shortest input sequence (by cycle count) from the initial-state
    convention to a trigger state; wait edges appear as (condition,
    repeat) steps."""
    import heapq

    start = _entry_state(graph, stg.regs)
    wait = max((d for _, d in stg.counter_waits), default=0)
    if start in stg.trigger_states:
        return TriggerSequence(_hold_steps(stg, start, wait))
    adj = {}
    for tr in stg.transitions:
        adj.setdefault(tr.src, []).append(tr)
    dist = {start: 0}
    back = {}
    heap = [(0, start)]
    while heap:
        d, st = heapq.heappop(heap)
        if d > dist.get(st, float("inf")):
            continue
        if st in stg.trigger_states:
            break
        for tr in adj.get(st, []):
            nd = d + tr.repeat
            if nd < dist.get(tr.dst, float("inf")):
                dist[tr.dst] = nd
                back[tr.dst] = tr
                heapq.heappush(heap, (nd, tr.dst))
    goal = min(
        (s for s in stg.trigger_states if s in dist),
        key=lambda s: (dist[s], s),
        default=None,
    )
    if goal is None:
        raise TriggerError("trigger state unreachable in recovered STG")
    steps = []
    st = goal
    while st != start:
        tr = back[st]
        steps.append((dict(tr.condition), tr.repeat))
        st = tr.src
    steps.reverse()
    steps.extend(_hold_steps(stg, goal, wait))
    return TriggerSequence(steps)


def _hold_steps(stg: StateTransitionGraph, state: tuple, wait: int) -> list:
    """A terminal wait: sit in `state` while a collapsed counter runs to
    its target value.  Uses the state's least-constrained self-loop."""
    if wait <= 0:
        return []
    loops = [
        tr
        for tr in stg.transitions
        if tr.src == state and tr.dst == state and tr.repeat == 1
    ]
    if not loops:
        raise TriggerError(
            "counter wait required but the trigger state has no hold transition"
        )
    cond = min(loops, key=lambda tr: (len(tr.condition), tr.condition)).condition
    return [(dict(cond), wait)]
