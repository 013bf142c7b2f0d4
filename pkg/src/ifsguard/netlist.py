"""Structural gate-level netlist front-end.

Parses the fixed netlist subset (module header, input/output/wire
declarations, primitive and DFF instantiations) into an immutable
:class:`CircuitGraph`, and provides the :class:`ScanConfig` overlay that
the partial-scan analyses mutate instead of the graph itself.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Optional

GATE_KINDS = {
    "AND": 2,
    "OR": 2,
    "NAND": 2,
    "NOR": 2,
    "XOR": 2,
    "XNOR": 2,
    "NOT": 1,
    "BUF": 1,
    "MUX2": 3,  # inputs ordered (S, A, B); Y = A when S=0 else B
}

IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_/.\[\]]*")


class NetlistError(Exception):
    """Parse or validation failure, carrying the offending source line."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Net:
    id: int
    name: str
    driver: Optional[tuple]  # ("pi", net_id) | ("cell", cell_id) | ("ff", ff_id)
    sinks: tuple  # of ("cell"|"ff", element_id, pin)


@dataclass(frozen=True)
class Cell:
    id: int
    name: str
    kind: str
    inputs: tuple  # net ids, ordered; MUX2: (S, A, B)
    output: int
    line: int


@dataclass(frozen=True)
class Reset:
    net: int
    polarity: int  # active level of the reset pin
    kind: str  # "sync" | "async"
    value: int  # register value while reset is asserted


@dataclass(frozen=True)
class FlipFlop:
    id: int
    name: str
    d: int
    q: int
    clock: int
    reset: Optional[Reset]
    line: int

    @property
    def resettable(self) -> bool:
        return self.reset is not None


@dataclass(frozen=True)
class LatchGroup:
    """Cross-coupled cell pair recorded as a latch rather than rejected."""

    cells: tuple  # cell ids
    outputs: tuple  # net ids driven by the group
    line: int


@dataclass(frozen=True, order=True)
class Point:
    """An observe/control endpoint: primary I/O net or flip-flop boundary."""

    kind: str  # "pi" | "po" | "ff"
    ref: int  # net id for pi/po, flip-flop id for ff


@dataclass(frozen=True)
class CircuitGraph:
    name: str
    nets: tuple  # Net, indexed by id
    cells: tuple
    flipflops: tuple
    inputs: tuple  # net ids in declaration order
    outputs: tuple  # net ids in declaration order
    ports: tuple  # header port names in order
    latches: tuple  # LatchGroup
    uncontrollable_ffs: tuple  # (ff_id, reason)
    net_index: dict = field(compare=False, repr=False, default_factory=dict)

    def net_by_name(self, name: str) -> Net:
        try:
            return self.nets[self.net_index[name]]
        except KeyError:
            raise NetlistError(f"unknown net {name!r}")

    def ff_by_name(self, name: str) -> FlipFlop:
        for ff in self.flipflops:
            if ff.name == name:
                return ff
        raise NetlistError(f"unknown flip-flop {name!r}")

    @property
    def input_set(self) -> frozenset:
        return frozenset(self.inputs)

    @property
    def output_set(self) -> frozenset:
        return frozenset(self.outputs)

    def point_name(self, p: Point) -> str:
        if p.kind == "ff":
            return self.flipflops[p.ref].name
        return self.nets[p.ref].name

    def point_net(self, p: Point) -> int:
        """Net carrying the point's observable/controllable value."""
        if p.kind == "ff":
            return self.flipflops[p.ref].q
        return p.ref

    def latch_cells(self) -> frozenset:
        return frozenset(c for g in self.latches for c in g.cells)


# ---------------------------------------------------------------------------
# Parsing


_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)|(?P<comment>//[^\n]*)|(?P<id>[A-Za-z_][A-Za-z0-9_/.\[\]]*)"
    r"|(?P<punct>[(),.;])"
)


def _tokenize(source: str):
    tokens = []
    line = 1
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if not m:
            raise NetlistError(f"unexpected character {source[pos]!r}", line)
        if m.lastgroup == "id":
            tokens.append((m.group(), line))
        elif m.lastgroup == "punct":
            tokens.append((m.group(), line))
        line += m.group().count("\n")
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        if self.pos >= len(self.tokens):
            raise NetlistError("unexpected end of input")
        return self.tokens[self.pos]

    def next(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def expect(self, value):
        tok, line = self.next()
        if tok != value:
            raise NetlistError(f"expected {value!r}, found {tok!r}", line)
        return line

    def expect_ident(self):
        tok, line = self.next()
        if tok in "(),.;" or tok in ("module", "endmodule"):
            raise NetlistError(f"expected identifier, found {tok!r}", line)
        return tok, line

    def at_end(self):
        return self.pos >= len(self.tokens)


def parse_netlist(source: str) -> CircuitGraph:
    """Parse netlist text and validate it into a :class:`CircuitGraph`.

    Latches (cross-coupled NAND/NOR pairs) and uncontrollable flip-flops
    are recorded on the graph, not rejected; everything else that breaks
    an invariant raises :class:`NetlistError` with the source line.
    """
    p = _Parser(_tokenize(source))
    p.expect("module")
    mod_name, _ = p.expect_ident()
    p.expect("(")
    ports = []
    while True:
        name, _ = p.expect_ident()
        ports.append(name)
        tok, line = p.next()
        if tok == ")":
            break
        if tok != ",":
            raise NetlistError(f"expected ',' or ')', found {tok!r}", line)
    p.expect(";")

    decl_order: list[str] = []
    decl_kind: dict[str, str] = {}
    decl_line: dict[str, int] = {}
    instantiations = []  # (kind, inst_name, {pin: net_name}, line)

    while True:
        tok, line = p.next()
        if tok == "endmodule":
            break
        if tok in ("input", "output", "wire"):
            while True:
                name, nline = p.expect_ident()
                if name in decl_kind:
                    raise NetlistError(f"net {name!r} declared twice", nline)
                decl_kind[name] = tok
                decl_line[name] = nline
                decl_order.append(name)
                sep, sline = p.next()
                if sep == ";":
                    break
                if sep != ",":
                    raise NetlistError(f"expected ',' or ';', found {sep!r}", sline)
        elif tok in GATE_KINDS or tok == "DFF":
            inst, _ = p.expect_ident()
            p.expect("(")
            pins = {}
            while True:
                p.expect(".")
                pin, pline = p.expect_ident()
                p.expect("(")
                net, _ = p.expect_ident()
                p.expect(")")
                if pin in pins:
                    raise NetlistError(f"pin .{pin} connected twice", pline)
                pins[pin] = net
                sep, sline = p.next()
                if sep == ")":
                    break
                if sep != ",":
                    raise NetlistError(f"expected ',' or ')', found {sep!r}", sline)
            p.expect(";")
            instantiations.append((tok, inst, pins, line))
        else:
            raise NetlistError(f"unexpected token {tok!r}", line)
    if not p.at_end():
        tok, line = p.peek()
        raise NetlistError(f"trailing input after endmodule: {tok!r}", line)

    return _build_graph(mod_name, ports, decl_order, decl_kind, decl_line, instantiations)


def _build_graph(mod_name, ports, decl_order, decl_kind, decl_line, instantiations):
    net_index = {name: i for i, name in enumerate(decl_order)}
    for name in ports:
        if name not in net_index:
            raise NetlistError(f"port {name!r} has no input/output declaration")
    for name, kind in decl_kind.items():
        if kind in ("input", "output") and name not in ports:
            raise NetlistError(
                f"{kind} {name!r} missing from module port list", decl_line[name]
            )

    n = len(decl_order)
    drivers: list[Optional[tuple]] = [None] * n
    driver_lines = [0] * n
    sinks: list[list] = [[] for _ in range(n)]
    inputs = [net_index[x] for x in decl_order if decl_kind[x] == "input"]
    outputs = [net_index[x] for x in decl_order if decl_kind[x] == "output"]

    for nid in inputs:
        drivers[nid] = ("pi", nid)

    def resolve(name, line):
        if name not in net_index:
            raise NetlistError(f"undeclared net {name!r}", line)
        return net_index[name]

    def set_driver(nid, ref, line):
        if drivers[nid] is not None:
            raise NetlistError(
                f"net {decl_order[nid]!r} driven more than once "
                f"(previous driver at line {driver_lines[nid]})"
                if drivers[nid][0] != "pi"
                else f"net {decl_order[nid]!r} is a primary input and cannot be driven",
                line,
            )
        drivers[nid] = ref
        driver_lines[nid] = line

    cells: list[Cell] = []
    ffs: list[FlipFlop] = []
    inst_names = set()
    for kind, inst, pins, line in instantiations:
        if inst in inst_names:
            raise NetlistError(f"instance name {inst!r} reused", line)
        inst_names.add(inst)
        if kind == "DFF":
            allowed = {"D", "Q", "CK", "RN"}
            required = {"D", "Q", "CK"}
            extra = set(pins) - allowed
            missing = required - set(pins)
            if extra or missing:
                raise NetlistError(
                    f"DFF {inst!r}: bad pin set {sorted(pins)}", line
                )
            fid = len(ffs)
            d = resolve(pins["D"], line)
            q = resolve(pins["Q"], line)
            ck = resolve(pins["CK"], line)
            reset = None
            if "RN" in pins:
                rn = resolve(pins["RN"], line)
                reset = Reset(net=rn, polarity=0, kind="async", value=0)
                sinks[rn].append(("ff", fid, "RN"))
            set_driver(q, ("ff", fid), line)
            sinks[d].append(("ff", fid, "D"))
            sinks[ck].append(("ff", fid, "CK"))
            ffs.append(FlipFlop(fid, inst, d, q, ck, reset, line))
        else:
            pin_order = {1: ("A",), 2: ("A", "B"), 3: ("S", "A", "B")}[GATE_KINDS[kind]]
            expected = set(pin_order) | {"Y"}
            if set(pins) != expected:
                raise NetlistError(
                    f"{kind} {inst!r}: expected pins {sorted(expected)}, "
                    f"got {sorted(pins)}",
                    line,
                )
            cid = len(cells)
            ins = tuple(resolve(pins[pn], line) for pn in pin_order)
            out = resolve(pins["Y"], line)
            set_driver(out, ("cell", cid), line)
            for pn, nid in zip(pin_order, ins):
                sinks[nid].append(("cell", cid, pn))
            cells.append(Cell(cid, inst, kind, ins, out, line))

    # no duplicate (element, pin) sink entries by construction; assert anyway
    for nid, slist in enumerate(sinks):
        if len(slist) != len(set(slist)):
            raise NetlistError(f"net {decl_order[nid]!r} has duplicate sinks")

    # undriven nets may not be used
    for nid, slist in enumerate(sinks):
        if drivers[nid] is None and slist:
            line = min(
                cells[e].line if k == "cell" else ffs[e].line for k, e, _ in slist
            )
            raise NetlistError(f"undriven net {decl_order[nid]!r} used as input", line)
    for nid in outputs:
        if drivers[nid] is None:
            raise NetlistError(
                f"primary output {decl_order[nid]!r} is undriven", decl_line[decl_order[nid]]
            )

    latches = _find_latches(cells, drivers)
    latch_cells = frozenset(c for g in latches for c in g.cells)
    _check_acyclic(cells, drivers, latch_cells)

    nets = tuple(
        Net(i, decl_order[i], drivers[i], tuple(sinks[i])) for i in range(n)
    )
    graph = CircuitGraph(
        name=mod_name,
        nets=nets,
        cells=tuple(cells),
        flipflops=tuple(ffs),
        inputs=tuple(inputs),
        outputs=tuple(outputs),
        ports=tuple(ports),
        latches=tuple(latches),
        uncontrollable_ffs=(),
        net_index=net_index,
    )
    uncontrollable = tuple(_find_uncontrollable(graph))
    return CircuitGraph(
        name=graph.name,
        nets=graph.nets,
        cells=graph.cells,
        flipflops=graph.flipflops,
        inputs=graph.inputs,
        outputs=graph.outputs,
        ports=graph.ports,
        latches=graph.latches,
        uncontrollable_ffs=uncontrollable,
        net_index=net_index,
    )


def _cell_adjacency(cells, drivers):
    """cell -> cells it feeds, through nets only (FF boundaries cut)."""
    out_cells = {}
    for c in cells:
        for nid in c.inputs:
            drv = drivers[nid]
            if drv is not None and drv[0] == "cell":
                out_cells.setdefault(drv[1], []).append(c.id)
    return out_cells


def _find_latches(cells, drivers):
    """Cross-coupled NAND/NOR pairs are latches; record, don't reject."""
    latches = []
    for c in cells:
        if c.kind not in ("NAND", "NOR"):
            continue
        for nid in c.inputs:
            drv = drivers[nid]
            if drv is None or drv[0] != "cell":
                continue
            other = cells[drv[1]]
            if other.id <= c.id or other.kind != c.kind:
                continue
            if c.output in other.inputs:
                latches.append(
                    LatchGroup(
                        cells=(c.id, other.id),
                        outputs=(c.output, other.output),
                        line=min(c.line, other.line),
                    )
                )
    return latches


def _check_acyclic(cells, drivers, latch_cells):
    """Topological check of the combinational subgraph (latch cells excluded)."""
    adj = _cell_adjacency(cells, drivers)
    indeg = {c.id: 0 for c in cells if c.id not in latch_cells}
    for src, dsts in adj.items():
        if src in latch_cells:
            continue
        for d in dsts:
            if d in indeg:
                indeg[d] += 1
    queue = sorted(cid for cid, deg in indeg.items() if deg == 0)
    seen = 0
    while queue:
        cid = queue.pop()
        seen += 1
        for d in adj.get(cid, ()):
            if d in indeg:
                indeg[d] -= 1
                if indeg[d] == 0:
                    queue.append(d)
    if seen != len(indeg):
        cyclic = [cid for cid, deg in indeg.items() if deg > 0]
        line = min(cells[c].line for c in cyclic)
        raise NetlistError("combinational cycle", line)


def topo_cells(graph: CircuitGraph) -> list:
    """Cells in evaluation order, latch cells excluded."""
    drivers = [net.driver for net in graph.nets]
    latch_cells = graph.latch_cells()
    adj = _cell_adjacency(graph.cells, drivers)
    indeg = {c.id: 0 for c in graph.cells if c.id not in latch_cells}
    for src, dsts in adj.items():
        if src in latch_cells:
            continue
        for d in dsts:
            if d in indeg:
                indeg[d] += 1
    import heapq

    heap = [cid for cid, deg in indeg.items() if deg == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        cid = heapq.heappop(heap)
        order.append(cid)
        for d in adj.get(cid, ()):
            if d in indeg:
                indeg[d] -= 1
                if indeg[d] == 0:
                    heapq.heappush(heap, d)
    return order


def _support(graph: CircuitGraph, net: int) -> set:
    """Free sources (PI nets, FF q nets, latch outputs) feeding `net`."""
    latch_outputs = {o for g in graph.latches for o in g.outputs}
    seen = set()
    stack = [net]
    free = set()
    while stack:
        nid = stack.pop()
        if nid in seen:
            continue
        seen.add(nid)
        drv = graph.nets[nid].driver
        if drv is None or drv[0] in ("pi", "ff") or nid in latch_outputs:
            free.add(nid)
        elif drv[0] == "cell":
            stack.extend(graph.cells[drv[1]].inputs)
    return free


def cone_is_constant(graph: CircuitGraph, net: int, max_support: int = 16):
    """Exhaustively evaluate `net`'s cone; return 0/1 if constant, else None.

    Gives up (returns None) when the cone has more than `max_support`
    free sources.
    """
    free = sorted(_support(graph, net))
    if len(free) > max_support:
        return None
    order = topo_cells(graph)
    # restrict to cells in the cone for speed
    needed = set()
    stack = [net]
    while stack:
        nid = stack.pop()
        drv = graph.nets[nid].driver
        if drv is not None and drv[0] == "cell" and drv[1] not in needed:
            if drv[1] in graph.latch_cells():
                continue
            needed.add(drv[1])
            stack.extend(graph.cells[drv[1]].inputs)
    cone = [cid for cid in order if cid in needed]
    from .sim import eval_cell

    first = None
    for bits in product((0, 1), repeat=len(free)):
        values = dict(zip(free, bits))
        for cid in cone:
            c = graph.cells[cid]
            values[c.output] = eval_cell(c.kind, [values.get(i, 0) for i in c.inputs])
        v = values.get(net, 0)
        if first is None:
            first = v
        elif v != first:
            return None
    return first


def _find_uncontrollable(graph: CircuitGraph):
    for ff in graph.flipflops:
        ck_const = cone_is_constant(graph, ff.clock)
        if ck_const is not None:
            yield (ff.id, f"uncontrollable: constant clock ({ck_const})")
            continue
        d_const = cone_is_constant(graph, ff.d)
        if d_const is not None:
            yield (ff.id, f"uncontrollable: constant data ({d_const})")


def report_unanalyzable(graph: CircuitGraph) -> list:
    """Latches and uncontrollable FFs with names and source locations."""
    entries = []
    for g in graph.latches:
        names = "/".join(graph.cells[c].name for c in g.cells)
        entries.append((names, f"latch (cross-coupled cells, line {g.line})"))
    for fid, reason in graph.uncontrollable_ffs:
        ff = graph.flipflops[fid]
        entries.append((ff.name, f"{reason}, line {ff.line}"))
    return entries


# ---------------------------------------------------------------------------
# Emission and JSON dump


def emit_netlist(graph: CircuitGraph) -> str:
    lines = [f"module {graph.name} ({', '.join(graph.ports)});"]
    names = [n.name for n in graph.nets]
    for kw, ids in (("input", graph.inputs), ("output", graph.outputs)):
        for nid in ids:
            lines.append(f"  {kw} {names[nid]};")
    pio = set(graph.inputs) | set(graph.outputs)
    for net in graph.nets:
        if net.id not in pio:
            lines.append(f"  wire {net.name};")
    for c in graph.cells:
        pin_order = {1: ("A",), 2: ("A", "B"), 3: ("S", "A", "B")}[GATE_KINDS[c.kind]]
        pins = [f".Y({names[c.output]})"]
        pins += [f".{pn}({names[nid]})" for pn, nid in zip(pin_order, c.inputs)]
        lines.append(f"  {c.kind} {c.name} ({', '.join(pins)});")
    for ff in graph.flipflops:
        pins = [f".D({names[ff.d]})", f".Q({names[ff.q]})", f".CK({names[ff.clock]})"]
        if ff.reset is not None:
            pins.append(f".RN({names[ff.reset.net]})")
        lines.append(f"  DFF {ff.name} ({', '.join(pins)});")
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


def graph_to_json(graph: CircuitGraph) -> str:
    """Deterministic JSON dump for golden-file comparisons."""
    doc = {
        "module": graph.name,
        "inputs": [graph.nets[i].name for i in graph.inputs],
        "outputs": [graph.nets[i].name for i in graph.outputs],
        "nets": [
            {"id": n.id, "name": n.name, "driver": list(n.driver) if n.driver else None}
            for n in graph.nets
        ],
        "cells": [
            {
                "id": c.id,
                "name": c.name,
                "kind": c.kind,
                "inputs": [graph.nets[i].name for i in c.inputs],
                "output": graph.nets[c.output].name,
            }
            for c in graph.cells
        ],
        "flipflops": [
            {
                "id": f.id,
                "name": f.name,
                "d": graph.nets[f.d].name,
                "q": graph.nets[f.q].name,
                "clock": graph.nets[f.clock].name,
                "reset": graph.nets[f.reset.net].name if f.reset else None,
            }
            for f in graph.flipflops
        ],
        "latches": [
            {"cells": [graph.cells[c].name for c in g.cells], "line": g.line}
            for g in graph.latches
        ],
        "uncontrollable_ffs": [
            {"name": graph.flipflops[fid].name, "reason": reason}
            for fid, reason in graph.uncontrollable_ffs
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Scan overlay


@dataclass(frozen=True)
class ScanConfig:
    """Virtual scan membership and capture masking; the graph never mutates."""

    scan_enabled: frozenset = frozenset()  # FF ids
    capture_masked: frozenset = frozenset()  # Points


def _check_ffs(graph: CircuitGraph, ffs: Iterable[int]):
    for fid in ffs:
        if not (0 <= fid < len(graph.flipflops)):
            raise NetlistError(f"unknown flip-flop id {fid}")


def full_scan(graph: CircuitGraph) -> ScanConfig:
    return ScanConfig(scan_enabled=frozenset(ff.id for ff in graph.flipflops))


def add_scan_ability(graph: CircuitGraph, cfg: ScanConfig, ffs: Iterable[int]) -> ScanConfig:
    ffs = frozenset(ffs)
    _check_ffs(graph, ffs)
    return ScanConfig(cfg.scan_enabled | ffs, cfg.capture_masked)


def remove_scan_ability(graph: CircuitGraph, cfg: ScanConfig, ff: int) -> ScanConfig:
    _check_ffs(graph, [ff])
    # a non-scan FF is unobservable, so any capture mask on it is dropped
    masked = frozenset(
        p for p in cfg.capture_masked if not (p.kind == "ff" and p.ref == ff)
    )
    return ScanConfig(cfg.scan_enabled - {ff}, masked)


def _maskable(graph: CircuitGraph, cfg: ScanConfig, point: Point) -> bool:
    if point.kind == "po":
        return point.ref in graph.output_set
    if point.kind == "ff":
        return point.ref in cfg.scan_enabled
    return False


def mask(graph: CircuitGraph, cfg: ScanConfig, points: Iterable[Point]) -> ScanConfig:
    points = frozenset(points)
    for p in points:
        if not _maskable(graph, cfg, p):
            raise NetlistError(
                f"point {p} is neither a primary output nor a scan-enabled FF"
            )
    return ScanConfig(cfg.scan_enabled, cfg.capture_masked | points)


def unmask(graph: CircuitGraph, cfg: ScanConfig, point: Point) -> ScanConfig:
    return ScanConfig(cfg.scan_enabled, cfg.capture_masked - {point})
