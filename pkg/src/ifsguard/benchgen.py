"""Deterministic desk-scale Trojan fixture generator.

Each fixture is a small gate-level netlist plus a ground-truth manifest
(asset, valid points, planted malicious points, planted trigger) so the
analysis results can be checked against construction, not against an
external benchmark suite.

Cores: an 8-bit toy block cipher (key-XOR + 4-bit sboxes + permute,
iterated one round per cycle) and a toy processor (4-bit PC +
instruction register).  Trojan trigger/payload families mirror the
usual taxonomy: always-on leaks, input comparators, free-running
counters, input-sequence FSMs, and FSM+counter combinations, delivered
through bypass muxes, XOR/LFSR leak ports, isolated shift registers,
control hijacks, scan-enable hijacks, and key replacement.

Trojan registers are built without reset pins: a dormant Trojan keeps
its state across the victim's resets, which is also what makes the
fixtures exercise the unconstrained-initial-state search path.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Optional

CORES = ("toy-cipher", "toy-processor")
TRIGGERS = ("always-on", "specific-input", "counter", "sequence-fsm", "fsm-counter")
PAYLOADS = (
    "bypass-mux",
    "xor-lfsr-leak",
    "shift-register-leak",
    "key-replacement",
    "control-hijack",
    "scan-enable-hijack",
)

# payload -> required core
COMPAT = {
    "bypass-mux": "toy-cipher",
    "xor-lfsr-leak": "toy-cipher",
    "shift-register-leak": "toy-cipher",
    "key-replacement": "toy-cipher",
    "control-hijack": "toy-processor",
    "scan-enable-hijack": "toy-processor",
}

C17_NETLIST = """\
// ISCAS-85 c17
module c17 (N1, N2, N3, N6, N7, N22, N23);
  input N1; input N2; input N3; input N6; input N7;
  output N22; output N23;
  wire N10; wire N11; wire N16; wire N19;
  NAND g10 (.Y(N10), .A(N1), .B(N3));
  NAND g11 (.Y(N11), .A(N3), .B(N6));
  NAND g16 (.Y(N16), .A(N2), .B(N11));
  NAND g19 (.Y(N19), .A(N11), .B(N7));
  NAND g22 (.Y(N22), .A(N10), .B(N16));
  NAND g23 (.Y(N23), .A(N16), .B(N19));
endmodule
"""


class IncompatibleSpec(ValueError):
    pass


@dataclass(frozen=True)
class FixtureSpec:
    core: str = "toy-cipher"
    trigger: Optional[str] = None
    payload: Optional[str] = None
    counter_width: int = 4
    seq_len: int = 4
    seed: int = 0
    plant: Optional[str] = None  # "latch" | "uncontrollable-ff"

    def validate(self):
        if self.core not in CORES:
            raise IncompatibleSpec(f"unknown core {self.core!r}")
        if self.payload is not None:
            if self.payload not in PAYLOADS:
                raise IncompatibleSpec(f"unknown payload {self.payload!r}")
            if COMPAT[self.payload] != self.core:
                raise IncompatibleSpec(
                    f"payload {self.payload!r} requires core {COMPAT[self.payload]!r}"
                )
            if self.trigger is None:
                raise IncompatibleSpec("a payload needs a trigger (use always-on)")
            if self.trigger not in TRIGGERS:
                raise IncompatibleSpec(f"unknown trigger {self.trigger!r}")
        elif self.trigger is not None:
            raise IncompatibleSpec("trigger without payload")
        if not (2 <= self.counter_width <= 10):
            raise IncompatibleSpec("counter width out of range [2, 10]")
        if not (1 <= self.seq_len <= 6):
            raise IncompatibleSpec("sequence length out of range [1, 6]")
        if self.plant not in (None, "latch", "uncontrollable-ff"):
            raise IncompatibleSpec(f"unknown plant {self.plant!r}")


class _Builder:
    def __init__(self, name: str):
        self.name = name
        self.ports = []
        self.inputs = []
        self.outputs = []
        self.wires = []
        self.stmts = []
        self._n = 0

    def pi(self, name: str) -> str:
        self.ports.append(name)
        self.inputs.append(name)
        return name

    def po(self, name: str) -> str:
        self.ports.append(name)
        self.outputs.append(name)
        return name

    def fresh(self, hint: str = "n") -> str:
        self._n += 1
        return f"{hint}_{self._n}"

    def cell(self, kind: str, out: str, **pins) -> str:
        if out not in self.outputs and out not in self.wires:
            self.wires.append(out)
        body = ", ".join(f".{p}({n})" for p, n in pins.items())
        self._n += 1
        self.stmts.append(f"  {kind} u{self._n} (.Y({out}), {body});")
        return out

    def g(self, kind: str, a: str, b: Optional[str] = None, out: Optional[str] = None) -> str:
        out = out or self.fresh(kind.lower())
        if b is None:
            return self.cell(kind, out, A=a)
        return self.cell(kind, out, A=a, B=b)

    def mux(self, s: str, a: str, b: str, out: Optional[str] = None) -> str:
        """out = a when s=0, b when s=1."""
        out = out or self.fresh("mux")
        return self.cell("MUX2", out, A=a, B=b, S=s)

    def dff(self, d: str, q: str, name: str, rn: Optional[str] = None):
        if q not in self.outputs and q not in self.wires:
            self.wires.append(q)
        pins = f".D({d}), .Q({q}), .CK(ck)"
        if rn is not None:
            pins += f", .RN({rn})"
        self.stmts.append(f"  DFF {name} ({pins});")

    def and_tree(self, nets: list, out: Optional[str] = None) -> str:
        assert nets
        while len(nets) > 1:
            nxt = []
            for i in range(0, len(nets) - 1, 2):
                nxt.append(self.g("AND", nets[i], nets[i + 1]))
            if len(nets) % 2:
                nxt.append(nets[-1])
            nets = nxt
        if out is not None:
            return self.g("BUF", nets[0], out=out)
        return nets[0]

    def eq_const(self, nets: list, value: int, out: Optional[str] = None) -> str:
        terms = [
            n if (value >> i) & 1 else self.g("NOT", n)
            for i, n in enumerate(nets)
        ]
        return self.and_tree(terms, out)

    def increment(self, nets: list) -> list:
        """value+1 over an LSB-first bit list (wraps at all-ones)."""
        out = [self.g("NOT", nets[0])]
        carry = nets[0]
        for i in range(1, len(nets)):
            out.append(self.g("XOR", nets[i], carry))
            if i + 1 < len(nets):
                carry = self.g("AND", nets[i], carry)
        return out

    def emit(self) -> str:
        lines = [f"module {self.name} ({', '.join(self.ports)});"]
        lines += [f"  input {n};" for n in self.inputs]
        lines += [f"  output {n};" for n in self.outputs]
        lines += [f"  wire {n};" for n in self.wires]
        lines += self.stmts
        lines.append("endmodule")
        return "\n".join(lines) + "\n"


def _cipher_core(b: _Builder):
    """st' = ld ? pt : permute(sbox(st xor key)); ct mirrors st."""
    b.pi("ck")
    b.pi("rst_n")
    b.pi("ld")
    pt = [b.pi(f"pt[{i}]") for i in range(8)]
    key = [b.pi(f"key[{i}]") for i in range(8)]
    ct = [b.po(f"ct[{i}]") for i in range(8)]
    st = [f"st[{i}]" for i in range(8)]
    x = [b.g("XOR", st[i], key[i], out=f"ark[{i}]") for i in range(8)]
    s = []
    for nib in (0, 4):
        for i in range(4):
            a = x[nib + (i + 1) % 4]
            c = x[nib + (i + 2) % 4]
            s.append(b.g("XOR", x[nib + i], b.g("AND", a, c), out=f"sb[{nib + i}]"))
    m = [
        b.g("XOR", s[(i + 3) % 8], s[(i + 5) % 8], out=f"mix[{i}]")
        for i in range(8)
    ]
    d = [b.mux(b.inputs[2], m[i], pt[i], out=f"st_d[{i}]") for i in range(8)]
    for i in range(8):
        b.dff(d[i], st[i], f"st_reg[{i}]", rn="rst_n")
        b.g("BUF", st[i], out=ct[i])
    return {"pt": pt, "key": key, "ct": ct, "st": st, "st_d": d}


def _processor_core(b: _Builder):
    """4-bit PC with an instruction register supplying branch targets."""
    b.pi("ck")
    b.pi("rst_n")
    br = b.pi("br")
    ins = [b.pi(f"ins[{i}]") for i in range(4)]
    pc = [b.po(f"pc[{i}]") for i in range(4)]
    ir = [f"ir[{i}]" for i in range(4)]
    for i in range(4):
        b.dff(ins[i], ir[i], f"ir_reg[{i}]", rn="rst_n")
    inc = b.increment(pc)
    d = [b.mux(br, inc[i], ir[i], out=f"pc_d[{i}]") for i in range(4)]
    for i in range(4):
        b.dff(d[i], pc[i], f"pc_reg[{i}]")
    return {"br": br, "ins": ins, "pc": pc, "ir": ir, "pc_d": d}


def _build_trigger(b: _Builder, spec: FixtureSpec, rng: random.Random, core):
    """Returns (trig net or None for always-on, trigger manifest)."""
    kind = spec.trigger
    if kind == "always-on":
        return None, {"kind": "always-on"}
    if spec.core == "toy-cipher":
        data = core["pt"]
    else:
        data = core["ins"]
    if kind == "specific-input":
        magic = rng.randrange(1 << len(data))
        trig = b.eq_const(data, magic, out="trig")
        return trig, {
            "kind": "specific-input",
            "inputs": {
                data[i]: (magic >> i) & 1 for i in range(len(data))
            },
        }
    if kind == "counter":
        k = spec.counter_width
        target = (1 << k) - rng.randrange(2, min(8, 1 << k))
        cnt = [f"tcnt[{i}]" for i in range(k)]
        nxt = b.increment(cnt)
        for i in range(k):
            b.dff(nxt[i], cnt[i], f"tcnt_reg[{i}]")
        trig = b.eq_const(cnt, target, out="trig")
        return trig, {
            "kind": "counter",
            "registers": [f"tcnt_reg[{i}]" for i in range(k)],
            "register_values": {
                f"tcnt_reg[{i}]": (target >> i) & 1 for i in range(k)
            },
            "width": k,
            "target": target,
        }
    if kind in ("sequence-fsm", "fsm-counter"):
        n = spec.seq_len
        patterns = []
        seen = set()
        while len(patterns) < n:
            p = rng.randrange(1 << len(data))
            if p not in seen:
                seen.add(p)
                patterns.append(p)
        bits = max(1, (n + 1).bit_length() - (0 if (n + 1) & n else 1))
        while (1 << bits) < n + 1:
            bits += 1
        stq = [f"tst[{i}]" for i in range(bits)]
        # advance on the expected pattern, fall back to state 0 otherwise;
        # the final (armed) state holds forever
        match = [b.eq_const(data, p) for p in patterns]
        at = [b.eq_const(stq, i) for i in range(n + 1)]
        adv = []  # per state bit: OR of (state==i & match_i) for targets with bit set
        for j in range(bits):
            terms = []
            for i in range(n):
                if ((i + 1) >> j) & 1:
                    terms.append(b.g("AND", at[i], match[i]))
            if terms:
                acc = terms[0]
                for t in terms[1:]:
                    acc = b.g("OR", acc, t)
            else:
                acc = b.g("AND", stq[0], b.g("NOT", stq[0]))  # constant 0
            adv.append(acc)
        armed = b.g("BUF", at[n], out="armed")
        d = [
            b.mux(armed, adv[j], armed if ((n >> j) & 1) else b.g("NOT", armed))
            for j in range(bits)
        ]
        for j in range(bits):
            b.dff(d[j], stq[j], f"tst_reg[{j}]")
        manifest = {
            "kind": kind,
            "fsm_registers": [f"tst_reg[{j}]" for j in range(bits)],
            "armed_state": n,
            "sequence": [
                {data[i]: (p >> i) & 1 for i in range(len(data))}
                for p in patterns
            ],
        }
        if kind == "sequence-fsm":
            trig = b.g("BUF", armed, out="trig")
            manifest["register_values"] = {
                f"tst_reg[{j}]": (n >> j) & 1 for j in range(bits)
            }
            return trig, manifest
        k = spec.counter_width
        cnt = [f"tcnt[{i}]" for i in range(k)]
        nxt = b.increment(cnt)
        gated = [b.g("AND", armed, nxt[i]) for i in range(k)]
        for i in range(k):
            b.dff(gated[i], cnt[i], f"tcnt_reg[{i}]")
        full = b.eq_const(cnt, (1 << k) - 1)
        trig = b.g("AND", armed, full, out="trig")
        manifest.update(
            {
                "counter_registers": [f"tcnt_reg[{i}]" for i in range(k)],
                "width": k,
                "target": (1 << k) - 1,
                "register_values": {
                    **{f"tst_reg[{j}]": (n >> j) & 1 for j in range(bits)},
                    **{f"tcnt_reg[{i}]": 1 for i in range(k)},
                },
                "wait_cycles": (1 << k) - 1,
            }
        )
        return trig, manifest
    raise IncompatibleSpec(f"unknown trigger {kind!r}")


def _pts(kind, names):
    return [{"kind": kind, "name": n} for n in names]


def generate(spec: FixtureSpec):
    """Build the fixture; returns (netlist text, manifest dict)."""
    spec.validate()
    rng = random.Random(spec.seed)
    b = _Builder(f"fx_{spec.core.replace('-', '_')}_{spec.seed}")
    core = _cipher_core(b) if spec.core == "toy-cipher" else _processor_core(b)
    manifest = {
        "module": b.name,
        "core": spec.core,
        "payload": spec.payload,
        "seed": spec.seed,
    }
    if spec.core == "toy-cipher":
        manifest["asset"] = {"name": "key[0]", "kind": "confidentiality"}
        manifest["valid_points"] = _pts("po", core["ct"])
    trig = None
    if spec.payload is not None:
        trig, tman = _build_trigger(b, spec, rng, core)
        manifest["trigger"] = tman
        _build_payload(b, spec, rng, core, trig, manifest)
    else:
        manifest["trigger"] = None
        manifest["malicious_points"] = []
        if spec.core == "toy-processor":
            manifest["asset"] = {"name": "pc_d[0]", "kind": "integrity"}
            manifest["valid_points"] = _pts("pi", ["br"] + core["ins"]) + _pts(
                "ff", [f"ir_reg[{i}]" for i in range(4)]
            )
    if spec.plant == "latch":
        b.cell("NAND", "lt_q", A="pt[0]" if spec.core == "toy-cipher" else "ins[0]", B="lt_qb")
        b.cell(
            "NAND",
            "lt_qb",
            A="pt[1]" if spec.core == "toy-cipher" else "ins[1]",
            B="lt_q",
        )
        manifest["plant"] = "latch"
    elif spec.plant == "uncontrollable-ff":
        src = "pt[0]" if spec.core == "toy-cipher" else "ins[0]"
        zero = b.g("AND", src, b.g("NOT", src), out="uc_ck")
        b.dff(src, "uc_q", "uc_reg")
        # rewrite the clock of uc_reg to the constant net
        b.stmts[-1] = b.stmts[-1].replace(".CK(ck)", f".CK({zero})")
        manifest["plant"] = "uncontrollable-ff"
    else:
        manifest["plant"] = None
    return b.emit(), manifest


def _build_payload(b, spec, rng, core, trig, manifest):
    payload = spec.payload
    if payload == "bypass-mux":
        # re-route ct[0]: key[0] replaces the state bit when triggered
        b.outputs.remove("ct[0]")
        b.wires.append("ct_orig[0]")
        b.stmts = [
            s.replace(".Y(ct[0])", ".Y(ct_orig[0])") for s in b.stmts
        ]
        b.outputs.append("ct[0]")
        if trig is None:
            b.g("BUF", "key[0]", out="ct[0]")
        else:
            b.mux(trig, "ct_orig[0]", "key[0]", out="ct[0]")
        manifest["malicious_points"] = []  # Type I: no new observe point
        manifest["bypass_point"] = {"kind": "po", "name": "ct[0]"}
    elif payload in ("xor-lfsr-leak", "shift-register-leak"):
        # 4-bit autonomous LFSR spreads the leak; a 4-stage shift
        # register accumulates key XOR lfsr
        lq = [f"lfsr[{i}]" for i in range(4)]
        fb = b.g("XNOR", lq[3], lq[2])
        for i, d in enumerate([fb, lq[0], lq[1], lq[2]]):
            b.dff(d, lq[i], f"lfsr_reg[{i}]")
        sq = [f"lsr[{i}]" for i in range(4)]
        leak_in = b.g("XOR", "key[0]", lq[0])
        if trig is not None:
            leak_in = b.mux(trig, sq[0], leak_in)
        for i, d in enumerate([leak_in, sq[0], sq[1], sq[2]]):
            b.dff(d, sq[i], f"lsr_reg[{i}]")
        mal = _pts("ff", [f"lsr_reg[{i}]" for i in range(4)])
        if payload == "xor-lfsr-leak":
            b.po("lk")
            b.g("BUF", sq[3], out="lk")
            mal = _pts("po", ["lk"]) + mal
        manifest["malicious_points"] = mal
    elif payload == "key-replacement":
        # effective key bit 0 swapped for an attacker constant (1)
        const1 = b.g("OR", "key[0]", b.g("NOT", "key[0]"))
        if trig is None:
            kx = b.g("BUF", const1, out="kx[0]")
        else:
            kx = b.mux(trig, "key[0]", const1, out="kx[0]")
        b.stmts = [
            s.replace(".Y(ark[0]), .A(st[0]), .B(key[0])", ".Y(ark[0]), .A(st[0]), .B(kx[0])")
            for s in b.stmts
        ]
        manifest["asset"] = {"name": "kx[0]", "kind": "integrity"}
        manifest["valid_points"] = _pts("pi", ["key[0]"])
        manifest["malicious_points"] = _trigger_source_points(spec, manifest)
    elif payload == "control-hijack":
        # force the PC to the attack vector when triggered
        attack = rng.randrange(1 << 4) | 0x8
        if trig is not None:
            for i in range(4):
                av = (
                    b.g("OR", core["pc"][i], b.g("NOT", core["pc"][i]))
                    if (attack >> i) & 1
                    else b.g("AND", core["pc"][i], b.g("NOT", core["pc"][i]))
                )
                b.stmts = [
                    s.replace(f".Y(pc_d[{i}]),", f".Y(pc_n[{i}]),") for s in b.stmts
                ]
                b.wires.append(f"pc_n[{i}]")
                b.mux(trig, f"pc_n[{i}]", av, out=f"pc_d[{i}]")
        manifest["asset"] = {"name": "pc_d[0]", "kind": "integrity"}
        manifest["valid_points"] = _pts("pi", ["br"] + core["ins"]) + _pts(
            "ff", [f"ir_reg[{i}]" for i in range(4)]
        )
        manifest["malicious_points"] = _trigger_source_points(spec, manifest)
        manifest["attack_vector"] = attack
    elif payload == "scan-enable-hijack":
        se = b.pi("se")
        if trig is None:
            b.g("OR", se, se, out="se_int")
        else:
            b.g("OR", se, trig, out="se_int")
        b.po("so")
        b.g("AND", "se_int", core["pc"][0], out="so")
        manifest["asset"] = {"name": "se_int", "kind": "integrity"}
        manifest["valid_points"] = _pts("pi", ["se"])
        manifest["malicious_points"] = _trigger_source_points(spec, manifest)
    else:  # pragma: no cover
        raise IncompatibleSpec(f"unknown payload {payload!r}")


def _trigger_source_points(spec, manifest):
    """Control points the planted trigger logic introduces."""
    t = manifest["trigger"]
    pts = []
    if t["kind"] == "counter":
        pts += _pts("ff", t["registers"])
    elif t["kind"] in ("sequence-fsm", "fsm-counter"):
        pts += _pts("ff", t["fsm_registers"])
        if t["kind"] == "fsm-counter":
            pts += _pts("ff", t["counter_registers"])
        pts += _pts("pi", sorted(t["sequence"][0]))
    elif t["kind"] == "specific-input":
        pts += _pts("pi", sorted(t["inputs"]))
    return pts


def manifest_json(manifest: dict) -> str:
    return json.dumps(manifest, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Random small circuits for oracle-equivalence testing


_RAND_KINDS = ("AND", "OR", "NAND", "NOR", "XOR", "XNOR", "NOT", "MUX2")


def random_fixture(seed: int) -> str:
    """A random small sequential netlist: <= 5 data PI bits, <= 3 FFs,
    well within the exhaustive taint oracle's reach."""
    rng = random.Random(seed)
    n_pi = rng.randint(2, 5)
    n_cells = rng.randint(4, 10)
    n_ff = rng.randint(1, 3)
    nets = [f"i{k}" for k in range(n_pi)]
    lines = [f"  input ck;"] + [f"  input {n};" for n in nets]
    wires = []
    stmts = []
    for c in range(n_cells):
        out = f"w{c}"
        kind = rng.choice(_RAND_KINDS)
        if kind == "NOT":
            stmts.append(f"  NOT c{c} (.Y({out}), .A({rng.choice(nets)}));")
        elif kind == "MUX2":
            s, a, b = (rng.choice(nets) for _ in range(3))
            stmts.append(f"  MUX2 c{c} (.Y({out}), .A({a}), .B({b}), .S({s}));")
        else:
            a, x = rng.choice(nets), rng.choice(nets)
            stmts.append(f"  {kind} c{c} (.Y({out}), .A({a}), .B({x}));")
        wires.append(out)
        nets.append(out)
    for f in range(n_ff):
        q = f"q{f}"
        stmts.append(f"  DFF f{f} (.D({rng.choice(nets)}), .Q({q}), .CK(ck));")
        wires.append(q)
        nets.append(q)
    pis = ", ".join(n for n in nets if n.startswith("i"))
    out_src = rng.choice([n for n in nets if not n.startswith("i")])
    header = f"module rnd{seed} (ck, {pis}, o);"
    body = (
        lines
        + ["  output o;"]
        + [f"  wire {w};" for w in wires]
        + stmts
        + [f"  BUF ob (.Y(o), .A({out_src}));"]
    )
    return "\n".join([header] + body + ["endmodule"]) + "\n"
