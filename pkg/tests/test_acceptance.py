"""Acceptance gate: the ten headline criteria, one pass/fail line each.

Run with `pytest -s tests/test_acceptance.py` to see the lines inline;
under capture they still appear on the real stdout.
"""

import json
import random
import sys
import time

import pytest

from conftest import write_fixture
from ifsguard import atpg, benchgen, cli, cone, ifs, netlist, sim, trigger
from ifsguard.atpg import StuckAtFault
from ifsguard.netlist import Point, ScanConfig, full_scan, parse_netlist


def _line(n, ok, text):
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] criterion {n}: {text}", file=sys.__stdout__, flush=True)
    assert ok, f"criterion {n}: {text}"


def _asset(graph, name, kind="confidentiality"):
    return ifs.Asset(graph.net_by_name(name).id, name, kind)


def _valid(graph, man):
    pts = []
    for p in man["valid_points"]:
        if p["kind"] == "ff":
            pts.append(Point("ff", graph.ff_by_name(p["name"]).id))
        else:
            pts.append(Point(p["kind"], graph.net_by_name(p["name"]).id))
    return pts


def _replay_ok(graph, asset_net, stim, point):
    frames = [
        {n: stim.pi_value(t, n) for n in graph.inputs}
        for t in range(max(stim.depth, 1))
    ]
    init = {ff.id: stim.initial_state.get(ff.id, 0) for ff in graph.flipflops}
    return sim.two_run_difference(graph, asset_net, init, frames, point) is not None


def _trigger_sequence(graph, asset_net, res):
    dt = trigger.extract_direct_trigger(
        graph, asset_net, res.stimulus, res.point, res.frame
    )
    cond = {
        graph.ff_by_name(r["name"]).id: r["value"] for r in dt.get("registers", [])
    }
    sregs, _ = trigger.trigger_state_registers(graph, cond)
    stg = trigger.extract_stg(
        graph, sregs, {f: v for f, v in cond.items() if f in sregs}
    )
    return stg, trigger.extract_trigger_sequence(graph, stg)


def test_criterion_1_c17_false_positive(tmp_path, capsys):
    t0 = time.perf_counter()
    p = tmp_path / "c17.v"
    p.write_text(benchgen.C17_NETLIST)
    code = cli.main([
        "check-property", "--netlist", str(p), "--source", "N1", "--sink", "N23"
    ])
    out = capsys.readouterr().out
    g = parse_netlist(benchgen.C17_NETLIST)
    rep = ifs.confidentiality_verify(g, _asset(g, "N1"))
    reached = sorted(g.point_name(pt) for pt in rep.reported_set())
    elapsed = time.perf_counter() - t0
    ok = (
        code == 2
        and "violated" in out
        and "disagrees" in out
        and reached == ["N22"]
        and elapsed < 1.0
    )
    _line(1, ok, f"property violated yet flow reaches only {reached} ({elapsed:.2f}s)")


def test_criterion_2_oracle_equivalence():
    t0 = time.perf_counter()
    mismatches = 0
    for seed in range(50):
        g = parse_netlist(benchgen.random_fixture(seed))
        rng = random.Random(seed)
        asset_net = rng.choice(sim.data_inputs(g))
        rep = ifs.confidentiality_verify(
            g,
            ifs.Asset(asset_net, g.nets[asset_net].name, "confidentiality"),
            ifs.VerifyParams(depth=3, adaptive=False),
        )
        if rep.reported_set() != frozenset(sim.taint_oracle(g, asset_net, depth=3)):
            mismatches += 1
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 600
    _line(2, ok, f"50 fixtures vs taint oracle, {mismatches} mismatches ({elapsed:.0f}s)")


def test_criterion_3_witness_replay():
    checked = failed = 0
    # random circuits, every point, both stuck values
    for seed in range(12):
        g = parse_netlist(benchgen.random_fixture(seed))
        rng = random.Random(seed)
        asset_net = rng.choice(sim.data_inputs(g))
        points = [Point("po", n) for n in g.outputs] + [
            Point("ff", ff.id) for ff in g.flipflops
        ]
        scan = full_scan(g)
        for pt in points:
            for v in (0, 1):
                model = atpg.build_unrolled_model(g, scan, StuckAtFault(asset_net, v), 3)
                res = atpg.detect_fault(model, [pt])
                if isinstance(res, atpg.Detected):
                    checked += 1
                    if not _replay_ok(g, asset_net, res.stimulus, res.point):
                        failed += 1
    # plus every point of a full pipeline run on a Trojan fixture
    spec = benchgen.FixtureSpec("toy-cipher", "always-on", "xor-lfsr-leak")
    g = parse_netlist(benchgen.generate(spec)[0])
    rep = ifs.confidentiality_verify(g, _asset(g, "key[0]"))
    for rp in rep.points():
        checked += 1
        if not _replay_ok(g, _asset(g, "key[0]").net, rp.stimulus, rp.point):
            failed += 1
    ok = failed == 0 and checked > 0
    _line(3, ok, f"{checked} witnesses replayed, {failed} failures")


def test_criterion_4_type2_exact_sets():
    spec = benchgen.FixtureSpec("toy-cipher", "always-on", "xor-lfsr-leak")
    text, man = benchgen.generate(spec)
    g = parse_netlist(text)
    rep = ifs.confidentiality_verify(g, _asset(g, "key[0]"))
    rep = ifs.intersect_analysis(g, rep, _valid(g, man))
    got = sorted(g.point_name(m.point) for m in rep.malicious)
    want = sorted(p["name"] for p in man["malicious_points"])
    # Trojan-free control
    ctext, cman = benchgen.generate(benchgen.FixtureSpec("toy-cipher"))
    cg = parse_netlist(ctext)
    crep = ifs.confidentiality_verify(cg, _asset(cg, "key[0]"))
    crep = ifs.intersect_analysis(cg, crep, _valid(cg, cman))
    ok = got == want and rep.verdict == ifs.VERDICT_TYPE2 and crep.malicious == []
    _line(4, ok, f"malicious points {got} == manifest; control clean")


def test_criterion_5_type1_depth():
    text, man = benchgen.generate(
        benchgen.FixtureSpec("toy-cipher", "specific-input", "bypass-mux")
    )
    g = parse_netlist(text)
    rep = ifs.confidentiality_verify(g, _asset(g, "key[0]"))
    rep = ifs.intersect_analysis(g, rep, _valid(g, man))
    rep = ifs.depth_analysis(rep, theta=0.5)
    shallow = {
        g.point_name(m.point)
        for m in rep.malicious
        if m.reason == ifs.REASON_SHALLOW
    }
    ctext, cman = benchgen.generate(benchgen.FixtureSpec("toy-cipher"))
    cg = parse_netlist(ctext)
    crep = ifs.confidentiality_verify(cg, _asset(cg, "key[0]"))
    crep = ifs.intersect_analysis(cg, crep, _valid(cg, cman))
    crep = ifs.depth_analysis(crep, theta=0.5)
    ok = man["bypass_point"]["name"] in shallow and crep.malicious == []
    _line(5, ok, f"bypass flagged shallow {sorted(shallow)}; control clean")


def test_criterion_6_integrity():
    # malicious counter comparator on the processor
    text, man = benchgen.generate(
        benchgen.FixtureSpec("toy-processor", "counter", "control-hijack")
    )
    g = parse_netlist(text)
    rep = ifs.integrity_verify(g, _asset(g, man["asset"]["name"], "integrity"))
    rep = ifs.intersect_analysis(g, rep, _valid(g, man))
    got = sorted(g.point_name(m.point) for m in rep.malicious)
    want = sorted(p["name"] for p in man["malicious_points"])
    group = [g.ff_by_name(n).id for n in man["trigger"]["registers"]]
    rp = next(r for r in rep.points() if g.point_name(r.point) in want)
    ct = trigger.extract_control_trigger(
        g, _asset(g, man["asset"]["name"], "integrity").net, rp.stimulus, group
    )
    trig_ok = ct["kind"] == "condition" and man["trigger"]["register_values"] in ct["registers"]
    # internal drivers of the hijacked scan-enable
    stext, sman = benchgen.generate(
        benchgen.FixtureSpec("toy-processor", "counter", "scan-enable-hijack")
    )
    sg = parse_netlist(stext)
    srep = ifs.integrity_verify(sg, _asset(sg, sman["asset"]["name"], "integrity"))
    srep = ifs.intersect_analysis(sg, srep, _valid(sg, sman))
    sgot = {sg.point_name(m.point) for m in srep.malicious}
    swant = {p["name"] for p in sman["malicious_points"]}
    ok = got == want and trig_ok and swant <= sgot
    _line(6, ok, f"hijack regs {got}; trigger value matches; scan-enable drivers {sorted(sgot)}")


def test_criterion_7_fsm_sequence():
    text, man = benchgen.generate(
        benchgen.FixtureSpec("toy-cipher", "sequence-fsm", "bypass-mux")
    )
    g = parse_netlist(text)
    asset = _asset(g, "key[0]")
    pt = Point("po", g.net_by_name("ct[0]").id)
    model = atpg.build_unrolled_model(g, ScanConfig(), StuckAtFault(asset.net, 0))
    res = atpg.detect_fault(model, [pt])
    _, seq = _trigger_sequence(g, asset.net, res)
    got = [{g.nets[n].name: v for n, v in c.items()} for c, _ in seq.steps]
    seq_ok = got == man["trigger"]["sequence"]
    # end-to-end: drive the sequence, watch the key bit surface at ct[0]
    rst = g.net_by_name("rst_n").id
    frames = []
    for c, rep_n in seq.steps:
        fv = {n: 0 for n in g.inputs}
        fv[rst] = 1
        fv.update(c)
        frames.extend([dict(fv)] * rep_n)
    fv = {n: 0 for n in g.inputs}
    fv[rst] = 1
    frames.append(fv)
    init = {ff.id: (ff.reset.value if ff.reset else 0) for ff in g.flipflops}
    key0 = g.net_by_name("key[0]").id
    ct0 = g.net_by_name("ct[0]").id
    fire = seq.total_cycles
    leak_ok = True
    for kv in (0, 1):
        fs = [dict(f) for f in frames]
        for f in fs:
            f[key0] = kv
        tr = sim.simulate(g, init, fs, {})
        leak_ok = leak_ok and tr.net(fire, ct0) == kv
    ok = seq_ok and leak_ok
    _line(7, ok, f"{len(got)}-pattern sequence matches manifest; key leaks at t={fire}")


def test_criterion_8_counter_insensitivity():
    skeletons = []
    timings = {}
    for k in (4, 6, 8):
        t0 = time.perf_counter()
        text, _ = benchgen.generate(
            benchgen.FixtureSpec("toy-cipher", "fsm-counter", "bypass-mux", counter_width=k)
        )
        g = parse_netlist(text)
        asset = g.net_by_name("key[0]").id
        pt = Point("po", g.net_by_name("ct[0]").id)
        model = atpg.build_unrolled_model(g, ScanConfig(), StuckAtFault(asset, 0))
        res = atpg.detect_fault(model, [pt])
        stg, seq = _trigger_sequence(g, asset, res)
        timings[k] = time.perf_counter() - t0
        assert stg.counter_waits == ((0, (1 << k) - 1),)
        assert seq.steps[-1][1] == (1 << k) - 1
        skeletons.append(
            "\n".join(
                l
                for l in stg.to_text(g).splitlines()
                if not l.startswith("# counter:")
            )
        )
    same = skeletons[0] == skeletons[1] == skeletons[2]
    growth = timings[8] / timings[4]
    ok = same and growth <= 2.0
    _line(8, ok, f"STG identical across widths 4/6/8; growth {growth:.2f}x")


def test_criterion_9_diagnostics(tmp_path, capsys):
    results = []
    for plant in ("latch", "uncontrollable-ff"):
        p, man = write_fixture(
            tmp_path, f"{plant}.v", "counter", "bypass-mux", plant=plant
        )
        assert cli.main(["lint", "--netlist", str(p)]) == 0
        out = capsys.readouterr().out
        g = parse_netlist(p.read_text())
        entries = netlist.report_unanalyzable(g)
        listed = entries and all(name in out for name, _ in entries)
        # verification still completes on the planted fixture
        rep = ifs.confidentiality_verify(g, _asset(g, "key[0]"))
        results.append(bool(listed) and len(rep.points()) > 0)
    ok = all(results)
    _line(9, ok, "lint names planted latch and uncontrollable FF; analysis completes")


def test_criterion_10_determinism(tmp_path):
    p, _ = write_fixture(tmp_path, "fx.v", "specific-input", "bypass-mux", seed=4)
    blobs = []
    for name in ("r1.json", "r2.json"):
        out = tmp_path / name
        code = cli.main([
            "verify-conf", "--netlist", str(p), "--asset", "key[0]",
            "--valid-out", "ct[7:0]", "--seed", "11", "--json", str(out),
        ])
        assert code == 2
        blobs.append(out.read_bytes())
    ok = blobs[0] == blobs[1] and len(blobs[0]) > 0
    _line(10, ok, f"two runs byte-identical ({len(blobs[0])} bytes)")
