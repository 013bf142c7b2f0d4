"""Flow verification pipelines: level discipline, analyses, verdicts."""

import random

from hypothesis import given, settings, strategies as st

from conftest import build_fixture
from ifsguard import benchgen, cone, ifs, sim
from ifsguard.netlist import Point, parse_netlist


def _asset(graph, name, kind="confidentiality"):
    return ifs.Asset(graph.net_by_name(name).id, name, kind)


def _replay(graph, asset_net, rp):
    stim = rp.stimulus
    frames = [
        {n: stim.pi_value(t, n) for n in graph.inputs}
        for t in range(max(stim.depth, 1))
    ]
    init = {ff.id: stim.initial_state.get(ff.id, 0) for ff in graph.flipflops}
    return sim.two_run_difference(graph, asset_net, init, frames, rp.point)


def test_c17_flow_to_n22_only(c17):
    rep = ifs.confidentiality_verify(c17, _asset(c17, "N1"))
    assert sorted(c17.point_name(p) for p in rep.reported_set()) == ["N22"]
    assert rep.verdict == ifs.VERDICT_NONE
    assert not rep.abandoned


def test_equality_property_is_weaker_than_flow(c17):
    # the single-frame property fires on N23 even though no flow exists
    n1 = c17.net_by_name("N1").id
    n23 = c17.net_by_name("N23").id
    res = ifs.check_equality_property(c17, n1, n23)
    assert isinstance(res, ifs.Violated)
    rep = ifs.confidentiality_verify(c17, _asset(c17, "N1"))
    assert Point("po", n23) not in rep.reported_set()


def test_level_zero_is_structural_fanout():
    g, _ = build_fixture()
    asset = _asset(g, "key[0]")
    rep = ifs.confidentiality_verify(g, asset)
    allowed = cone.fanout_endpoints(g, asset.net).endpoints
    assert {rp.point for rp in rep.levels[0]} <= set(allowed)


def test_every_reported_point_replays():
    g, _ = build_fixture("always-on", "xor-lfsr-leak")
    asset = _asset(g, "key[0]")
    rep = ifs.confidentiality_verify(g, asset)
    assert rep.points()
    for rp in rep.points():
        assert _replay(g, asset.net, rp) is not None


def test_intersect_marks_outside_cone():
    g, man = build_fixture("always-on", "xor-lfsr-leak")
    rep = ifs.confidentiality_verify(g, _asset(g, "key[0]"))
    valid = [Point("po", g.net_by_name(p["name"]).id) for p in man["valid_points"]]
    rep = ifs.intersect_analysis(g, rep, valid)
    mal = sorted(g.point_name(m.point) for m in rep.malicious)
    expected = sorted(p["name"] for p in man["malicious_points"])
    assert mal == expected
    assert rep.verdict == ifs.VERDICT_TYPE2
    assert {m.point for m in rep.malicious} <= rep.reported_set()


def test_intersect_clean_control():
    g, man = build_fixture()
    rep = ifs.confidentiality_verify(g, _asset(g, "key[0]"))
    valid = [Point("po", g.net_by_name(p["name"]).id) for p in man["valid_points"]]
    rep = ifs.intersect_analysis(g, rep, valid)
    assert rep.malicious == []
    assert rep.verdict == ifs.VERDICT_NONE


def test_depth_analysis_flags_bypass():
    g, man = build_fixture("specific-input", "bypass-mux")
    rep = ifs.confidentiality_verify(g, _asset(g, "key[0]"))
    valid = [Point("po", g.net_by_name(p["name"]).id) for p in man["valid_points"]]
    rep = ifs.intersect_analysis(g, rep, valid)
    rep = ifs.depth_analysis(rep, theta=0.5)
    shallow = [
        g.point_name(m.point)
        for m in rep.malicious
        if m.reason == ifs.REASON_SHALLOW
    ]
    assert man["bypass_point"]["name"] in shallow
    assert rep.verdict in (ifs.VERDICT_TYPE1, ifs.VERDICT_BOTH)


def test_depth_analysis_clean_control():
    g, man = build_fixture()
    rep = ifs.confidentiality_verify(g, _asset(g, "key[0]"))
    valid = [Point("po", g.net_by_name(p["name"]).id) for p in man["valid_points"]]
    rep = ifs.intersect_analysis(g, rep, valid)
    rep = ifs.depth_analysis(rep, theta=0.5)
    assert rep.malicious == []


def test_integrity_finds_hijack_registers():
    g, man = build_fixture("counter", "control-hijack", core="toy-processor")
    rep = ifs.integrity_verify(g, _asset(g, man["asset"]["name"], "integrity"))
    names = {g.point_name(p) for p in rep.reported_set()}
    for p in man["malicious_points"]:
        assert p["name"] in names
    valid = []
    for p in man["valid_points"]:
        if p["kind"] == "ff":
            valid.append(Point("ff", g.ff_by_name(p["name"]).id))
        else:
            valid.append(Point(p["kind"], g.net_by_name(p["name"]).id))
    rep = ifs.intersect_analysis(g, rep, valid)
    mal = sorted(g.point_name(m.point) for m in rep.malicious)
    assert mal == sorted(p["name"] for p in man["malicious_points"])


def test_integrity_clean_control():
    g, man = build_fixture(core="toy-processor")
    rep = ifs.integrity_verify(g, _asset(g, man["asset"]["name"], "integrity"))
    valid = []
    for p in man["valid_points"]:
        if p["kind"] == "ff":
            valid.append(Point("ff", g.ff_by_name(p["name"]).id))
        else:
            valid.append(Point(p["kind"], g.net_by_name(p["name"]).id))
    rep = ifs.intersect_analysis(g, rep, valid)
    assert rep.malicious == []


def test_asset_kind_validated():
    import pytest

    with pytest.raises(ValueError):
        ifs.Asset(0, "x", "availability")


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_confidentiality_matches_taint_oracle(seed):
    """The whole Algorithm-1 loop finds exactly the oracle's point set."""
    g = parse_netlist(benchgen.random_fixture(seed))
    rng = random.Random(seed)
    asset_net = rng.choice(sim.data_inputs(g))
    asset = ifs.Asset(asset_net, g.nets[asset_net].name, "confidentiality")
    params = ifs.VerifyParams(depth=3, adaptive=False)
    rep = ifs.confidentiality_verify(g, asset, params)
    oracle = sim.taint_oracle(g, asset_net, depth=3)
    assert rep.reported_set() == frozenset(oracle)
    assert not rep.abandoned
