import pytest

from ifsguard import benchgen, netlist

C17 = """\
module c17 (N1, N2, N3, N6, N7, N22, N23);
  input N1; input N2; input N3; input N6; input N7;
  output N22; output N23;
  wire N10; wire N11; wire N16; wire N19;
  NAND g1 (.Y(N10), .A(N1), .B(N3));
  NAND g2 (.Y(N11), .A(N3), .B(N6));
  NAND g3 (.Y(N16), .A(N2), .B(N11));
  NAND g4 (.Y(N19), .A(N11), .B(N7));
  NAND g5 (.Y(N22), .A(N10), .B(N16));
  NAND g6 (.Y(N23), .A(N16), .B(N19));
endmodule
"""

# a 2-bit shift register: i -> r0 -> r1 -> o
SHIFT2 = """\
module shift2 (ck, i, o);
  input ck; input i;
  output o;
  wire q0; wire q1;
  DFF r0 (.D(i), .Q(q0), .CK(ck));
  DFF r1 (.D(q0), .Q(q1), .CK(ck));
  BUF b0 (.Y(o), .A(q1));
endmodule
"""


@pytest.fixture(scope="session")
def c17():
    return netlist.parse_netlist(C17)


@pytest.fixture(scope="session")
def shift2():
    return netlist.parse_netlist(SHIFT2)


def build_fixture(trigger=None, payload=None, core="toy-cipher", **kw):
    spec = benchgen.FixtureSpec(core=core, trigger=trigger, payload=payload, **kw)
    text, manifest = benchgen.generate(spec)
    return netlist.parse_netlist(text), manifest


def write_fixture(tmp_path, name, trigger=None, payload=None, core="toy-cipher", **kw):
    spec = benchgen.FixtureSpec(core=core, trigger=trigger, payload=payload, **kw)
    text, manifest = benchgen.generate(spec)
    p = tmp_path / name
    p.write_text(text)
    return p, manifest
