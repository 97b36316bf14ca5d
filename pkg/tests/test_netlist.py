import pytest

from matex.netlist import (DuplicateElement, NetlistSyntaxError, UnknownSuffix, parse_netlist,
                           parse_value, read_netlist, unparse, validate)
from matex.sources import DC, Pulse, Pwl


@pytest.mark.parametrize("token, value", [
    ("1k", 1e3), ("2.5meg", 2.5e6), ("1MEG", 1e6), ("3m", 3e-3), ("10u", 1e-5), ("1n", 1e-9),
    ("4p", 4e-12), ("2.5f", 2.5e-15), ("3g", 3e9), ("1e-12", 1e-12), ("-2", -2.0), (".5", 0.5),
])
def test_parse_value_suffixes(token, value):
    assert parse_value(token) == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize("token", ["1x", "1mil", "2kk", "1ms"])
def test_parse_value_rejects_unknown_suffix(token):
    with pytest.raises(UnknownSuffix):
        parse_value(token)


def test_resistor_line():
    c = parse_netlist("title\nR1 a 0 1k\n")
    el = c.element("r1")
    assert (el.kind, el.node_pos, el.node_neg, el.value) == ("R", "a", "0", 1000.0)
    assert c.nodes == ("a",)
    assert c.title == "title"


def test_pulse_source_fields():
    c = parse_netlist("* t\nI1 n1 0 PULSE(0 0.1 0 1n 1n 3n 10n)\n")
    w = c.element("i1").waveform
    assert isinstance(w, Pulse)
    assert (w.v1, w.v2, w.td) == (0.0, 0.1, 0.0)
    assert w.tr == pytest.approx(1e-9) and w.tf == pytest.approx(1e-9)
    assert w.pw == pytest.approx(3e-9) and w.per == pytest.approx(10e-9)


def test_pwl_dc_and_commas():
    c = parse_netlist("* t\nV1 a 0 DC 1.8\nI2 a 0 PWL(0,0, 1n,2m, 3n,2m)\nR1 a 0 1\n")
    assert c.element("v1").value == 1.8
    assert c.element("v1").waveform is None
    w = c.element("i2").waveform
    assert isinstance(w, Pwl)
    assert w.points == ((0.0, 0.0), (1e-9, 2e-3), (3e-9, 2e-3))


def test_case_insensitive_and_ground_aliases():
    c = parse_netlist("* t\nr1 A GND 1K\nC1 a 0 1P\n.TRAN 1P 10N\n.END\n")
    assert c.nodes == ("a",)
    assert c.element("R1").node_neg == "0"
    assert c.tran.t_stop == pytest.approx(10e-9)


def test_node_order_is_first_appearance():
    c = parse_netlist("* t\nR1 c b 1\nR2 a c 1\nR3 b 0 1\n")
    assert c.nodes == ("c", "b", "a")


def test_title_rules():
    assert parse_netlist("R1 a 0 1\n").title == ""
    assert parse_netlist("* my grid\nR1 a 0 1\n").title == "my grid"
    assert parse_netlist("ibm grid dump\nR1 a 0 1\n").title == "ibm grid dump"


def test_end_stops_parsing():
    c = parse_netlist("* t\nR1 a 0 1\n.end\nthis is not parsed\n")
    assert c.count("R") == 1


def test_syntax_errors_carry_line_numbers():
    with pytest.raises(NetlistSyntaxError) as exc:
        parse_netlist("* t\nR1 a 0 1\nQ1 a b c npn\n")
    assert exc.value.line == 3
    with pytest.raises(NetlistSyntaxError):
        parse_netlist("* t\n.op\n")
    with pytest.raises(NetlistSyntaxError):
        parse_netlist("* t\nI1 a 0 PULSE(0 1 0 1n)\n")
    with pytest.raises(NetlistSyntaxError):
        parse_netlist("* t\nR1 a 0\n")
    with pytest.raises(NetlistSyntaxError):
        parse_netlist("* t\nI1 a 0 PWL(0 0 1n)\n")


def test_duplicate_element():
    with pytest.raises(DuplicateElement) as exc:
        parse_netlist("* t\nR1 a 0 1\nr1 a 0 2\n")
    assert exc.value.name == "r1"


def test_unknown_suffix_in_line():
    with pytest.raises(UnknownSuffix):
        parse_netlist("* t\nR1 a 0 1x\n")


def test_unparse_round_trip():
    text = ("* rt\nR1 a b 1.5k\nC1 b 0 2.2p\nL1 a c 1n\nV1 c 0 1.8\n"
            "I1 b 0 PULSE(0 1m 1n 0.1n 0.2n 0.5n 3n)\nI2 a 0 PWL(0 0 1n 2m)\n.tran 10p 10n\n.end\n")
    c = parse_netlist(text)
    c2 = parse_netlist(unparse(c))
    assert sorted(map(repr, c.elements)) == sorted(map(repr, c2.elements))
    assert c.analyses == c2.analyses


def test_read_netlist(tmp_path):
    p = tmp_path / "x.sp"
    p.write_text("* t\r\nR1 a 0 1\r\n")
    assert read_netlist(p).count("R") == 1


def test_validate_reports():
    assert validate(parse_netlist("* t\nR1 a 0 1\nC1 a 0 1p\nR2 a b 1\nC2 b 0 1p\n")) == []
    kinds = {(d.kind, d.subject) for d in validate(parse_netlist("* t\nR1 a b 0\nR2 b 0 1\n"))}
    assert ("ZeroValue", "r1") in kinds
    kinds = {d.kind for d in validate(parse_netlist("* t\nV1 a 0 1\nV2 a 0 2\nR1 a 0 1\n"))}
    assert "VSourceConflict" in kinds
    kinds = {d.kind for d in validate(parse_netlist("* t\nR1 a 0 1\nC1 b 0 1p\n"))}
    assert "FloatingNode" in kinds
    kinds = {d.kind for d in validate(parse_netlist("* t\nV1 a 0 1\nL1 a 0 1n\n"))}
    assert "VSourceLoop" in kinds or "InductorLoop" in kinds


def _ibmpg1t_sized_netlist():
    """Synthetic netlist with the ibmpg1t element and node counts."""
    n_r, n_c, n_l, n_i, n_v, n_nodes = 41_000, 11_000, 277, 11_000, 14_000, 54_000
    lines = ["* ibmpg1t-sized synthetic"]
    lines += [f"R{k} n{k} n{k + 1} 0.1" for k in range(n_r)]          # nodes n0..n41000
    extra = n_nodes - (n_r + 1)                                          # 12999 pad nodes
    lines += [f"V{k} p{k} 0 1.8" for k in range(extra)]
    lines += [f"V{extra + k} n{k} 0 1.8" for k in range(n_v - extra)]
    lines += [f"L{k} p{k} n{k} 1p" for k in range(n_l)]
    lines += [f"C{k} n{k} 0 1f" for k in range(n_c)]
    lines += [f"I{k} n{k} 0 PULSE(0 1m 0 10p 10p 20p 100p)" for k in range(n_i)]
    return "\n".join(lines) + "\n.tran 10p 10n\n.end\n"


def test_ibmpg1t_sized_counts():
    c = parse_netlist(_ibmpg1t_sized_netlist())
    counts = {k: c.count(k) for k in "RCLIV"}
    assert counts == {"R": 41_000, "C": 11_000, "L": 277, "I": 11_000, "V": 14_000}
    assert len(c.nodes) == 54_000
