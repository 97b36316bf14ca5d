"""Parser for the SPICE subset used by IBM-style power grid benchmarks.

Supported lines (case-insensitive)::

    * comment
    Rname n+ n- value          (also C, L)
    Iname n+ n- [DC] value
    Iname n+ n- [value] PULSE(v1 v2 td tr tf pw per)
    Vname n+ n- [value] PWL(t1 v1 t2 v2 ...)
    .tran step tstop
    .end

The first line is a title unless it parses as an element or directive.
Nodes ``0`` and ``gnd`` are ground. Node and element names are folded to
lower case.
"""
from __future__ import annotations

import re
from decimal import Decimal
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from .sources import DC, Pulse, Pwl, Waveform

GROUND_NAMES = ("0", "gnd")
KINDS = {"r": "R", "c": "C", "l": "L", "i": "I", "v": "V"}

# longest suffix first so "meg" wins over "m"
SUFFIXES = (("meg", 6), ("f", -15), ("p", -12), ("n", -9), ("u", -6), ("m", -3), ("k", 3),
            ("g", 9))
_NUMBER = re.compile(r"^[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")


class NetlistError(ValueError):
    pass


class NetlistSyntaxError(NetlistError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class DuplicateElement(NetlistError):
    def __init__(self, name, line=None):
        self.name = name
        self.line = line
        super().__init__(f"duplicate element {name!r}" + (f" on line {line}" if line else ""))


class UnknownSuffix(NetlistError):
    def __init__(self, token):
        self.token = token
        super().__init__(f"unknown numeric suffix in {token!r}")


def parse_value(token: str) -> float:
    """``'1k'`` -> 1000.0, ``'2.5meg'`` -> 2.5e6, ``'1e-12'`` -> 1e-12."""
    tok = token.strip().lower()
    m = _NUMBER.match(tok)
    if not m:
        raise ValueError(f"not a number: {token!r}")
    rest = tok[m.end():]
    if not rest:
        return float(m.group(0))
    for suffix, exp in SUFFIXES:
        if rest == suffix:
            # decimal scaling keeps "3n" == 3e-9 exactly
            return float(Decimal(m.group(0)).scaleb(exp))
    raise UnknownSuffix(token)


@dataclass(frozen=True)
class Element:
    kind: str  # one of R C L I V
    name: str
    node_pos: str
    node_neg: str
    value: float
    waveform: Optional[Waveform] = None

    def __post_init__(self):
        if self.waveform is not None and self.kind not in ("I", "V"):
            raise ValueError(f"{self.name}: only sources carry waveforms")

    @property
    def is_source(self):
        return self.kind in ("I", "V")


@dataclass(frozen=True)
class AnalysisDirective:
    kind: str
    step_hint: float
    t_stop: float

    def __post_init__(self):
        if not (self.step_hint > 0 and self.t_stop > 0):
            raise ValueError(".tran step and stop time must be positive")


@dataclass(frozen=True)
class Circuit:
    elements: tuple
    nodes: tuple  # non-ground node names in first-appearance order
    analyses: tuple = ()
    title: str = ""
    node_index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.node_index is None:
            object.__setattr__(self, "node_index", {n: i for i, n in enumerate(self.nodes)})

    @classmethod
    def build(cls, elements, analyses=(), title=""):
        """Assemble a circuit, numbering nodes by first appearance."""
        nodes = {}
        for el in elements:
            for n in (el.node_pos, el.node_neg):
                if not is_ground(n) and n not in nodes:
                    nodes[n] = len(nodes)
        return cls(tuple(elements), tuple(nodes), tuple(analyses), title)

    def sources(self):
        return [el for el in self.elements if el.is_source]

    def count(self, kind):
        return sum(1 for el in self.elements if el.kind == kind)

    def element(self, name):
        name = name.lower()
        for el in self.elements:
            if el.name == name:
                return el
        raise KeyError(name)

    @property
    def tran(self):
        for a in self.analyses:
            if a.kind == "tran":
                return a
        return None


def is_ground(node):
    return node in GROUND_NAMES


def _canon_node(n):
    n = n.lower()
    return "0" if n in GROUND_NAMES else n


def _split_source_spec(text, lineno):
    """Split ``'0.1 PULSE(0 1 ...)'`` into value tokens and an optional waveform."""
    m = re.search(r"(pulse|pwl)\s*\(", text, flags=re.I)
    if not m:
        return text.split(), None
    head = text[:m.start()].split()
    close = text.find(")", m.end())
    if close < 0:
        raise NetlistSyntaxError(lineno, "unterminated waveform parenthesis")
    if text[close + 1:].strip():
        raise NetlistSyntaxError(lineno, f"trailing text after waveform: {text[close + 1:].strip()!r}")
    args = text[m.end():close].replace(",", " ").split()
    try:
        vals = [parse_value(a) for a in args]
    except UnknownSuffix:
        raise
    except ValueError as exc:
        raise NetlistSyntaxError(lineno, str(exc)) from None
    shape = m.group(1).lower()
    try:
        if shape == "pulse":
            if len(vals) != 7:
                raise NetlistSyntaxError(lineno, f"PULSE needs 7 arguments, got {len(vals)}")
            wave = Pulse(*vals)
        else:
            if len(vals) < 2 or len(vals) % 2:
                raise NetlistSyntaxError(lineno, "PWL needs an even, non-zero number of arguments")
            wave = Pwl(tuple(zip(vals[0::2], vals[1::2])))
    except NetlistSyntaxError:
        raise
    except ValueError as exc:
        raise NetlistSyntaxError(lineno, str(exc)) from None
    return head, wave


def _parse_element(line, lineno):
    name, _, rest = line.replace("\t", " ").partition(" ")
    kind = KINDS.get(name[0].lower())
    if kind is None:
        raise NetlistSyntaxError(lineno, f"unsupported element {name!r}")
    parts = rest.split(None, 2)
    if len(parts) < 2:
        raise NetlistSyntaxError(lineno, "element needs two nodes")
    npos, nneg = _canon_node(parts[0]), _canon_node(parts[1])
    spec = parts[2] if len(parts) > 2 else ""
    wave = None
    if kind in ("I", "V"):
        tokens, wave = _split_source_spec(spec, lineno)
        if tokens and tokens[0].lower() == "dc":
            tokens = tokens[1:]
    else:
        tokens = spec.split()
    if len(tokens) > 1:
        raise NetlistSyntaxError(lineno, f"unexpected tokens {tokens[1:]!r}")
    if tokens:
        try:
            value = parse_value(tokens[0])
        except UnknownSuffix:
            raise
        except ValueError as exc:
            raise NetlistSyntaxError(lineno, str(exc)) from None
    elif wave is not None:
        value = wave.value(0.0)
    else:
        raise NetlistSyntaxError(lineno, f"{name}: missing value")
    return Element(kind, name.lower(), npos, nneg, value, wave)


def _parse_directive(line, lineno):
    tokens = line.split()
    word = tokens[0].lower()
    if word == ".end":
        return "end"
    if word == ".tran":
        if len(tokens) < 3:
            raise NetlistSyntaxError(lineno, ".tran needs step and stop time")
        try:
            step, stop = parse_value(tokens[1]), parse_value(tokens[2])
            return AnalysisDirective("tran", step, stop)
        except UnknownSuffix:
            raise
        except ValueError as exc:
            raise NetlistSyntaxError(lineno, str(exc)) from None
    raise NetlistSyntaxError(lineno, f"unsupported directive {tokens[0]!r}")


def _first_line(line):
    """The first line is a title unless it parses as a statement."""
    try:
        return _parse_directive(line, 1) if line.startswith(".") else _parse_element(line, 1)
    except (NetlistError, ValueError):
        return None


def parse_netlist(text) -> Circuit:
    """Parse netlist text (or an iterable of lines) into a :class:`Circuit`."""
    if isinstance(text, str):
        lines = text.splitlines()
    else:
        lines = [ln.rstrip("\r\n") for ln in text]

    elements, analyses = [], []
    seen = {}
    title = ""
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if lineno == 1 and line and not line.startswith("*"):
            item = _first_line(line)
            if item is None:
                title = line
                continue
        if not line:
            continue
        if line.startswith("*"):
            if lineno == 1:
                title = line[1:].strip()
            continue
        if line.startswith("."):
            item = _parse_directive(line, lineno)
            if item == "end":
                break
            analyses.append(item)
            continue
        el = _parse_element(line, lineno)
        if el.name in seen:
            raise DuplicateElement(el.name, lineno)
        seen[el.name] = lineno
        elements.append(el)
    return Circuit.build(elements, analyses, title)


def _fmt(x):
    return repr(float(x))


def _fmt_wave(w):
    if isinstance(w, Pulse):
        return "PULSE(" + " ".join(_fmt(v) for v in (w.v1, w.v2, w.td, w.tr, w.tf, w.pw, w.per)) + ")"
    if isinstance(w, Pwl):
        return "PWL(" + " ".join(f"{_fmt(t)} {_fmt(v)}" for t, v in w.points) + ")"
    return f"DC {_fmt(w.level)}"


def unparse(circuit: Circuit) -> str:
    """Render a circuit back to netlist text that re-parses to the same elements."""
    out = [f"* {circuit.title}" if circuit.title else "*"]
    for el in circuit.elements:
        line = f"{el.name} {el.node_pos} {el.node_neg}"
        if el.waveform is not None and not isinstance(el.waveform, DC):
            line += f" {_fmt(el.value)} {_fmt_wave(el.waveform)}"
        else:
            line += f" {_fmt(el.value)}"
        out.append(line)
    for a in circuit.analyses:
        out.append(f".tran {_fmt(a.step_hint)} {_fmt(a.t_stop)}")
    out.append(".end")
    return "\n".join(out) + "\n"


def read_netlist(path) -> Circuit:
    with open(path, encoding="utf-8") as fh:
        return parse_netlist(fh.read())


# --- validation -----------------------------------------------------------

@dataclass(frozen=True)
class Diagnostic:
    kind: str
    subject: str
    message: str = ""


class _DisjointSet:
    def __init__(self):
        self.parent = {}

    def find(self, a):
        parent = self.parent
        parent.setdefault(a, a)
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def topology_diagnostics(circuit: Circuit):
    """Floating nodes and voltage-source/inductor loops; these make G singular."""
    diags = []
    # DC conduction graph: R, L and V conduct; C and I do not
    dc = _DisjointSet()
    dc.find("0")
    for n in circuit.nodes:
        dc.find(n)
    for el in circuit.elements:
        if el.kind in ("R", "L", "V"):
            dc.union(el.node_pos, el.node_neg)
    ground = dc.find("0")
    for n in circuit.nodes:
        if dc.find(n) != ground:
            diags.append(Diagnostic("FloatingNode", n, "no DC path to ground"))

    # loops made only of V and L branches leave branch currents undetermined
    short = _DisjointSet()
    vs_by_pair = {}
    for el in circuit.elements:
        if el.kind not in ("V", "L"):
            continue
        if el.kind == "V":
            key = frozenset((el.node_pos, el.node_neg))
            sign = 1.0 if el.node_pos <= el.node_neg else -1.0
            level = el.value if el.waveform is None else el.waveform.value(0.0)
            prev = vs_by_pair.get(key)
            if prev is not None and prev[1] != sign * level:
                diags.append(Diagnostic("VSourceConflict", el.name,
                                        f"parallel to {prev[0]} with a different value"))
                continue
            vs_by_pair.setdefault(key, (el.name, sign * level))
        if el.node_pos == el.node_neg or not short.union(el.node_pos, el.node_neg):
            kind = "VSourceLoop" if el.kind == "V" else "InductorLoop"
            diags.append(Diagnostic(kind, el.name, "closes a loop of voltage sources/inductors"))
    return diags


def validate(circuit: Circuit):
    """Return a list of :class:`Diagnostic`; empty means the circuit can be simulated."""
    diags = []
    names = Counter(el.name for el in circuit.elements)
    for name, k in names.items():
        if k > 1:
            diags.append(Diagnostic("DuplicateElement", name))
    for el in circuit.elements:
        if el.kind in ("R", "C", "L"):
            if el.value == 0:
                diags.append(Diagnostic("ZeroValue", el.name, f"{el.kind} value is zero"))
            elif el.value < 0:
                diags.append(Diagnostic("NegativeValue", el.name, f"{el.kind} value is negative"))
        if el.node_pos == el.node_neg and el.kind != "V":
            diags.append(Diagnostic("SelfLoop", el.name, "both terminals on the same node"))
    diags.extend(topology_diagnostics(circuit))
    return diags
