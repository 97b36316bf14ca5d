"""Input waveforms, transition spots, and bump-shape source grouping.

Waveforms are piecewise linear in time. A waveform's *breakpoints* are the
instants where its slope changes; the union over every source of a circuit
is the global transition spot set (GTS), and a subset owned by one group of
sources is that group's local set (LTS).
"""
from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

MERGE_TOL = 1e-15
MIN_RAMP = 1e-15


@dataclass(frozen=True)
class DC:
    level: float

    def value(self, t):
        return self.level

    def breakpoints(self, t_stop):
        return BreakpointSet([0.0])


@dataclass(frozen=True)
class Pwl:
    points: tuple

    def __post_init__(self):
        pts = tuple((float(t), float(v)) for t, v in self.points)
        if not pts:
            raise ValueError("PWL waveform needs at least one point")
        for (t0, _), (t1, _) in zip(pts, pts[1:]):
            if not t1 > t0:
                raise ValueError(f"PWL times must be strictly increasing ({t0!r}, {t1!r})")
        if pts[0][0] < 0:
            raise ValueError("PWL times must be non-negative")
        object.__setattr__(self, "points", pts)

    def value(self, t):
        pts = self.points
        if t <= pts[0][0]:
            return pts[0][1]
        if t >= pts[-1][0]:
            return pts[-1][1]
        i = bisect.bisect_right([p[0] for p in pts], t)
        (t0, v0), (t1, v1) = pts[i - 1], pts[i]
        return v0 + (v1 - v0) * (t - t0) / (t1 - t0)

    def breakpoints(self, t_stop):
        return BreakpointSet([0.0] + [t for t, _ in self.points if t <= t_stop + MERGE_TOL])


@dataclass(frozen=True)
class Pulse:
    """SPICE ``PULSE(v1 v2 td tr tf pw per)``; ``per == 0`` is a single pulse."""

    v1: float
    v2: float
    td: float
    tr: float
    tf: float
    pw: float
    per: float

    def __post_init__(self):
        # zero-length edges become steep ramps so u(t) stays PWL
        if self.tr <= 0:
            object.__setattr__(self, "tr", MIN_RAMP)
        if self.tf <= 0:
            object.__setattr__(self, "tf", MIN_RAMP)
        if self.td < 0 or self.pw < 0 or self.per < 0:
            raise ValueError("pulse td, pw and per must be non-negative")
        if self.per and self.per < self.tr + self.pw + self.tf - MERGE_TOL:
            raise ValueError(
                f"pulse period {self.per!r} shorter than tr+pw+tf "
                f"{self.tr + self.pw + self.tf!r}")

    @property
    def shape(self):
        return (self.tr, self.pw, self.tf)

    def _envelope(self, tau):
        tr, pw, tf = self.tr, self.pw, self.tf
        if tau < tr:
            return self.v1 + (self.v2 - self.v1) * tau / tr
        if tau <= tr + pw:
            return self.v2
        if tau < tr + pw + tf:
            return self.v2 + (self.v1 - self.v2) * (tau - tr - pw) / tf
        return self.v1

    def value(self, t):
        if t < self.td:
            return self.v1
        tau = t - self.td
        if self.per > 0:
            k = math.floor(tau / self.per)
            tau -= k * self.per
            # guard the floor against rounding just below a period boundary
            if tau < 0:
                tau += self.per
            elif tau >= self.per:
                tau -= self.per
        return self._envelope(tau)

    def bump_starts(self, t_stop):
        """Start times of every bump beginning strictly before ``t_stop``."""
        if self.per <= 0:
            return [self.td] if self.td < t_stop - MERGE_TOL else []
        starts = []
        k = 0
        while True:
            s = self.td + k * self.per
            if s >= t_stop - MERGE_TOL:
                return starts
            starts.append(s)
            k += 1

    def breakpoints(self, t_stop):
        spots = [0.0]
        offsets = (0.0, self.tr, self.tr + self.pw, self.tr + self.pw + self.tf)
        starts = self.bump_starts(t_stop)
        # a period boundary landing exactly on t_stop is still a corner
        if self.per > 0:
            nxt = self.td + len(starts) * self.per
            if abs(nxt - t_stop) <= MERGE_TOL:
                starts = starts + [nxt]
        elif not starts and abs(self.td - t_stop) <= MERGE_TOL:
            starts = [self.td]
        for s in starts:
            spots.extend(s + o for o in offsets if s + o <= t_stop + MERGE_TOL)
        return BreakpointSet(spots)


Waveform = Union[DC, Pwl, Pulse]


def eval_waveform(w: Waveform, t: float) -> float:
    return w.value(t)


def breakpoints(w: Waveform, t_stop: float) -> "BreakpointSet":
    if not t_stop > 0:
        raise ValueError("t_stop must be positive")
    return w.breakpoints(t_stop)


class SubsetViolation(ValueError):
    pass


class NoSources(ValueError):
    pass


class BreakpointSet(Sequence):
    """Sorted times with spots closer than ``MERGE_TOL`` merged into one."""

    __slots__ = ("times",)

    def __init__(self, times: Iterable[float] = ()):
        merged = []
        for t in sorted(float(x) for x in times):
            if merged and t - merged[-1] <= MERGE_TOL:
                continue
            merged.append(t)
        self.times = tuple(merged)

    def __getitem__(self, i):
        return self.times[i]

    def __len__(self):
        return len(self.times)

    def __iter__(self):
        return iter(self.times)

    def __repr__(self):
        return f"BreakpointSet({list(self.times)!r})"

    def __eq__(self, other):
        if isinstance(other, BreakpointSet):
            return len(self) == len(other) and all(
                abs(a - b) <= MERGE_TOL for a, b in zip(self.times, other.times))
        return NotImplemented

    def __hash__(self):
        return hash(len(self.times))

    def __contains__(self, t):
        i = bisect.bisect_left(self.times, t - MERGE_TOL)
        return i < len(self.times) and abs(self.times[i] - t) <= MERGE_TOL

    def union(self, *others):
        out = list(self.times)
        for o in others:
            out.extend(o)
        return BreakpointSet(out)

    def difference(self, other):
        return BreakpointSet(t for t in self.times if t not in other)

    def clip(self, t_stop):
        return BreakpointSet(t for t in self.times if t <= t_stop + MERGE_TOL)

    def min_gap(self):
        if len(self.times) < 2:
            return math.inf
        return min(b - a for a, b in zip(self.times, self.times[1:]))

    def next_after(self, t):
        i = bisect.bisect_right(self.times, t + MERGE_TOL)
        return self.times[i] if i < len(self.times) else None


def global_transition_spots(circuit, t_stop: float) -> BreakpointSet:
    """Union of every source's breakpoints on ``[0, t_stop]`` plus ``t_stop``."""
    spots = [0.0, float(t_stop)]
    for el in circuit.sources():
        w = el.waveform if el.waveform is not None else DC(el.value)
        spots.extend(w.breakpoints(t_stop))
    return BreakpointSet(spots).clip(t_stop)


def snapshots(gts: BreakpointSet, lts: BreakpointSet) -> BreakpointSet:
    missing = [t for t in lts if t not in gts]
    if missing:
        raise SubsetViolation(f"LTS points {missing[:5]} are not in GTS")
    return gts.difference(lts)


# --- source decomposition -------------------------------------------------

@dataclass(frozen=True)
class Component:
    """One additive piece of a current source's waveform.

    ``waveform`` starts from zero; the source's baseline level is carried by
    the base task instead.
    """

    ident: str
    source: str
    waveform: Waveform
    signature: tuple
    onset: float


def source_components(circuit, t_stop):
    """Split every time-varying current source into zero-based components.

    A pulse contributes one single-bump component per period starting in
    ``[0, t_stop)``; a PWL source contributes one component. Returns the
    components in netlist order.
    """
    comps = []
    for el in circuit.sources():
        if el.kind != "I" or el.waveform is None or isinstance(el.waveform, DC):
            continue
        w = el.waveform
        if isinstance(w, Pulse):
            starts = w.bump_starts(t_stop)
            amp = w.v2 - w.v1
            for k, s in enumerate(starts):
                ident = el.name if len(starts) == 1 else f"{el.name}.{k + 1}"
                bump = Pulse(0.0, amp, s, w.tr, w.tf, w.pw, 0.0)
                comps.append(Component(ident, el.name, bump, ("bump", s, w.tr, w.tf, w.pw), s))
        else:
            v0 = w.value(0.0)
            shifted = Pwl(tuple((t, v - v0) for t, v in w.points))
            comps.append(Component(el.name, el.name, shifted, ("pwl",) + shifted.points,
                                   shifted.points[0][0]))
    return comps


@dataclass(frozen=True)
class SourceGroup:
    group_id: int
    source_ids: tuple
    lts: BreakpointSet

    def to_dict(self):
        return {"group_id": self.group_id, "sources": list(self.source_ids),
                "lts": list(self.lts)}


@dataclass(frozen=True)
class GroupPlan:
    gts: BreakpointSet
    groups: tuple = field(default_factory=tuple)

    def to_json(self, **kw):
        doc = {"gts": list(self.gts), "groups": [g.to_dict() for g in self.groups]}
        return json.dumps(doc, **kw)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        groups = tuple(SourceGroup(g["group_id"], tuple(g["sources"]), BreakpointSet(g["lts"]))
                       for g in doc["groups"])
        return cls(BreakpointSet(doc["gts"]), groups)


def _base_spots(circuit, t_stop):
    # DC levels and every voltage source ride with the base group
    spots = [0.0, float(t_stop)]
    for el in circuit.sources():
        if el.kind == "V" and el.waveform is not None:
            spots.extend(el.waveform.breakpoints(t_stop))
    return spots


def group_by_bump(circuit, t_stop: float, max_groups: int) -> GroupPlan:
    """Group current-source bumps with identical timing signatures.

    Components sharing ``(delay, rise, fall, width)`` form one group. When
    there are more signatures than ``max_groups``, the two groups with the
    fewest local transition spots are merged until the bound holds. Group
    ids follow the earliest transition of each group; group 0 also carries
    the DC levels and voltage-source transitions.
    """
    if max_groups < 1:
        raise ValueError("max_groups must be >= 1")
    comps = source_components(circuit, t_stop)
    if not comps:
        raise NoSources("circuit has no time-varying current sources")

    by_sig = {}
    for c in comps:
        by_sig.setdefault(c.signature, []).append(c)
    # [first transition, member ids, spots]
    groups = []
    for members in by_sig.values():
        spots = set()
        for c in members:
            spots.update(c.waveform.breakpoints(t_stop))
        groups.append([min(c.onset for c in members), [c.ident for c in members], spots])

    while len(groups) > max_groups:
        order = sorted(range(len(groups)), key=lambda i: (len(groups[i][2]), groups[i][0], i))
        a, b = sorted(order[:2])
        ga, gb = groups[a], groups[b]
        merged = [min(ga[0], gb[0]), ga[1] + gb[1], ga[2] | gb[2]]
        groups = [g for i, g in enumerate(groups) if i not in (a, b)] + [merged]

    rank = {c.ident: i for i, c in enumerate(comps)}
    groups.sort(key=lambda g: (g[0], min(rank[s] for s in g[1])))
    base = _base_spots(circuit, t_stop)
    out = []
    for gid, (_, ids, spots) in enumerate(groups):
        pts = set(spots) | {0.0, float(t_stop)}
        if gid == 0:
            pts.update(base)
        ids = sorted(ids, key=rank.__getitem__)
        out.append(SourceGroup(gid, tuple(ids), BreakpointSet(pts).clip(t_stop)))
    gts = global_transition_spots(circuit, t_stop)
    return GroupPlan(gts, tuple(out))
