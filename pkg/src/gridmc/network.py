"""Network data model: buses, loads, generators, branches, and topology edits.

All electrical quantities are per-unit on the case MVA base; angles are in
radians.  Case objects are immutable after construction so they can be shared
freely between concurrent solver instances; topology edits return new cases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum


class GridError(Exception):
    """Base class for errors raised by this package."""


class OutageError(GridError):
    """An outage cannot be applied to the case."""


class IslandSplitError(OutageError):
    """Applying the outage would disconnect part of the slack bus's island."""


class BusKind(Enum):
    SLACK = "slack"
    PV = "pv"
    PQ = "pq"


@dataclass(frozen=True)
class Bus:
    id: int
    kind: BusKind
    v_set: float = 1.0          # magnitude setpoint, pu (Slack/PV)
    angle_set: float = 0.0      # radians (Slack)
    v_min: float = 0.9          # operating band, pu
    v_max: float = 1.1
    gs: float = 0.0             # shunt conductance, pu at |V| = 1
    bs: float = 0.0             # shunt susceptance, pu at |V| = 1
    vm_init: float = 1.0        # operating-point hint from the source file
    va_init: float = 0.0


@dataclass(frozen=True)
class Load:
    bus: int
    p_nom: float                # pu real power drawn
    q_nom: float                # pu reactive power drawn


@dataclass(frozen=True)
class Generator:
    bus: int
    p_set: float                # pu dispatched real power
    v_set: float                # pu magnitude setpoint
    q_min: float = -math.inf    # pu reactive limits
    q_max: float = math.inf
    status: bool = True


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float                    # pu series resistance
    x: float                    # pu series reactance
    b: float = 0.0              # pu total line charging
    tap: float = 1.0            # off-nominal ratio (1.0 = none)
    shift: float = 0.0          # radians
    rate_a: float = 0.0         # pu apparent-power rating (0 = unlimited)
    status: bool = True


@dataclass(frozen=True)
class NetworkCase:
    base_mva: float
    buses: tuple[Bus, ...]
    loads: tuple[Load, ...]
    generators: tuple[Generator, ...]
    branches: tuple[Branch, ...]
    name: str = ""

    def bus_map(self) -> dict[int, Bus]:
        return {b.id: b for b in self.buses}

    def in_service_branches(self) -> tuple[Branch, ...]:
        return tuple(br for br in self.branches if br.status)

    def in_service_generators(self) -> tuple[Generator, ...]:
        return tuple(g for g in self.generators if g.status)


@dataclass(frozen=True)
class GeneratorOutage:
    bus: int


@dataclass(frozen=True)
class BranchOutage:
    from_bus: int
    to_bus: int
    ordinal: int = 0            # distinguishes parallel branches


Outage = GeneratorOutage | BranchOutage


@dataclass(frozen=True)
class Violation:
    element: str                # e.g. "bus 4", "branch 1-2"
    message: str

    def __str__(self) -> str:
        return f"{self.element}: {self.message}"


def validate(case: NetworkCase) -> list[Violation]:
    """Check all case invariants; returns one entry per violation."""
    out: list[Violation] = []
    ids = [b.id for b in case.buses]
    bus_by_id = case.bus_map()
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        out.append(Violation("case", f"duplicate bus ids {dupes}"))

    slacks = [b.id for b in case.buses if b.kind is BusKind.SLACK]
    if len(slacks) == 0:
        out.append(Violation("case", "no slack bus"))
    elif len(slacks) > 1:
        out.append(Violation("case", f"multiple slack buses {slacks}"))

    for b in case.buses:
        if not b.v_min < b.v_max:
            out.append(Violation(f"bus {b.id}", f"v_min {b.v_min} >= v_max {b.v_max}"))
        if b.kind is not BusKind.PQ and b.v_set <= 0.0:
            out.append(Violation(f"bus {b.id}", f"non-positive v_set {b.v_set}"))

    for ld in case.loads:
        if ld.bus not in bus_by_id:
            out.append(Violation(f"load at bus {ld.bus}", "references unknown bus"))

    gen_buses: set[int] = set()
    for g in case.generators:
        if g.bus not in bus_by_id:
            out.append(Violation(f"generator at bus {g.bus}", "references unknown bus"))
            continue
        if g.q_min > g.q_max:
            out.append(Violation(f"generator at bus {g.bus}",
                                 f"q_min {g.q_min} > q_max {g.q_max}"))
        if g.status:
            gen_buses.add(g.bus)
            if bus_by_id[g.bus].kind is BusKind.PQ:
                out.append(Violation(f"generator at bus {g.bus}",
                                     "in service at a PQ bus"))
    for b in case.buses:
        if b.kind in (BusKind.PV, BusKind.SLACK) and b.id not in gen_buses:
            out.append(Violation(f"bus {b.id}",
                                 f"{b.kind.value} bus has no in-service generator"))

    for br in case.branches:
        tag = f"branch {br.from_bus}-{br.to_bus}"
        if br.from_bus not in bus_by_id or br.to_bus not in bus_by_id:
            out.append(Violation(tag, "references unknown bus"))
            continue
        if br.status and br.r == 0.0 and br.x == 0.0:
            out.append(Violation(tag, "zero series impedance in service"))
        if br.tap <= 0.0:
            out.append(Violation(tag, f"non-positive tap {br.tap}"))

    if slacks and not out:
        # Only the slack island is solved; anything outside it is an error.
        island = connected_island(case, slacks[0])
        outside = sorted(set(ids) - island)
        if outside:
            out.append(Violation("case", f"buses outside slack island: {outside}"))
    return out


def connected_island(case: NetworkCase, root: int) -> set[int]:
    """Bus ids reachable from `root` over in-service branches."""
    adj: dict[int, list[int]] = {b.id: [] for b in case.buses}
    for br in case.branches:
        if br.status:
            adj[br.from_bus].append(br.to_bus)
            adj[br.to_bus].append(br.from_bus)
    seen = {root}
    stack = [root]
    while stack:
        for nxt in adj[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def apply_outage(case: NetworkCase, outage: Outage) -> NetworkCase:
    """Return a copy of `case` with the outage target switched out of service.

    A generator outage that leaves a PV bus without any in-service generator
    demotes the bus to PQ.  Raises IslandSplitError when a branch outage would
    disconnect part of the slack bus's island, and OutageError for unknown or
    already-outaged targets.
    """
    if isinstance(outage, GeneratorOutage):
        hit = [g for g in case.generators if g.bus == outage.bus]
        if not hit:
            raise OutageError(f"no generator at bus {outage.bus}")
        live = [g for g in hit if g.status]
        if not live:
            raise OutageError(f"generators at bus {outage.bus} already out of service")
        gens = tuple(replace(g, status=False) if g.bus == outage.bus else g
                     for g in case.generators)
        buses = case.buses
        bus = case.bus_map()[outage.bus]
        if bus.kind in (BusKind.PV, BusKind.SLACK):
            # all units at the bus go out together, so the bus loses its source
            buses = tuple(replace(b, kind=BusKind.PQ) if b.id == outage.bus else b
                          for b in case.buses)
        return replace(case, generators=gens, buses=buses)

    if isinstance(outage, BranchOutage):
        matches = [(i, br) for i, br in enumerate(case.branches)
                   if br.from_bus == outage.from_bus and br.to_bus == outage.to_bus]
        if not matches:
            raise OutageError(f"no branch {outage.from_bus}-{outage.to_bus}")
        if outage.ordinal >= len(matches):
            raise OutageError(
                f"branch {outage.from_bus}-{outage.to_bus} ordinal {outage.ordinal} "
                f"out of range ({len(matches)} parallel)")
        idx, br = matches[outage.ordinal]
        if not br.status:
            raise OutageError(
                f"branch {outage.from_bus}-{outage.to_bus}#{outage.ordinal} "
                "already out of service")
        branches = tuple(replace(b, status=False) if i == idx else b
                         for i, b in enumerate(case.branches))
        trial = replace(case, branches=branches)
        slacks = [b.id for b in case.buses if b.kind is BusKind.SLACK]
        if slacks:
            before = connected_island(case, slacks[0])
            after = connected_island(trial, slacks[0])
            if after != before:
                lost = sorted(before - after)
                raise IslandSplitError(
                    f"outage of branch {outage.from_bus}-{outage.to_bus} splits "
                    f"buses {lost} from the slack island")
        return trial

    raise OutageError(f"unknown outage type {outage!r}")


def outage_label(outage: Outage) -> str:
    if isinstance(outage, GeneratorOutage):
        return f"G{outage.bus}"
    tag = f"B{outage.from_bus}-{outage.to_bus}"
    if outage.ordinal:
        tag += f"#{outage.ordinal}"
    return tag
