"""MATPOWER case-file parsing and serialization.

Reads the `baseMVA`, `bus`, `gen`, and `branch` matrices of a MATPOWER
`.m` case function and converts everything to per-unit on the case base;
other assignments (gencost, bus_name, ...) are parsed and ignored.  Column
semantics follow the MATPOWER manual.  Serialization writes the same subset
back out, so `parse(serialize(parse(text)))` reproduces the case value.
"""

from __future__ import annotations

import math
import re

from .network import Branch, Bus, BusKind, GridError, Generator, Load, NetworkCase

_DEG = math.pi / 180.0

_BUS_KINDS = {1: BusKind.PQ, 2: BusKind.PV, 3: BusKind.SLACK, 4: BusKind.PQ}


class CaseFormatError(GridError):
    """Malformed case text; carries a 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def _strip_comments(text: str) -> str:
    out = []
    for line in text.splitlines():
        cut = line.find("%")
        out.append(line if cut < 0 else line[:cut])
    return "\n".join(out)


def _find_matrix(clean: str, name: str) -> list[list[float]] | None:
    """Extract `mpc.<name> = [ rows ];` as a list of numeric rows."""
    m = re.search(rf"\.\s*{name}\s*=\s*\[", clean)
    if m is None:
        return None
    start = m.end()
    end = clean.find("]", start)
    if end < 0:
        line = clean.count("\n", 0, m.start()) + 1
        raise CaseFormatError(f"unterminated matrix '{name}'", line)
    body = clean[start:end]
    base_line = clean.count("\n", 0, start) + 1
    rows: list[list[float]] = []
    for i, chunk in enumerate(body.split(";")):
        fields = chunk.replace(",", " ").split()
        if not fields:
            continue
        try:
            rows.append([float(f) for f in fields])
        except ValueError as exc:
            line = base_line + body.count("\n", 0, body.find(chunk))
            raise CaseFormatError(f"bad number in '{name}' row {i + 1}: {exc}", line)
    return rows


def parse_matpower(text: str) -> NetworkCase:
    """Parse MATPOWER case text into a per-unit NetworkCase."""
    clean = _strip_comments(text)

    name = ""
    fn = re.search(r"function\s+\w+\s*=\s*(\w+)", clean)
    if fn:
        name = fn.group(1)

    mb = re.search(r"\.\s*baseMVA\s*=\s*([0-9eE.+-]+)", clean)
    if mb is None:
        raise CaseFormatError("missing baseMVA assignment")
    base = float(mb.group(1))
    if base <= 0:
        raise CaseFormatError(f"non-positive baseMVA {base}")

    bus_rows = _find_matrix(clean, "bus")
    gen_rows = _find_matrix(clean, "gen")
    branch_rows = _find_matrix(clean, "branch")
    for mat, rows in (("bus", bus_rows), ("gen", gen_rows), ("branch", branch_rows)):
        if rows is None:
            raise CaseFormatError(f"missing required matrix '{mat}'")

    deg = _DEG

    # generator voltage setpoints keyed by bus, first in-service unit wins
    gens: list[Generator] = []
    vg_by_bus: dict[int, float] = {}
    for row in gen_rows:
        if len(row) < 10:
            raise CaseFormatError(f"gen row has {len(row)} columns, expected >= 10")
        bus_id = int(row[0])
        status = row[7] > 0
        g = Generator(bus=bus_id, p_set=row[1] / base, v_set=row[5],
                      q_min=row[4] / base, q_max=row[3] / base, status=status)
        gens.append(g)
        if status and bus_id not in vg_by_bus:
            vg_by_bus[bus_id] = row[5]

    buses: list[Bus] = []
    loads: list[Load] = []
    seen_slack: list[int] = []
    for row in bus_rows:
        if len(row) < 13:
            raise CaseFormatError(f"bus row has {len(row)} columns, expected >= 13")
        bus_id = int(row[0])
        code = int(row[1])
        if code not in _BUS_KINDS:
            raise CaseFormatError(f"bus {bus_id}: unknown type code {code}")
        kind = _BUS_KINDS[code]
        if kind is BusKind.SLACK:
            seen_slack.append(bus_id)
        vm, va = row[7], row[8] * deg
        v_set = vg_by_bus.get(bus_id, vm if vm > 0 else 1.0)
        vmax = row[11] if row[11] > 0 else 1.1
        vmin = row[12] if row[12] > 0 else 0.9
        buses.append(Bus(id=bus_id, kind=kind, v_set=v_set, angle_set=va,
                         v_min=vmin, v_max=vmax,
                         gs=row[4] / base, bs=row[5] / base,
                         vm_init=vm if vm > 0 else 1.0, va_init=va))
        if row[2] != 0.0 or row[3] != 0.0:
            loads.append(Load(bus=bus_id, p_nom=row[2] / base, q_nom=row[3] / base))

    if len(seen_slack) > 1:
        raise CaseFormatError(f"multiple slack buses: {seen_slack}")

    ids = {b.id for b in buses}
    for g in gens:
        if g.bus not in ids:
            raise CaseFormatError(f"gen references unknown bus {g.bus}")

    branches: list[Branch] = []
    for row in branch_rows:
        if len(row) < 11:
            raise CaseFormatError(f"branch row has {len(row)} columns, expected >= 11")
        f, t = int(row[0]), int(row[1])
        if f not in ids or t not in ids:
            raise CaseFormatError(f"branch references unknown bus {f}-{t}")
        tap = row[8] if row[8] != 0.0 else 1.0
        branches.append(Branch(from_bus=f, to_bus=t, r=row[2], x=row[3], b=row[4],
                               tap=tap, shift=row[9] * deg, rate_a=row[5] / base,
                               status=row[10] > 0))

    return NetworkCase(base_mva=base, buses=tuple(buses), loads=tuple(loads),
                       generators=tuple(gens), branches=tuple(branches), name=name)


def _fmt(x: float) -> str:
    return format(x, ".17g")


def serialize_matpower(case: NetworkCase) -> str:
    """Write the case back out as a MATPOWER case function."""
    base = case.base_mva
    pd: dict[int, float] = {}
    qd: dict[int, float] = {}
    for ld in case.loads:
        pd[ld.bus] = pd.get(ld.bus, 0.0) + ld.p_nom * base
        qd[ld.bus] = qd.get(ld.bus, 0.0) + ld.q_nom * base

    kind_code = {BusKind.PQ: 1, BusKind.PV: 2, BusKind.SLACK: 3}
    lines = [f"function mpc = {case.name or 'case'}",
             "mpc.version = '2';",
             f"mpc.baseMVA = {_fmt(base)};",
             "mpc.bus = ["]
    for b in case.buses:
        lines.append("\t" + "\t".join([
            str(b.id), str(kind_code[b.kind]),
            _fmt(pd.get(b.id, 0.0)), _fmt(qd.get(b.id, 0.0)),
            _fmt(b.gs * base), _fmt(b.bs * base), "1",
            _fmt(b.vm_init), _fmt(b.va_init / _DEG), "0", "1",
            _fmt(b.v_max), _fmt(b.v_min)]) + ";")
    lines.append("];")

    lines.append("mpc.gen = [")
    for g in case.generators:
        lines.append("\t" + "\t".join([
            str(g.bus), _fmt(g.p_set * base), "0",
            _fmt(g.q_max * base), _fmt(g.q_min * base), _fmt(g.v_set),
            _fmt(base), "1" if g.status else "0", "0", "0"]) + ";")
    lines.append("];")

    lines.append("mpc.branch = [")
    for br in case.branches:
        tap = 0.0 if br.tap == 1.0 else br.tap
        lines.append("\t" + "\t".join([
            str(br.from_bus), str(br.to_bus),
            _fmt(br.r), _fmt(br.x), _fmt(br.b),
            _fmt(br.rate_a * base), "0", "0",
            _fmt(tap), _fmt(br.shift / _DEG),
            "1" if br.status else "0"]) + ";")
    lines.append("];")
    return "\n".join(lines) + "\n"
