"""Contingency enumeration and per-outage Monte Carlo screening.

Outage candidates are ranked from the solved base case: generators by
dispatched real power (the slack's from its solved injection), branches by
apparent-power loading at the from end.  Each enumerated outage set gets its
own study, seeded from (study seed, contingency ordinal) so adding or
removing contingencies never perturbs the others' draws.  An outage set
whose deterministic base case cannot be solved is recorded as infeasible
with an assigned collapse probability of one, and the screening continues.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import rng as _rng
from .circuit import CaseIndex, remap_state
from .montecarlo import ConfigError, StudyConfig, StudyReport, UncertaintySpec, run_study
from .network import (BranchOutage, BusKind, GeneratorOutage, GridError,
                      NetworkCase, Outage, OutageError, apply_outage,
                      outage_label, validate)
from .solver import LimitSpec, OperatingClass, PFSolution, SolverOptions, robust_solve

CLASS_COLUMNS = (OperatingClass.VOLTAGE_COLLAPSE, OperatingClass.ANGULAR_UNSTABLE,
                 OperatingClass.VOLTAGE_BAND_VIOLATION,
                 OperatingClass.BRANCH_OVERLOAD, OperatingClass.NORMAL)


@dataclass(frozen=True)
class ContingencySpec:
    """Which outage sets to enumerate.

    n1_generators: N-1 outages of the top-k dispatched generator buses.
    n2_generators: for each of those, pair it with this many generator buses
        ranked immediately below it.
    n1_branches: N-1 outages of the top-k loaded branches.
    n2_gen_branch: (k, j) pairs the top-k generators with the top-j loaded
        branches.
    explicit: extra outage sets appended verbatim.
    """
    n1_generators: int = 0
    n2_generators: int = 0
    n1_branches: int = 0
    n2_gen_branch: tuple[int, int] = (0, 0)
    explicit: tuple[tuple[Outage, ...], ...] = ()


@dataclass(frozen=True)
class ContingencyResult:
    label: str
    outages: tuple[Outage, ...]
    base_feasible: bool
    report: StudyReport
    seed: int


def rank_generators(case: NetworkCase, base_solution: PFSolution) -> list[int]:
    """Generator buses by descending dispatched real power, ties by
    ascending bus id.  The slack bus's dispatch is its solved injection."""
    index = CaseIndex(case)
    dispatch: dict[int, float] = {}
    slack_id = index.buses[index.slack].id
    for g in case.generators:
        if g.status:
            dispatch[g.bus] = dispatch.get(g.bus, 0.0) + g.p_set
    if slack_id in dispatch:
        dispatch[slack_id] = index.slack_power(base_solution.state).real
    return sorted(dispatch, key=lambda b: (-dispatch[b], b))


def rank_branches(case: NetworkCase, base_solution: PFSolution
                  ) -> list[tuple[int, int, int]]:
    """In-service branches as (from, to, ordinal) by descending apparent
    power at the from end, ties by ascending (from, to)."""
    index = CaseIndex(case)
    sf, _ = index.branch_flows(base_solution.state)
    loading = np.abs(sf)
    seen: dict[tuple[int, int], int] = {}
    rows = []
    for i, br in enumerate(index.branches):
        key = (br.from_bus, br.to_bus)
        ordinal = seen.get(key, 0)
        seen[key] = ordinal + 1
        rows.append((float(loading[i]), br.from_bus, br.to_bus, ordinal))
    rows.sort(key=lambda r: (-r[0], r[1], r[2], r[3]))
    return [(f, t, o) for _, f, t, o in rows]


def enumerate_outages(case: NetworkCase, base_solution: PFSolution,
                      spec: ContingencySpec) -> list[tuple[Outage, ...]]:
    """Deterministic, duplicate-free outage sets in screening order:
    N-1 generators, N-2 generator pairs, N-1 branches, generator-branch
    pairs, then any explicit sets."""
    gens = rank_generators(case, base_solution)
    branches = rank_branches(case, base_solution)

    out: list[tuple[Outage, ...]] = []
    seen: set[frozenset] = set()

    def push(outages: tuple[Outage, ...]) -> None:
        key = frozenset(outages)
        if key not in seen:
            seen.add(key)
            out.append(outages)

    k1 = min(spec.n1_generators, len(gens))
    for g in gens[:k1]:
        push((GeneratorOutage(g),))
    if spec.n2_generators:
        for i, g in enumerate(gens[:k1]):
            partners = gens[i + 1:i + 1 + spec.n2_generators]
            for h in partners:
                push((GeneratorOutage(g), GeneratorOutage(h)))
    for f, t, o in branches[:spec.n1_branches]:
        push((BranchOutage(f, t, o),))
    kg, kb = spec.n2_gen_branch
    for g in gens[:min(kg, len(gens))]:
        for f, t, o in branches[:kb]:
            push((GeneratorOutage(g), BranchOutage(f, t, o)))
    for extra in spec.explicit:
        push(tuple(extra))
    return out


def contingency_label(ordinal: int, outages: tuple[Outage, ...]) -> str:
    return f"C{ordinal}: " + " ".join(outage_label(o) for o in outages)


def _degenerate(case_name: str, diagnostic: str, spec: UncertaintySpec,
                config: StudyConfig, opts: SolverOptions,
                limits: LimitSpec) -> StudyReport:
    from .montecarlo import CLASS_ORDER
    return StudyReport(
        name=case_name, n=0, stop_reason="base_infeasible",
        counts={oc: 0 for oc in CLASS_ORDER}, base=None, samples=[],
        histograms=[], config=config, uncertainty=spec, solver_options=opts,
        limits=limits, base_feasible=False, diagnostic=diagnostic)


def run_contingency_study(case: NetworkCase, spec: ContingencySpec,
                          uncertainty: UncertaintySpec, config: StudyConfig,
                          opts: SolverOptions | None = None,
                          limits: LimitSpec | None = None
                          ) -> list[ContingencyResult]:
    """Screen every enumerated outage set with its own Monte Carlo study.

    The pre-outage base case must be solvable (it anchors the rankings);
    infeasible post-outage base cases are recorded, not raised.
    """
    opts = opts or SolverOptions()
    limits = limits or LimitSpec()
    problems = validate(case)
    if problems:
        raise ConfigError("invalid case: " + "; ".join(str(p) for p in problems))
    base_index = CaseIndex(case)
    base = robust_solve(base_index, None, opts)
    if not base.converged:
        raise ConfigError(f"base case unsolvable, cannot rank outages: "
                          f"{base.diagnostic}")

    results: list[ContingencyResult] = []
    for ordinal, outages in enumerate(enumerate_outages(case, base, spec), 1):
        label = contingency_label(ordinal, outages)
        seed_c = _rng.derive_seed(config.seed, ordinal)
        config_c = replace(config, seed=seed_c)

        try:
            ccase = case
            for o in outages:
                ccase = apply_outage(ccase, o)
            ccase = replace(ccase, name=f"{case.name}@{outage_label(outages[0])}"
                            if len(outages) == 1 else
                            f"{case.name}@" + "+".join(outage_label(o)
                                                       for o in outages))
            problems = validate(ccase)
            if problems:
                raise OutageError("; ".join(str(p) for p in problems))
        except (OutageError, GridError) as exc:
            report = _degenerate(case.name, f"outage not applicable: {exc}",
                                 uncertainty, config_c, opts, limits)
            results.append(ContingencyResult(label, outages, False, report,
                                             seed_c))
            continue

        warm = remap_state(base_index, base.state, CaseIndex(ccase))
        report = run_study(ccase, uncertainty, config_c, opts, limits,
                           base_warm_start=warm)
        results.append(ContingencyResult(label, outages, report.base_feasible,
                                         report, seed_c))
    return results


def risk_table_text(results: list[ContingencyResult]) -> str:
    """Aligned-column comparative risk table, one row per contingency."""
    out = [f"{'contingency':<28}{'feasible':>9}{'n':>7}"
           f"{'collapse % (ci99)':>26}{'angular % (ci99)':>26}"]
    for r in results:
        rep = r.report
        def cell(oc):
            if rep.n == 0:
                return f"{100 * rep.p_hat(oc):.2f} [--]"
            ci = rep.ci(oc, 99)
            return (f"{100 * rep.p_hat(oc):.2f} "
                    f"[{100 * ci.lower:.2f},{100 * ci.upper:.2f}]")
        out.append(f"{r.label:<28}{str(r.base_feasible):>9}{rep.n:>7}"
                   f"{cell(OperatingClass.VOLTAGE_COLLAPSE):>26}"
                   f"{cell(OperatingClass.ANGULAR_UNSTABLE):>26}")
    return "\n".join(out) + "\n"


def risk_table_rows(results: list[ContingencyResult]) -> list[dict]:
    """Machine form of the risk table (one dict per contingency)."""
    rows = []
    for r in results:
        rep = r.report
        row: dict = {
            "label": r.label,
            "outages": [outage_label(o) for o in r.outages],
            "base_feasible": bool(r.base_feasible),
            "n": int(rep.n),
            "seed": int(r.seed),
            "diagnostic": rep.diagnostic,
        }
        for oc in CLASS_COLUMNS:
            c95, c99 = rep.ci(oc, 95), rep.ci(oc, 99)
            row[oc.value] = {
                "p_hat": float(rep.p_hat(oc)),
                "ci95": [float(c95.lower), float(c95.upper)],
                "ci99": [float(c99.lower), float(c99.upper)],
            }
        rows.append(row)
    return rows


def risk_table_csv(results: list[ContingencyResult]) -> str:
    import csv
    import io
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    hdr = ["label", "outages", "base_feasible", "n", "seed"]
    for oc in CLASS_COLUMNS:
        hdr += [f"{oc.value}_p_hat", f"{oc.value}_ci99_lower",
                f"{oc.value}_ci99_upper"]
    w.writerow(hdr)
    for r in results:
        rep = r.report
        row = [r.label, " ".join(outage_label(o) for o in r.outages),
               int(r.base_feasible), rep.n, r.seed]
        for oc in CLASS_COLUMNS:
            ci = rep.ci(oc, 99)
            row += [format(rep.p_hat(oc), ".17g"),
                    format(ci.lower, ".17g"), format(ci.upper, ".17g")]
        w.writerow(row)
    return buf.getvalue()
