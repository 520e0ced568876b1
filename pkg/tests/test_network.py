import pytest
from dataclasses import replace

from gridmc.network import (Branch, BranchOutage, Bus, BusKind,
                            GeneratorOutage, Generator, IslandSplitError,
                            Load, NetworkCase, OutageError, apply_outage,
                            connected_island, validate)

from fixtures import island_case, tiny_pv


def test_validate_clean_case14(case14):
    assert validate(case14) == []


def test_validate_two_slacks():
    case = tiny_pv()
    buses = tuple(replace(b, kind=BusKind.SLACK) if b.id == 2 else b
                  for b in case.buses)
    bad = replace(case, buses=buses)
    vs = validate(bad)
    assert any("multiple slack buses" in str(v) and "1" in str(v)
               and "2" in str(v) for v in vs)


def test_validate_no_slack():
    case = tiny_pv()
    buses = tuple(replace(b, kind=BusKind.PQ) if b.kind is BusKind.SLACK else b
                  for b in case.buses)
    vs = validate(replace(case, buses=buses))
    assert any("no slack bus" in str(v) for v in vs)


def test_validate_zero_impedance_branch():
    case = tiny_pv()
    branches = case.branches + (Branch(1, 2, 0.0, 0.0),)
    vs = validate(replace(case, branches=branches))
    assert any("zero series impedance" in str(v) for v in vs)


def test_validate_band_and_limits():
    case = tiny_pv()
    buses = tuple(replace(b, v_min=1.2, v_max=1.1) if b.id == 3 else b
                  for b in case.buses)
    assert any("v_min" in str(v) for v in validate(replace(case, buses=buses)))
    gens = case.generators + (Generator(3, 0.1, 1.0),)
    assert any("PQ bus" in str(v) for v in validate(replace(case, generators=gens)))
    gens = tuple(replace(g, q_min=1.0, q_max=-1.0) if g.bus == 2 else g
                 for g in case.generators)
    assert any("q_min" in str(v) for v in validate(replace(case, generators=gens)))


def test_validate_dangling_references():
    case = tiny_pv()
    vs = validate(replace(case, loads=case.loads + (Load(99, 0.1, 0.0),)))
    assert any("unknown bus" in str(v) for v in vs)
    vs = validate(replace(case, branches=case.branches + (Branch(1, 98, 0.1, 0.1),)))
    assert any("unknown bus" in str(v) for v in vs)


def test_validate_detached_island():
    case = tiny_pv()
    buses = case.buses + (Bus(7, BusKind.PQ), Bus(8, BusKind.PQ))
    branches = case.branches + (Branch(7, 8, 0.01, 0.05),)
    vs = validate(replace(case, buses=buses, branches=branches))
    assert any("outside slack island" in str(v) for v in vs)


def test_connected_island():
    case = island_case()
    assert connected_island(case, 1) == {1, 2, 3}


def test_branch_outage_counts(case14):
    out = apply_outage(case14, BranchOutage(1, 2))
    assert len(out.in_service_branches()) == 19
    assert len(case14.in_service_branches()) == 20, "input must not mutate"


def test_generator_outage_demotes_pv(case14):
    out = apply_outage(case14, GeneratorOutage(6))
    kinds = {b.id: b.kind for b in out.buses}
    assert kinds[6] is BusKind.PQ
    assert all(not g.status for g in out.generators if g.bus == 6)
    # original untouched
    assert {b.id: b.kind for b in case14.buses}[6] is BusKind.PV


def test_outage_twice_errors(case14):
    once = apply_outage(case14, BranchOutage(1, 2))
    with pytest.raises(OutageError):
        apply_outage(once, BranchOutage(1, 2))
    gone = apply_outage(case14, GeneratorOutage(6))
    with pytest.raises(OutageError):
        apply_outage(gone, GeneratorOutage(6))


def test_outage_unknown_targets(case14):
    with pytest.raises(OutageError):
        apply_outage(case14, BranchOutage(1, 99))
    with pytest.raises(OutageError):
        apply_outage(case14, GeneratorOutage(99))
    with pytest.raises(OutageError):
        apply_outage(case14, BranchOutage(1, 2, ordinal=5))


def test_island_split_error():
    with pytest.raises(IslandSplitError) as err:
        apply_outage(island_case(), BranchOutage(2, 3))
    assert "3" in str(err.value)


def test_parallel_branch_ordinal():
    case = island_case()
    dup = replace(case, branches=case.branches + (Branch(2, 3, 0.02, 0.1),))
    out = apply_outage(dup, BranchOutage(2, 3, ordinal=1))
    live = [(b.from_bus, b.to_bus) for b in out.in_service_branches()]
    assert live.count((2, 3)) == 1
