import math

import pytest

from gridmc.matpower import CaseFormatError, parse_matpower, serialize_matpower
from gridmc.network import BusKind

MINIMAL = """
function mpc = mini
mpc.version = '2';
mpc.baseMVA = 50;
mpc.bus = [
    1 3 0  0  0 0 1 1.03 0 230 1 1.1 0.9;
    2 1 25 10 0 5 1 1.0  0 230 1 1.1 0.9;
];
mpc.gen = [
    1 10 0 30 -30 1.03 50 1 100 0;
];
mpc.branch = [
    1 2 0.01 0.05 0.02 40 0 0 0 0 1;
];
"""


def test_parse_minimal():
    case = parse_matpower(MINIMAL)
    assert case.name == "mini"
    assert case.base_mva == 50
    assert len(case.buses) == 2 and len(case.branches) == 1
    assert len(case.loads) == 1
    kinds = {b.id: b.kind for b in case.buses}
    assert kinds[1] is BusKind.SLACK and kinds[2] is BusKind.PQ
    ld = case.loads[0]
    assert ld.p_nom == 25 / 50 and ld.q_nom == 10 / 50
    b2 = case.bus_map()[2]
    assert b2.bs == 5 / 50
    br = case.branches[0]
    assert br.rate_a == 40 / 50 and br.tap == 1.0
    g = case.generators[0]
    assert g.p_set == 10 / 50 and g.q_max == 30 / 50


def test_parse_case14_counts(case14):
    # published layout: 14 buses, 20 branches, 5 generators
    assert len(case14.buses) == 14
    assert len(case14.branches) == 20
    assert len(case14.generators) == 5
    kinds = [b.kind for b in case14.buses]
    assert kinds.count(BusKind.SLACK) == 1
    assert kinds.count(BusKind.PV) == 4


def test_per_unit_conversion(case14):
    # p_nom * base recovers the source MW figure (bus 3: 94.2 MW)
    by_bus = {ld.bus: ld for ld in case14.loads}
    assert by_bus[3].p_nom * case14.base_mva == pytest.approx(94.2, rel=1e-9)
    assert by_bus[9].q_nom * case14.base_mva == pytest.approx(16.6, rel=1e-9)


def test_angle_and_tap_conversion(case14):
    br = {(b.from_bus, b.to_bus): b for b in case14.branches}
    assert br[(4, 7)].tap == pytest.approx(0.978)
    assert br[(1, 2)].tap == 1.0
    b9 = case14.bus_map()[9]
    assert b9.bs == pytest.approx(0.19)
    b2 = case14.bus_map()[2]
    assert b2.va_init == pytest.approx(math.radians(-4.98))


def test_missing_matrix_error():
    text = MINIMAL.replace("mpc.bus", "mpc.busted")
    with pytest.raises(CaseFormatError, match="missing required matrix 'bus'"):
        parse_matpower(text)


def test_missing_base_mva():
    text = MINIMAL.replace("mpc.baseMVA = 50;", "")
    with pytest.raises(CaseFormatError, match="baseMVA"):
        parse_matpower(text)


def test_syntax_error_reports_line():
    text = MINIMAL.replace("0.01 0.05", "0.01 zz")
    with pytest.raises(CaseFormatError, match="line"):
        parse_matpower(text)


def test_dangling_bus_reference():
    text = MINIMAL.replace("1 2 0.01", "1 7 0.01")
    with pytest.raises(CaseFormatError, match="unknown bus"):
        parse_matpower(text)


def test_multiple_slack_rejected():
    text = MINIMAL.replace("2 1 25", "2 3 25")
    with pytest.raises(CaseFormatError, match="multiple slack"):
        parse_matpower(text)


def test_gencost_ignored():
    text = MINIMAL + "\nmpc.gencost = [\n 2 0 0 3 0.01 40 0;\n];\n"
    case = parse_matpower(text)
    assert len(case.generators) == 1


@pytest.mark.parametrize("name", ["case14", "case30", "case118"])
def test_round_trip_stability(name, data_dir):
    text = (data_dir / f"{name}.m").read_text()
    first = parse_matpower(text)
    second = parse_matpower(serialize_matpower(first))
    assert second == first


def test_out_of_service_rows_retained():
    text = MINIMAL.replace("1 2 0.01 0.05 0.02 40 0 0 0 0 1",
                           "1 2 0.01 0.05 0.02 40 0 0 0 0 0")
    case = parse_matpower(text)
    assert len(case.branches) == 1
    assert not case.branches[0].status
    assert case.in_service_branches() == ()
