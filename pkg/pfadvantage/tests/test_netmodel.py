import random

import networkx as nx
import numpy as np
import pytest

from pfadvantage import netmodel
from pfadvantage.netmodel import (
    Branch,
    Bus,
    BusKind,
    NetworkCase,
    build_reduced_system,
    case_graph,
    format_case,
    grid_case,
    injection_density,
    load_case,
    parse_case,
    path_case,
    ring_case,
    solve_angles,
    tree_with_chords_case,
)
from pfadvantage.spectra import extreme_eigs
from pfadvantage.utils import (
    CaseParseError,
    DisconnectedNetworkError,
    InvalidBranchError,
    InvalidCaseError,
    PFAException,
    UnknownBusError,
)

from .conftest import FOUR_BUS_A, FOUR_BUS_CASE, write_case

TWO_BUS = """\
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0 0;
    2 1 50 0;
];
mpc.gen = [
    1 50;
];
mpc.branch = [
    1 2 0 {x} 0 0 0 0 0 0 1;
];
"""


def test_two_bus_susceptance():
    case = parse_case(TWO_BUS.format(x=0.1))
    (branch,) = case.branches
    assert branch.susceptance == pytest.approx(10.0)
    reduced = build_reduced_system(case)
    np.testing.assert_allclose(reduced.a.to_dense(), [[10.0]])
    np.testing.assert_allclose(reduced.b, [-0.5])


def test_injections_are_per_unit(four_bus_case):
    injections = {bus.id: bus.p_injection for bus in four_bus_case.buses}
    assert injections == pytest.approx({1: 0.0, 2: 1.0, 3: 0.0, 4: -1.0})


def test_four_bus_topology(four_bus_case):
    assert four_bus_case.name == "four_bus"
    assert four_bus_case.slack_id == 1
    assert len(four_bus_case.branches) == 5
    assert all(br.susceptance == 1.0 for br in four_bus_case.branches)


def test_four_bus_reduced_matrix(four_bus_reduced):
    np.testing.assert_array_equal(four_bus_reduced.a.to_dense(), FOUR_BUS_A)
    np.testing.assert_allclose(four_bus_reduced.b, [1.0, 0.0, -1.0], rtol=1e-15)
    assert four_bus_reduced.bus_ids == (2, 3, 4)
    assert four_bus_reduced.index_map == {2: 0, 3: 1, 4: 2}


def test_four_bus_matches_graph_laplacian(four_bus_case, four_bus_reduced):
    graph = case_graph(four_bus_case)
    full = nx.laplacian_matrix(graph, nodelist=[1, 2, 3, 4], weight="weight").toarray()
    np.testing.assert_allclose(four_bus_reduced.a.to_dense(), full[1:, 1:])


def test_injection_density(four_bus_case):
    assert injection_density(four_bus_case) == pytest.approx(2 / 3)
    assert injection_density(path_case(5)) == 0.0
    assert injection_density(ring_case(6, seed=3)) == 1.0


def test_connectivity_check_builds_graph_once(monkeypatch):
    calls = []
    original = netmodel.case_graph

    def counting(case):
        calls.append(case.name)
        return original(case)

    monkeypatch.setattr(netmodel, "case_graph", counting)
    with pytest.raises(DisconnectedNetworkError, match=r"\(2 components\)"):
        NetworkCase("split", 100.0, [Bus(1, BusKind.slack), Bus(2, BusKind.non_slack)], [])
    assert calls == ["split"]


def test_empty_branch_table_is_disconnected():
    text = "mpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0;\n2 1 0 0;\n];\nmpc.branch = [\n];\n"
    with pytest.raises(DisconnectedNetworkError, match="disconnected graph"):
        parse_case(text)


@pytest.mark.parametrize("x", ["0", "-0.2"])
def test_non_positive_reactance(x):
    with pytest.raises(InvalidBranchError, match="line 10"):
        parse_case(TWO_BUS.format(x=x))


def test_out_of_service_branch_skipped():
    text = FOUR_BUS_CASE.replace("1\t4\t0\t1.0\t0\t0\t0\t0\t0\t0\t1;", "1\t4\t0\t1.0\t0\t0\t0\t0\t0\t0\t0;")
    reduced = build_reduced_system(parse_case(text))
    # bus 4 keeps only the branch to bus 3
    assert reduced.a.to_dense()[2, 2] == 1.0


def test_parallel_branches_add():
    text = TWO_BUS.format(x=0.5).replace(
        "mpc.branch = [\n", "mpc.branch = [\n    2 1 0 0.25 0 0 0 0 0 0 1;\n"
    )
    reduced = build_reduced_system(parse_case(text))
    np.testing.assert_allclose(reduced.a.to_dense(), [[6.0]])


@pytest.mark.parametrize(
    "text, exc, match",
    [
        ("mpc.bus = [\n1 3 0 0;\n];\n", CaseParseError, "baseMVA"),
        ("mpc.baseMVA = 100;\nmpc.bus = [\n1 3 x 0;\n];\n", CaseParseError, "line 3"),
        ("mpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0;\n", CaseParseError, "unterminated"),
        ("mpc.baseMVA = 100;\nbogus\n", CaseParseError, "line 2"),
        (
            "mpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0;\n2 3 0 0;\n];\n",
            CaseParseError,
            "several reference buses",
        ),
        (
            "mpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0;\n];\nmpc.branch = [\n1 7 0 1 0 0 0 0 0 0 1;\n];\n",
            UnknownBusError,
            "unknown bus 7",
        ),
        (
            "mpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0;\n];\nmpc.gen = [\n9 10;\n];\n",
            UnknownBusError,
            "unknown bus 9",
        ),
    ],
)
def test_parse_errors(text, exc, match):
    with pytest.raises(exc, match=match) as info:
        parse_case(text)
    assert isinstance(info.value, PFAException)


def test_parse_error_lineno():
    with pytest.raises(CaseParseError) as info:
        parse_case("mpc.baseMVA = 100;\nmpc.bus = [\n1 3 x 0;\n];\n")
    assert info.value.lineno == 3


@pytest.mark.parametrize(
    "old, new, match",
    [
        ("2 1 50 0;", "nan 1 50 0;", "line 4: bus_i"),
        ("2 1 50 0;", "inf 1 50 0;", "line 4: bus_i"),
        ("2 1 50 0;", "2.7 1 50 0;", "line 4: bus_i"),
        ("2 1 50 0;", "2 1.5 50 0;", "line 4: type"),
        ("    1 50;", "    nan 50;", "line 7: gen bus"),
        ("    1 2 0", "    1.5 2 0", "line 10: fbus"),
        ("    1 2 0", "    1 -inf 0", "line 10: tbus"),
    ],
)
def test_ids_must_be_integers(old, new, match):
    text = TWO_BUS.format(x=0.1).replace(old, new)
    with pytest.raises(CaseParseError, match=match):
        parse_case(text)


def test_non_finite_demand():
    text = TWO_BUS.format(x=0.1).replace("2 1 50 0;", "2 1 nan 0;")
    with pytest.raises(InvalidCaseError, match="non-finite injection"):
        parse_case(text)


def test_load_case_rejects_binary(tmp_path):
    path = tmp_path / "garbage.m"
    path.write_bytes(b"\xff\xfe\x00mpc.baseMVA = 100;\n")
    with pytest.raises(CaseParseError, match="not UTF-8"):
        load_case(path)


def test_missing_slack_uses_first_bus(caplog):
    text = TWO_BUS.format(x=0.1).replace("1 3 0 0;", "1 1 0 0;")
    case = parse_case(text)
    assert case.slack_id == 1
    assert "no reference bus" in caplog.text


def test_unknown_slack(four_bus_case):
    with pytest.raises(UnknownBusError):
        build_reduced_system(four_bus_case, slack=42)


def test_slack_override(four_bus_case):
    reduced = build_reduced_system(four_bus_case, slack=3)
    assert reduced.bus_ids == (1, 2, 4)
    assert reduced.slack_id == 3
    np.testing.assert_allclose(reduced.a.to_dense().sum(axis=1), [1.0, 1.0, 1.0])


def test_branch_invariants():
    with pytest.raises(InvalidBranchError):
        Branch(2, 2, 1.0)
    with pytest.raises(InvalidBranchError):
        Branch(1, 2, 0.0)
    assert Branch(1, 2, 0.0, in_service=False).susceptance == 0.0


def test_case_needs_one_slack():
    buses = [Bus(1, BusKind.non_slack), Bus(2, BusKind.non_slack)]
    with pytest.raises(PFAException, match="exactly one slack"):
        NetworkCase("x", 100.0, buses, [Branch(1, 2, 1.0)])


def test_load_case_name_from_stem(tmp_path):
    path = write_case(tmp_path, "tiny", TWO_BUS.format(x=0.1))
    assert load_case(path).name == "tiny"


def test_format_case_round_trip(four_bus_case):
    again = parse_case(format_case(four_bus_case))
    assert again.name == four_bus_case.name
    assert [(b.id, b.kind) for b in again.buses] == [(b.id, b.kind) for b in four_bus_case.buses]
    assert [b.p_injection for b in again.buses] == pytest.approx(
        [b.p_injection for b in four_bus_case.buses]
    )
    assert again.branches == four_bus_case.branches


def test_format_synthetic_round_trip():
    case = tree_with_chords_case(30, 8, seed=5)
    again = parse_case(format_case(case))
    reduced, reduced_again = build_reduced_system(case), build_reduced_system(again)
    np.testing.assert_allclose(reduced_again.a.to_dense(), reduced.a.to_dense(), rtol=1e-14)
    np.testing.assert_allclose(reduced_again.b, reduced.b, rtol=1e-12, atol=1e-15)


def test_solve_angles_inserts_slack(four_bus_reduced):
    angles = solve_angles(four_bus_reduced, [0.5, 0.0, -0.5])
    assert list(angles) == [1, 2, 3, 4]
    assert angles == {1: 0.0, 2: 0.5, 3: 0.0, 4: -0.5}


SYNTHETIC = [
    path_case(12, seed=0),
    ring_case(15, seed=1),
    grid_case(4, 6, seed=2),
    tree_with_chords_case(40, 10, seed=3),
]


@pytest.mark.parametrize("case", SYNTHETIC, ids=lambda c: c.name)
def test_reduced_invariants(case):
    reduced = build_reduced_system(case)
    a = reduced.a.to_dense()
    np.testing.assert_array_equal(a, a.T)
    # row sums equal the susceptance to the slack
    to_slack = np.zeros(reduced.n)
    for br in case.branches:
        ends = {br.from_bus, br.to_bus}
        if case.slack_id in ends:
            (other,) = ends - {case.slack_id}
            to_slack[reduced.index_map[other]] += br.susceptance
    np.testing.assert_allclose(a.sum(axis=1), to_slack, atol=1e-12)
    assert np.all(np.diag(a) >= np.abs(a).sum(axis=1) - np.diag(a) - 1e-12)
    lambda_min, _ = extreme_eigs(reduced.a)
    assert lambda_min > 0


@pytest.mark.parametrize("case", SYNTHETIC, ids=lambda c: c.name)
def test_assembly_order_independent(case):
    branches = list(case.branches)
    random.Random(7).shuffle(branches)
    shuffled = NetworkCase(case.name, case.base_mva, case.buses, branches)
    np.testing.assert_array_equal(
        build_reduced_system(shuffled).a.to_dense(), build_reduced_system(case).a.to_dense()
    )


def test_synthetic_injections_balanced():
    case = grid_case(5, 5, seed=11)
    assert sum(bus.p_injection for bus in case.buses) == pytest.approx(0.0, abs=1e-12)
    assert case.slack_id == 1
    assert case == grid_case(5, 5, seed=11)
