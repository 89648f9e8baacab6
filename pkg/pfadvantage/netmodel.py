"""Power-network cases and the slack-reduced DC power flow system.

Cases are read from a subset of the MATPOWER text format::

    function mpc = case4
    mpc.baseMVA = 100;
    mpc.bus = [
        1  3  0    0;
        2  1  0    0;
    ];
    mpc.gen = [
        1  50;
    ];
    mpc.branch = [
        1  2  0  0.1  0  0  0  0  0  0  1;
    ];

Only ``bus_i, type, Pd`` of bus rows, ``bus, Pg`` of generator rows and
``fbus, tbus, x`` (plus ``status``, column 11, when present) of branch
rows are read. Net injection at a bus is ``(sum(Pg) - Pd) / baseMVA``.
"""

from __future__ import annotations

import enum
import logging
import re
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

import networkx as nx
import numpy as np

from .sparsela import SparseMatrix
from .units import per_unit
from .utils import (
    CaseParseError,
    DisconnectedNetworkError,
    DomainError,
    InvalidBranchError,
    InvalidCaseError,
    UnknownBusError,
)

logger = logging.getLogger(__name__)

SLACK_BUS_TYPE = 3
BRANCH_STATUS_COLUMN = 10


class BusKind(enum.Enum):
    slack = "slack"
    non_slack = "non_slack"


@dataclass(frozen=True)
class Bus:
    id: int
    kind: BusKind
    p_injection: float = 0.0

    def __post_init__(self):
        if self.id < 1:
            raise InvalidCaseError(f"bus ids must be positive integers, got {self.id}")
        if not np.isfinite(self.p_injection):
            raise InvalidCaseError(f"bus {self.id} has non-finite injection {self.p_injection!r}")


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    susceptance: float
    in_service: bool = True

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise InvalidBranchError(f"branch {self.from_bus}-{self.to_bus} is a self loop")
        if self.in_service and not self.susceptance > 0:
            raise InvalidBranchError(
                f"branch {self.from_bus}-{self.to_bus} has non-positive "
                f"susceptance {self.susceptance!r}"
            )


@dataclass(frozen=True)
class NetworkCase:
    """A validated network: unique bus ids, exactly one slack bus, known
    branch endpoints and a connected in-service graph."""

    name: str
    base_mva: float
    buses: Tuple[Bus, ...]
    branches: Tuple[Branch, ...]

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        if not self.base_mva > 0:
            raise InvalidCaseError(f"baseMVA must be positive, got {self.base_mva!r}")
        if not self.buses:
            raise InvalidCaseError(f"case {self.name!r} has no buses")
        ids = [bus.id for bus in self.buses]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise InvalidCaseError(f"duplicate bus ids {dupes}")
        slacks = [bus.id for bus in self.buses if bus.kind is BusKind.slack]
        if len(slacks) != 1:
            raise InvalidCaseError(
                f"case {self.name!r} must have exactly one slack bus, found {slacks}"
            )
        known = set(ids)
        for branch in self.branches:
            for end in (branch.from_bus, branch.to_bus):
                if end not in known:
                    raise UnknownBusError(
                        f"branch {branch.from_bus}-{branch.to_bus} refers to "
                        f"unknown bus {end}"
                    )
        graph = case_graph(self)
        if not nx.is_connected(graph):
            raise DisconnectedNetworkError(
                f"case {self.name!r}: disconnected graph "
                f"({nx.number_connected_components(graph)} components)"
            )

    @property
    def slack_id(self) -> int:
        return next(bus.id for bus in self.buses if bus.kind is BusKind.slack)

    @property
    def bus_ids(self) -> Tuple[int, ...]:
        return tuple(bus.id for bus in self.buses)

    def with_slack(self, slack: int) -> NetworkCase:
        """Copy of the case with ``slack`` as the reference bus."""
        if slack not in self.bus_ids:
            raise UnknownBusError(f"unknown slack bus id {slack}")
        buses = tuple(
            Bus(
                bus.id,
                BusKind.slack if bus.id == slack else BusKind.non_slack,
                bus.p_injection,
            )
            for bus in self.buses
        )
        return NetworkCase(self.name, self.base_mva, buses, self.branches)


@dataclass(frozen=True, eq=False)
class ReducedSystem:
    """The DCPF system ``a @ theta = b`` with the slack row/column removed.

    ``bus_ids[k]`` is the external id of matrix row ``k``; ``index_map``
    is the inverse mapping.
    """

    a: SparseMatrix
    b: np.ndarray
    bus_ids: Tuple[int, ...]
    slack_id: int

    @property
    def n(self) -> int:
        return self.a.n

    @property
    def index_map(self) -> Mapping[int, int]:
        return {bus_id: k for k, bus_id in enumerate(self.bus_ids)}


def case_graph(case: NetworkCase) -> nx.Graph:
    """In-service topology; parallel branches merge into one weighted edge."""
    graph = nx.Graph()
    graph.add_nodes_from(bus.id for bus in case.buses)
    for branch in case.branches:
        if not branch.in_service:
            continue
        u, v = branch.from_bus, branch.to_bus
        if graph.has_edge(u, v):
            graph[u][v]["weight"] += branch.susceptance
        else:
            graph.add_edge(u, v, weight=branch.susceptance)
    return graph


# Parsing

_ASSIGN_RE = re.compile(r"^\s*mpc\.(\w+)\s*=\s*(.*)$")
_FUNCTION_RE = re.compile(r"^\s*function\s+mpc\s*=\s*(\w+)")


def _strip_comment(line: str) -> str:
    return line.split("%", 1)[0]


def _numeric_rows(block: List[Tuple[int, str]]) -> List[Tuple[int, List[float]]]:
    rows = []
    for lineno, text in block:
        for chunk in text.split(";"):
            tokens = chunk.replace(",", " ").split()
            if not tokens:
                continue
            try:
                rows.append((lineno, [float(tok) for tok in tokens]))
            except ValueError:
                raise CaseParseError(f"non-numeric entry in {chunk.strip()!r}", lineno)
    return rows


def _as_id(value: float, column: str, lineno: int) -> int:
    if not (np.isfinite(value) and float(value).is_integer()):
        raise CaseParseError(f"{column} must be an integer, got {value!r}", lineno)
    return int(value)


def _split_blocks(text: str):
    """Yield ``(key, value_or_rows, lineno)`` for each ``mpc.<key>`` assignment."""
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        lineno = i + 1
        line = _strip_comment(lines[i])
        i += 1
        if not line.strip() or _FUNCTION_RE.match(line):
            continue
        match = _ASSIGN_RE.match(line)
        if match is None:
            raise CaseParseError(f"unexpected statement {line.strip()!r}", lineno)
        key, rhs = match.group(1), match.group(2).strip()
        if rhs[:1] in ("[", "{"):
            closer = "]" if rhs[0] == "[" else "}"
            block = []
            body = rhs[1:]
            start = lineno
            while closer not in body:
                block.append((lineno, body))
                if i >= len(lines):
                    raise CaseParseError(f"unterminated mpc.{key} matrix", start)
                lineno = i + 1
                body = _strip_comment(lines[i])
                i += 1
            block.append((lineno, body.split(closer, 1)[0]))
            yield key, (block if closer == "]" else None), start
        else:
            if not rhs.endswith(";"):
                raise CaseParseError(f"missing ';' after mpc.{key}", lineno)
            yield key, rhs[:-1].strip(), lineno


def parse_case(text: str, name: Optional[str] = None) -> NetworkCase:
    """
    Parse MATPOWER-subset case text into a validated :class:`NetworkCase`.

    Branch susceptance is ``1 / x``; resistance and line charging are
    ignored (DC approximation). Out-of-service branches are kept but
    flagged. A case without a type-3 bus gets its first bus as slack.

    Raises
    ------
    CaseParseError
        Syntax errors (with line number), missing tables, several slack buses.
    UnknownBusError
        Generator or branch rows that refer to undefined buses.
    InvalidBranchError
        Zero or negative reactance on an in-service branch.
    DisconnectedNetworkError
    """
    found_name = None
    base_mva = None
    tables: Dict[str, List[Tuple[int, List[float]]]] = {}
    for line in text.splitlines():
        match = _FUNCTION_RE.match(_strip_comment(line))
        if match:
            found_name = match.group(1)
            break
    for key, value, lineno in _split_blocks(text):
        if key == "baseMVA":
            try:
                base_mva = float(value)
            except ValueError:
                raise CaseParseError(f"baseMVA is not a number: {value!r}", lineno)
        elif key in ("bus", "gen", "branch"):
            tables[key] = _numeric_rows(value)
    if base_mva is None:
        raise CaseParseError("missing mpc.baseMVA")
    if "bus" not in tables:
        raise CaseParseError("missing mpc.bus table")

    bus_rows = []
    for lineno, row in tables["bus"]:
        if len(row) < 3:
            raise CaseParseError("bus rows need at least bus_i, type, Pd", lineno)
        bus_rows.append(
            (lineno, _as_id(row[0], "bus_i", lineno), _as_id(row[1], "type", lineno), row[2])
        )
    bus_ids = [bus_id for _, bus_id, _, _ in bus_rows]
    known = set(bus_ids)
    slacks = [(lineno, bus_id) for lineno, bus_id, kind, _ in bus_rows if kind == SLACK_BUS_TYPE]
    if len(slacks) > 1:
        raise CaseParseError(
            f"several reference buses {[b for _, b in slacks]}", slacks[1][0]
        )
    slack_id = slacks[0][1] if slacks else bus_ids[0] if bus_ids else None
    if not slacks and bus_ids:
        logger.warning("no reference bus declared; using bus %d as slack", slack_id)

    generation = defaultdict(float)
    for lineno, row in tables.get("gen", []):
        if len(row) < 2:
            raise CaseParseError("gen rows need at least bus, Pg", lineno)
        bus_id = _as_id(row[0], "gen bus", lineno)
        if bus_id not in known:
            raise UnknownBusError(f"line {lineno}: generator at unknown bus {bus_id}")
        generation[bus_id] += row[1]

    net_mw = np.array([generation[bus_id] - pd for _, bus_id, _, pd in bus_rows])
    injections = per_unit(net_mw, base_mva) if bus_rows else np.zeros(0)
    buses = [
        Bus(
            bus_id,
            BusKind.slack if bus_id == slack_id else BusKind.non_slack,
            float(p),
        )
        for bus_id, p in zip(bus_ids, injections)
    ]

    branches = []
    for lineno, row in tables.get("branch", []):
        if len(row) < 4:
            raise CaseParseError("branch rows need at least fbus, tbus, r, x", lineno)
        fbus = _as_id(row[0], "fbus", lineno)
        tbus = _as_id(row[1], "tbus", lineno)
        x = row[3]
        for end in (fbus, tbus):
            if end not in known:
                raise UnknownBusError(f"line {lineno}: branch refers to unknown bus {end}")
        in_service = len(row) <= BRANCH_STATUS_COLUMN or row[BRANCH_STATUS_COLUMN] != 0
        if in_service and not x > 0:
            raise InvalidBranchError(
                f"line {lineno}: branch {fbus}-{tbus} has non-positive reactance {x!r}"
            )
        if fbus == tbus:
            raise InvalidBranchError(f"line {lineno}: branch {fbus}-{tbus} is a self loop")
        susceptance = 1.0 / x if x > 0 else 0.0
        branches.append(Branch(fbus, tbus, susceptance, in_service))

    case = NetworkCase(name or found_name or "case", base_mva, buses, branches)
    logger.debug(
        "parsed case %s: %d buses, %d branches", case.name, len(buses), len(branches)
    )
    return case


def load_case(path) -> NetworkCase:
    """Read and parse a case file; the name falls back to the file stem."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as ex:
        raise CaseParseError(f"{path}: not UTF-8 text ({ex.reason} at byte {ex.start})") from ex
    has_header = any(_FUNCTION_RE.match(_strip_comment(line)) for line in text.splitlines())
    return parse_case(text, name=None if has_header else path.stem)


def format_case(case: NetworkCase) -> str:
    """Write ``case`` in the MATPOWER subset read by :func:`parse_case`.

    Positive injections are written as generation, negative ones as load.
    """
    base = case.base_mva
    lines = [
        f"function mpc = {case.name}",
        "mpc.version = '2';",
        f"mpc.baseMVA = {base!r};",
        "",
        "% bus_i type Pd Qd",
        "mpc.bus = [",
    ]
    gens = []
    for bus in case.buses:
        kind = SLACK_BUS_TYPE if bus.kind is BusKind.slack else 1
        mw = bus.p_injection * base
        pd = -mw if mw < 0 else 0.0
        if mw > 0:
            gens.append((bus.id, mw))
        lines.append(f"\t{bus.id}\t{kind}\t{pd!r}\t0;")
    lines += ["];", "", "% bus Pg", "mpc.gen = ["]
    lines += [f"\t{bus_id}\t{pg!r};" for bus_id, pg in gens]
    lines += ["];", "", "% fbus tbus r x b rateA rateB rateC ratio angle status", "mpc.branch = ["]
    for br in case.branches:
        x = 1.0 / br.susceptance if br.susceptance > 0 else 0.0
        status = 1 if br.in_service else 0
        lines.append(f"\t{br.from_bus}\t{br.to_bus}\t0\t{x!r}\t0\t0\t0\t0\t0\t0\t{status};")
    lines += ["];", ""]
    return "\n".join(lines)


# DC power flow system


def build_reduced_system(case: NetworkCase, slack: Optional[int] = None) -> ReducedSystem:
    """
    Assemble the susceptance Laplacian of ``case`` and delete the slack
    row and column.

    ``a[k, k]`` is the total in-service susceptance incident to bus ``k``
    (including branches to the slack); ``a[k, j] = -b_kj`` between non-slack
    buses. Parallel branches add. Assembly is independent of branch order.

    Raises
    ------
    UnknownBusError
        If ``slack`` is not a bus of the case.
    """
    if slack is None:
        slack = case.slack_id
    elif slack not in case.bus_ids:
        raise UnknownBusError(f"unknown slack bus id {slack}")

    bus_ids = tuple(bus.id for bus in case.buses if bus.id != slack)
    index = {bus_id: k for k, bus_id in enumerate(bus_ids)}
    rows, cols, vals = [], [], []
    # canonical order makes floating-point sums independent of file order
    in_service = sorted(
        (min(br.from_bus, br.to_bus), max(br.from_bus, br.to_bus), br.susceptance)
        for br in case.branches
        if br.in_service
    )
    for u, v, susceptance in in_service:
        ku, kv = index.get(u), index.get(v)
        for k in (ku, kv):
            if k is not None:
                rows.append(k)
                cols.append(k)
                vals.append(susceptance)
        if ku is not None and kv is not None:
            rows += [ku, kv]
            cols += [kv, ku]
            vals += [-susceptance, -susceptance]

    n = len(bus_ids)
    a = SparseMatrix.from_coo(n, rows, cols, vals)
    injections = {bus.id: bus.p_injection for bus in case.buses}
    b = np.array([injections[bus_id] for bus_id in bus_ids], dtype=float)
    b.setflags(write=False)
    return ReducedSystem(a=a, b=b, bus_ids=bus_ids, slack_id=slack)


def injection_density(case: NetworkCase, slack: Optional[int] = None) -> float:
    """Fraction of non-slack buses with a nonzero net injection."""
    if slack is None:
        slack = case.slack_id
    others = [bus for bus in case.buses if bus.id != slack]
    if not others:
        return 0.0
    return sum(1 for bus in others if abs(bus.p_injection) > 0) / len(others)


def solve_angles(reduced: ReducedSystem, theta) -> Dict[int, float]:
    """Map a reduced solution back onto external bus ids, slack at 0."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (reduced.n,):
        raise DomainError(f"expected {reduced.n} angles, got shape {theta.shape}")
    angles = {reduced.slack_id: 0.0}
    angles.update((bus_id, float(t)) for bus_id, t in zip(reduced.bus_ids, theta))
    return dict(sorted(angles.items()))


# Synthetic networks


def _case_from_graph(name, graph, susceptances, injections, base_mva=100.0):
    mapping = {node: k + 1 for k, node in enumerate(sorted(graph.nodes))}
    buses = [
        Bus(mapping[node], BusKind.slack if mapping[node] == 1 else BusKind.non_slack, float(p))
        for node, p in zip(sorted(graph.nodes), injections)
    ]
    edges = sorted(tuple(sorted((mapping[u], mapping[v]))) for u, v in graph.edges)
    branches = [Branch(u, v, float(s)) for (u, v), s in zip(edges, susceptances)]
    return NetworkCase(name, base_mva, buses, branches)


def _balanced_injections(rng, n):
    p = rng.normal(size=n)
    return p - p.mean()


def _weights(rng, graph, susceptance, seed):
    if seed is None:
        return np.full(graph.number_of_edges(), float(susceptance))
    return rng.uniform(1.0, 10.0, size=graph.number_of_edges())


def path_case(n: int, *, susceptance: float = 1.0, seed: Optional[int] = None) -> NetworkCase:
    """Chain of ``n`` buses, slack at one end.

    Without a ``seed`` every branch has ``susceptance`` and all injections
    are zero; with one, weights are drawn from ``[1, 10]`` and injections
    are balanced random draws.
    """
    if n < 2:
        raise DomainError(f"a path case needs at least 2 buses, got {n}")
    return _synthetic(f"path{n}", nx.path_graph(n), susceptance, seed)


def ring_case(n: int, *, susceptance: float = 1.0, seed: Optional[int] = None) -> NetworkCase:
    if n < 3:
        raise DomainError(f"a ring case needs at least 3 buses, got {n}")
    return _synthetic(f"ring{n}", nx.cycle_graph(n), susceptance, seed)


def grid_case(
    rows: int, cols: int, *, susceptance: float = 1.0, seed: Optional[int] = None
) -> NetworkCase:
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise DomainError(f"grid {rows}x{cols} needs at least 2 buses")
    return _synthetic(f"grid{rows}x{cols}", nx.grid_2d_graph(rows, cols), susceptance, seed)


def tree_with_chords_case(n: int, n_chords: int, *, seed: int = 0) -> NetworkCase:
    """Random spanning tree on ``n`` buses plus ``n_chords`` extra branches."""
    if n < 2:
        raise DomainError(f"a tree case needs at least 2 buses, got {n}")
    rng = np.random.default_rng(seed)
    graph = nx.Graph()
    graph.add_node(0)
    for k in range(1, n):
        graph.add_edge(k, int(rng.integers(0, k)))
    candidates = sorted(nx.non_edges(graph))
    n_chords = min(n_chords, len(candidates))
    if n_chords:
        picks = rng.choice(len(candidates), size=n_chords, replace=False)
        graph.add_edges_from(candidates[k] for k in sorted(picks))
    return _synthetic(f"tree{n}c{n_chords}", graph, 1.0, seed, rng=rng)


def _synthetic(name, graph, susceptance, seed, rng=None):
    if rng is None:
        rng = np.random.default_rng(seed)
    weights = _weights(rng, graph, susceptance, seed)
    if seed is None:
        injections = np.zeros(graph.number_of_nodes())
    else:
        injections = _balanced_injections(rng, graph.number_of_nodes())
    return _case_from_graph(name, graph, weights, injections)

