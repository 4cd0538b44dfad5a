"""Placement representation, inter-traffic cost and the feasibility constraints.

Servers are indexed from 0. A node assigned to ``UNASSIGNED`` is not yet placed;
for link-load purposes its edges count as crossing on the placed endpoint, so
partial loads are upper bounds of the final ones.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .sfc_model import SfcIGraph

UNASSIGNED = -1


class UnassignedNode(ValueError):
    pass


class Infeasible(RuntimeError):
    pass


@dataclass(frozen=True)
class ServerPool:
    compute: float = 1000.0
    bandwidth: float = 1000.0
    port_limit: int = 64
    unit_cost: float = 1.0

    def __post_init__(self):
        if not self.compute > 0 or not self.bandwidth > 0:
            raise ValueError("server compute and bandwidth must be positive")
        if self.port_limit < 1:
            raise ValueError("port limit must be >= 1")
        if self.unit_cost < 0:
            raise ValueError("unit link cost must be nonnegative")


class Placement:
    """Assignment of NFIs to servers with cached per-server usage.

    ``compute[s]``, ``link[s]`` and ``count[s]`` are kept consistent with
    ``assign`` by :meth:`move`.
    """

    __slots__ = ("assign", "compute", "link", "count")

    def __init__(self, assign, compute, link, count):
        self.assign: List[int] = assign
        self.compute: List[float] = compute
        self.link: List[float] = link
        self.count: List[int] = count

    @classmethod
    def empty(cls, igraph: SfcIGraph) -> "Placement":
        return cls([UNASSIGNED] * len(igraph), [], [], [])

    @classmethod
    def from_assignment(cls, assign: Sequence[int], igraph: SfcIGraph) -> "Placement":
        assign = list(assign)
        if len(assign) != len(igraph):
            raise ValueError(f"assignment covers {len(assign)} nodes, instance has {len(igraph)}")
        n_servers = max(assign, default=-1) + 1
        p = cls(assign, [0.0] * n_servers, [0.0] * n_servers, [0] * n_servers)
        p.compute, p.link, p.count = usage_from_scratch(assign, igraph, n_servers)
        return p

    def copy(self) -> "Placement":
        return Placement(list(self.assign), list(self.compute), list(self.link), list(self.count))

    def __eq__(self, other):
        if not isinstance(other, Placement):
            return NotImplemented
        return (self.assign == other.assign and self.compute == other.compute
                and self.link == other.link and self.count == other.count)

    def __repr__(self):
        return f"Placement({self.assign})"

    @property
    def n_servers(self) -> int:
        return len(self.count)

    @property
    def used(self) -> List[bool]:
        """x_n flags."""
        return [c > 0 for c in self.count]

    def used_count(self) -> int:
        return sum(1 for c in self.count if c > 0)

    def complete(self) -> bool:
        return all(s != UNASSIGNED for s in self.assign)

    def servers(self) -> List[List[int]]:
        out: List[List[int]] = [[] for _ in self.count]
        for node, s in enumerate(self.assign):
            if s != UNASSIGNED:
                out[s].append(node)
        return out

    def ensure_server(self, s: int) -> None:
        while len(self.count) <= s:
            self.compute.append(0.0)
            self.link.append(0.0)
            self.count.append(0)

    def first_empty(self) -> int:
        for s, c in enumerate(self.count):
            if c == 0:
                return s
        return len(self.count)

    def side_weights(self, node: int, igraph: SfcIGraph, a: int, b: int) -> Tuple[float, float, float]:
        """(total neighbour weight, weight on server a, weight on server b)."""
        total = wa = wb = 0.0
        assign = self.assign
        for x, c in igraph.neighbors[node]:
            total += c
            sx = assign[x]
            if sx == a:
                wa += c
            elif sx == b:
                wb += c
        return total, wa, wb

    def loads_after_move(self, node: int, b: int, igraph: SfcIGraph) -> Tuple[float, float, float]:
        """Link load of the source and target server and compute of the target after the move."""
        a = self.assign[node]
        total, wa, wb = self.side_weights(node, igraph, a, b)
        ext = igraph.external[node]
        link_a = self.link[a] - ext - (total - wa) + wa if a != UNASSIGNED else 0.0
        link_b = (self.link[b] if b < len(self.link) else 0.0) + ext + (total - wb) - wb
        comp_b = (self.compute[b] if b < len(self.compute) else 0.0) + igraph.demand[node]
        return link_a, link_b, comp_b

    def move(self, node: int, b: int, igraph: SfcIGraph) -> None:
        a = self.assign[node]
        if a == b:
            return
        self.ensure_server(b)
        link_a, link_b, comp_b = self.loads_after_move(node, b, igraph)
        if a != UNASSIGNED:
            self.link[a] = link_a
            self.compute[a] -= igraph.demand[node]
            self.count[a] -= 1
            if self.count[a] == 0:
                # empty servers carry exactly zero usage
                self.link[a] = 0.0
                self.compute[a] = 0.0
        self.link[b] = link_b
        self.compute[b] = comp_b
        self.count[b] += 1
        self.assign[node] = b

    def trim(self) -> None:
        """Drop trailing empty servers."""
        while self.count and self.count[-1] == 0:
            self.count.pop()
            self.compute.pop()
            self.link.pop()

    def canonical(self) -> "Placement":
        """Same partition with servers renumbered in order of first appearance."""
        relabel: Dict[int, int] = {}
        for s in self.assign:
            if s != UNASSIGNED and s not in relabel:
                relabel[s] = len(relabel)
        assign = [relabel.get(s, UNASSIGNED) if s != UNASSIGNED else UNASSIGNED for s in self.assign]
        return Placement(assign, *_permute(self, relabel))


def _permute(p: Placement, relabel: Dict[int, int]):
    k = len(relabel)
    compute, link, count = [0.0] * k, [0.0] * k, [0] * k
    for old, new in relabel.items():
        compute[new], link[new], count[new] = p.compute[old], p.link[old], p.count[old]
    return compute, link, count


def usage_from_scratch(assign: Sequence[int], igraph: SfcIGraph, n_servers: Optional[int] = None):
    if n_servers is None:
        n_servers = max(assign, default=-1) + 1
    compute = [0.0] * n_servers
    link = [0.0] * n_servers
    count = [0] * n_servers
    for node, s in enumerate(assign):
        if s == UNASSIGNED:
            continue
        count[s] += 1
        compute[s] += igraph.demand[node]
        link[s] += igraph.external[node]
    for (i, j), c in igraph.traffic.items():
        si, sj = assign[i], assign[j]
        if si == sj:
            continue
        if si != UNASSIGNED:
            link[si] += c
        if sj != UNASSIGNED:
            link[sj] += c
    return compute, link, count


@dataclass
class CostReport:
    total_cost: float
    per_server: List[float]
    crossing: List[Tuple[int, int, float]] = field(default_factory=list)
    link_load: List[float] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["server", "crossing_traffic", "link_load"])
        for s, (ct, ll) in enumerate(zip(self.per_server, self.link_load)):
            w.writerow([s, ct, ll])
        return buf.getvalue()


def _require_complete(placement: Placement, igraph: SfcIGraph) -> None:
    if len(placement.assign) != len(igraph):
        raise UnassignedNode(f"placement covers {len(placement.assign)} of {len(igraph)} nodes")
    for node, s in enumerate(placement.assign):
        if s == UNASSIGNED or s < 0:
            raise UnassignedNode(f"node {node} has no server")


def evaluate_cost(placement: Placement, igraph: SfcIGraph, pool: ServerPool) -> CostReport:
    """Inter-traffic between the fabric and the servers.

    Each crossing edge is counted once, on the server it enters, so
    ``total_cost == unit_cost * sum(per_server)``.
    """
    _require_complete(placement, igraph)
    assign = placement.assign
    n_servers = max(max(assign, default=-1) + 1, placement.n_servers)
    per_server = [0.0] * n_servers
    crossing = []
    for (i, j), c in igraph.traffic.items():
        si, sj = assign[i], assign[j]
        if si != sj:
            crossing.append((i, j, c))
            per_server[sj] += c
    total = pool.unit_cost * math.fsum(c for _, _, c in crossing)
    _, link, _ = usage_from_scratch(assign, igraph, n_servers)
    return CostReport(total, per_server, crossing, link)


def inter_traffic(assign: Sequence[int], igraph: SfcIGraph) -> float:
    return math.fsum(c for (i, j), c in igraph.traffic.items() if assign[i] != assign[j])


def check_capacity(placement: Placement, igraph: SfcIGraph, pool: ServerPool) -> List[bool]:
    compute, _, _ = usage_from_scratch(placement.assign, igraph, placement.n_servers)
    return [c <= pool.compute for c in compute]


def check_bandwidth(placement: Placement, igraph: SfcIGraph, pool: ServerPool) -> List[bool]:
    _, link, _ = usage_from_scratch(placement.assign, igraph, placement.n_servers)
    return [load <= pool.bandwidth for load in link]


def check_port_limit(placement: Placement, pool: ServerPool) -> bool:
    return sum(1 for s in set(placement.assign) if s != UNASSIGNED) <= pool.port_limit


@dataclass(frozen=True)
class Violation:
    constraint: str
    target: int
    detail: str


def is_feasible(placement: Placement, igraph: SfcIGraph, pool: ServerPool) -> Tuple[bool, List[Violation]]:
    violations: List[Violation] = []
    assign = placement.assign
    if len(assign) != len(igraph):
        violations.append(Violation("assignment", -1, f"{len(assign)} entries for {len(igraph)} nodes"))
        return False, violations
    for node, s in enumerate(assign):
        if s == UNASSIGNED or s < 0:
            violations.append(Violation("assignment", node, f"node {node} is not assigned to a server"))
    if violations:
        return False, violations
    compute, link, _ = usage_from_scratch(assign, igraph, placement.n_servers)
    for s, c in enumerate(compute):
        if c > pool.compute:
            violations.append(Violation("capacity", s, f"server {s} compute {c} > {pool.compute}"))
    for s, load in enumerate(link):
        if load > pool.bandwidth:
            violations.append(Violation("bandwidth", s, f"server {s} link load {load} > {pool.bandwidth}"))
    if not check_port_limit(placement, pool):
        used = len(set(assign))
        violations.append(Violation("ports", -1, f"{used} servers used > port limit {pool.port_limit}"))
    return not violations, violations


def format_placement(placement: Placement, name: str = "") -> str:
    lines = [f"# placement {name}".rstrip(), f"# nodes {len(placement.assign)}"]
    lines += [f"{node} {s}" for node, s in enumerate(placement.assign)]
    return "\n".join(lines) + "\n"


def parse_placement(text: str, igraph: Optional[SfcIGraph] = None) -> Tuple[str, List[int]]:
    name = ""
    pairs: Dict[int, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line.startswith("# placement"):
                name = line[len("# placement"):].strip()
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 'nfi_id server_index'")
        pairs[int(parts[0])] = int(parts[1])
    n = len(igraph) if igraph is not None else max(pairs, default=-1) + 1
    return name, [pairs.get(i, UNASSIGNED) for i in range(n)]


def relabel_servers(assign: Iterable[int], perm: Dict[int, int]) -> List[int]:
    return [perm[s] for s in assign]
