"""Service function chains and the graphs derived from them.

A set of SFC requests is merged into an NF-level DAG (``SfcGraph``), which is
then expanded into an instance-level DAG (``SfcIGraph``) whose edge weights form
the traffic matrix that the placement solvers partition.
"""
from __future__ import annotations

import heapq
import math
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

Edge = Tuple[int, int]

DEFAULT_INSTANCE_CAPACITY = 600.0


class CycleDetected(ValueError):
    """Merged chains induce a directed cycle over NF types."""


class InvalidRequest(ValueError):
    pass


@dataclass(frozen=True)
class NfType:
    id: int
    name: str = ""


@dataclass(frozen=True)
class SfcRequest:
    """One chain: ordered NF type ids, a bandwidth and a demand per NF."""

    id: int
    chain: Tuple[int, ...]
    bandwidth: float
    demands: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "chain", tuple(self.chain))
        object.__setattr__(self, "demands", tuple(self.demands))
        if not self.chain:
            raise InvalidRequest(f"request {self.id}: empty chain")
        if len(set(self.chain)) != len(self.chain):
            raise InvalidRequest(f"request {self.id}: NF type repeats in chain {self.chain}")
        if len(self.demands) != len(self.chain):
            raise InvalidRequest(f"request {self.id}: {len(self.demands)} demands for chain of {len(self.chain)}")
        if not self.bandwidth > 0:
            raise InvalidRequest(f"request {self.id}: bandwidth must be positive")
        if any(not d > 0 for d in self.demands):
            raise InvalidRequest(f"request {self.id}: demands must be positive")


@dataclass(frozen=True)
class SfcGraph:
    demands: Dict[int, float]
    edges: Dict[Edge, float]
    provenance: Dict[Edge, Tuple[int, ...]]
    ingress: Dict[int, float] = field(default_factory=dict)
    egress: Dict[int, float] = field(default_factory=dict)

    def topological_order(self) -> List[int]:
        order = topological_sort(self.demands, self.edges)
        if order is None:
            raise CycleDetected("SFC-Graph contains a directed cycle")
        return order


@dataclass(frozen=True)
class Nfi:
    id: int
    nf: int
    demand: float


@dataclass(frozen=True)
class SfcIGraph:
    """Instance-granularity DAG.

    ``traffic`` holds the nonzero entries c_ij of the traffic matrix. ``nf_edges``
    records the NF-level edge weights that the instance blocks must sum to.
    Node ids are 0..n-1 and equal their position in ``nodes``.
    """

    nodes: Tuple[Nfi, ...]
    traffic: Dict[Edge, float]
    nf_edges: Dict[Edge, float]
    ingress: Dict[int, float] = field(default_factory=dict)
    egress: Dict[int, float] = field(default_factory=dict)

    def __len__(self):
        return len(self.nodes)

    @cached_property
    def instances(self) -> Dict[int, Tuple[int, ...]]:
        out: Dict[int, List[int]] = defaultdict(list)
        for node in self.nodes:
            out[node.nf].append(node.id)
        return {nf: tuple(ids) for nf, ids in out.items()}

    @property
    def instance_counts(self) -> Dict[int, int]:
        return {nf: len(ids) for nf, ids in self.instances.items()}

    @cached_property
    def demand(self) -> Tuple[float, ...]:
        return tuple(node.demand for node in self.nodes)

    @cached_property
    def external(self) -> Tuple[float, ...]:
        """Ingress plus egress bandwidth attached to each node."""
        return tuple(self.ingress.get(i, 0.0) + self.egress.get(i, 0.0) for i in range(len(self.nodes)))

    @cached_property
    def neighbors(self) -> Tuple[Tuple[Tuple[int, float], ...], ...]:
        """Symmetrized adjacency: for node a, pairs (b, c_ab + c_ba)."""
        sym: List[Dict[int, float]] = [defaultdict(float) for _ in self.nodes]
        for (i, j), c in self.traffic.items():
            if i == j:
                continue
            sym[i][j] += c
            sym[j][i] += c
        return tuple(tuple(sorted(d.items())) for d in sym)

    @cached_property
    def successors(self) -> Tuple[Tuple[int, ...], ...]:
        succ: List[List[int]] = [[] for _ in self.nodes]
        for (i, j) in self.traffic:
            succ[i].append(j)
        return tuple(tuple(sorted(s)) for s in succ)

    @property
    def edge_count(self) -> int:
        return len(self.traffic)

    def total_traffic(self) -> float:
        return math.fsum(self.traffic.values())

    def block(self, u: int, v: int) -> Dict[Edge, float]:
        """Instance-level edges attributable to the NF edge (u, v)."""
        src = set(self.instances.get(u, ()))
        dst = set(self.instances.get(v, ()))
        return {e: c for e, c in self.traffic.items() if e[0] in src and e[1] in dst}


def topological_sort(vertices, edges) -> Optional[List[int]]:
    """Kahn's algorithm, smallest id first. Returns None on a cycle."""
    indeg = {v: 0 for v in vertices}
    succ: Dict[int, List[int]] = defaultdict(list)
    for (u, v) in edges:
        indeg.setdefault(u, 0)
        indeg[v] = indeg.get(v, 0) + 1
        succ[u].append(v)
    ready = [v for v, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        u = heapq.heappop(ready)
        order.append(u)
        for v in succ[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(ready, v)
    if len(order) != len(indeg):
        return None
    return order


def build_sfc_graph(requests: Sequence[SfcRequest]) -> SfcGraph:
    demands: Dict[int, float] = defaultdict(float)
    edges: Dict[Edge, float] = defaultdict(float)
    prov: Dict[Edge, List[int]] = defaultdict(list)
    ingress: Dict[int, float] = defaultdict(float)
    egress: Dict[int, float] = defaultdict(float)
    for req in requests:
        for nf, d in zip(req.chain, req.demands):
            demands[nf] += d
        for u, v in zip(req.chain, req.chain[1:]):
            edges[(u, v)] += req.bandwidth
            prov[(u, v)].append(req.id)
        ingress[req.chain[0]] += req.bandwidth
        egress[req.chain[-1]] += req.bandwidth
    graph = SfcGraph(
        demands=dict(sorted(demands.items())),
        edges=dict(sorted(edges.items())),
        provenance={e: tuple(ids) for e, ids in sorted(prov.items())},
        ingress=dict(sorted(ingress.items())),
        egress=dict(sorted(egress.items())),
    )
    graph.topological_order()
    return graph


def instance_count(demand: float, instance_capacity: float) -> int:
    return max(1, math.ceil(demand / instance_capacity))


def expand_to_igraph(
    graph: SfcGraph,
    instance_capacity: float = DEFAULT_INSTANCE_CAPACITY,
    counts: Optional[Dict[int, int]] = None,
) -> SfcIGraph:
    """Split every NF into instances and spread NF traffic over instance pairs.

    Instance ids follow the topological order of NF types, consecutive per NF.
    ``counts`` overrides the load-based instance count rule.
    """
    if not instance_capacity > 0:
        raise ValueError("instance_capacity must be positive")
    nodes: List[Nfi] = []
    inst: Dict[int, List[int]] = {}
    for nf in graph.topological_order():
        demand = graph.demands[nf]
        k = counts[nf] if counts is not None else instance_count(demand, instance_capacity)
        if k < 1:
            raise ValueError(f"NF {nf}: instance count must be >= 1")
        inst[nf] = []
        for _ in range(k):
            nodes.append(Nfi(len(nodes), nf, demand / k))
            inst[nf].append(nodes[-1].id)

    traffic: Dict[Edge, float] = {}
    for (u, v), w in graph.edges.items():
        share = w / (len(inst[u]) * len(inst[v]))
        for i in inst[u]:
            for j in inst[v]:
                traffic[(i, j)] = share

    ingress = {}
    for nf, bw in graph.ingress.items():
        for i in inst[nf]:
            ingress[i] = bw / len(inst[nf])
    egress = {}
    for nf, bw in graph.egress.items():
        for i in inst[nf]:
            egress[i] = bw / len(inst[nf])

    return SfcIGraph(
        nodes=tuple(nodes),
        traffic=dict(sorted(traffic.items())),
        nf_edges=dict(graph.edges),
        ingress=dict(sorted(ingress.items())),
        egress=dict(sorted(egress.items())),
    )


def northwest_fill(out_q: Sequence[float], in_q: Sequence[float], tol: float = 1e-9) -> List[Tuple[int, int, float]]:
    """Sequentially fill upstream quotas into downstream quotas.

    Returns (row, col, amount) triples; at most len(out_q) + len(in_q) - 1 of them.
    """
    out_left = list(out_q)
    in_left = list(in_q)
    scale = max(max(out_left, default=0.0), max(in_left, default=0.0), 1.0)
    eps = tol * scale
    i = j = 0
    cells = []
    while i < len(out_left) and j < len(in_left):
        amt = min(out_left[i], in_left[j])
        if amt > eps:
            cells.append((i, j, amt))
        out_left[i] -= amt
        in_left[j] -= amt
        if out_left[i] <= eps:
            i += 1
        if in_left[j] <= eps:
            j += 1
    # absorb rounding residue so row totals stay exact
    if cells:
        r, c, amt = cells[-1]
        residue = sum(out_q) - sum(a for _, _, a in cells)
        cells[-1] = (r, c, amt + residue)
    return cells


def optimize_igraph(igraph: SfcIGraph) -> SfcIGraph:
    """Replace each dense instance block with a sparse sequential-fill assignment."""
    traffic = dict(igraph.traffic)
    inst = igraph.instances
    for (u, v) in igraph.nf_edges:
        src, dst = inst[u], inst[v]
        if len(src) == 1 and len(dst) == 1:
            continue
        out_q = [sum(traffic.get((i, j), 0.0) for j in dst) for i in src]
        in_q = [sum(traffic.get((i, j), 0.0) for i in src) for j in dst]
        for i in src:
            for j in dst:
                traffic.pop((i, j), None)
        for r, c, amt in northwest_fill(out_q, in_q):
            traffic[(src[r], dst[c])] = amt
    return SfcIGraph(
        nodes=igraph.nodes,
        traffic=dict(sorted(traffic.items())),
        nf_edges=dict(igraph.nf_edges),
        ingress=dict(igraph.ingress),
        egress=dict(igraph.egress),
    )


class Diagnostic(NamedTuple):
    kind: str
    detail: str


def validate_igraph(igraph: SfcIGraph, rel_tol: float = 1e-9) -> List[Diagnostic]:
    diags: List[Diagnostic] = []
    n = len(igraph.nodes)
    for idx, node in enumerate(igraph.nodes):
        if node.id != idx:
            diags.append(Diagnostic("node-id", f"node at position {idx} has id {node.id}"))
        if not node.demand > 0:
            diags.append(Diagnostic("demand", f"node {node.id} has non-positive demand {node.demand}"))
    nf_of = {node.id: node.nf for node in igraph.nodes}
    sums: Dict[Edge, float] = defaultdict(float)
    for (i, j), c in igraph.traffic.items():
        if i not in nf_of or j not in nf_of:
            diags.append(Diagnostic("unknown-node", f"edge ({i}, {j}) references a missing node"))
            continue
        if i == j:
            diags.append(Diagnostic("self-loop", f"edge ({i}, {i}) with weight {c}"))
        if c < 0:
            diags.append(Diagnostic("negative", f"edge ({i}, {j}) has negative weight {c}"))
        key = (nf_of[i], nf_of[j])
        if key not in igraph.nf_edges:
            diags.append(Diagnostic("stray-edge", f"edge ({i}, {j}) has no NF edge {key}"))
        else:
            sums[key] += c
    for key, w in igraph.nf_edges.items():
        got = sums.get(key, 0.0)
        if abs(got - w) > rel_tol * max(abs(w), 1.0):
            diags.append(Diagnostic("conservation", f"NF edge {key}: instance traffic {got} != {w}"))
    for name, ext in (("ingress", igraph.ingress), ("egress", igraph.egress)):
        for i, bw in ext.items():
            if not 0 <= i < n:
                diags.append(Diagnostic("unknown-node", f"{name} attached to missing node {i}"))
            if bw < 0:
                diags.append(Diagnostic("negative", f"{name} of node {i} is negative"))
    edges = [e for e in igraph.traffic if e[0] != e[1] and e[0] in nf_of and e[1] in nf_of]
    if topological_sort(range(n), edges) is None:
        diags.append(Diagnostic("cycle", "instance graph contains a directed cycle"))
    return diags
