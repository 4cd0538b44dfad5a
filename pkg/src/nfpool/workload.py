"""Seeded random instances and their on-disk format.

Randomness comes from numpy's PCG64 seeded through ``SeedSequence(seed)``,
spawned into one independent stream per sub-draw (see ``STREAMS``). Every
draw is an integer, so instances do not depend on platform float behaviour.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from .sfc_model import (
    DEFAULT_INSTANCE_CAPACITY,
    Nfi,
    SfcGraph,
    SfcIGraph,
    SfcRequest,
    build_sfc_graph,
    expand_to_igraph,
    instance_count,
    optimize_igraph,
    validate_igraph,
)

FORMAT_VERSION = 1
STREAMS = ("chains", "counts", "traffic", "demands")
MAX_CHAIN_RETRIES = 1000


class ParseError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


class VersionMismatch(ValueError):
    pass


class InstanceInvalid(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(d.detail for d in self.diagnostics))


@dataclass(frozen=True)
class WorkloadParams:
    nf_type_count: int = 6
    chain_length_range: Tuple[int, int] = (1, 6)
    instances_per_nf_range: Tuple[int, int] = (1, 5)
    traffic_range: Tuple[int, int] = (100, 600)
    demand_range: Tuple[int, int] = (100, 600)
    server_compute: float = 1000.0
    server_bandwidth: float = 1000.0
    port_limit: int = 64
    sfc_count: int = 1
    seed: int = 0
    nodes: Optional[int] = None
    count_rule: str = "random"
    instance_capacity: float = DEFAULT_INSTANCE_CAPACITY
    sparsify: bool = True

    def __post_init__(self):
        for name in ("chain_length_range", "instances_per_nf_range", "traffic_range", "demand_range"):
            lo, hi = getattr(self, name)
            object.__setattr__(self, name, (int(lo), int(hi)))
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must satisfy 0 < lo <= hi, got {(lo, hi)}")
        if self.nf_type_count < 1 or self.sfc_count < 1:
            raise ValueError("nf_type_count and sfc_count must be >= 1")
        if self.count_rule not in ("random", "load"):
            raise ValueError(f"unknown count_rule {self.count_rule!r}")
        if self.nodes is not None and self.nodes < 1:
            raise ValueError("target node count must be >= 1")

    def with_(self, **kw) -> "WorkloadParams":
        return dataclasses.replace(self, **kw)

    def pool(self):
        from .placement import ServerPool

        return ServerPool(self.server_compute, self.server_bandwidth, self.port_limit)


@dataclass(frozen=True)
class Instance:
    params: WorkloadParams
    requests: Tuple[SfcRequest, ...]
    graph: SfcGraph
    igraph: SfcIGraph


def streams(seed: int) -> Dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.Generator(np.random.PCG64(ss)) for name, ss in zip(STREAMS, children)}


def _randint(rng: np.random.Generator, lo: int, hi: int) -> int:
    return int(rng.integers(lo, hi + 1))


def _draw_chains(rng, params: WorkloadParams) -> List[SfcRequest]:
    types = list(range(1, params.nf_type_count + 1))
    # one precedence order per instance keeps the merged graph acyclic
    rank = {t: r for r, t in enumerate(rng.permutation(types).tolist())}
    lo, hi = params.chain_length_range
    hi = min(hi, len(types))
    lo = min(lo, hi)
    reqs = []
    for sid in range(params.sfc_count):
        length = _randint(rng, lo, hi)
        picked = rng.choice(len(types), size=length, replace=False).tolist()
        chain = sorted((types[i] for i in picked), key=rank.__getitem__)
        bw = _randint(rng, *params.traffic_range)
        demands = tuple(float(_randint(rng, *params.demand_range)) for _ in chain)
        reqs.append(SfcRequest(sid, tuple(chain), float(bw), demands))
    return reqs


def _count_table(m: int, lo: int, hi: int, total: int) -> List[List[int]]:
    # ways[k][s]: vectors of k entries in [lo, hi] summing to s
    ways = [[0] * (total + 1) for _ in range(m + 1)]
    ways[0][0] = 1
    for k in range(1, m + 1):
        for s in range(total + 1):
            ways[k][s] = sum(ways[k - 1][s - c] for c in range(lo, hi + 1) if s - c >= 0)
    return ways


def sample_counts(rng, m: int, lo: int, hi: int, total: Optional[int]) -> List[int]:
    """Uniform draw from [lo, hi]^m, conditioned on summing to ``total`` when given."""
    if total is None:
        return [_randint(rng, lo, hi) for _ in range(m)]
    ways = _count_table(m, lo, hi, total)
    if ways[m][total] == 0:
        raise ValueError(f"no count vector of length {m} in [{lo}, {hi}] sums to {total}")
    out = []
    left = total
    for k in range(m, 0, -1):
        options = [(c, ways[k - 1][left - c]) for c in range(lo, hi + 1) if left - c >= 0]
        # exact integer weighting: pick index r uniformly in [0, ways[k][left])
        r = int(rng.integers(0, ways[k][left]))
        for c, w in options:
            if r < w:
                out.append(c)
                left -= c
                break
            r -= w
    return out


def generate_instance(params: WorkloadParams) -> Instance:
    rngs = streams(params.seed)
    lo_i, hi_i = params.instances_per_nf_range
    target = params.nodes
    requests = _draw_chains(rngs["chains"], params)
    if target is not None:
        for _ in range(MAX_CHAIN_RETRIES):
            m = len({nf for r in requests for nf in r.chain})
            if m * lo_i <= target <= m * hi_i:
                break
            requests = _draw_chains(rngs["chains"], params)
        m = len({nf for r in requests for nf in r.chain})
        target = min(max(target, m * lo_i), m * hi_i)

    graph = build_sfc_graph(requests)
    order = graph.topological_order()
    if params.count_rule == "load":
        counts = {nf: instance_count(graph.demands[nf], params.instance_capacity) for nf in order}
    else:
        drawn = sample_counts(rngs["counts"], len(order), lo_i, hi_i, target)
        counts = dict(zip(order, drawn))
    igraph = expand_to_igraph(graph, params.instance_capacity, counts)
    if params.sparsify:
        igraph = optimize_igraph(igraph)
    if params.count_rule == "random":
        igraph = _redraw_weights(igraph, graph, rngs["traffic"], rngs["demands"], params)
    return Instance(params, tuple(requests), graph, igraph)


def _edge_blocks(igraph: SfcIGraph) -> Dict[Tuple[int, int], List[Tuple[int, int]]]:
    nf_of = [node.nf for node in igraph.nodes]
    blocks: Dict[Tuple[int, int], List[Tuple[int, int]]] = {}
    for i, j in sorted(igraph.traffic):
        blocks.setdefault((nf_of[i], nf_of[j]), []).append((i, j))
    return blocks


def traffic_draws(igraph: SfcIGraph, t_rng, params: WorkloadParams) -> Dict[Tuple[int, int], int]:
    """Raw integer weight per instance edge, uniform in ``traffic_range``."""
    return {e: _randint(t_rng, *params.traffic_range)
            for _, edges in sorted(_edge_blocks(igraph).items()) for e in edges}


def _redraw_weights(igraph: SfcIGraph, graph: SfcGraph, t_rng, d_rng, params: WorkloadParams) -> SfcIGraph:
    """Replace the equal split with random weights that still conserve flow.

    Each edge between the instances of two NFs gets a uniform integer draw,
    then the block is scaled so it carries exactly the NF-level bandwidth.
    The scaling is one correctly rounded division of two integers per edge.
    """
    draws = traffic_draws(igraph, t_rng, params)
    traffic: Dict[Tuple[int, int], float] = {}
    for key, edges in sorted(_edge_blocks(igraph).items()):
        total = sum(draws[e] for e in edges)
        weight = graph.edges[key]
        for e in edges:
            traffic[e] = weight * draws[e] / total
    nodes = tuple(Nfi(node.id, node.nf, float(_randint(d_rng, *params.demand_range))) for node in igraph.nodes)
    return SfcIGraph(nodes, traffic, dict(igraph.nf_edges), dict(igraph.ingress), dict(igraph.egress))


# ---------------------------------------------------------------------------
# instance files


def _params_doc(params: WorkloadParams) -> dict:
    doc = dataclasses.asdict(params)
    for k, v in doc.items():
        if isinstance(v, tuple):
            doc[k] = list(v)
    return doc


def instance_to_doc(inst: Instance) -> dict:
    g, ig = inst.graph, inst.igraph
    return {
        "format_version": FORMAT_VERSION,
        "params": _params_doc(inst.params),
        "requests": [
            {"id": r.id, "chain": list(r.chain), "bandwidth": r.bandwidth, "demands": list(r.demands)}
            for r in inst.requests
        ],
        "graph": {
            "demands": [[nf, d] for nf, d in g.demands.items()],
            "edges": [[u, v, w, list(g.provenance.get((u, v), ()))] for (u, v), w in g.edges.items()],
            "ingress": [[nf, b] for nf, b in g.ingress.items()],
            "egress": [[nf, b] for nf, b in g.egress.items()],
        },
        "igraph": {
            "nodes": [[n.id, n.nf, n.demand] for n in ig.nodes],
            "traffic": [[i, j, c] for (i, j), c in ig.traffic.items()],
            "nf_edges": [[u, v, w] for (u, v), w in ig.nf_edges.items()],
            "ingress": [[i, b] for i, b in ig.ingress.items()],
            "egress": [[i, b] for i, b in ig.egress.items()],
        },
    }


def dumps_instance(inst: Instance) -> str:
    return yaml.safe_dump(instance_to_doc(inst), sort_keys=False, default_flow_style=None, width=100)


def save_instance(path, inst: Instance) -> None:
    Path(path).write_text(dumps_instance(inst))


def _num(x, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ParseError(f"{where}: expected a number, got {x!r}")
    return float(x)


def _section(doc: dict, key: str, kind=dict):
    if key not in doc:
        raise ParseError(f"missing section {key!r}")
    val = doc[key]
    if not isinstance(val, kind):
        raise ParseError(f"section {key!r} has the wrong shape")
    return val


def doc_to_instance(doc) -> Instance:
    if not isinstance(doc, dict):
        raise ParseError("instance document must be a mapping")
    version = doc.get("format_version")
    if version is None:
        raise ParseError("missing format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"unsupported format version {version!r} (expected {FORMAT_VERSION})")
    try:
        p = dict(_section(doc, "params"))
        for k in ("chain_length_range", "instances_per_nf_range", "traffic_range", "demand_range"):
            if k in p:
                p[k] = tuple(p[k])
        params = WorkloadParams(**p)
        requests = tuple(
            SfcRequest(int(r["id"]), tuple(int(x) for x in r["chain"]), _num(r["bandwidth"], "bandwidth"),
                       tuple(_num(d, "demand") for d in r["demands"]))
            for r in _section(doc, "requests", list)
        )
        g = _section(doc, "graph")
        graph = SfcGraph(
            demands={int(nf): _num(d, "graph demand") for nf, d in g["demands"]},
            edges={(int(u), int(v)): _num(w, "graph edge") for u, v, w, _ in g["edges"]},
            provenance={(int(u), int(v)): tuple(int(x) for x in prov) for u, v, _, prov in g["edges"]},
            ingress={int(nf): _num(b, "graph ingress") for nf, b in g["ingress"]},
            egress={int(nf): _num(b, "graph egress") for nf, b in g["egress"]},
        )
        ig = _section(doc, "igraph")
        igraph = SfcIGraph(
            nodes=tuple(Nfi(int(i), int(nf), _num(d, "node demand")) for i, nf, d in ig["nodes"]),
            traffic={(int(i), int(j)): _num(c, "traffic") for i, j, c in ig["traffic"]},
            nf_edges={(int(u), int(v)): _num(w, "nf edge") for u, v, w in ig["nf_edges"]},
            ingress={int(i): _num(b, "ingress") for i, b in ig["ingress"]},
            egress={int(i): _num(b, "egress") for i, b in ig["egress"]},
        )
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed instance: {exc}") from exc
    return Instance(params, requests, graph, igraph)


def loads_instance(text: str, validate: bool = True) -> Instance:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            raise ParseError(f"invalid instance file: {exc.problem}", mark.line + 1, mark.column + 1) from exc
        raise ParseError(f"invalid instance file: {exc}") from exc
    inst = doc_to_instance(doc)
    if validate:
        diags = validate_igraph(inst.igraph)
        if diags:
            raise InstanceInvalid(diags)
    return inst


def load_instance(path, validate: bool = True) -> Instance:
    return loads_instance(Path(path).read_text(), validate=validate)
