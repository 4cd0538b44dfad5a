"""Slot-based input-queued crossbar carrying SFC traffic between line cards and servers.

Port layout: line ports ``0..L-1`` (one per SFC, used for both ingress and
egress), then server ``s`` on port ``L + s``. A cell moves one traversal per
slot when matched; after reaching a server it re-enters the VOQ for its next
hop in the following slot (NFI processing takes zero time).

Matching is iterative request/grant/accept round robin. Pointers move only in
the first iteration; an output whose grant is refused keeps its pointer on the
refusing input, an accepted grant moves both pointers one past the partner.
"""
from __future__ import annotations

import math
import random
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .placement import UNASSIGNED, Placement, UnassignedNode
from .sfc_model import SfcIGraph, SfcRequest

Hop = Tuple[int, int]


@dataclass
class FabricConfig:
    load: float
    warmup: int = 10_000
    measure: int = 100_000
    seed: int = 0
    iterations: int = 1
    port_count: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.load <= 1.0:
            raise ValueError("arrival probability must be within [0, 1]")
        if self.warmup < 0 or self.measure < 1 or self.iterations < 1:
            raise ValueError("warmup >= 0, measure >= 1 and iterations >= 1 required")


@dataclass
class FlowPath:
    sfc: int
    hops: Tuple[Hop, ...]
    weight: float

    @property
    def ingress(self) -> int:
        return self.hops[0][0]


@dataclass
class SimResult:
    offered_load: float
    throughput: float
    mean_delay: float
    arrivals: int
    departures: int
    completions: List[int] = field(default_factory=list)
    traversals: float = 0.0


def server_port(server: int, n_line: int) -> int:
    return n_line + server


def derive_paths(placement: Placement, igraph: SfcIGraph, requests: Sequence[SfcRequest],
                 min_share: float = 1e-9) -> List[FlowPath]:
    """Per-SFC fabric paths, one per distinct sequence of traversals.

    Cells of an SFC are spread over its instances the way NF-level traffic
    is: equally over the first NF's instances, then along each instance
    edge in proportion to c_ij. Consecutive NFIs on one server add no hop.
    """
    assign = placement.assign
    if len(assign) != len(igraph) or any(s == UNASSIGNED for s in assign):
        raise UnassignedNode("placement does not cover every NFI")
    inst = igraph.instances
    n_line = len(requests)
    out_w: Dict[int, Dict[int, float]] = defaultdict(dict)
    for (i, j), c in igraph.traffic.items():
        out_w[i][j] = c

    paths: List[FlowPath] = []
    for line, req in enumerate(requests):
        chain = [nf for nf in req.chain if inst.get(nf)]
        if not chain:
            paths.append(FlowPath(req.id, ((line, line),), req.bandwidth))
            continue
        first = inst[chain[0]]
        states: Dict[Tuple[int, Tuple[Hop, ...]], float] = defaultdict(float)
        for i in first:
            states[(i, ((line, server_port(assign[i], n_line)),))] += 1.0 / len(first)
        for nf in chain[1:]:
            nxt = inst[nf]
            new_states: Dict[Tuple[int, Tuple[Hop, ...]], float] = defaultdict(float)
            for (i, hops), prob in states.items():
                ws = [(j, out_w[i].get(j, 0.0)) for j in nxt]
                total = sum(w for _, w in ws)
                if total <= 0:
                    ws, total = [(j, 1.0) for j in nxt], float(len(nxt))
                here = assign[i]
                for j, w in ws:
                    share = prob * w / total
                    if share <= min_share:
                        continue
                    there = assign[j]
                    step = hops if there == here else hops + ((server_port(here, n_line), server_port(there, n_line)),)
                    new_states[(j, step)] += share
            states = new_states
        merged: Dict[Tuple[Hop, ...], float] = defaultdict(float)
        for (i, hops), prob in states.items():
            merged[hops + ((server_port(assign[i], n_line), line),)] += prob
        mass = sum(merged.values())
        for hops, prob in sorted(merged.items()):
            paths.append(FlowPath(req.id, hops, req.bandwidth * prob / mass))
    return paths


def mean_traversals(paths: Sequence[FlowPath]) -> float:
    """Traversals per cell, weighted by flow rate within each SFC."""
    by_sfc: Dict[int, List[FlowPath]] = defaultdict(list)
    for p in paths:
        by_sfc[p.sfc].append(p)
    per = []
    for ps in by_sfc.values():
        w = sum(p.weight for p in ps)
        per.append(sum(p.weight * len(p.hops) for p in ps) / w)
    return sum(per) / len(per) if per else 0.0


def rr_match(requests: Sequence[Sequence[int]], n: int, grant_ptr: List[int], accept_ptr: List[int],
             iterations: int = 1) -> Dict[int, int]:
    """Request/grant/accept matching. ``requests[i]`` lists outputs input i wants.

    Returns {input: output} and updates the pointer lists in place.
    """
    want: Dict[int, List[int]] = defaultdict(list)
    for i in range(n):
        for j in requests[i]:
            want[j].append(i)
    match: Dict[int, int] = {}
    taken_out = set()
    for it in range(iterations):
        grants: Dict[int, List[int]] = defaultdict(list)
        granted_by: Dict[int, int] = {}
        for j, ins in want.items():
            if j in taken_out:
                continue
            cand = [i for i in ins if i not in match]
            if not cand:
                continue
            g = grant_ptr[j]
            i = min(cand, key=lambda x: (x - g) % n)
            grants[i].append(j)
            granted_by[j] = i
        if not grants:
            break
        for i, outs in grants.items():
            a = accept_ptr[i]
            j = min(outs, key=lambda x: (x - a) % n)
            match[i] = j
            taken_out.add(j)
            if it == 0:
                accept_ptr[i] = (j + 1) % n
                grant_ptr[j] = (i + 1) % n
        if it == 0:
            for j, i in granted_by.items():
                if match.get(i) != j:
                    grant_ptr[j] = i
    return match


Observer = Callable[[int, Dict[int, int], dict], None]


def simulate(config: FabricConfig, paths: Sequence[FlowPath], observer: Optional[Observer] = None) -> SimResult:
    if not paths:
        return SimResult(config.load, 0.0, 0.0, 0, 0, [], 0.0)
    used_ports = {p for path in paths for hop in path.hops for p in hop}
    n = max(used_ports) + 1
    if config.port_count is not None:
        if config.port_count < n:
            raise ValueError(f"paths use {n} ports but the fabric has {config.port_count}")
        n = config.port_count

    by_port: Dict[int, List[int]] = defaultdict(list)
    for f, path in enumerate(paths):
        by_port[path.ingress].append(f)
    line_ports = sorted(by_port)
    pickers = {}
    for port, flows in by_port.items():
        total = sum(paths[f].weight for f in flows)
        cum, run = [], 0.0
        for f in flows:
            run += paths[f].weight / total
            cum.append(run)
        pickers[port] = (flows, cum)
    hops = [path.hops for path in paths]

    rng = random.Random(config.seed)
    voq = [[deque() for _ in range(n)] for _ in range(n)]
    nonempty: List[set] = [set() for _ in range(n)]
    grant_ptr = [0] * n
    accept_ptr = [0] * n
    pending: List[Tuple[int, list]] = []
    completions = [0] * len(paths)

    arrivals = departures = queued = 0
    m_arrivals = m_delivered = 0
    delay_sum = 0
    start = config.warmup
    end = config.warmup + config.measure
    p = config.load

    def enqueue(port: int, cell: list) -> None:
        dst = hops[cell[0]][cell[1]][1]
        q = voq[port][dst]
        q.append(cell)
        nonempty[port].add(dst)

    for t in range(end):
        for port, cell in pending:
            enqueue(port, cell)
        pending = []
        for port in line_ports:
            if rng.random() < p:
                flows, cum = pickers[port]
                u = rng.random()
                k = 0
                while k < len(cum) - 1 and u >= cum[k]:
                    k += 1
                enqueue(port, [flows[k], 0, t])
                arrivals += 1
                queued += 1
                if t >= start:
                    m_arrivals += 1
        match = rr_match(nonempty, n, grant_ptr, accept_ptr, config.iterations)
        for i, j in match.items():
            q = voq[i][j]
            cell = q.popleft()
            if not q:
                nonempty[i].discard(j)
            cell[1] += 1
            if cell[1] == len(hops[cell[0]]):
                departures += 1
                queued -= 1
                completions[cell[0]] += 1
                if cell[2] >= start:
                    m_delivered += 1
                    delay_sum += t - cell[2]
            else:
                pending.append((j, cell))
        if observer is not None:
            in_voq = sum(len(voq[i][j]) for i in range(n) for j in nonempty[i])
            observer(t, match, {"arrivals": arrivals, "departures": departures,
                                "in_voq": in_voq, "in_transit": len(pending), "queued": queued})

    ports = len(line_ports)
    offered = m_arrivals / (config.measure * ports)
    throughput = m_delivered / (config.measure * ports)
    mean_delay = delay_sum / m_delivered if m_delivered else math.nan
    return SimResult(offered, throughput, mean_delay, arrivals, departures, completions, mean_traversals(paths))
