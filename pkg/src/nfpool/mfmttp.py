"""Two-phase FM-style placement: DFS greedy deployment, then RD-driven passes."""
from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

from .placement import UNASSIGNED, Infeasible, Placement, ServerPool, inter_traffic
from .sfc_model import SfcIGraph


class SameServer(ValueError):
    pass


@dataclass
class MoveRecord:
    seq: int
    node: int
    src: int
    dst: int
    rd: float
    committed: bool = False


@dataclass
class PassResult:
    placement: Placement
    gain: float
    moves: List[MoveRecord]

    @property
    def committed(self) -> List[MoveRecord]:
        return [m for m in self.moves if m.committed]


@dataclass
class SolveStats:
    times: int = 1
    gains: List[float] = field(default_factory=list)
    move_counts: List[int] = field(default_factory=list)
    initial_cost: float = 0.0
    final_cost: float = 0.0
    wall_time: float = 0.0


Trace = Callable[[int, MoveRecord], None]


def dfs_order(igraph: SfcIGraph) -> List[int]:
    """Preorder DFS from every entry node; successors and roots by ascending id."""
    n = len(igraph)
    has_pred = [False] * n
    for (_, j) in igraph.traffic:
        has_pred[j] = True
    roots = sorted(set(igraph.ingress) | {i for i in range(n) if not has_pred[i]})
    seen = [False] * n
    order: List[int] = []
    succ = igraph.successors
    for root in roots + list(range(n)):
        if seen[root]:
            continue
        stack = [root]
        while stack:
            u = stack.pop()
            if seen[u]:
                continue
            seen[u] = True
            order.append(u)
            stack.extend(v for v in reversed(succ[u]) if not seen[v])
    return order


def _fits(p: Placement, node: int, s: int, igraph: SfcIGraph, pool: ServerPool) -> bool:
    link_a, link_b, comp_b = p.loads_after_move(node, s, igraph)
    if comp_b > pool.compute or link_b > pool.bandwidth:
        return False
    return p.assign[node] == UNASSIGNED or link_a <= pool.bandwidth


def initial_deployment(igraph: SfcIGraph, pool: ServerPool) -> Placement:
    """Best fit (least remaining compute) along DFS order; FCFS among ties."""
    p = Placement.empty(igraph)
    for node in dfs_order(igraph):
        best = None
        best_rrc = None
        for s in range(p.n_servers):
            if p.count[s] == 0 or not _fits(p, node, s, igraph, pool):
                continue
            rrc = pool.compute - p.compute[s]
            if best is None or rrc < best_rrc:
                best, best_rrc = s, rrc
        if best is None:
            if p.used_count() >= pool.port_limit:
                raise Infeasible(f"node {node} fits no open server and all {pool.port_limit} ports are used")
            best = p.first_empty()
            if not _fits(p, node, best, igraph, pool):
                raise Infeasible(f"node {node} does not fit even on an empty server")
        p.move(node, best, igraph)
    p.trim()
    return p


def relevancy_degree(node: int, k: int, placement: Placement, igraph: SfcIGraph) -> float:
    """E_{n,k} - I_n over symmetrized traffic: the cost drop of moving ``node`` to ``k``."""
    a = placement.assign[node]
    if a == k:
        raise SameServer(f"node {node} is already on server {k}")
    _, internal, external = placement.side_weights(node, igraph, a, k)
    return external - internal


def _legal(p: Placement, node: int, k: int, igraph: SfcIGraph, pool: ServerPool) -> bool:
    if k >= p.n_servers or p.count[k] == 0:
        # opening a server: allowed under the port limit, or when the source empties
        if p.used_count() >= pool.port_limit and p.count[p.assign[node]] > 1:
            return False
    return _fits(p, node, k, igraph, pool)


def optimization_pass(
    placement: Placement,
    igraph: SfcIGraph,
    pool: ServerPool,
    trace: Optional[Trace] = None,
    pass_no: int = 1,
) -> PassResult:
    """One FM pass. Returns a new placement; ``placement`` is left untouched."""
    n = len(igraph)
    work = placement.copy()
    locked = [False] * n
    stamp = [0] * n
    # heap entries: (-rd, node, target, stamp); stale stamps are skipped on pop
    heap: List[Tuple[float, int, int, int]] = []

    def targets() -> List[int]:
        ts = [s for s in range(work.n_servers) if work.count[s] > 0]
        if work.used_count() < pool.port_limit:
            ts.append(work.first_empty())
        return ts

    def push_node(node: int, ts: List[int]) -> None:
        a = work.assign[node]
        for k in ts:
            if k != a:
                heap.append((-relevancy_degree(node, k, work, igraph), node, k, stamp[node]))

    ts = targets()
    fresh = set(ts) - set(s for s in range(work.n_servers) if work.count[s] > 0)
    for node in range(n):
        push_node(node, ts)
    heapq.heapify(heap)

    moves: List[MoveRecord] = []
    while True:
        aside = []
        chosen = None
        while heap:
            entry = heapq.heappop(heap)
            neg_rd, node, k, st = entry
            if locked[node] or st != stamp[node] or work.assign[node] == k:
                continue
            if _legal(work, node, k, igraph, pool):
                chosen = entry
                break
            aside.append(entry)
        for entry in aside:
            heapq.heappush(heap, entry)
        if chosen is None:
            break
        neg_rd, node, k, _ = chosen
        src = work.assign[node]
        work.move(node, k, igraph)
        locked[node] = True
        moves.append(MoveRecord(len(moves) + 1, node, src, k, -neg_rd))
        ts = targets()
        for x, _ in igraph.neighbors[node]:
            if not locked[x]:
                stamp[x] += 1
                for k2 in ts:
                    if k2 != work.assign[x]:
                        heapq.heappush(heap, (-relevancy_degree(x, k2, work, igraph), x, k2, stamp[x]))
        new_fresh = [s for s in ts if s not in fresh and (s >= work.n_servers or work.count[s] == 0)]
        for f in new_fresh:
            fresh.add(f)
            for x in range(n):
                if not locked[x]:
                    heapq.heappush(heap, (-relevancy_degree(x, f, work, igraph), x, f, stamp[x]))

    prefix = _prefix_sums(moves)
    gain = max(prefix, default=0.0)
    if gain > gain_tolerance(igraph):
        best_m = prefix.index(gain) + 1
        out = placement.copy()
        for mv in moves[:best_m]:
            out.move(mv.node, mv.dst, igraph)
            mv.committed = True
        out.trim()
        result = PassResult(out, gain, moves)
    else:
        result = PassResult(placement.copy(), gain, moves)
    if trace is not None:
        for mv in moves:
            trace(pass_no, mv)
    return result


def gain_tolerance(igraph: SfcIGraph) -> float:
    """Smallest gain worth committing.

    Prefix sums of real-valued RDs can leave a round-off residue of a few ulps
    on a move sequence whose true net gain is zero; committing it would let
    the pass loop cycle forever between equal-cost placements.
    """
    return 1e-9 * max(1.0, igraph.total_traffic())


def _prefix_sums(moves: List[MoveRecord]) -> List[float]:
    out, run = [], 0.0
    for mv in moves:
        run += mv.rd
        out.append(run)
    return out


def solve(igraph: SfcIGraph, pool: ServerPool, trace: Optional[Trace] = None) -> Tuple[Placement, SolveStats]:
    t0 = time.perf_counter()
    stats = SolveStats()
    placement = initial_deployment(igraph, pool)
    stats.initial_cost = pool.unit_cost * inter_traffic(placement.assign, igraph)
    pass_no = 1
    while True:
        res = optimization_pass(placement, igraph, pool, trace=trace, pass_no=pass_no)
        if not res.committed:
            break
        placement = res.placement
        stats.times += 1
        stats.gains.append(res.gain)
        stats.move_counts.append(len(res.committed))
        pass_no += 1
    stats.final_cost = pool.unit_cost * inter_traffic(placement.assign, igraph)
    stats.wall_time = time.perf_counter() - t0
    return placement, stats
