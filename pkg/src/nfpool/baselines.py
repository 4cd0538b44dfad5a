"""Comparison placements: first-fit greedy and an exhaustive optimum."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List

from .mfmttp import _fits, dfs_order
from .placement import Infeasible, Placement, ServerPool, inter_traffic
from .sfc_model import SfcIGraph

DEFAULT_NODE_LIMIT = 10


class TooLarge(ValueError):
    pass


def gff_solve(igraph: SfcIGraph, pool: ServerPool, order: str = "id") -> Placement:
    """Place nodes in ascending id (or DFS) order on the lowest-indexed server that fits."""
    if order == "id":
        visit = range(len(igraph))
    elif order == "dfs":
        visit = dfs_order(igraph)
    else:
        raise ValueError(f"unknown visit order {order!r}")
    p = Placement.empty(igraph)
    for node in visit:
        target = None
        for s in range(p.n_servers):
            if p.count[s] > 0 and _fits(p, node, s, igraph, pool):
                target = s
                break
        if target is None:
            if p.used_count() >= pool.port_limit:
                raise Infeasible(f"node {node} fits no open server and all {pool.port_limit} ports are used")
            target = p.first_empty()
            if not _fits(p, node, target, igraph, pool):
                raise Infeasible(f"node {node} does not fit even on an empty server")
        p.move(node, target, igraph)
    p.trim()
    return p


@dataclass
class ExactResult:
    placement: Placement
    cost: float
    partitions: int
    feasible: int


@lru_cache(maxsize=None)
def completions(remaining: int, blocks: int, cap: int) -> int:
    """Restricted growth strings extending a prefix that already uses ``blocks`` blocks."""
    if remaining == 0:
        return 1
    total = blocks * completions(remaining - 1, blocks, cap)
    if blocks < cap:
        total += completions(remaining - 1, blocks + 1, cap)
    return total


def partition_count(n: int, cap: int) -> int:
    """Set partitions of n items into at most ``cap`` blocks."""
    if n == 0:
        return 1
    return completions(n - 1, 1, cap)


def exact_solve(igraph: SfcIGraph, pool: ServerPool, node_limit: int = DEFAULT_NODE_LIMIT,
                prune: bool = True) -> ExactResult:
    """Minimum inter-traffic over every partition into at most P servers.

    Servers are interchangeable, so set partitions (as restricted growth
    strings) cover every labelled assignment. With ``prune`` a prefix whose
    compute or partial link load already exceeds a limit is skipped; both
    quantities only grow as the prefix extends, and the skipped leaves are
    still counted in ``partitions``.
    """
    n = len(igraph)
    if n > node_limit:
        raise TooLarge(f"{n} nodes exceeds the exact-solver limit of {node_limit}")
    if n == 0:
        return ExactResult(Placement.empty(igraph), 0.0, 1, 1)

    cap = min(pool.port_limit, n)
    T, B = pool.compute, pool.bandwidth
    demand = igraph.demand
    ext = igraph.external
    back = [[(j, c) for j, c in igraph.neighbors[i] if j < i] for i in range(n)]
    assign = [0] * n
    compute = [0.0] * n
    link = [0.0] * n
    eps = 1e-9 * max(igraph.total_traffic(), 1.0)

    best_cost = math.inf
    best_blocks = math.inf
    best_assign: List[int] = []
    seen = 0
    feasible = 0

    def rec(i: int, blocks: int, cost: float) -> None:
        nonlocal best_cost, best_blocks, best_assign, seen, feasible
        if i == n:
            seen += 1
            for b in range(blocks):
                if compute[b] > T or link[b] > B:
                    return
            feasible += 1
            if cost < best_cost - eps or (abs(cost - best_cost) <= eps and blocks < best_blocks):
                best_cost, best_blocks, best_assign = cost, blocks, assign[:]
            return
        for b in range(min(blocks + 1, cap)):
            saved = [(b, compute[b], link[b])]
            compute[b] += demand[i]
            link[b] += ext[i]
            added = 0.0
            for j, c in back[i]:
                bj = assign[j]
                if bj != b:
                    saved.append((bj, compute[bj], link[bj]))
                    link[b] += c
                    link[bj] += c
                    added += c
            assign[i] = b
            nb = max(blocks, b + 1)
            if prune and (compute[b] > T or link[b] > B or any(link[s] > B for s, _, _ in saved)):
                seen += completions(n - i - 1, nb, cap)
            else:
                rec(i + 1, nb, cost + added)
            for s, cv, lv in reversed(saved):
                compute[s], link[s] = cv, lv

    rec(0, 0, 0.0)
    if not best_assign:
        raise Infeasible("no partition satisfies the capacity and bandwidth constraints")
    placement = Placement.from_assignment(best_assign, igraph)
    return ExactResult(placement, pool.unit_cost * inter_traffic(best_assign, igraph), seen, feasible)
