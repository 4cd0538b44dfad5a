"""Command-line front end: generate, solve, compare, exact-check, simulate and sweep.

Exit codes: 0 success, 1 usage, 2 infeasible, 3 validation failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

from . import __version__
from .baselines import DEFAULT_NODE_LIMIT, TooLarge, exact_solve, gff_solve
from .fabric_sim import FabricConfig, derive_paths, simulate
from .mfmttp import solve as mfmttp_solve
from .placement import (
    Infeasible,
    Placement,
    evaluate_cost,
    format_placement,
    inter_traffic,
    is_feasible,
    parse_placement,
)
from .workload import (
    InstanceInvalid,
    ParseError,
    VersionMismatch,
    WorkloadParams,
    dumps_instance,
    generate_instance,
    load_instance,
    save_instance,
)

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_INVALID = 0, 1, 2, 3
WORKERS_ENV = "NFPOOL_WORKERS"
SWEEP_NODES = (10, 15, 20, 25, 30)
SWEEP_DEFAULTS = WorkloadParams()
SIM_LOAD = 0.8


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    params: dict
    seeds: List[int]
    version: str = __version__
    digests: Dict[str, str] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# per-seed experiment points, shared by the sweep command and the test-suite


def solve_with(algorithm: str, igraph, pool, exact_limit: int = DEFAULT_NODE_LIMIT, trace=None):
    """Returns (placement, times). ``times`` is 1 for the one-shot solvers."""
    if algorithm == "mfmttp":
        placement, stats = mfmttp_solve(igraph, pool, trace=trace)
        return placement, stats.times
    if algorithm == "gff":
        return gff_solve(igraph, pool), 1
    if algorithm == "exact":
        return exact_solve(igraph, pool, node_limit=exact_limit).placement, 1
    raise UsageError(f"unknown algorithm {algorithm!r}")


def fig7_point(params: WorkloadParams) -> dict:
    inst = generate_instance(params)
    pool = params.pool()
    row = {"nodes": len(inst.igraph), "seed": params.seed}
    try:
        pm, _ = mfmttp_solve(inst.igraph, pool)
        pg = gff_solve(inst.igraph, pool)
    except Infeasible:
        return {**row, "status": "infeasible", "mfmttp": "", "gff": "", "reduction": ""}
    cm = inter_traffic(pm.assign, inst.igraph)
    cg = inter_traffic(pg.assign, inst.igraph)
    red = (cg - cm) / cg if cg > 0 else 0.0
    return {**row, "status": "ok", "mfmttp": cm, "gff": cg, "reduction": red}


def fig8_point(params: WorkloadParams) -> dict:
    inst = generate_instance(params)
    row = {"nodes": len(inst.igraph), "seed": params.seed}
    try:
        _, stats = mfmttp_solve(inst.igraph, params.pool())
    except Infeasible:
        return {**row, "status": "infeasible", "times": ""}
    return {**row, "status": "ok", "times": stats.times}


def fig9_point(params: WorkloadParams, load: float = SIM_LOAD, warmup: int = 10_000,
               measure: int = 100_000) -> dict:
    inst = generate_instance(params)
    pool = params.pool()
    row = {"nodes": len(inst.igraph), "seed": params.seed}
    try:
        placements = {"mfmttp": mfmttp_solve(inst.igraph, pool)[0], "gff": gff_solve(inst.igraph, pool)}
    except Infeasible:
        return {**row, "status": "infeasible"}
    row["status"] = "ok"
    for name, placement in placements.items():
        paths = derive_paths(placement, inst.igraph, inst.requests)
        # paired seeds: both placements see the same arrival stream
        res = simulate(FabricConfig(load, warmup=warmup, measure=measure, seed=params.seed), paths)
        row[f"{name}_throughput"] = res.throughput
        row[f"{name}_delay"] = res.mean_delay
        row[f"{name}_traversals"] = res.traversals
    return row


FIGURES = {
    7: (fig7_point, ["nodes", "seed", "status", "mfmttp", "gff", "reduction"]),
    8: (fig8_point, ["nodes", "seed", "status", "times"]),
    9: (fig9_point, ["nodes", "seed", "status", "mfmttp_throughput", "gff_throughput",
                     "mfmttp_delay", "gff_delay", "mfmttp_traversals", "gff_traversals"]),
}


def _job(args):
    figure, params, extra = args
    return FIGURES[figure][0](params, **extra)


def run_sweep(figure: int, base: WorkloadParams, nodes: Sequence[int], seeds: Sequence[int],
              workers: int = 1, **extra) -> List[dict]:
    jobs = [(figure, base.with_(nodes=n, seed=s), extra) for n in nodes for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_job, jobs, chunksize=4))
    else:
        rows = [_job(j) for j in jobs]
    return sorted(rows, key=lambda r: (r["nodes"], r["seed"]))


def _mean_stderr(xs: Sequence[float]):
    if not xs:
        return math.nan, math.nan
    m = statistics.fmean(xs)
    se = statistics.stdev(xs) / math.sqrt(len(xs)) if len(xs) > 1 else 0.0
    return m, se


def summarize(figure: int, rows: Sequence[dict]):
    """Summary header and rows: mean and stderr per node count, or the times histogram."""
    ok = [r for r in rows if r["status"] == "ok"]
    counts = sorted({r["nodes"] for r in rows})
    out = []
    if figure == 7:
        header = ["nodes", "runs", "infeasible", "mean_reduction", "stderr", "mean_mfmttp", "mean_gff"]
        for n in counts:
            sel = [r for r in ok if r["nodes"] == n]
            m, se = _mean_stderr([r["reduction"] for r in sel])
            out.append([n, len(sel), sum(1 for r in rows if r["nodes"] == n) - len(sel), m, se,
                        _mean_stderr([r["mfmttp"] for r in sel])[0], _mean_stderr([r["gff"] for r in sel])[0]])
    elif figure == 8:
        header = ["nodes", "times", "count"]
        for n in counts:
            hist: Dict[int, int] = {}
            for r in ok:
                if r["nodes"] == n:
                    hist[r["times"]] = hist.get(r["times"], 0) + 1
            out += [[n, t, c] for t, c in sorted(hist.items())]
    else:
        header = ["nodes", "algorithm", "runs", "mean_throughput", "stderr"]
        for n in counts:
            sel = [r for r in ok if r["nodes"] == n]
            for alg in ("mfmttp", "gff"):
                m, se = _mean_stderr([r[f"{alg}_throughput"] for r in sel])
                out.append([n, alg, len(sel), m, se])
    return header, out


# ---------------------------------------------------------------------------
# argument parsing


_FORMAT = argparse.ArgumentDefaultsHelpFormatter


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _range(text: str):
    try:
        lo, hi = (int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}")
    return lo, hi


def _int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_workload_flags(p: argparse.ArgumentParser, defaults: WorkloadParams) -> None:
    g = p.add_argument_group("workload")
    g.add_argument("--nf-types", type=int, default=defaults.nf_type_count, help="number of NF types")
    g.add_argument("--chain-length", type=_range, default=defaults.chain_length_range, metavar="LO,HI",
                   help="SFC length range")
    g.add_argument("--instances", type=_range, default=defaults.instances_per_nf_range, metavar="LO,HI",
                   help="NFIs per NF")
    g.add_argument("--traffic", type=_range, default=defaults.traffic_range, metavar="LO,HI",
                   help="traffic draw range")
    g.add_argument("--demand", type=_range, default=defaults.demand_range, metavar="LO,HI",
                   help="NFI demand range")
    g.add_argument("--compute", type=float, default=defaults.server_compute, help="server compute T")
    g.add_argument("--bandwidth", type=float, default=defaults.server_bandwidth,
                   help="server link bandwidth B")
    g.add_argument("--port-limit", type=int, default=defaults.port_limit, help="fabric ports P")
    g.add_argument("--sfc-count", type=int, default=defaults.sfc_count, help="SFC requests per instance")
    g.add_argument("--count-rule", choices=("random", "load"), default=defaults.count_rule,
                   help="how NFI counts are chosen")
    g.add_argument("--structure", choices=("sparse", "dense"), default="sparse" if defaults.sparsify else "dense",
                   help="sequential-fill instance edges, or every instance pair of adjacent NFs")


def _params_from(args, **kw) -> WorkloadParams:
    try:
        return WorkloadParams(
            nf_type_count=args.nf_types,
            chain_length_range=args.chain_length,
            instances_per_nf_range=args.instances,
            traffic_range=args.traffic,
            demand_range=args.demand,
            server_compute=args.compute,
            server_bandwidth=args.bandwidth,
            port_limit=args.port_limit,
            sfc_count=args.sfc_count,
            count_rule=args.count_rule,
            sparsify=args.structure == "sparse",
            **kw,
        )
    except ValueError as e:
        raise UsageError(str(e))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nfpool", description=__doc__.splitlines()[0], formatter_class=_FORMAT)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", formatter_class=_FORMAT, help="write a seeded random instance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nodes", type=int, default=None, help="target NFI count")
    p.add_argument("--out", type=Path, default=None, help="instance file (stdout if omitted)")
    _add_workload_flags(p, WorkloadParams())

    p = sub.add_parser("solve", formatter_class=_FORMAT, help="place an instance and write the placement")
    p.add_argument("instance", type=Path)
    p.add_argument("--algorithm", choices=("mfmttp", "gff", "exact"), default="mfmttp")
    p.add_argument("--out", type=Path, default=None, help="placement file (default: <instance>.placement)")
    p.add_argument("--trace", type=Path, default=None, help="CSV log of every MFMTTP move")
    p.add_argument("--exact-limit", type=int, default=DEFAULT_NODE_LIMIT)

    p = sub.add_parser("compare", formatter_class=_FORMAT, help="cost of every applicable algorithm on one instance")
    p.add_argument("instance", type=Path)
    p.add_argument("--exact-limit", type=int, default=DEFAULT_NODE_LIMIT)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("exact-check", formatter_class=_FORMAT, help="MFMTTP and GFF against the exhaustive optimum")
    p.add_argument("instance", type=Path)
    p.add_argument("--exact-limit", type=int, default=DEFAULT_NODE_LIMIT)

    p = sub.add_parser("simulate", formatter_class=_FORMAT, help="fabric throughput of a saved placement")
    p.add_argument("instance", type=Path)
    p.add_argument("placement", type=Path)
    p.add_argument("--load", type=float, default=SIM_LOAD, help="Bernoulli arrival probability")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--warmup", type=int, default=10_000, help="slots before statistics start")
    p.add_argument("--measure", type=int, default=100_000, help="measured slots")

    p = sub.add_parser("sweep", formatter_class=_FORMAT, help="per-seed CSV behind one of the evaluation figures")
    p.add_argument("--figure", type=int, choices=(7, 8, 9), required=True)
    p.add_argument("--seeds", type=int, default=100, help="seeds 0..N-1 per node count")
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--nodes", type=_int_list, default=list(SWEEP_NODES), help="node counts, comma-separated")
    p.add_argument("--load", type=float, default=SIM_LOAD, help="offered load for figure 9")
    p.add_argument("--warmup", type=int, default=10_000, help="slots before statistics start")
    p.add_argument("--measure", type=int, default=100_000, help="measured slots")
    p.add_argument("--workers", type=int, default=int(os.environ.get(WORKERS_ENV, "1")),
                   help=f"worker processes (env {WORKERS_ENV})")
    p.add_argument("--out", type=Path, required=True, help="per-seed CSV; summary and manifest go alongside")
    _add_workload_flags(p, SWEEP_DEFAULTS)
    return parser


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    params = _params_from(args, seed=args.seed, nodes=args.nodes)
    inst = generate_instance(params)
    if args.out is None:
        sys.stdout.write(dumps_instance(inst))
    else:
        save_instance(args.out, inst)
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    pool = inst.params.pool()
    trace_rows = []
    trace = (lambda pass_no, mv: trace_rows.append(
        [pass_no, mv.seq, mv.node, mv.src, mv.dst, mv.rd, int(mv.committed)])) if args.trace else None
    try:
        t0 = time.perf_counter()
        placement, times = solve_with(args.algorithm, inst.igraph, pool, args.exact_limit, trace)
        wall = time.perf_counter() - t0
    except TooLarge as e:
        raise UsageError(str(e))
    finally:
        if args.trace:
            args.trace.write_text(_csv_text(["pass", "seq", "node", "src", "dst", "rd", "committed"], trace_rows))
    ok, violations = is_feasible(placement, inst.igraph, pool)
    if not ok:
        raise Infeasible("; ".join(v.detail for v in violations))
    out = args.out or args.instance.with_suffix(".placement")
    out.write_text(format_placement(placement, args.algorithm))
    cost = evaluate_cost(placement, inst.igraph, pool).total_cost
    sys.stdout.write(_csv_text(["algorithm", "cost", "times", "servers", "wall_time"],
                               [[args.algorithm, cost, times, placement.used_count(), f"{wall:.6f}"]]))
    return EXIT_OK


def _costs(inst, exact_limit: int):
    pool = inst.params.pool()
    rows = []
    algs = ["mfmttp", "gff"] + (["exact"] if len(inst.igraph) <= exact_limit else [])
    for alg in algs:
        try:
            placement, times = solve_with(alg, inst.igraph, pool, exact_limit)
        except Infeasible:
            rows.append([alg, "infeasible", "", ""])
            continue
        rows.append([alg, evaluate_cost(placement, inst.igraph, pool).total_cost, times, placement.used_count()])
    return rows


def cmd_compare(args) -> int:
    inst = load_instance(args.instance)
    rows = _costs(inst, args.exact_limit)
    text = _csv_text(["algorithm", "cost", "times", "servers"], rows)
    if args.out:
        args.out.write_text(text)
    sys.stdout.write(text)
    return EXIT_INFEASIBLE if all(r[1] == "infeasible" for r in rows) else EXIT_OK


def cmd_exact_check(args) -> int:
    inst = load_instance(args.instance)
    pool = inst.params.pool()
    try:
        res = exact_solve(inst.igraph, pool, node_limit=args.exact_limit)
    except TooLarge as e:
        raise UsageError(str(e))
    pm, _ = mfmttp_solve(inst.igraph, pool)
    pg = gff_solve(inst.igraph, pool)
    cm = pool.unit_cost * inter_traffic(pm.assign, inst.igraph)
    cg = pool.unit_cost * inter_traffic(pg.assign, inst.igraph)
    sys.stdout.write(_csv_text(
        ["exact", "mfmttp", "gff", "mfmttp_gap", "partitions", "feasible_partitions"],
        [[res.cost, cm, cg, cm - res.cost, res.partitions, res.feasible]]))
    return EXIT_OK


def cmd_simulate(args) -> int:
    inst = load_instance(args.instance)
    _, assign = parse_placement(args.placement.read_text(), inst.igraph)
    try:
        placement = Placement.from_assignment(assign, inst.igraph)
        config = FabricConfig(args.load, warmup=args.warmup, measure=args.measure, seed=args.seed)
    except ValueError as e:
        raise UsageError(str(e))
    res = simulate(config, derive_paths(placement, inst.igraph, inst.requests))
    sys.stdout.write(_csv_text(["p", "seed", "throughput", "mean_delay", "traversal_count"],
                               [[args.load, args.seed, res.throughput, res.mean_delay, res.traversals]]))
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = _params_from(args)
    seeds = list(range(args.seed, args.seed + args.seeds))
    extra = {}
    if args.figure == 9:
        try:
            FabricConfig(args.load, warmup=args.warmup, measure=args.measure)
        except ValueError as e:
            raise UsageError(str(e))
        extra = {"load": args.load, "warmup": args.warmup, "measure": args.measure}
    rows = run_sweep(args.figure, base, args.nodes, seeds, workers=max(1, args.workers), **extra)
    header = FIGURES[args.figure][1]
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(_csv_text(header, ([r.get(k, "") for k in header] for r in rows)))
    s_header, s_rows = summarize(args.figure, rows)
    summary_path = args.out.with_name(args.out.stem + ".summary.csv")
    summary_text = _csv_text(s_header, s_rows)
    summary_path.write_text(summary_text)
    params = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(base).items()}
    params.update(figure=args.figure, nodes=list(args.nodes), **extra)
    manifest = RunManifest("sweep", params, seeds,
                           digests={p.name: _digest(p) for p in (args.out, summary_path)})
    args.out.with_name(args.out.name + ".manifest.json").write_text(manifest.to_json())
    sys.stdout.write(summary_text)
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "solve": cmd_solve,
    "compare": cmd_compare,
    "exact-check": cmd_exact_check,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"nfpool: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Infeasible as e:
        print(f"nfpool: infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ParseError, VersionMismatch, InstanceInvalid) as e:
        print(f"nfpool: invalid instance: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"nfpool: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
