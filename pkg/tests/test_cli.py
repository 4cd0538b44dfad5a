import csv
import hashlib
import io
import json

import pytest

from nfpool import cli
from nfpool.placement import Placement, is_feasible, parse_placement
from nfpool.sfc_model import Nfi, SfcIGraph
from nfpool.workload import WorkloadParams, generate_instance, load_instance, save_instance


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_generate_is_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a.yaml", tmp_path / "b.yaml"
    assert run(capsys, "generate", "--seed", 1, "--nodes", 20, "--out", a)[0] == 0
    assert run(capsys, "generate", "--seed", 1, "--nodes", 20, "--out", b)[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_generate_hits_node_target(tmp_path, capsys):
    path = tmp_path / "i.yaml"
    run(capsys, "generate", "--nodes", 10, "--out", path)
    assert len(load_instance(path).igraph) == 10


def exit_code(argv):
    try:
        return cli.main(argv)
    except SystemExit as e:
        return e.code


@pytest.mark.parametrize("argv", [["generate", "--traffic", "600,100"], ["generate", "--traffic", "x"],
                                  ["solve"], ["sweep", "--figure", "6", "--out", "x.csv"],
                                  ["sweep", "--figure", "9", "--load", "2", "--out", "x.csv"]])
def test_usage_errors_exit_one(capsys, argv):
    assert exit_code(argv) == cli.EXIT_USAGE


def fittable(tmp_path):
    inst = generate_instance(WorkloadParams(seed=1, chain_length_range=(3, 3), instances_per_nf_range=(1, 1),
                                            demand_range=(100, 300)))
    path = tmp_path / "fit.yaml"
    save_instance(path, inst)
    return path, inst


def test_solve_fittable_instance_costs_nothing(tmp_path, capsys):
    path, inst = fittable(tmp_path)
    code, out, _ = run(capsys, "solve", path, "--trace", tmp_path / "trace.csv")
    assert code == 0
    (stats,) = rows(out)
    assert float(stats["cost"]) == 0 and int(stats["times"]) <= 2
    assert path.with_suffix(".placement").exists()
    assert rows((tmp_path / "trace.csv").read_text()) is not None


def test_gff_output_is_feasible(tmp_path, capsys):
    path = tmp_path / "i.yaml"
    run(capsys, "generate", "--seed", 3, "--nodes", 15, "--out", path)
    out_file = tmp_path / "gff.placement"
    code, out, _ = run(capsys, "solve", path, "--algorithm", "gff", "--out", out_file)
    assert code == 0
    inst = load_instance(path)
    _, assign = parse_placement(out_file.read_text(), inst.igraph)
    assert is_feasible(Placement.from_assignment(assign, inst.igraph), inst.igraph, inst.params.pool())[0]


def test_exact_refuses_large_instance(tmp_path, capsys):
    path = tmp_path / "i.yaml"
    run(capsys, "generate", "--nodes", 11, "--out", path)
    code, _, err = run(capsys, "solve", path, "--algorithm", "exact")
    assert code == cli.EXIT_USAGE and "exceeds" in err


def test_infeasible_exit_code(tmp_path, capsys):
    path = tmp_path / "i.yaml"
    run(capsys, "generate", "--seed", 2, "--nodes", 12, "--port-limit", 1, "--out", path)
    code, _, _ = run(capsys, "solve", path)
    assert code == cli.EXIT_INFEASIBLE


def test_invalid_instance_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("format_version: 1\nparams: [unclosed\n")
    assert run(capsys, "solve", path)[0] == cli.EXIT_INVALID
    assert run(capsys, "solve", tmp_path / "missing.yaml")[0] == cli.EXIT_USAGE


def test_compare_and_exact_check(tmp_path, capsys):
    path = tmp_path / "i.yaml"
    run(capsys, "generate", "--seed", 4, "--nodes", 8, "--out", path)
    code, out, _ = run(capsys, "compare", path)
    assert code == 0 and [r["algorithm"] for r in rows(out)] == ["mfmttp", "gff", "exact"]
    code, out, _ = run(capsys, "exact-check", path)
    (r,) = rows(out)
    assert float(r["exact"]) <= float(r["mfmttp"]) + 1e-9 and float(r["mfmttp_gap"]) >= -1e-9


def test_simulate_command(tmp_path, capsys):
    path, _ = fittable(tmp_path)
    run(capsys, "solve", path)
    code, out, _ = run(capsys, "simulate", path, path.with_suffix(".placement"), "--load", 0.5,
                       "--warmup", 100, "--measure", 2000)
    (r,) = rows(out)
    assert code == 0 and float(r["traversal_count"]) == 2.0


@pytest.mark.parametrize("figure", [7, 8, 9])
def test_sweep_writes_csv_summary_and_manifest(tmp_path, capsys, figure):
    out = tmp_path / f"fig{figure}.csv"
    code, text, _ = run(capsys, "sweep", "--figure", figure, "--seeds", 3, "--nodes", "10,12", "--out", out,
                        "--warmup", 50, "--measure", 500)
    assert code == 0
    per_seed = rows(out.read_text())
    assert len(per_seed) == 6
    summary = out.with_name(out.stem + ".summary.csv")
    manifest = json.loads(out.with_name(out.name + ".manifest.json").read_text())
    assert manifest["seeds"] == [0, 1, 2] and manifest["params"]["figure"] == figure
    assert manifest["digests"][out.name] == hashlib.sha256(out.read_bytes()).hexdigest()
    assert manifest["digests"][summary.name] == hashlib.sha256(summary.read_bytes()).hexdigest()
    if figure == 8:
        assert all(int(r["times"]) >= 1 for r in per_seed if r["status"] == "ok")


def test_sweep_rerun_is_identical(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(capsys, "sweep", "--figure", 7, "--seeds", 4, "--nodes", "10", "--out", a)
    run(capsys, "sweep", "--figure", 7, "--seeds", 4, "--nodes", "10", "--out", b, "--workers", 2)
    assert a.read_bytes() == b.read_bytes()


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit):
        cli.main(["sweep", "--help"])
    out = capsys.readouterr().out
    assert "--load" in out and "(default: 0.8)" in out and "NFPOOL_WORKERS" in out
