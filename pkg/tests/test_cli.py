import json

import pytest

from gffmetric import cli, experiments
from gffmetric.network import load_network_file, set_resistance


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def fps_graph(data_dir):
    return data_dir / "fps.json"


@pytest.fixture
def cor_graph(data_dir):
    return data_dir / "cor.json"


@pytest.fixture
def levy_graph(data_dir):
    return data_dir / "levy.json"


def test_graph_fixtures_are_small(fps_graph, cor_graph, levy_graph):
    for g in (fps_graph, cor_graph, levy_graph):
        net, _ = load_network_file(g)
        assert net.n <= 6


def test_net_reff(fps_graph, capsys):
    code, out, _ = run(["net", "reff", "-g", fps_graph, "--from", "x1,x2", "--to", "y"], capsys)
    net, _ = load_network_file(fps_graph)
    assert code == 0 and float(out) == pytest.approx(set_resistance(net, ["x1", "x2"], ["y"]))
    code, out, _ = run(["net", "reff", "-g", fps_graph, "--from", "x1", "--to", "y"], capsys)
    assert code == 0 and float(out) > 0


def test_net_kernel_green_harmonic(cor_graph, capsys):
    code, out, _ = run(["net", "kernel", "-g", cor_graph, "--set", "a,b,c"], capsys)
    assert code == 0 and out.splitlines()[0] == "vertex,a,b,c" and len(out.splitlines()) == 4
    code, out, _ = run(["net", "green", "-g", cor_graph], capsys)
    assert code == 0 and out.startswith("vertex,")
    code, out, _ = run(["net", "harmonic", "-g", cor_graph], capsys)
    assert code == 0 and out.splitlines()[0] == "vertex,value"


@pytest.mark.parametrize("law,extra", [
    ("local-time", ["--w0", "0.3", "--wT", "0.1", "--T", "2"]),
    ("bridge-min", ["--w0", "0.3", "--wT", "0.1", "--T", "2"]),
    ("last-visit", ["--w0", "0.3", "--wT", "0.1", "--T", "2", "--a", "-0.2"]),
    ("hitting", ["--m", "0.3", "--a", "-0.5"]),
    ("fps-laplace", ["--C", "1.2", "--m", "0.2", "--h-check", "0.1", "--a", "-1"]),
])
def test_law_eval(law, extra, capsys):
    grid = "1,2,3" if law == "fps-laplace" else "0:1:5"
    code, out, _ = run(["law", "eval", law, "--grid", grid, *extra], capsys)
    lines = out.splitlines()
    assert code == 0 and lines[0] == "x,value" and len(lines) == 1 + (3 if law == "fps-laplace" else 5)


def test_law_eval_two_set(fps_graph, capsys):
    code, out, _ = run(["law", "eval", "two-set", "-g", fps_graph, "--grid", "0:1:3"], capsys)
    assert code == 0 and len(out.splitlines()) == 4


def test_sample_field_and_metric(fps_graph, tmp_path, capsys):
    code, out, _ = run(["sample", "field", "-g", fps_graph, "-n", 3, "--seed", 1], capsys)
    net, _ = load_network_file(fps_graph)
    assert code == 0 and len(out.splitlines()) == 1 + 3 * net.n
    edges = tmp_path / "edges.csv"
    out_file = tmp_path / "metric.csv"
    code, _, _ = run(["sample", "metric", "-g", fps_graph, "-n", 1000, "--seed", 1, "--edges", edges, "-o", out_file], capsys)
    rows = out_file.read_text().splitlines()
    assert code == 0 and len(rows) == 1001
    assert rows[0].startswith("replicate,delta:") and rows[0].endswith("delta_hat_check")
    assert len(edges.read_text().splitlines()) == 1 + 1000 * len(net.edges)


def test_sample_levy(levy_graph, capsys):
    code, out, _ = run(["sample", "levy", "-g", levy_graph, "-n", 4, "--seed", 2], capsys)
    assert code == 0 and out.splitlines()[0] == "replicate,vertex,|phi|,delta,phiMinusI,negI"


def test_fps_commands(fps_graph, cor_graph, capsys):
    code, out, _ = run(["fps", "sample", "-g", fps_graph, "--level", "-0.2", "-n", 3, "-r", 4], capsys)
    assert code == 0 and len(out.splitlines()) == 1 + 3 * 2
    code, out, _ = run(["fps", "sample", "-g", cor_graph, "--level", "-0.2", "-n", 2, "-r", 4, "--x0", "c"], capsys)
    assert code == 0 and out.splitlines()[1].split(",")[-1] != ""
    code, out, _ = run(["fps", "laplace", "-g", fps_graph, "--level", "-0.5", "-n", 50, "-r", 4, "--u", "1,4"], capsys)
    assert code == 0 and out.splitlines()[0] == "u,closed_form,lower,lower_se,upper,upper_se" and len(out.splitlines()) == 3
    code, out, _ = run(["fps", "nested", "-g", cor_graph, "--levels", "0.1,-0.2", "--x0", "c", "-n", 2, "-r", 4], capsys)
    assert code == 0 and len(out.splitlines()) == 1 + 2 * 2 * 2
    code, out, _ = run(["fps", "ball", "-g", cor_graph, "--ells", "0,0.3", "--x0", "c", "-n", 2, "-r", 4], capsys)
    assert code == 0 and len(out.splitlines()) == 1 + 2 * 2 * 2
    code, _, err = run(["fps", "nested", "-g", cor_graph, "--levels", "0.1", "-n", 2], capsys)
    assert code == 2 and "x0" in err


def test_verify_writes_reports(tmp_path, capsys):
    code, out, _ = run(["verify", "network", "--out", tmp_path / "rep"], capsys)
    assert code == 0 and "network: PASS" in out
    code, out, _ = run(["verify", "eq1", "--seed", 7, "-n", 5000, "--out", tmp_path / "rep", "--deterministic"], capsys)
    assert code == 0
    reports = json.loads((tmp_path / "rep" / "eq1-seed7.json").read_text())
    assert all(r["passed"] and r["runtime_ms"] == 0.0 for r in reports)
    assert {"test", "statistic", "value", "p", "z", "threshold", "passed", "n", "seed", "runtime_ms"} <= set(reports[0])
    assert any(p.suffix == ".csv" for p in (tmp_path / "rep").iterdir())


def test_verify_statistical_failure_exit_code(monkeypatch, capsys):
    def failing(name, seeds, n, threads):
        rep = experiments.TestReport("x", "KS", 0.5, p=0.0, passed=False, seed=seeds[0])
        return False, [experiments.SuiteResult(name, [rep])]
    monkeypatch.setattr(experiments, "run_suite", failing)
    code, out, _ = run(["verify", "eq1", "--seed", 1], capsys)
    assert code == 1 and "FAIL" in out


def test_lattice_command(tmp_path, capsys):
    out = tmp_path / "lat.json"
    code, text, _ = run(["lattice", "--rows", 8, "--cols", 8, "-n", 300, "--seed", 7, "-o", out, "--deterministic"], capsys)
    assert code in (0, 1)
    rep = json.loads(out.read_text())
    assert rep["details"]["extremal_distance"] == 1.0
    assert "R_eff=" in text
    code, _, _ = run(["lattice", "--rows", 4, "--cols", 8, "-n", 10], capsys)
    assert code == 2
    code, _, _ = run(["lattice", "--rows", 8, "--cols", 8, "-n", 100, "--periodic"], capsys)
    assert code in (0, 1)


# ------------------------------------------------------------------ errors

def test_usage_errors(fps_graph, tmp_path, capsys):
    assert run(["verify", "nope"], capsys)[0] == 2
    assert run(["sample", "field", "-n", 2], capsys)[0] == 2  # no graph
    assert run(["sample", "field", "-g", fps_graph, "-n", 0], capsys)[0] == 2
    assert run(["fps", "sample", "-g", fps_graph, "--level", "-0.1", "-r", 0], capsys)[0] == 2
    assert run(["sample", "field", "-g", tmp_path / "missing.json"], capsys)[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    code, _, err = run(["net", "harmonic", "-g", bad], capsys)
    assert code == 2 and "parse error" in err
    assert run(["frobnicate"], capsys)[0] == 2
    assert run(["law", "eval", "nolaw", "--grid", "0:1:2"], capsys)[0] == 2
    assert run(["--help"], capsys)[0] == 0


# ------------------------------------------------------- config and determinism

def test_precedence_flags_env_config(fps_graph, tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 3, "replicates": 2, "graph": str(fps_graph)}))
    base = ["sample", "field", "--config", cfg]
    _, from_cfg, _ = run(base, capsys)
    _, explicit3, _ = run(["sample", "field", "-g", fps_graph, "-n", 2, "--seed", 3], capsys)
    assert from_cfg == explicit3
    monkeypatch.setenv("GFFM_SEED", "4")
    _, from_env, _ = run(base, capsys)
    _, explicit4, _ = run(["sample", "field", "-g", fps_graph, "-n", 2, "--seed", 4], capsys)
    assert from_env == explicit4 != from_cfg
    _, from_flag, _ = run(base + ["--seed", 5], capsys)
    _, explicit5, _ = run(["sample", "field", "-g", fps_graph, "-n", 2, "--seed", 5], capsys)
    assert from_flag == explicit5
    monkeypatch.setenv("GFFM_SEED", "x")
    assert run(base, capsys)[0] == 2


def test_resolve_config_defaults():
    ns = cli.build_parser().parse_args(["sample", "field"])
    cfg = cli.resolve_config(ns, env={})
    assert (cfg.seed, cfg.replicates, cfg.refinement, cfg.threads) == (0, 1000, 32, 1)
    cfg = cli.resolve_config(ns, env={"GFFM_THREADS": "3"})
    assert cfg.threads == 3


@pytest.mark.parametrize("argv", [
    ["sample", "metric", "-n", 50, "--seed", 9],
    ["sample", "field", "-n", 5, "--seed", 9],
    ["fps", "sample", "--level", "-0.3", "-n", 4, "-r", 4, "--seed", 9],
])
def test_outputs_are_byte_identical(argv, fps_graph, tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(argv + ["-g", fps_graph, "-o", a], capsys)
    run(argv + ["-g", fps_graph, "-o", b], capsys)
    assert a.read_bytes() == b.read_bytes()


def test_verify_reports_byte_identical(tmp_path, capsys):
    for d in ("r1", "r2"):
        run(["verify", "rewire", "--seed", 8, "-n", 3000, "--out", tmp_path / d, "--deterministic"], capsys)
    for f in (tmp_path / "r1").iterdir():
        assert f.read_bytes() == (tmp_path / "r2" / f.name).read_bytes()
