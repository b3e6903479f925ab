import json
import math

import numpy as np
import pytest

from betafit.cli import main, read_fit_json


def run_cli(*args):
    return main([str(a) for a in args])


@pytest.fixture
def path_graph(tmp_path):
    p = tmp_path / "path.txt"
    p.write_text("a b\nb c\n")
    return p


def test_fit_path_graph_json(path_graph, tmp_path):
    out = tmp_path / "fit.json"
    assert run_cli("fit", path_graph, "--lambda", 0.5, "--out", out) == 0
    doc = json.loads(out.read_text())
    assert doc["converged"] is True
    assert doc["m"] == 2
    assert doc["lambda"] == 0.5
    assert len(doc["classes"]) == 2
    labels = [node["label"] for node in doc["nodes"]]
    assert labels == ["a", "b", "c"]
    assert doc["nodes"][0]["beta"] == doc["classes"][0]["delta"]


def test_fit_negative_lambda_exits_2(path_graph, capsys):
    assert run_cli("fit", path_graph, "--lambda", -1) == 2
    assert "non-negative" in capsys.readouterr().err


def test_fit_degenerate_graph_exits_3(tmp_path):
    triangle = tmp_path / "k3.txt"
    triangle.write_text("a b\nb c\na c\n")
    assert run_cli("fit", triangle, "--lambda", 1.0) == 3


def test_fit_max_iters_exhausted_exits_4(path_graph, tmp_path):
    out = tmp_path / "fit.json"
    code = run_cli("fit", path_graph, "--lambda", 0.5, "--max-iters", 1, "--out", out)
    assert code == 4
    assert json.loads(out.read_text())["converged"] is False


def test_fit_parse_error_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("a b c\n")
    assert run_cli("fit", bad) == 2
    assert "line 1" in capsys.readouterr().err


def test_fit_json_round_trips_beta_exactly(path_graph, tmp_path):
    out = tmp_path / "fit.json"
    run_cli("fit", path_graph, "--lambda", 0.3, "--out", out)
    doc = read_fit_json(str(out))
    from betafit import build_histogram, fit as lib_fit, read_edge_list

    g = read_edge_list(str(path_graph))
    from betafit import degrees_of

    result = lib_fit(build_histogram(degrees_of(g)), 0.3)
    betas = np.array([node["beta"] for node in doc["nodes"]])
    assert (betas == result.beta).all()


def test_fit_classes_only_flag(path_graph, tmp_path):
    out = tmp_path / "fit.json"
    run_cli("fit", path_graph, "--lambda", 0.5, "--classes-only", "--out", out)
    assert "nodes" not in json.loads(out.read_text())


def test_fit_degree_file_input(tmp_path):
    degrees = tmp_path / "deg.txt"
    degrees.write_text("s1 1\ns2 2\ns3 1\n")
    out = tmp_path / "fit.json"
    assert run_cli("fit", degrees, "--degrees", "--lambda", 0.5, "--out", out) == 0
    doc = json.loads(out.read_text())
    assert [node["label"] for node in doc["nodes"]] == ["s1", "s2", "s3"]


def test_fit_bounds_flag(path_graph, tmp_path):
    out = tmp_path / "fit.json"
    # the leading dash needs the --flag=value form under argparse
    assert run_cli("fit", path_graph, "--lambda", 0.5, "--bounds=-0.05,0.05",
                   "--out", out) == 0
    doc = json.loads(out.read_text())
    deltas = [c["delta"] for c in doc["classes"]]
    assert all(-0.05 <= d <= 0.05 for d in deltas)
    assert run_cli("fit", path_graph, "--bounds", "nonsense") == 2
    assert run_cli("fit", path_graph, "--bounds", "1,2,3") == 2


def test_simulate_deterministic_bytes(tmp_path):
    a = tmp_path / "a.txt"
    b = tmp_path / "b.txt"
    assert run_cli("simulate", "--setting", "i", "--n", 400, "--seed", 7,
                   "--out", a) == 0
    assert run_cli("simulate", "--setting", "i", "--n", 400, "--seed", 7,
                   "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes()  # non-empty


def test_simulate_then_fit_pipeline(tmp_path):
    edges = tmp_path / "net.txt"
    run_cli("simulate", "--setting", "i", "--n", 200, "--seed", 3, "--out", edges)
    out = tmp_path / "fit.json"
    assert run_cli("fit", edges, "--lambda", 0.1, "--out", out) == 0
    assert json.loads(out.read_text())["converged"] is True


def test_tune_prints_best_lambda(path_graph, tmp_path, capsys):
    out = tmp_path / "tune.csv"
    assert run_cli("tune", path_graph, "--lambdas", "0.1", "--out", out) == 0
    printed = capsys.readouterr().out.strip()
    assert printed == "0.10000000000000001"
    header = out.read_text().splitlines()[0]
    assert header == "lambda,aic,objective,effective_dim,converged,iterations"


def test_tune_dense_scenario_prints_zero(tmp_path, capsys):
    edges = tmp_path / "dense.txt"
    run_cli("simulate", "--setting", "aic_dense", "--n", 300, "--seed", 1,
            "--out", edges)
    assert run_cli("tune", edges) == 0
    assert capsys.readouterr().out.strip() == "0"


def test_select_json_output(tmp_path):
    edges = tmp_path / "net.txt"
    run_cli("simulate", "--setting", "two_sided_dense", "--n", 300, "--seed", 5,
            "--out", edges)
    out = tmp_path / "sel.json"
    assert run_cli("select", edges, "--lambda", 0.0, "--out", out) == 0
    doc = json.loads(out.read_text())
    assert set(doc) == {"center", "threshold", "a_bar", "selected"}
    assert doc["selected"]  # the planted active set is found
    assert 0 < doc["a_bar"] < 1


def test_select_requires_adjacency(tmp_path):
    degrees = tmp_path / "deg.txt"
    degrees.write_text("1\n2\n1\n")
    assert run_cli("select", degrees, "--degrees") == 5


def test_wabs_hand_computed(tmp_path, path_graph):
    fit_out = tmp_path / "fit.json"
    run_cli("fit", path_graph, "--lambda", 0.5, "--out", fit_out)
    doc = json.loads(fit_out.read_text())
    beta = {node["label"]: node["beta"] for node in doc["nodes"]}
    topics = tmp_path / "topics.csv"
    topics.write_text("t1,a,0.5\nt1,b,1.0\nt2,c,0.25\n")
    out = tmp_path / "wabs.csv"
    assert run_cli("wabs", "--topics", topics, "--fit", fit_out, "--out", out) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "topic,paper_count,wabs"
    rows = {line.split(",")[0]: line.split(",") for line in lines[1:]}
    expected_t1 = math.exp(beta["a"]) * 0.5 + math.exp(beta["b"]) * 1.0
    assert float(rows["t1"][2]) == pytest.approx(expected_t1, rel=1e-12)
    assert rows["t1"][1] == "2"
    # sorted descending
    assert lines[1].startswith("t1,")


def test_wabs_needs_nodes_block(tmp_path, path_graph):
    fit_out = tmp_path / "fit.json"
    run_cli("fit", path_graph, "--lambda", 0.5, "--classes-only", "--out", fit_out)
    topics = tmp_path / "topics.csv"
    topics.write_text("t,a,0.5\n")
    assert run_cli("wabs", "--topics", topics, "--fit", fit_out) == 7


def test_mc_writes_csv_and_aggregate(tmp_path):
    out = tmp_path / "mc.csv"
    agg = tmp_path / "mc.json"
    code = run_cli(
        "mc", "--setting", "i", "--n", 60, "--seed", 9, "--replicates", 5,
        "--lambdas", "0.1", "--out", out, "--agg-out", agg, "--threads", 1,
    )
    assert code == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0].startswith("lambda,replicate,converged,iterations")
    assert len(lines) == 6
    doc = json.loads(agg.read_text())
    assert doc["completed"] == 5
    assert "PCG64" in doc["rng"]


def test_mc_scenario_file(tmp_path):
    scenario = tmp_path / "scn.txt"
    scenario.write_text(
        "# demo scenario\nn=50\nsetting=i\nseed=4\nlambdas=0.1,1\nreplicates=3\n"
    )
    out = tmp_path / "mc.csv"
    agg = tmp_path / "agg.json"
    code = run_cli("mc", "--scenario", scenario, "--out", out, "--agg-out", agg,
                   "--threads", 1)
    assert code == 0
    doc = json.loads(agg.read_text())
    assert isinstance(doc, list) and len(doc) == 2
    assert doc[0]["lambda"] == 0.1 and doc[1]["lambda"] == 1.0
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 1 + 6  # header + 3 replicates per lambda


def test_gof_single_network(tmp_path):
    edges = tmp_path / "net.txt"
    run_cli("simulate", "--setting", "gof_weak", "--n", 80, "--seed", 2,
            "--out", edges)
    out = tmp_path / "gof.csv"
    assert run_cli("gof", "--edges", edges, "--lambda", 0.1, "--out", out) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0].startswith("# tw1_mean=-1.2065")
    assert lines[1] == "replicate,sigma1,t_stat"
    parts = lines[2].split(",")
    assert parts[0] == "0"
    assert float(parts[1]) > 0


def test_gof_replicated(tmp_path):
    out = tmp_path / "gof.csv"
    code = run_cli("gof", "--setting", "gof_weak", "--n", 60, "--seed", 3,
                   "--replicates", 3, "--lambda", 0.1, "--out", out)
    assert code == 0
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 2 + 3


def test_beta_file_input(tmp_path):
    beta = tmp_path / "beta.txt"
    beta.write_text("\n".join(["0.0"] * 40) + "\n")
    out = tmp_path / "net.txt"
    assert run_cli("simulate", "--beta-file", beta, "--seed", 11, "--out", out) == 0
    edges = out.read_text().strip().splitlines()
    assert len(edges) > 40 * 39 / 2 * 0.3  # density near 0.5


def test_threads_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("BETAFIT_THREADS", "2")
    out = tmp_path / "mc.csv"
    agg = tmp_path / "mc.json"
    code = run_cli("mc", "--setting", "i", "--n", 40, "--seed", 1,
                   "--replicates", 4, "--lambdas", "0.5", "--out", out,
                   "--agg-out", agg)
    assert code == 0
    assert json.loads(agg.read_text())["completed"] == 4


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli("--version")
    assert exc.value.code == 0
    assert "betafit" in capsys.readouterr().out


def test_missing_subcommand_usage_error():
    with pytest.raises(SystemExit) as exc:
        run_cli()
    assert exc.value.code == 2
