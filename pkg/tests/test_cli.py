import json
import os

import pandas as pd
import pytest

from interference_lab.cli import main

CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")
SMALL = os.path.join(CONFIGS, "small_exact.yaml")


def test_graph(client, tmp_path):
    path = str(tmp_path / "graph.txt")
    assert main(["graph", "--family", "erdos_renyi", "--n", "10", "--param", "p=0.3", "--seed", "1",
                 "--output", path]) == 0
    g = client.graphs.read_edge_list(path)
    assert g.n == 10
    again = str(tmp_path / "again.txt")
    main(["graph", "--family", "erdos_renyi", "--n", "10", "--param", "p=0.3", "--seed", "1", "--output", again])
    assert client.graphs.read_edge_list(again).edges == g.edges


def test_exact(tmp_path):
    path = str(tmp_path / "results.csv")
    assert main(["exact", "--config", SMALL, "--output", path]) == 0
    frame = pd.read_csv(path)
    assert len(frame) == 7
    assert frame.loc[frame.strategy == "crd-naive", "bias"].iloc[0] == pytest.approx(-1 / 6)
    with open(f"{path}.meta.json") as f:
        meta = json.load(f)
    assert meta["config"]["mode"] == "exact_enumeration"
    assert len(meta["fingerprint"]) == 32


def test_run_as_json(tmp_path):
    path = str(tmp_path / "results.json")
    assert main(["run", "--config", SMALL, "--output", path, "--format", "json"]) == 0
    with open(path) as f:
        records = json.load(f)
    assert [r["strategy"] for r in records][:3] == ["crd-naive", "crd-dom", "crd-ht"]


def test_propensity(tmp_path):
    path = str(tmp_path / "pi.csv")
    assert main(["propensity", "--config", SMALL, "--strategy", "crd-ht", "--output", path]) == 0
    frame = pd.read_csv(path)
    assert sorted(frame["unit"].unique().tolist()) == list(range(6))
    assert frame.groupby("unit")["pi"].sum().tolist() == pytest.approx([1.0] * 6)


def test_linear_bias_report(capsys):
    assert main(["analytic", "--config", SMALL, "--strategy", "crd-naive", "--report", "linear-bias"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report == {"bias": pytest.approx(-1 / 6), "gamma": 0.5}


def test_naive_bias_report(capsys):
    assert main(["analytic", "--config", SMALL, "--strategy", "crd-naive", "--report", "naive-bias"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["analytic_value"] == pytest.approx(report["oracle_value"], abs=1e-10)
    assert set(report["decomposition"]) == {"a_term", "b_term", "c_term"}


def test_unknown_strategy_fails(capsys):
    assert main(["analytic", "--config", SMALL, "--strategy", "nope", "--report", "shrinkage"]) == 1


def test_plot(tmp_path):
    pytest.importorskip("matplotlib")
    results = str(tmp_path / "results.csv")
    main(["exact", "--config", SMALL, "--output", results])
    image = str(tmp_path / "results.png")
    assert main(["plot", "--results", results, "--output", image]) == 0
    assert os.path.getsize(image) > 0
