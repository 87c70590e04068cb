import csv
import json

import pytest

from qosketch.cli import main
from qosketch.graph import load_edge_list


@pytest.fixture
def graph_file(tmp_path):
    path = tmp_path / "g.txt"
    assert main(["gen", "--model", "ba", "--n", "150", "--m", "3", "--seed", "2", "--out", str(path)]) == 0
    return path


def run(capsys, argv):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestUsage:
    def test_unknown_subcommand(self, capsys):
        code, _, err = run(capsys, ["frobnicate"])
        assert code == 2 and "usage" in err

    def test_unknown_flag(self, capsys):
        code, _, err = run(capsys, ["gen", "--colour", "red"])
        assert code == 2 and "usage" in err

    def test_runtime_failure(self, capsys, tmp_path):
        code, _, err = run(capsys, ["estimate", "--input", str(tmp_path / "missing.txt")])
        assert code == 1 and "error" in err

    def test_bad_hubs(self, capsys, graph_file):
        code, _, err = run(capsys, ["estimate", "--input", str(graph_file), "--dim", "8", "--hubs", "8"])
        assert code == 1 and "hubs" in err


class TestGen:
    def test_deterministic(self, capsys):
        argv = ["gen", "--model", "er", "--n", "200", "--p", "0.05", "--seed", "7"]
        _, a, _ = run(capsys, argv)
        _, b, _ = run(capsys, argv)
        _, c, _ = run(capsys, argv[:-1] + ["8"])
        assert a == b and a != c

    def test_loads_back(self, graph_file):
        g, _ = load_edge_list(graph_file)
        assert g.num_nodes == 150


class TestConfig:
    def test_precedence(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"schema": 1, "model": "er", "n": 50, "p": 0.2, "seed": 3}))
        _, from_file, _ = run(capsys, ["gen", "--config", str(cfg)])
        _, flags, _ = run(capsys, ["gen", "--model", "er", "--n", "50", "--p", "0.2", "--seed", "3"])
        assert from_file == flags
        _, override, _ = run(capsys, ["gen", "--config", str(cfg), "--seed", "4"])
        _, flags4, _ = run(capsys, ["gen", "--model", "er", "--n", "50", "--p", "0.2", "--seed", "4"])
        assert override == flags4 != flags

    def test_unknown_key(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"schema": 1, "nodes": 50}))
        code, _, err = run(capsys, ["gen", "--config", str(cfg)])
        assert code == 1 and "nodes" in err

    def test_schema_required(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"n": 50}))
        code, _, err = run(capsys, ["gen", "--config", str(cfg)])
        assert code == 1 and "schema" in err


class TestEstimate:
    def test_csv(self, capsys, graph_file):
        code, out, _ = run(capsys, ["estimate", "--input", str(graph_file), "--dim", "1024", "--hops", "2",
                                    "--num-pairs", "5", "--exact"])
        assert code == 0
        rows = list(csv.reader(out.splitlines()))
        assert rows[0] == ["u", "v", "p", "q", "estimate", "exact_if_requested"]
        assert len(rows) == 1 + 5 * 8
        assert all(r[5] != "" for r in rows[1:])

    def test_hub_exact_through_cli(self, capsys, graph_file):
        _, out, _ = run(capsys, ["estimate", "--input", str(graph_file), "--dim", "151", "--hubs", "150",
                                 "--num-pairs", "10", "--exact"])
        for r in list(csv.DictReader(out.splitlines())):
            assert float(r["estimate"]) == int(r["exact_if_requested"])

    def test_exact_with_weights_rejected(self, capsys, graph_file):
        code, _, _ = run(capsys, ["estimate", "--input", str(graph_file), "--weights", "ra", "--exact"])
        assert code == 1


class TestProbe:
    def test_json_has_z(self, capsys):
        code, out, _ = run(capsys, ["probe", "--kind", "gcn", "--trials", "2000", "--dim", "16", "--out-dim", "16"])
        doc = json.loads(out)
        assert code == 0 and doc["z"] >= 0 and len(doc["results"]) == 1

    def test_explicit_pair(self, capsys, tmp_path):
        path = tmp_path / "p.txt"
        path.write_text("0 1\n1 2\n")
        _, out, _ = run(capsys, ["probe", "--input", str(path), "--pair", "0", "2", "--trials", "500",
                                 "--dim", "8", "--out-dim", "8", "--kind", "sage"])
        res = json.loads(out)["results"][0]
        assert res["pair"] == [0, 2] and res["closed_form"] > 0


class TestTrainEval:
    def test_roundtrip(self, capsys, tmp_path, graph_file):
        sp = tmp_path / "split"
        assert main(["split", "--input", str(graph_file), "--out", str(sp), "--seed", "1"]) == 0
        ck = tmp_path / "m.json"
        assert main(["train", "--split", str(sp), "--epochs", "2", "--dim", "64", "--eval-k", "20",
                     "--rescale", "learned", "--out", str(ck)]) == 0
        assert json.loads(ck.read_text())["schema"] == 1
        code, out, _ = run(capsys, ["eval", "--checkpoint", str(ck), "--split", str(sp), "--k", "20"])
        doc = json.loads(out)
        assert code == 0 and 0 <= doc["hits@20"] <= 1 and 0 < doc["mrr"] <= 1


class TestBench:
    def test_links(self, capsys, tmp_path, graph_file):
        code, out, _ = run(capsys, ["bench", "--input", str(graph_file), "--models", "cn,ra", "--repeats", "2",
                                    "--k", "20", "--out", str(tmp_path / "o")])
        assert code == 0
        assert [s["model"] for s in json.loads(out)] == ["cn", "ra"]
        assert (tmp_path / "o" / "g_cn.csv").exists()

    def test_estimation_csv(self, capsys, graph_file):
        code, out, _ = run(capsys, ["bench", "--input", str(graph_file), "--task", "estimation", "--dims", "64,128",
                                    "--num-pairs", "30", "--seeds", "2"])
        rows = list(csv.reader(out.splitlines()))
        assert code == 0 and rows[0] == ["F", "b", "p", "q", "mse"] and len(rows) == 1 + 2 * 8

    def test_unknown_model(self, capsys, graph_file):
        code, _, _ = run(capsys, ["bench", "--input", str(graph_file), "--models", "katz"])
        assert code == 1
