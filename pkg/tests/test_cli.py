import csv
import json

import pytest

from relmatch.cli import main, parse_grid


@pytest.fixture(scope="module")
def trained(small_corpus, tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "model.json").write_text(json.dumps({"d": 8, "k": 4, "seed": 1}))
    (d / "train.json").write_text(json.dumps({"steps": 6, "warmup_steps": 2, "batch_size": 8}))
    rc = main(["train", "--model", str(d / "model.json"), "--train", str(d / "train.json"),
               "--data", str(small_corpus), "--out", str(d / "ck.json"), "--log", str(d / "log.jsonl")])
    assert rc == 0
    return d


def test_gen_data(tmp_path):
    (tmp_path / "spec.json").write_text(json.dumps({"z": 3, "M": 4, "N": 3, "d_in": 8, "n_train": 5,
                                                    "n_val": 1, "n_test": 4}))
    assert main(["gen-data", "--spec", str(tmp_path / "spec.json"), "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "manifest.jsonl").exists()


def test_train_writes_log(trained):
    lines = (trained / "log.jsonl").read_text().splitlines()
    assert len(lines) == 6


@pytest.mark.parametrize("task,key", [("retrieval", "P@Sum"), ("zeroshot", "accuracy"), ("grounding", "score")])
def test_eval(trained, small_corpus, task, key):
    out = trained / f"{task}.json"
    assert main(["eval", task, "--ckpt", str(trained / "ck.json"), "--data", str(small_corpus),
                 "--json", str(out)]) == 0
    assert key in json.loads(out.read_text())


def test_export_attention(trained, small_corpus, tmp_path):
    assert main(["export-attention", "--ckpt", str(trained / "ck.json"), "--data", str(small_corpus),
                 "--pair", "test-00002", "--word", "0", "--srm-graph", "--irm-weights",
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "test-00002_w0_attention.pgm").exists()
    assert (tmp_path / "test-00002_w0_irm_weights.csv").exists()


def test_contract_errors_exit_nonzero(trained, small_corpus, tmp_path, capsys):
    assert main(["export-attention", "--ckpt", str(trained / "ck.json"), "--data", str(small_corpus),
                 "--pair", "missing", "--word", "0", "--out", str(tmp_path)]) != 0
    (tmp_path / "bad.json").write_text(json.dumps({"d": 10, "k": 4}))
    assert main(["train", "--model", str(tmp_path / "bad.json"), "--data", str(small_corpus),
                 "--out", str(tmp_path / "x.json")]) != 0
    assert "error" in capsys.readouterr().err


def test_grad_check_commands():
    assert main(["grad-check"]) == 0
    assert main(["grad-check", "--full"]) == 0
    assert main(["grad-check", "--full", "--seed", "24"]) == 1


def test_parse_grid():
    assert parse_grid("k=1,4,12") == {"k": [1, 4, 12]}
    assert parse_grid("srm,irm,k") == {"use_srm": [True, False], "use_irm": [True, False], "k": [1, 4, 12]}
    with pytest.raises(ValueError):
        parse_grid("bogus")


def test_ablate_csv(trained, small_corpus, tmp_path):
    out = tmp_path / "abl.csv"
    assert main(["ablate", "--grid", "k=1,2", "--data", str(small_corpus), "--model", str(trained / "model.json"),
                 "--train", str(trained / "train.json"), "--steps", "3", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert [r["k"] for r in rows] == ["1", "2"]
    assert all(r["steps"] == "3" for r in rows)
