import json

import pytest

from geomcm.cli import main
from geomcm.datafile import read_dataset
from geomcm.gmrtree import audit_tree, load_tree


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    base = ["--data-dir", str(d)]
    assert main(base + ["synth", "--n", "300", "--classes", "4", "--d-text", "8", "--d-image", "12",
                        "--n-train", "400", "--seed", "1", "--out-dir", "s"]) == 0
    assert main(base + ["train", "--train-text", "s/train_text.tsv", "--train-image", "s/train_image.tsv",
                        "--gamma", "4", "--out", "m.json"]) == 0
    assert main(base + ["embed", "--model", "m.json", "--data", "s/index.tsv", "--out", "e.tsv"]) == 0
    assert main(base + ["build", "--data", "e.tsv", "--out", "i.npz", "--fanout", "8", "--ell", "16"]) == 0
    return d, base


def test_pipeline_artifacts(pipeline):
    d, _ = pipeline
    ds = read_dataset(d / "e.tsv")
    assert len(ds) == 300 and all(o.semantic is not None for o in ds)
    tree = load_tree(d / "i.npz")
    assert len(tree) == 300 and audit_tree(tree) == []


@pytest.mark.parametrize("mode", ["kgmcms", "exact", "postfilter"])
def test_query_json(pipeline, capsys, mode):
    _, base = pipeline
    capsys.readouterr()
    rc = main(base + ["query", "--index", "i.npz", "--model", "m.json", "--vocab", "s/corpus.json",
                      "--x", "50", "--y", "50", "--text", "river river", "--k", "5", "--mode", mode, "--json"])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    scores = [r["score"] for r in out["results"]]
    assert scores == sorted(scores, reverse=True)
    assert len(scores) == 5 or out["stats"]["truncated"]


def test_query_table_output(pipeline, capsys):
    _, base = pipeline
    capsys.readouterr()
    assert main(base + ["query", "--x", "1", "--y", "1", "--feature", ",".join(["0.5"] * 8), "--index", "i.npz",
                        "--model", "m.json", "--mode", "exact", "--k", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split()[:2] == ["rank", "id"] and len(lines) == 5


def test_ingest_summary(pipeline, capsys):
    _, base = pipeline
    capsys.readouterr()
    assert main(base + ["ingest", "e.tsv"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["objects"] == 300 and summary["embedded"] and summary["classes"] == 4


def test_errors_return_nonzero(pipeline, capsys):
    d, base = pipeline
    (d / "bad.tsv").write_text("#geomcm-dataset v1\n1\t0\n")
    assert main(base + ["ingest", "bad.tsv"]) == 1
    assert "line 2" in capsys.readouterr().err
    assert main(base + ["ingest", "missing.tsv"]) == 1
    assert main(base + ["query", "--x", "0", "--y", "0", "--text", "zzz", "--vocab", "s/corpus.json",
                        "--index", "i.npz", "--model", "m.json"]) == 1


def test_bench_smoke(tmp_path, capsys):
    rc = main(["--data-dir", str(tmp_path), "bench", "--sizes", "400", "--k", "5", "--queries", "5",
               "--classes", "4", "--d-text", "8", "--d-image", "12", "--gamma", "4", "--json", "b.json"])
    assert rc == 0
    assert "linear-scan" in capsys.readouterr().out
    rows = json.loads((tmp_path / "b.json").read_text())["rows"]
    assert {r["method"] for r in rows} == {"gmrtree-kgmcms", "gmrtree-exact", "rtree-postfilter", "linear-scan"}
