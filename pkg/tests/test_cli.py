import csv
import json
import subprocess
import sys
import time
from pathlib import Path

import pytest

from citeforecast.cli import main
from citeforecast.training import save_checkpoint, stub_checkpoint


def cli(*args):
    proc = subprocess.run([sys.executable, "-m", "citeforecast", *map(str, args)], capture_output=True, text=True)
    return proc.returncode, proc.stdout, proc.stderr


def run_ok(*args):
    code, out, err = cli(*args)
    assert code == 0, err
    lines = out.strip().splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])


def test_pipeline_smoke(tmp_path):
    started = time.perf_counter()
    raw = tmp_path / "raw"
    made = run_ok("synth", "--n-papers", 20, "--seed", 0, "--out", raw)
    assert made["papers"] == 20
    data = tmp_path / "data"
    run_ok("ingest", raw / "nodes.jsonl", raw / "edges.jsonl", raw / "citations.jsonl", "--out", data)
    run_ok("ppr", data, "--out", tmp_path / "ppr")
    run = tmp_path / "run"
    trained = run_ok("train", data, "--out", run, "--epochs", 1, "--ppr-cache", tmp_path / "ppr")
    assert trained["epochs"] == 1 and Path(trained["best"]).exists()
    assert (run / "train_log.csv").exists() and (run / "last.pt").exists()
    pred = run_ok("predict", run / "best.pt", data, "--out", tmp_path / "pred.csv", "--ppr-cache", tmp_path / "ppr")
    with open(tmp_path / "pred.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["paper_id", "year_offset", "predicted_log_cumulative", "ground_truth_log_cumulative"]
    assert len(rows) == 5 * pred["papers"]
    report = run_ok("evaluate", run / "best.pt", data, "--out", tmp_path / "report.json")
    assert report["space"] == "log1p" and report["mae_overall"] >= 0
    elapsed = time.perf_counter() - started
    assert elapsed < 60, f"pipeline took {elapsed:.1f}s"

    for kind, src, extra in [
        ("curves", tmp_path / "pred.csv", []),
        ("report", tmp_path / "report.json", []),
        ("embeddings", run / "best.pt", ["--dataset", data]),
    ]:
        files = run_ok("plot", kind, src, "--out", tmp_path / "fig", *extra)["files"]
        assert all(Path(f).stat().st_size > 0 for f in files)


def test_ppr_is_deterministic(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["synth", "--n-papers", "30", "--out", str(data)]) == 0
    for name in ("a", "b"):
        assert main(["ppr", str(data), "--out", str(tmp_path / name), "--seed", "4"]) == 0
    a = sorted((tmp_path / "a").iterdir())
    b = sorted((tmp_path / "b").iterdir())
    assert [p.name for p in a] == [p.name for p in b] and a
    assert all(x.read_bytes() == y.read_bytes() for x, y in zip(a, b))


def test_evaluate_perfect_stub_gives_zeros(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["synth", "--n-papers", "30", "--out", str(data)]) == 0
    stub = save_checkpoint(stub_checkpoint("oracle"), tmp_path / "stub.pt")
    capsys.readouterr()
    assert main(["evaluate", str(stub), str(data), "--split", "val"]) == 0
    report = json.loads(capsys.readouterr().out)
    metrics = {k: v for k, v in report.items() if k.startswith(("mae_", "rmse_"))}
    assert len(metrics) == 12 and all(v == 0.0 for v in metrics.values())


@pytest.mark.parametrize(
    "argv,kind",
    [
        (["evaluate", "/nonexistent.pt", "/nowhere"], "FileNotFoundError"),
        (["synth", "--out", "x", "--set", "n_papers=0"], "ValueError"),
        (["synth", "--out", "x", "--set", "colour=blue"], "ValueError"),
        (["train"], "UsageError"),
        (["frobnicate"], "UsageError"),
    ],
)
def test_failures_emit_one_json_line(argv, kind, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code = main(argv)
    err = capsys.readouterr().err.strip().splitlines()
    assert code != 0
    assert len(err) == 1
    payload = json.loads(err[0])
    assert payload["error"] == kind and payload["message"]


def test_failure_exit_code_from_process():
    code, out, err = cli("predict", "/nonexistent.pt", "/nowhere", "--out", "/tmp/x.csv")
    assert code == 1 and out == ""
    assert json.loads(err.strip())["error"]


def test_config_file_and_repeats(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["synth", "--n-papers", "20", "--out", str(data)]) == 0
    conf = tmp_path / "small.yaml"
    conf.write_text("dim: 8\nencoder_heads: 2\nrnn_hidden: 8\nrnn_layers: 1\nimportance_heads: 2\nepochs: 1\n")
    capsys.readouterr()
    assert main(["train", str(data), "--out", str(tmp_path / "run"), "--config", str(conf), "--repeats", "2"]) == 0
    summary = json.loads((tmp_path / "run" / "repeats.json").read_text())
    assert summary["repeats"] == 2 and [r["seed"] for r in summary["runs"]] == [0, 1]
    assert set(summary["mean"]) == set(summary["std"])
