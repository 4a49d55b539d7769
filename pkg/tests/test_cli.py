import csv
import json

import numpy as np
import pytest

from gnnspace.cli import main
from gnnspace.evaluator import read_rank_csv
from gnnspace.experiment import AGGREGATE_COLUMNS, read_aggregate_csv
from gnnspace.space import condensed_space
from gnnspace.taskspace import SimilarityMatrix, read_anchors


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_enumerate_counts(capsys):
    assert run_cli(capsys, "enumerate", "--space", "full", "--count-only")[1].split() == ["314928"]
    assert run_cli(capsys, "enumerate", "--space", "condensed", "--count-only", "--tasks", "32")[1].split() == \
        ["96", "3072"]
    code, out, _ = run_cli(capsys, "enumerate", "--space", "condensed", "--limit", "5")
    assert code == 0 and len(out.split()) == 5


def test_sample_is_deterministic(capsys):
    a = run_cli(capsys, "sample", "--n", "4", "--seed", "3")[1]
    b = run_cli(capsys, "sample", "--n", "4", "--seed", "3")[1]
    assert a == b and len(a.split()) == 4


def test_usage_errors_exit_2(capsys):
    for argv in (["bogus"], ["enumerate", "--no-such-flag"], ["crs"]):
        with pytest.raises(SystemExit) as info:
            main(argv)
        assert info.value.code == 2
    capsys.readouterr()


def test_domain_errors_exit_1_with_json(capsys, tmp_path):
    code, _, err = run_cli(capsys, "run", "--config", str(tmp_path / "missing.json"),
                           "--registry", str(tmp_path / "r.jsonl"))
    assert code == 1
    assert json.loads(err)["error"] == "ConfigError"


def test_help_prints_defaults(capsys):
    with pytest.raises(SystemExit):
        main(["crs", "--help"])
    out = capsys.readouterr().out
    assert "--S" in out and "(default: 96)" in out and "(default: 0.02)" in out


def test_crs_smoke_on_toy_tasks(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "crs", "--dimension", "bn", "--S", "4", "--epsilon", "0.02",
                           "--epochs", "2", "--reference-hidden", "8", "--out", str(tmp_path))
    assert code == 0
    assert {line.split("\t")[0] for line in out.strip().splitlines()} == {"bn=True", "bn=False"}
    rows = read_rank_csv(tmp_path / "crs_bn.csv")
    assert {r["choice"] for r in rows} == {"True", "False"}
    assert all(sum(r["histogram"]) == 4 for r in rows)
    code, out, _ = run_cli(capsys, "anova", "--crs", str(tmp_path / "crs_bn.json"), "--ranks")
    assert code in (0, 1)


def test_crs_on_attention_dimension(capsys, tmp_path):
    desc = condensed_space().with_dimension("attention", ["none", "additive", "multiplicative"])
    (tmp_path / "space.json").write_text(desc.to_json())
    code, out, _ = run_cli(capsys, "crs", "--dimension", "attention", "--S", "2", "--epochs", "1",
                           "--reference-hidden", "8", "--space-file", str(tmp_path / "space.json"),
                           "--out", str(tmp_path))
    assert code == 0
    assert len(out.strip().splitlines()) == 3


def test_anchors_on_96_designs(capsys, tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "agg.csv"
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=AGGREGATE_COLUMNS)
        w.writeheader()
        for d in condensed_space():
            for t in ("task-a", "task-b", "task-c"):
                w.writerow({"task": t, "design": d.id, "mean_value": repr(float(rng.random())),
                            "n_seeds": 3, "params": 100})
    code, out, _ = run_cli(capsys, "anchors", "--perf", str(path), "--M", "12", "--out", str(tmp_path / "a.json"))
    assert code == 0 and len(out.split()) == 12
    assert read_anchors(tmp_path / "a.json") == out.split()
    code, _, _ = run_cli(capsys, "simmatrix", "--perf", str(path), "--anchors", str(tmp_path / "a.json"),
                         "--out", str(tmp_path / "s.csv"))
    sim = SimilarityMatrix.from_csv(tmp_path / "s.csv")
    assert code == 0 and sim.tasks == ["task-a", "task-b", "task-c"]
    code, out, _ = run_cli(capsys, "transfer", "--perf", str(path), "--sim", str(tmp_path / "s.csv"),
                           "--out", str(tmp_path / "t.csv"))
    assert code == 0 and out.startswith("pearson=")
    assert SimilarityMatrix.from_csv(tmp_path / "t.csv").values.shape == (3, 3)


def test_configs_launch_report_pipeline(capsys, tmp_path):
    cfgs, reg, agg = tmp_path / "c.json", tmp_path / "r.jsonl", tmp_path / "agg.csv"
    assert run_cli(capsys, "configs", "--space", "condensed", "--D", "2", "--epochs", "1",
                   "--reference-hidden", "8", "--out", str(cfgs))[0] == 0
    assert len(json.loads(cfgs.read_text())) == 12
    code, out, _ = run_cli(capsys, "launch", "--configs", str(cfgs), "--registry", str(reg), "--workers", "2")
    assert code == 0 and json.loads(out)["completed"] == 12
    assert run_cli(capsys, "report", "--registry", str(reg), "--out", str(agg))[0] == 0
    rows = read_aggregate_csv(agg)
    assert len(rows) == 12 and all(r["n_seeds"] == 3 for r in rows)
    # single config through `run` is a no-op once recorded
    (tmp_path / "one.json").write_text(json.dumps(json.loads(cfgs.read_text())[0]))
    code, out, _ = run_cli(capsys, "run", "--config", str(tmp_path / "one.json"), "--registry", str(reg))
    assert code == 0 and out.startswith("0 new records")


def test_gen_tasks_writes_loadable_suite(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "gen-tasks", "--out", str(tmp_path), "--grid", "2", "--per-bin", "1")
    assert code == 0 and "20 tasks" in out
    index = json.loads((tmp_path / "index.json").read_text())["tasks"]
    assert len(index) == 20
    from gnnspace.experiment import resolve_task
    task = resolve_task(index[0], str(tmp_path))
    assert task.id == index[0]
