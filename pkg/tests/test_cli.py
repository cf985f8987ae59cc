import json

import numpy as np
import pytest

from prunespace import (
    CostReport,
    DatasetSpec,
    PipelineConfig,
    SpaceSpec,
    TrialLog,
    TrialRecord,
    finetune_schedule,
    load_arch,
    load_checkpoint,
    pipeline_config_from_json,
    scratch_schedule,
)
from prunespace.cli import main


def _run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out


def test_usage_errors_exit_2(capsys):
    assert main([]) == 2
    assert main(["unknown-command"]) == 2
    assert main(["arch"]) == 2  # --arch is required
    assert main(["report", "edf"]) == 2  # --trials is required
    assert main(["explore", "--preset", "bogus", "--out-dir", "x"]) == 2
    capsys.readouterr()


def test_arch_summary(capsys):
    code, out = _run(capsys, "arch", "--arch", "chain3")
    assert code == 0
    doc = json.loads(out)
    assert doc["name"] == "chain3"
    assert doc["layers"] == 3
    assert doc["flops"] == 20796 and doc["params"] == 404
    assert [u["c_out"] for u in doc["prunable_units"]] == [4, 6]
    assert main(["arch", "--arch", "not-a-thing"]) == 3
    capsys.readouterr()


def test_arch_dump_round_trips(capsys):
    code, out = _run(capsys, "arch", "--arch", "resnet-tiny", "--dump")
    assert code == 0
    arch = load_arch(out)
    assert arch.name == "resnet-tiny"
    assert len(arch.layers) == 11


def test_cost_uniform_and_recipe(tmp_path, capsys):
    code, out = _run(capsys, "cost", "--arch", "chain3", "--uniform", "0.5")
    assert code == 0
    doc = json.loads(out)
    assert doc["flops"] == 6942
    assert doc["c_flops"] == pytest.approx(0.333814, abs=1e-6)

    recipe = tmp_path / "r.json"
    recipe.write_text(json.dumps({"arch": "chain3", "ratios": [0.5, 0.5]}))
    code, out = _run(capsys, "cost", "--arch", "chain3", "--recipe", str(recipe))
    assert code == 0
    assert json.loads(out)["flops"] == 6942

    assert main(["cost", "--arch", "chain3", "--recipe", str(recipe), "--uniform", "0.5"]) == 3
    wrong = tmp_path / "wrong.json"
    wrong.write_text(json.dumps({"arch": "resnet-tiny", "ratios": [0.5] * 6}))
    assert main(["cost", "--arch", "chain3", "--recipe", str(wrong)]) == 3
    capsys.readouterr()


def test_sample_deterministic_jsonl(tmp_path, capsys):
    space = tmp_path / "space.json"
    space.write_text(json.dumps({"target_cflops": 0.5, "delta": 0.01}))
    args = ("sample", "--arch", "resnet-tiny", "--space", str(space), "--n", "3", "--seed", "5")
    code, first = _run(capsys, *args)
    assert code == 0
    lines = first.strip().split("\n")
    assert len(lines) == 3
    for line in lines:
        doc = json.loads(line)
        assert doc["arch"] == "resnet-tiny" and len(doc["ratios"]) == 6
    code, second = _run(capsys, *args)
    assert code == 0 and second == first

    out_file = tmp_path / "recipes.jsonl"
    code, _ = _run(capsys, *args, "--out", str(out_file))
    assert code == 0
    assert out_file.read_text() == first


def test_sample_infeasible_exits_4(tmp_path, capsys):
    space = tmp_path / "space.json"
    space.write_text(json.dumps({"target_cflops": 0.30, "delta": 0.0001, "std_cap": 0.0}))
    code = main([
        "sample", "--arch", "chain3", "--space", str(space),
        "--n", "1", "--max-attempts", "10",
    ])
    assert code == 4
    capsys.readouterr()


def test_train_prune_train_round_trip(tmp_path, capsys):
    ds = tmp_path / "ds.json"
    ds.write_text(json.dumps({"per_class": 10, "shape": [3, 8, 8]}))
    dense_ckpt = tmp_path / "dense.ckpt"
    code, out = _run(
        capsys, "train", "--arch", "chain3", "--kind", "scratch", "--epochs", "2",
        "--dataset", str(ds), "--out-checkpoint", str(dense_ckpt),
    )
    assert code == 0
    doc = json.loads(out)
    assert 0.0 <= doc["val_accuracy"] <= 1.0
    assert len(doc["trace"]) == 2
    assert dense_ckpt.exists()

    recipe = tmp_path / "r.json"
    recipe.write_text(json.dumps({"arch": "chain3", "ratios": [0.5, 0.5]}))
    pruned_ckpt = tmp_path / "pruned.ckpt"
    code, out = _run(
        capsys, "prune", "--arch", "chain3", "--checkpoint", str(dense_ckpt),
        "--recipe", str(recipe), "--out-checkpoint", str(pruned_ckpt),
    )
    assert code == 0
    assert json.loads(out)["flops"] == 6942
    weights, meta = load_checkpoint(pruned_ckpt)
    assert meta["method"] == "l2"
    assert weights.tensors[0]["w"].shape == (3, 2, 3, 3)

    # the pruned checkpoint carries its own (reduced) architecture
    code, out = _run(
        capsys, "train", "--checkpoint", str(pruned_ckpt), "--kind", "finetune",
        "--epochs", "1", "--dataset", str(ds),
    )
    assert code == 0
    assert len(json.loads(out)["trace"]) == 1


def test_train_requires_a_network(capsys):
    assert main(["train", "--kind", "scratch", "--epochs", "1"]) == 3
    capsys.readouterr()


def test_train_divergence_exits_5(tmp_path, capsys):
    ds = tmp_path / "ds.json"
    ds.write_text(json.dumps({"per_class": 10}))
    sched = tmp_path / "sched.json"
    sched.write_text(json.dumps({"kind": "scratch", "epochs": 1, "lr0": 50.0}))
    code = main([
        "train", "--arch", "resnet-tiny", "--schedule", str(sched), "--dataset", str(ds),
    ])
    assert code == 5
    capsys.readouterr()


def _write_trials(path, drops, label_seed=0):
    config = {"purpose": "report-test", "seed": label_seed}
    log = TrialLog(path, config)
    for i, drop in enumerate(drops):
        log.append(
            TrialRecord(
                index=i,
                recipe=(0.4, 0.6),
                arch="chain3",
                cost=CostReport(6942, 153, 6942 / 20796, 153 / 404, (6942 / 20796) / (153 / 404)),
                recipe_std=0.1,
                accuracy_drop=float(drop),
                schedule_kind="finetune",
                epochs=2,
                seed=label_seed,
            )
        )
    return path


def test_report_kinds(tmp_path, capsys):
    trials = _write_trials(tmp_path / "t.jsonl", [1.0, 0.5, 2.0, 1.5])
    code, out = _run(capsys, "report", "edf", "--trials", str(trials))
    assert code == 0
    assert out.startswith("accuracy_drop,fraction_below")
    assert len(out.strip().split("\n")) == 5

    code, out = _run(capsys, "report", "summary", "--trials", str(trials))
    assert code == 0 and out.startswith("stat,value\nn,4")

    code, out = _run(capsys, "report", "histogram", "--trials", str(trials), "--bins", "3")
    assert code == 0 and len(out.strip().split("\n")) == 4

    code, out = _run(capsys, "report", "winners", "--trials", str(trials), "--k", "2")
    assert code == 0
    rows = out.strip().split("\n")
    assert len(rows) == 3
    assert rows[1].split(",")[1] == "1"  # smallest drop first

    code, out = _run(capsys, "report", "summary", "--trials", str(trials), "--field", "mcb")
    assert code == 0
    assert main(["report", "summary", "--trials", str(trials), "--field", "loss"]) == 3
    capsys.readouterr()


def test_report_compare(tmp_path, capsys):
    a = _write_trials(tmp_path / "a.jsonl", [0.5, 1.0, 0.8])
    b = _write_trials(tmp_path / "b.jsonl", [2.0, 2.5, 1.8], label_seed=1)
    code, out = _run(
        capsys, "report", "compare", "--trials", f"tight={a}", "--trials", f"loose={b}",
    )
    assert code == 0
    assert out.startswith("space_a,space_b,quantile")
    assert "tight,loose" in out and "loose,tight" in out

    # labels default to file stems
    code, out = _run(capsys, "report", "compare", "--trials", str(a), "--trials", str(b))
    assert code == 0 and "a,b," in out

    assert main(["report", "compare", "--trials", f"x={a}", "--trials", f"x={b}"]) == 3
    assert main(["report", "compare", "--trials", str(a)]) == 3
    assert main(["report", "edf", "--trials", str(a), "--trials", str(b)]) == 3
    capsys.readouterr()


def _mini_config_doc():
    return PipelineConfig(
        arch="resnet-tiny",
        dataset=DatasetSpec(seed=0, per_class=10),
        space=SpaceSpec(target_cflops=0.5, delta=0.01),
        n=3,
        top_k=1,
        short_schedule=finetune_schedule(1),
        full_schedule=finetune_schedule(2),
        dense_schedule=scratch_schedule(2, lr0=0.01),
    ).to_json()


def test_explore_cli(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("PRUNESPACE_WORKERS", "1")
    config = tmp_path / "config.json"
    config.write_text(json.dumps(_mini_config_doc()))
    out_dir = tmp_path / "run"
    code, out = _run(capsys, "explore", "--config", str(config), "--out-dir", str(out_dir))
    assert code == 0
    doc = json.loads(out)
    assert doc["trials"] == 3
    assert doc["out"] == str(out_dir)
    assert (out_dir / "trials.jsonl").exists()
    assert (out_dir / "edf.csv").exists()
    assert main(["explore", "--out-dir", str(out_dir)]) == 3  # neither config nor preset
    capsys.readouterr()


def test_pipeline_cli_with_seed_override(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("PRUNESPACE_WORKERS", "1")
    config = tmp_path / "config.json"
    config.write_text(json.dumps(_mini_config_doc()))
    out_dir = tmp_path / "run"
    summary = tmp_path / "summary.json"
    code, _ = _run(
        capsys, "pipeline", "--config", str(config), "--out-dir", str(out_dir),
        "--seed", "2", "--out", str(summary),
    )
    assert code == 0
    doc = json.loads(summary.read_text())
    assert set(doc) == {"dense_accuracy", "winner", "out"}
    assert (out_dir / "winners.json").exists()
    stored = json.loads((out_dir / "config.json").read_text())
    assert pipeline_config_from_json(stored).seed == 2
