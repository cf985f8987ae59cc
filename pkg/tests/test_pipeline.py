import json
import math

import numpy as np
import pytest

from prunespace import (
    DatasetSpec,
    PipelineConfig,
    SchemaError,
    SpaceSpec,
    TrialLog,
    ValidationError,
    arch_to_json,
    builtin_arch,
    desk_preset,
    derive_seed,
    explore_space,
    finetune_schedule,
    network_cost,
    full_preset,
    pipeline_config_from_json,
    resolve_arch,
    resolve_plan,
    retrain_top_k,
    run_pipeline,
    sample_population,
    screen_candidates,
    scratch_schedule,
    train_dense_baseline,
)
from prunespace.pipeline import worker_count


def _mini_config(seed=0, n=4, top_k=2, method="l2"):
    return PipelineConfig(
        arch="resnet-tiny",
        dataset=DatasetSpec(seed=0, per_class=10),
        space=SpaceSpec(target_cflops=0.5, delta=0.01),
        n=n,
        top_k=top_k,
        short_schedule=finetune_schedule(1),
        full_schedule=finetune_schedule(2),
        dense_schedule=scratch_schedule(2, lr0=0.01),
        seed=seed,
        method=method,
    )


def test_config_validation():
    with pytest.raises(ValidationError):
        _mini_config(n=1, top_k=2)
    with pytest.raises(ValidationError):
        PipelineConfig(
            arch="resnet-tiny", dataset=DatasetSpec(), space=SpaceSpec(target_cflops=0.5),
            n=4, top_k=1, short_schedule=finetune_schedule(5),
            full_schedule=finetune_schedule(2), dense_schedule=scratch_schedule(2),
        )
    with pytest.raises(ValidationError):
        PipelineConfig(
            arch="resnet-tiny", dataset=DatasetSpec(), space=SpaceSpec(target_cflops=0.5),
            n=4, top_k=1, short_schedule=finetune_schedule(1),
            full_schedule=finetune_schedule(2), dense_schedule=finetune_schedule(2),
        )
    with pytest.raises(ValidationError):
        _mini_config(method="largest")


def test_config_json_round_trip():
    config = _mini_config(seed=7)
    doc = json.loads(json.dumps(config.to_json()))
    assert pipeline_config_from_json(doc) == config


def test_config_json_defaults():
    doc = {
        "arch": "resnet-tiny",
        "space": {"target_cflops": 0.5},
        "n": 4,
        "top_k": 2,
        "short_schedule": {"kind": "finetune", "epochs": 1},
        "full_schedule": {"kind": "finetune", "epochs": 3},
    }
    config = pipeline_config_from_json(doc)
    assert config.dataset == DatasetSpec()
    assert config.dense_schedule == scratch_schedule(3)
    assert config.seed == 0 and config.method == "l2"
    with pytest.raises(SchemaError):
        pipeline_config_from_json({**doc, "bogus": 1})
    with pytest.raises(SchemaError):
        pipeline_config_from_json({k: v for k, v in doc.items() if k != "space"})


def test_presets():
    desk = desk_preset()
    assert (desk.n, desk.top_k) == (30, 3)
    assert desk.short_schedule.epochs == 2 and desk.full_schedule.epochs == 20
    assert desk.dense_schedule.kind == "scratch" and desk.dense_schedule.lr0 == 0.01
    assert desk.space.target_cflops == 0.5 and desk.space.mcb_band == (1.0, 0.1)
    full = full_preset(seed=3)
    assert (full.n, full.top_k) == (300, 5)
    assert full.short_schedule.epochs == 5 and full.full_schedule.epochs == 100
    assert full.arch == "resnet-tiny" and full.seed == 3


def test_resolve_arch_sources(tmp_path):
    assert resolve_arch("chain3").name == "chain3"
    doc = arch_to_json(builtin_arch("chain3"))
    assert resolve_arch(doc).name == "chain3"
    path = tmp_path / "my_arch.json"
    path.write_text(json.dumps(doc))
    assert resolve_arch(str(path)).name == "chain3"
    with pytest.raises(ValidationError):
        resolve_arch("not-an-arch-or-file")


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("PRUNESPACE_WORKERS", "3")
    assert worker_count(10) == 3
    assert worker_count(2) == 2
    monkeypatch.setenv("PRUNESPACE_WORKERS", "zero")
    with pytest.raises(ValidationError):
        worker_count(4)
    monkeypatch.setenv("PRUNESPACE_WORKERS", "0")
    with pytest.raises(ValidationError):
        worker_count(4)
    monkeypatch.delenv("PRUNESPACE_WORKERS")
    assert worker_count(1) == 1
    assert worker_count(10_000) >= 1


def test_dense_baseline_deterministic():
    config = _mini_config()
    a_weights, a_acc = train_dense_baseline(config)
    b_weights, b_acc = train_dense_baseline(config)
    assert a_acc == b_acc
    for (lid, role, ta), (_, _, tb) in zip(a_weights.items(), b_weights.items()):
        assert np.array_equal(ta, tb), (lid, role)


def test_screen_candidates_order_and_content(monkeypatch):
    monkeypatch.setenv("PRUNESPACE_WORKERS", "1")
    config = _mini_config()
    dense, _ = train_dense_baseline(config)
    records = screen_candidates(config, dense)
    assert [r.index for r in records] == list(range(config.n))
    arch = resolve_arch(config.arch)
    recipes = sample_population(arch, config.space, config.n, derive_seed(config.seed, 3))
    for rec, recipe in zip(records, recipes):
        assert rec.recipe == recipe.ratios
        want = network_cost(arch, resolve_plan(arch, rec.recipe))
        assert rec.cost == want
        assert rec.schedule_kind == "finetune" and rec.epochs == 1
        assert rec.seed == config.seed


def test_screen_resume_from_partial_log(tmp_path, monkeypatch):
    monkeypatch.setenv("PRUNESPACE_WORKERS", "1")
    config = _mini_config()
    dense, _ = train_dense_baseline(config)
    data = config.dataset.build()

    full_path = tmp_path / "full.jsonl"
    full_log = TrialLog(full_path, config.to_json())
    screen_candidates(config, dense, data, full_log)

    # keep the header and first two records, then resume
    lines = full_path.read_text().splitlines()
    part_path = tmp_path / "part.jsonl"
    part_path.write_text("\n".join(lines[:3]) + "\n")
    part_log = TrialLog(part_path, config.to_json())
    resumed = screen_candidates(config, dense, data, part_log)
    assert part_path.read_bytes() == full_path.read_bytes()
    assert [r.index for r in resumed] == list(range(config.n))

    # a complete log short-circuits to the stored records
    again = screen_candidates(config, dense, data, TrialLog(full_path, config.to_json()))
    assert again == resumed
    assert full_path.read_bytes() == part_path.read_bytes()


def test_screen_rejects_gapped_log(tmp_path, monkeypatch):
    monkeypatch.setenv("PRUNESPACE_WORKERS", "1")
    config = _mini_config(n=4)
    dense, _ = train_dense_baseline(config)
    data = config.dataset.build()
    log_path = tmp_path / "gap.jsonl"
    gap_log = TrialLog(log_path, config.to_json())
    full_log = TrialLog(tmp_path / "full.jsonl", config.to_json())
    records = screen_candidates(config, dense, data, full_log)
    gap_log.append(records[0])
    gap_log.append(records[2])
    with pytest.raises(ValidationError):
        screen_candidates(config, dense, data, TrialLog(log_path, config.to_json()))
    small = _mini_config(n=2, top_k=1)
    with pytest.raises(ValidationError):
        screen_candidates(small, dense, data, TrialLog(tmp_path / "full.jsonl", small.to_json()))


def test_parallel_matches_serial(tmp_path, monkeypatch):
    config = _mini_config()
    dense, _ = train_dense_baseline(config)
    data = config.dataset.build()
    monkeypatch.setenv("PRUNESPACE_WORKERS", "1")
    serial_log = TrialLog(tmp_path / "serial.jsonl", config.to_json())
    serial = screen_candidates(config, dense, data, serial_log)
    monkeypatch.setenv("PRUNESPACE_WORKERS", "2")
    parallel_log = TrialLog(tmp_path / "parallel.jsonl", config.to_json())
    parallel = screen_candidates(config, dense, data, parallel_log)
    assert serial == parallel
    assert (tmp_path / "serial.jsonl").read_bytes() == (tmp_path / "parallel.jsonl").read_bytes()


def test_retrain_top_k(tmp_path, monkeypatch):
    monkeypatch.setenv("PRUNESPACE_WORKERS", "1")
    config = _mini_config()
    dense, _ = train_dense_baseline(config)
    data = config.dataset.build()
    trials = screen_candidates(config, dense, data)
    result = retrain_top_k(config, trials, dense, data, save_dir=tmp_path)
    assert len(result.finalists) == config.top_k
    for f in result.finalists:
        assert f.schedule_kind == "finetune" and f.epochs == 2
        source = trials[f.index]
        assert f.recipe == source.recipe and f.cost == source.cost
        assert (tmp_path / f"finalist_{f.index}.ckpt").exists()
    best = min(result.finalists, key=lambda t: (t.accuracy_drop, t.cost.c_flops, t.seed))
    assert result.winner == best
    doc = result.to_json()
    assert set(doc) == {"config", "dense_accuracy", "finalists", "winner"}
    with pytest.raises(ValidationError):
        retrain_top_k(config, trials[:1], dense, data)


def test_explore_space_artifacts(tmp_path, monkeypatch):
    monkeypatch.setenv("PRUNESPACE_WORKERS", "1")
    config = _mini_config()
    trials = explore_space(config, tmp_path / "a")
    assert len(trials) == config.n
    for name in (
        "config.json", "dense.ckpt", "trials.jsonl", "edf.csv",
        "drop_summary.csv", "drop_histogram.csv", "winners.csv", "timings.txt",
    ):
        assert (tmp_path / "a" / name).exists(), name
    stored = json.loads((tmp_path / "a" / "config.json").read_text())
    assert pipeline_config_from_json(stored) == config

    # byte-identical rerun in a fresh directory
    explore_space(config, tmp_path / "b")
    for name in ("config.json", "trials.jsonl", "edf.csv", "winners.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name

    # rerun in place reuses the dense checkpoint and rewrites identical content
    before = (tmp_path / "a" / "trials.jsonl").read_bytes()
    explore_space(config, tmp_path / "a")
    assert (tmp_path / "a" / "trials.jsonl").read_bytes() == before


def test_explore_space_refuses_foreign_run_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("PRUNESPACE_WORKERS", "1")
    explore_space(_mini_config(seed=0), tmp_path)
    before = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    with pytest.raises(ValidationError, match="different config"):
        explore_space(_mini_config(seed=1), tmp_path)
    after = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    assert after == before


def test_run_pipeline_artifacts(tmp_path, monkeypatch):
    monkeypatch.setenv("PRUNESPACE_WORKERS", "1")
    config = _mini_config()
    result = run_pipeline(config, tmp_path / "run")
    assert (tmp_path / "run" / "winners.json").exists()
    doc = json.loads((tmp_path / "run" / "winners.json").read_text())
    assert doc["dense_accuracy"] == result.dense_accuracy
    assert doc["winner"]["index"] == result.winner.index
    assert len(doc["finalists"]) == config.top_k
    for f in result.finalists:
        if not f.diverged:
            assert (tmp_path / "run" / f"finalist_{f.index}.ckpt").exists()
    # winner comes from the full-schedule finalists
    assert result.winner.epochs == config.full_schedule.epochs

    run_pipeline(config, tmp_path / "rerun")
    assert (tmp_path / "run" / "winners.json").read_bytes() == (
        tmp_path / "rerun" / "winners.json"
    ).read_bytes()


def test_screen_divergence_is_flagged(monkeypatch):
    monkeypatch.setenv("PRUNESPACE_WORKERS", "1")
    config = PipelineConfig(
        arch="resnet-tiny",
        dataset=DatasetSpec(seed=0, per_class=10),
        space=SpaceSpec(target_cflops=0.5, delta=0.01),
        n=2,
        top_k=1,
        short_schedule=finetune_schedule(1, lr0=50.0),
        full_schedule=finetune_schedule(2, lr0=50.0),
        dense_schedule=scratch_schedule(2, lr0=0.01),
    )
    dense, _ = train_dense_baseline(config)
    records = screen_candidates(config, dense)
    assert all(r.diverged for r in records)
    assert all(math.isinf(r.accuracy_drop) for r in records)
