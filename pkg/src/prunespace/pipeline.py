"""End-to-end subnetwork search: dense baseline, screened population, winners.

The procedure has three phases. A dense network is trained from scratch and
checkpointed. A constrained population of pruning recipes is sampled; each
candidate is pruned from the dense weights, fine-tuned briefly, and logged.
The top-k candidates by screening drop are re-pruned from the same dense
checkpoint and retrained with the full schedule; the winner is the finalist
with the smallest full-schedule drop.

Every phase is a pure function of (config, master seed), so interrupted runs
resume idempotently from the trial log and reruns produce byte-identical
artifacts. Candidate screening can fan out across processes (capped by the
PRUNESPACE_WORKERS environment variable); results are appended in candidate
order, so parallel and serial runs emit identical logs. Wall-clock timings are
observations, not outputs: they go to a separate plain-text sidecar that is
excluded from all determinism guarantees.
"""
from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .analysis import TrialRecord, accuracy_drop, distribution_summary, edf, top_k_winners
from .arch import ArchitectureSpec, builtin_arch, builtin_names, load_arch
from .cost import network_cost
from .dataset import Batch, DatasetSpec, dataset_from_json
from .errors import SchemaError, TrainingDiverged, ValidationError
from .network import NetworkWeights, evaluate, init_weights
from .pruning import METHODS, one_shot_prune
from .runlog import (
    TrialLog,
    canonical_json,
    edf_csv,
    histogram_csv,
    load_checkpoint,
    save_checkpoint,
    summary_csv,
    trial_to_json,
    winners_csv,
)
from .sampling import SpaceSpec, derive_seed, recipe_std, sample_population, space_from_json
from .training import ScheduleSpec, finetune_schedule, schedule_from_json, scratch_schedule, train

log = logging.getLogger("prunespace")

WORKERS_ENV = "PRUNESPACE_WORKERS"

# master-seed tags, one namespace per phase
_TAG_DENSE_INIT = 1
_TAG_DENSE_TRAIN = 2
_TAG_SAMPLE = 3
_TAG_SCREEN = 4
_TAG_PRUNE = 5
_TAG_FULL = 6


def resolve_arch(name_or_path: str | Mapping) -> ArchitectureSpec:
    """Builtin architecture name, path to an architecture JSON file, or document."""
    if isinstance(name_or_path, Mapping):
        return load_arch(name_or_path)
    if name_or_path in builtin_names():
        return builtin_arch(name_or_path)
    path = Path(name_or_path)
    if path.exists():
        return load_arch(path.read_text())
    raise ValidationError(
        f"unknown architecture {name_or_path!r}: not a builtin "
        f"{builtin_names()} and not a file"
    )


@dataclass(frozen=True)
class PipelineConfig:
    """Complete, hashable description of one search run."""

    arch: str
    dataset: DatasetSpec
    space: SpaceSpec
    n: int
    top_k: int
    short_schedule: ScheduleSpec
    full_schedule: ScheduleSpec
    dense_schedule: ScheduleSpec
    seed: int = 0
    method: str = "l2"

    def __post_init__(self):
        if not (self.n >= self.top_k >= 1):
            raise ValidationError(
                f"need n >= top_k >= 1, got n={self.n}, top_k={self.top_k}"
            )
        if self.short_schedule.epochs > self.full_schedule.epochs:
            raise ValidationError(
                "screening epochs must not exceed full-retraining epochs "
                f"({self.short_schedule.epochs} > {self.full_schedule.epochs})"
            )
        if self.dense_schedule.kind != "scratch":
            raise ValidationError("the dense baseline is trained from scratch")
        if self.method not in METHODS:
            raise ValidationError(f"method must be one of {METHODS}, got {self.method!r}")

    def to_json(self) -> dict:
        return {
            "arch": self.arch,
            "dataset": self.dataset.to_json(),
            "space": self.space.to_json(),
            "n": self.n,
            "top_k": self.top_k,
            "short_schedule": self.short_schedule.to_json(),
            "full_schedule": self.full_schedule.to_json(),
            "dense_schedule": self.dense_schedule.to_json(),
            "seed": self.seed,
            "method": self.method,
        }


_CONFIG_FIELDS = {
    "arch", "dataset", "space", "n", "top_k",
    "short_schedule", "full_schedule", "dense_schedule", "seed", "method",
}
_CONFIG_REQUIRED = {"arch", "space", "n", "top_k", "short_schedule", "full_schedule"}


def pipeline_config_from_json(doc: Mapping) -> PipelineConfig:
    if not isinstance(doc, Mapping):
        raise SchemaError("pipeline config must be a JSON object")
    unknown = set(doc) - _CONFIG_FIELDS
    if unknown:
        raise SchemaError(f"unknown pipeline config fields: {sorted(unknown)}")
    missing = _CONFIG_REQUIRED - set(doc)
    if missing:
        raise SchemaError(f"pipeline config missing fields: {sorted(missing)}")
    full = schedule_from_json(doc["full_schedule"])
    dense = (
        schedule_from_json(doc["dense_schedule"])
        if "dense_schedule" in doc
        else scratch_schedule(full.epochs)
    )
    return PipelineConfig(
        arch=str(doc["arch"]),
        dataset=dataset_from_json(doc.get("dataset", {})),
        space=space_from_json(doc["space"]),
        n=int(doc["n"]),
        top_k=int(doc["top_k"]),
        short_schedule=schedule_from_json(doc["short_schedule"]),
        full_schedule=full,
        dense_schedule=dense,
        seed=int(doc.get("seed", 0)),
        method=str(doc.get("method", "l2")),
    )


def desk_preset(arch: str = "resnet-tiny", seed: int = 0) -> PipelineConfig:
    """Minutes-scale defaults: n=30 candidates, 2-epoch screening, top-3, 20-epoch retrain."""
    return PipelineConfig(
        arch=arch,
        dataset=DatasetSpec(),
        space=SpaceSpec(target_cflops=0.5, mcb_band=(1.0, 0.1)),
        n=30,
        top_k=3,
        short_schedule=finetune_schedule(2),
        full_schedule=finetune_schedule(20),
        dense_schedule=scratch_schedule(20, lr0=0.01),
        seed=seed,
    )


def full_preset(arch: str = "resnet-tiny", seed: int = 0) -> PipelineConfig:
    """Full-scale counts: n=300 candidates, 5-epoch screening, top-5, 100-epoch retrain."""
    return PipelineConfig(
        arch=arch,
        dataset=DatasetSpec(),
        space=SpaceSpec(target_cflops=0.5, mcb_band=(1.0, 0.1)),
        n=300,
        top_k=5,
        short_schedule=finetune_schedule(5),
        full_schedule=finetune_schedule(100),
        dense_schedule=scratch_schedule(100, lr0=0.01),
        seed=seed,
    )


# -- phases ---------------------------------------------------------------------


def train_dense_baseline(
    config: PipelineConfig, data: tuple[Batch, Batch] | None = None
) -> tuple[NetworkWeights, float]:
    """Scratch-train the unpruned network; its accuracy anchors every drop."""
    arch = resolve_arch(config.arch)
    if data is None:
        data = config.dataset.build()
    shell = init_weights(arch, derive_seed(config.seed, _TAG_DENSE_INIT))
    result = train(shell, arch, data, config.dense_schedule, derive_seed(config.seed, _TAG_DENSE_TRAIN))
    return result.weights, result.trace[-1]


def _screen_one(
    config: PipelineConfig,
    arch: ArchitectureSpec,
    data: tuple[Batch, Batch],
    dense_weights: NetworkWeights,
    dense_acc: float,
    index: int,
    ratios: Sequence[float],
) -> tuple[TrialRecord, float]:
    started = time.perf_counter()
    prune_seed = None
    if config.method == "random":
        prune_seed = derive_seed(derive_seed(config.seed, _TAG_PRUNE), index)
    pruned = one_shot_prune(
        dense_weights, arch, ratios, method=config.method, seed=prune_seed,
        ratio_max=config.space.ratio_max,
    )
    cost = network_cost(arch, pruned.plan)
    diverged = False
    try:
        result = train(
            pruned.weights, pruned.arch, data, config.short_schedule,
            derive_seed(derive_seed(config.seed, _TAG_SCREEN), index),
        )
        drop = accuracy_drop(dense_acc, result.trace[-1])
    except TrainingDiverged:
        drop = math.inf
        diverged = True
    record = TrialRecord(
        index=index,
        recipe=tuple(float(r) for r in ratios),
        arch=arch.name,
        cost=cost,
        recipe_std=recipe_std(ratios),
        accuracy_drop=drop,
        schedule_kind=config.short_schedule.kind,
        epochs=config.short_schedule.epochs,
        seed=config.seed,
        diverged=diverged,
    )
    return record, time.perf_counter() - started


_worker_state: dict = {}


def _init_screen_worker(config_doc: dict, dense_weights: NetworkWeights, dense_acc: float):
    config = pipeline_config_from_json(config_doc)
    _worker_state["config"] = config
    _worker_state["arch"] = resolve_arch(config.arch)
    _worker_state["data"] = config.dataset.build(dtype=dense_weights.dtype)
    _worker_state["dense"] = dense_weights
    _worker_state["dense_acc"] = dense_acc


def _screen_worker(task: tuple[int, tuple[float, ...]]) -> tuple[TrialRecord, float]:
    index, ratios = task
    s = _worker_state
    return _screen_one(s["config"], s["arch"], s["data"], s["dense"], s["dense_acc"], index, ratios)


def worker_count(pending: int) -> int:
    """Pool size: PRUNESPACE_WORKERS if set, else available parallelism."""
    raw = os.environ.get(WORKERS_ENV)
    if raw is not None:
        try:
            cap = int(raw)
        except ValueError:
            raise ValidationError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
        if cap < 1:
            raise ValidationError(f"{WORKERS_ENV} must be >= 1, got {cap}")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, pending))


def screen_candidates(
    config: PipelineConfig,
    dense_weights: NetworkWeights,
    data: tuple[Batch, Batch] | None = None,
    trial_log: TrialLog | None = None,
    timing_sink: Callable[[str], None] | None = None,
) -> list[TrialRecord]:
    """Prune, short-train, and log every sampled candidate, in index order.

    Resumes past any records already in the trial log, so an interrupted run
    picks up at the first missing index and converges to the same final set.
    """
    arch = resolve_arch(config.arch)
    if data is None:
        data = config.dataset.build(dtype=dense_weights.dtype)
    dense_acc = float(evaluate(dense_weights, arch, data[1]))
    recipes = sample_population(arch, config.space, config.n, derive_seed(config.seed, _TAG_SAMPLE))

    records: list[TrialRecord] = list(trial_log.records()) if trial_log is not None else []
    for position, rec in enumerate(records):
        if rec.index != position:
            raise ValidationError(
                f"trial log is not a contiguous prefix: position {position} holds index {rec.index}"
            )
    if len(records) > config.n:
        raise ValidationError(
            f"trial log already has {len(records)} records but the population is {config.n}"
        )
    pending = list(range(len(records), config.n))
    if not pending:
        return records

    def sink(record: TrialRecord, seconds: float) -> None:
        if trial_log is not None:
            trial_log.append(record)
        if timing_sink is not None:
            timing_sink(f"screen\t{record.index}\t{seconds:.3f}")
        records.append(record)

    workers = worker_count(len(pending))
    if workers == 1:
        for i in pending:
            sink(*_screen_one(config, arch, data, dense_weights, dense_acc, i, recipes[i].ratios))
    else:
        log.info("screening %d candidates across %d workers", len(pending), workers)
        tasks = [(i, tuple(recipes[i].ratios)) for i in pending]
        with ProcessPoolExecutor(
            max_workers=workers,
            initializer=_init_screen_worker,
            initargs=(config.to_json(), dense_weights, dense_acc),
        ) as pool:
            for record, seconds in pool.map(_screen_worker, tasks):
                sink(record, seconds)
    return records


@dataclass(frozen=True)
class PipelineResult:
    config: PipelineConfig
    dense_accuracy: float
    trials: tuple[TrialRecord, ...]
    finalists: tuple[TrialRecord, ...]
    winner: TrialRecord

    def to_json(self) -> dict:
        return {
            "config": self.config.to_json(),
            "dense_accuracy": self.dense_accuracy,
            "finalists": [trial_to_json(t) for t in self.finalists],
            "winner": trial_to_json(self.winner),
        }


def retrain_top_k(
    config: PipelineConfig,
    trials: Sequence[TrialRecord],
    dense_weights: NetworkWeights,
    data: tuple[Batch, Batch] | None = None,
    save_dir: str | Path | None = None,
    timing_sink: Callable[[str], None] | None = None,
) -> PipelineResult:
    """Re-prune the screened top-k from the dense checkpoint and fully retrain.

    Screening weights are deliberately discarded: finalists restart from the
    dense checkpoint so the two phases stay independent.
    """
    if len(trials) < config.top_k:
        raise ValidationError(f"need at least top_k={config.top_k} trials, got {len(trials)}")
    arch = resolve_arch(config.arch)
    if data is None:
        data = config.dataset.build(dtype=dense_weights.dtype)
    dense_acc = float(evaluate(dense_weights, arch, data[1]))
    shortlist = top_k_winners(trials, config.top_k)

    finalists: list[TrialRecord] = []
    for rank, candidate in enumerate(shortlist):
        started = time.perf_counter()
        prune_seed = None
        if config.method == "random":
            prune_seed = derive_seed(derive_seed(config.seed, _TAG_PRUNE), candidate.index)
        pruned = one_shot_prune(
            dense_weights, arch, candidate.recipe, method=config.method,
            seed=prune_seed, ratio_max=config.space.ratio_max,
        )
        diverged = False
        weights = None
        try:
            result = train(
                pruned.weights, pruned.arch, data, config.full_schedule,
                derive_seed(derive_seed(config.seed, _TAG_FULL), candidate.index),
            )
            drop = accuracy_drop(dense_acc, result.trace[-1])
            weights = result.weights
        except TrainingDiverged:
            drop = math.inf
            diverged = True
        record = TrialRecord(
            index=candidate.index,
            recipe=candidate.recipe,
            arch=arch.name,
            cost=candidate.cost,
            recipe_std=candidate.recipe_std,
            accuracy_drop=drop,
            schedule_kind=config.full_schedule.kind,
            epochs=config.full_schedule.epochs,
            seed=config.seed,
            diverged=diverged,
        )
        finalists.append(record)
        if timing_sink is not None:
            timing_sink(f"full\t{candidate.index}\t{time.perf_counter() - started:.3f}")
        if save_dir is not None and weights is not None:
            save_checkpoint(
                Path(save_dir) / f"finalist_{candidate.index}.ckpt",
                weights,
                meta={"index": candidate.index, "rank": rank, "drop": drop},
            )
        log.info(
            "finalist %d (screen rank %d): full-schedule drop %s",
            candidate.index, rank, "diverged" if diverged else f"{drop:.3f}",
        )
    winner = top_k_winners(finalists, 1)[0]
    return PipelineResult(
        config=config,
        dense_accuracy=dense_acc,
        trials=tuple(trials),
        finalists=tuple(finalists),
        winner=winner,
    )


def write_reports(out_dir: str | Path, trials: Sequence[TrialRecord], top_k: int) -> list[Path]:
    """Standard CSV bundle for a trial population; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    summary = distribution_summary(trials, "accuracy_drop")
    payload = {
        "edf.csv": edf_csv(edf(trials)),
        "drop_summary.csv": summary_csv(summary),
        "drop_histogram.csv": histogram_csv(summary),
        "winners.csv": winners_csv(top_k_winners(trials, min(top_k, len(trials)))),
    }
    for name, text in payload.items():
        path = out / name
        path.write_text(text)
        paths.append(path)
    return paths


def _claim_run_dir(out: Path, config_doc: Mapping) -> None:
    """Write config.json, refusing a directory already claimed by a different config."""
    rendered = canonical_json(config_doc) + "\n"
    path = out / "config.json"
    if path.exists() and path.read_text() != rendered:
        raise ValidationError(
            f"{out} already holds a run with a different config; "
            "use a fresh output directory, or delete this one to start over"
        )
    path.write_text(rendered)


def _dense_checkpoint(
    config: PipelineConfig,
    out: Path,
    data: tuple[Batch, Batch],
    timing_sink: Callable[[str], None],
) -> tuple[NetworkWeights, float]:
    arch = resolve_arch(config.arch)
    path = out / "dense.ckpt"
    if path.exists():
        weights, _ = load_checkpoint(path)
        if weights.arch_name != arch.name:
            raise ValidationError(
                f"{path} holds weights for {weights.arch_name!r}, config wants {arch.name!r}"
            )
        log.info("reusing dense baseline from %s", path)
        return weights, float(evaluate(weights, arch, data[1]))
    started = time.perf_counter()
    weights, dense_acc = train_dense_baseline(config, data)
    timing_sink(f"dense\t-\t{time.perf_counter() - started:.3f}")
    save_checkpoint(path, weights, meta={"val_accuracy": dense_acc})
    log.info("dense baseline: val accuracy %.4f", dense_acc)
    return weights, dense_acc


def explore_space(config: PipelineConfig, out_dir: str | Path) -> list[TrialRecord]:
    """Population screening without winner retraining: trial log plus report CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config_doc = config.to_json()
    _claim_run_dir(out, config_doc)
    timings: list[str] = []
    data = config.dataset.build()
    dense_weights, _ = _dense_checkpoint(config, out, data, timings.append)
    trial_log = TrialLog(out / "trials.jsonl", config=config_doc)
    trials = screen_candidates(config, dense_weights, data, trial_log, timings.append)
    write_reports(out, trials, config.top_k)
    with open(out / "timings.txt", "a") as f:
        f.writelines(line + "\n" for line in timings)
    return trials


def run_pipeline(config: PipelineConfig, out_dir: str | Path) -> PipelineResult:
    """All three phases; resumable; byte-identical artifacts on rerun."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config_doc = config.to_json()
    _claim_run_dir(out, config_doc)
    timings: list[str] = []
    data = config.dataset.build()

    dense_weights, dense_acc = _dense_checkpoint(config, out, data, timings.append)
    trial_log = TrialLog(out / "trials.jsonl", config=config_doc)
    trials = screen_candidates(config, dense_weights, data, trial_log, timings.append)
    write_reports(out, trials, config.top_k)
    result = retrain_top_k(config, trials, dense_weights, data, save_dir=out, timing_sink=timings.append)
    (out / "winners.json").write_text(
        canonical_json(
            {
                "dense_accuracy": result.dense_accuracy,
                "finalists": [trial_to_json(t) for t in result.finalists],
                "winner": trial_to_json(result.winner),
            }
        )
        + "\n"
    )
    with open(out / "timings.txt", "a") as f:
        f.writelines(line + "\n" for line in timings)
    log.info(
        "winner: candidate %d, drop %s",
        result.winner.index,
        "diverged" if result.winner.diverged else f"{result.winner.accuracy_drop:.3f}",
    )
    return result
