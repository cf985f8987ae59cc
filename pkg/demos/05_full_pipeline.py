"""The whole loop in one call: sample, screen, shortlist, retrain, report.

Runs a trimmed pipeline into runs/pipeline and then proves two properties
worth trusting: the artifact set is complete, and rerunning the exact same
configuration into a fresh directory reproduces every data file byte for
byte. The second run also demonstrates resume: the existing trial log is
validated and reused instead of recomputed.
"""

import time
from pathlib import Path

from prunespace import DatasetSpec, SpaceSpec, finetune_schedule, scratch_schedule
from prunespace.pipeline import PipelineConfig, run_pipeline

OUT = Path("runs") / "pipeline"

CONFIG = PipelineConfig(
    arch="resnet-tiny",
    dataset=DatasetSpec(),
    space=SpaceSpec(target_cflops=0.5, mcb_band=(1.0, 0.1)),
    n=12,
    top_k=2,
    short_schedule=finetune_schedule(2),
    full_schedule=finetune_schedule(10),
    dense_schedule=scratch_schedule(15, lr0=0.01),
    seed=0,
)


def main():
    t0 = time.perf_counter()
    result = run_pipeline(CONFIG, OUT)
    print(f"pipeline finished in {time.perf_counter() - t0:.0f}s")
    print(f"dense accuracy {result.dense_accuracy:.1%}, "
          f"{len(result.trials)} screened, {len(result.finalists)} retrained in full")
    w = result.winner
    print(f"winner: trial {w.index}, drop {w.accuracy_drop:.2f} points at "
          f"c_flops {w.cost.c_flops:.3f} (mcb {w.cost.mcb:.3f})\n")

    print("artifacts:")
    for path in sorted(OUT.iterdir()):
        print(f"  {path.name:<22} {path.stat().st_size:>8,} bytes")
    for line in (OUT / "timings.txt").read_text().splitlines():
        print(f"  | {line}")
    print()

    # fresh directory, same config: every data artifact must match byte for byte
    again_dir = OUT.parent / "pipeline_rerun"
    t0 = time.perf_counter()
    run_pipeline(CONFIG, again_dir)
    print(f"fresh rerun in {time.perf_counter() - t0:.0f}s")
    stable = [p.name for p in sorted(OUT.iterdir()) if p.name != "timings.txt"]
    for name in stable:
        assert (OUT / name).read_bytes() == (again_dir / name).read_bytes(), name
    print(f"byte-identical across reruns: {', '.join(stable)}")

    # third run on the existing directory: the trial log short-circuits screening
    t0 = time.perf_counter()
    run_pipeline(CONFIG, OUT)
    print(f"resume over a complete log: {time.perf_counter() - t0:.0f}s "
          "(screening skipped, log replayed)")


if __name__ == "__main__":
    main()
