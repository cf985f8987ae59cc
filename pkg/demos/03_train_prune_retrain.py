"""One subnetwork, three recoveries: finetune vs rewind vs scratch.

Trains the dense reference network, carves out a half-FLOPs subnetwork by
filter norms, then retrains that same subnetwork under each schedule kind.
One-shot pruning craters the accuracy to chance; most schedules buy it back,
and one aggressive setting genuinely diverges, which the trainer reports as
a typed error carrying the partial accuracy trace.
"""

import time

from prunespace import (
    DatasetSpec,
    TrainingDiverged,
    builtin_arch,
    evaluate,
    finetune_schedule,
    init_weights,
    network_cost,
    one_shot_prune,
    prunable_units,
    rewind_schedule,
    scratch_schedule,
    train,
    uniform_base_ratio,
)

ARCH = "resnet-tiny"
SEED = 0


def main():
    arch = builtin_arch(ARCH)
    data = DatasetSpec(seed=SEED).build()
    train_batch, val_batch = data
    print(f"{ARCH}: {network_cost(arch).flops:,} MACs dense, "
          f"{len(train_batch)} train / {len(val_batch)} val samples")

    t0 = time.perf_counter()
    dense = train(init_weights(arch, SEED), arch, data, scratch_schedule(20, lr0=0.01), SEED)
    dense_acc = dense.trace[-1]
    print(f"dense: {dense_acc:.1%} validation accuracy after 20 epochs "
          f"({time.perf_counter() - t0:.0f}s)\n")

    base = uniform_base_ratio(arch, 0.5)
    recipe = (base.ratio,) * len(prunable_units(arch))
    pruned = one_shot_prune(dense.weights, arch, recipe, method="l2")
    cost = network_cost(arch, pruned.plan)
    raw_acc = evaluate(pruned.weights, pruned.arch, val_batch)
    print(f"one-shot l2 pruning at r={base.ratio:.3f}: c_flops {cost.c_flops:.3f}, "
          f"c_params {cost.c_params:.3f}")
    print(f"accuracy straight after pruning: {raw_acc:.1%} "
          f"(drop {100 * (dense_acc - raw_acc):.1f} points)\n")

    schedules = (
        ("finetune", finetune_schedule(15)),
        ("rewind", rewind_schedule(15, lr0=0.05, warmup_epochs=3)),
        ("rewind", rewind_schedule(15, lr0=0.01, warmup_epochs=3)),
        ("scratch", scratch_schedule(15, lr0=0.02)),
    )
    print(f"{'schedule':>9}  {'lr profile':<28} {'outcome':<30} {'time':>5}")
    for name, schedule in schedules:
        profile = f"lr0={schedule.lr0}, {schedule.epochs} epochs"
        if schedule.kind == "rewind":
            profile += f", warmup {schedule.warmup_epochs}"
        t0 = time.perf_counter()
        try:
            result = train(pruned.weights, pruned.arch, data, schedule, SEED)
            acc = result.trace[-1]
            outcome = f"{acc:.1%}  (drop {100 * (dense_acc - acc):.1f})"
        except TrainingDiverged as exc:
            # a real outcome, not a bug: logged populations keep such trials
            outcome = f"diverged: {exc}"
        print(f"{name:>9}  {profile:<28} {outcome:<30} {time.perf_counter() - t0:>4.0f}s")

    print("\nthe high-lr rewind blows up this heavily pruned network; population")
    print("screening records exactly that as a diverged trial with an infinite drop")


if __name__ == "__main__":
    main()
