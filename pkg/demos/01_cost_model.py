"""Exact subnetwork costing: where the MACs go when filters leave.

Walks the cost model bottom-up: dense totals for the bundled architectures,
the two-sided effect of removing filters from one layer, what a uniform half
recipe does to a 50-layer residual network, and why uniform ratios can only
reach a staircase of cost levels.
"""

import numpy as np

from prunespace import (
    builtin_arch,
    builtin_names,
    layer_cost,
    network_cost,
    prunable_units,
    resolve_plan,
    uniform_base_ratio,
)


def dense_totals():
    print("== dense totals ==")
    for name in builtin_names():
        arch = builtin_arch(name)
        cost = network_cost(arch)
        units = len(prunable_units(arch))
        print(
            f"{name:>15}: {cost.flops:>13,} MACs  {cost.params:>11,} params  "
            f"{len(arch.layers)} layers, {units} prunable units"
        )
    print()


def both_neighbors_pay():
    """Removing filters from layer i shrinks layer i AND everything reading it."""
    print("== filter removal charges both sides of the boundary ==")
    arch = builtin_arch("chain3")
    l0, l1 = arch.layers[0], arch.layers[1]
    dense0 = layer_cost(l0, l0.c_in, l0.c_out)[0]
    dense1 = layer_cost(l1, l1.c_in, l1.c_out)[0]
    print(f"chain3 layer 0: {l0.c_in}->{l0.c_out} conv, {dense0:,} MACs dense")
    print(f"chain3 layer 1: {l1.c_in}->{l1.c_out} conv, {dense1:,} MACs dense")
    for ratio in (0.25, 0.5, 0.75):
        plan = resolve_plan(arch, (ratio, 0.0))
        kept = plan.kept[0]
        m0 = layer_cost(l0, l0.c_in, kept)[0]
        m1 = layer_cost(l1, kept, l1.c_out)[0]
        print(
            f"  prune unit 0 at r={ratio}: keep {kept}/{l0.c_out} filters -> "
            f"layer 0 MACs x{m0 / dense0:.3f}, layer 1 MACs x{m1 / dense1:.3f}"
        )
    print()


def uniform_half_on_resnet50():
    print("== uniform 0.5 on the 50-layer residual shape ==")
    arch = builtin_arch("resnet50-shape")
    plan = resolve_plan(arch, [0.5] * len(prunable_units(arch)))
    cost = network_cost(arch, plan)
    print(
        f"halving every prunable width keeps {cost.c_flops:.1%} of the MACs "
        f"and {cost.c_params:.1%} of the parameters"
    )
    print(f"(quadratic shrinkage: most MACs have both ends pruned; mcb {cost.mcb:.3f})")
    print()


def uniform_ratio_staircase():
    """Rounded kept-counts mean uniform recipes reach only discrete cost levels."""
    print("== uniform-ratio staircase on chain3 ==")
    arch = builtin_arch("chain3")
    seen = {}
    for ratio in np.linspace(0.0, 0.95, 96):
        plan = resolve_plan(arch, [round(float(ratio), 3)] * 2)
        c = network_cost(arch, plan).c_flops
        seen.setdefault(round(c, 6), round(float(ratio), 3))
    print(f"96 uniform ratios collapse onto {len(seen)} distinct cost levels:")
    for c, first_ratio in sorted(seen.items(), reverse=True)[:8]:
        print(f"  c_flops {c:.4f}  first reached at r={first_ratio}")
    print()
    for target in (0.50, 0.334, 0.30):
        base = uniform_base_ratio(arch, target, delta=0.01)
        tag = "in band" if base.in_band else "nearest plateau, outside band"
        print(
            f"target c_flops {target:.3f} -> uniform r={base.ratio:.4f}, "
            f"achieved {base.achieved:.4f} ({tag})"
        )
    print("gaps like these are why recipe sampling perturbs around the base ratio")


if __name__ == "__main__":
    dense_totals()
    both_neighbors_pay()
    uniform_half_on_resnet50()
    uniform_ratio_staircase()
