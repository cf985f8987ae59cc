"""Magnitude-ranked one-shot filter pruning.

Filters are ranked per prunable unit; for a coupling group the score of filter
j aggregates every member layer, sqrt(sum of squared entries) for the l2
criterion. The lowest-scoring filters are dropped in one shot: surviving
weights are re-indexed into dense arrays and the architecture shrinks to the
kept channel counts, so the subnetwork trains at its real (reduced) size.
Ties keep the lower filter index.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .arch import (
    ArchitectureSpec,
    PrunableUnit,
    SubnetworkPlan,
    prunable_units,
    resolve_plan,
    RATIO_MAX_DEFAULT,
)
from .errors import ValidationError
from .network import NetworkWeights
from .sampling import PruningRecipe, _ratios_of

METHODS = ("l2", "l1", "random")


def _member_weight(weights: NetworkWeights, lid: int) -> np.ndarray:
    return weights.tensors[lid]["w"]


def filter_l2_norms(
    weights: NetworkWeights, arch: ArchitectureSpec, unit: PrunableUnit | int
) -> np.ndarray:
    """Per-filter l2 magnitude of a unit, aggregated across coupled members."""
    return _filter_norms(weights, arch, unit, ord=2)


def filter_l1_norms(
    weights: NetworkWeights, arch: ArchitectureSpec, unit: PrunableUnit | int
) -> np.ndarray:
    return _filter_norms(weights, arch, unit, ord=1)


def _resolve_unit(arch: ArchitectureSpec, unit: PrunableUnit | int) -> PrunableUnit:
    if isinstance(unit, PrunableUnit):
        return unit
    units = prunable_units(arch)
    if not (0 <= unit < len(units)):
        raise ValidationError(f"unit index {unit} outside [0, {len(units)})")
    return units[unit]


def _filter_norms(weights, arch, unit, ord: int) -> np.ndarray:
    unit = _resolve_unit(arch, unit)
    total = np.zeros(unit.c_out, dtype=np.float64)
    for lid in unit.layer_ids:
        w = _member_weight(weights, lid).astype(np.float64)
        axes = tuple(i for i in range(w.ndim) if i != 1)  # filters live on axis 1
        if ord == 2:
            total += np.square(w).sum(axis=axes)
        else:
            total += np.abs(w).sum(axis=axes)
    return np.sqrt(total) if ord == 2 else total


def unit_scores(
    weights: NetworkWeights,
    arch: ArchitectureSpec,
    unit: PrunableUnit,
    method: str,
    rng: np.random.Generator | None,
) -> np.ndarray:
    if method == "l2":
        return filter_l2_norms(weights, arch, unit)
    if method == "l1":
        return filter_l1_norms(weights, arch, unit)
    if method == "random":
        assert rng is not None
        return rng.random(unit.c_out)
    raise ValidationError(f"ranking method must be one of {METHODS}, got {method!r}")


@dataclass(frozen=True)
class PrunedNetwork:
    weights: NetworkWeights
    arch: ArchitectureSpec
    plan: SubnetworkPlan


def one_shot_prune(
    weights: NetworkWeights,
    arch: ArchitectureSpec,
    recipe: PruningRecipe | Sequence[float],
    method: str = "l2",
    seed=None,
    ratio_max: float = RATIO_MAX_DEFAULT,
) -> PrunedNetwork:
    """Materialize the subnetwork a recipe selects from trained dense weights.

    Keeps the top-scoring filters per unit (ties to the lower index), slices
    every tensor to dense re-indexed arrays, and rebuilds the architecture at
    the reduced widths. The returned plan records the surviving indices.
    """
    if method not in METHODS:
        raise ValidationError(f"ranking method must be one of {METHODS}, got {method!r}")
    if method == "random" and seed is None:
        raise ValidationError("random ranking needs a seed")
    ratios = _ratios_of(arch, recipe)
    base_plan = resolve_plan(arch, ratios, ratio_max=ratio_max)

    kept_indices: dict[int, tuple[int, ...]] = {
        l.id: tuple(range(base_plan.kept[l.id])) for l in arch.layers
    }
    for unit in prunable_units(arch):
        keep = base_plan.kept[unit.layer_ids[0]]
        rng = np.random.default_rng((*_seed_base(seed), unit.index)) if method == "random" else None
        scores = unit_scores(weights, arch, unit, method, rng)
        # stable argsort on negated scores: ties keep the lower filter index
        order = np.argsort(-scores, kind="stable")[:keep]
        chosen = tuple(int(i) for i in np.sort(order))
        for lid in unit.layer_ids:
            kept_indices[lid] = chosen
    plan = SubnetworkPlan(kept=dict(base_plan.kept), kept_indices=kept_indices)

    new_layers = []
    for l in arch.layers:
        prods = arch.producers[l.id]
        new_in = l.c_in if not prods else plan.kept[prods[0]]
        new_layers.append(
            replace(l, c_in=new_in, c_out=plan.kept[l.id], out_h=0, out_w=0)
        )
    new_arch = ArchitectureSpec(
        arch.name, arch.input_shape, new_layers, arch.edges, arch.classifier_id
    )

    tensors: dict[int, dict[str, np.ndarray]] = {}
    for l in arch.layers:
        t = weights.tensors[l.id]
        out_keep = np.asarray(plan.kept_indices[l.id], dtype=np.intp)
        prods = arch.producers[l.id]
        if prods:
            in_keep = np.asarray(plan.kept_indices[prods[0]], dtype=np.intp)
        else:
            in_keep = np.arange(l.c_in, dtype=np.intp)
        new_t: dict[str, np.ndarray] = {"w": np.ascontiguousarray(t["w"][in_keep][:, out_keep])}
        for role in ("b", "scale", "shift"):
            if role in t:
                new_t[role] = np.ascontiguousarray(t[role][out_keep])
        tensors[l.id] = new_t
    return PrunedNetwork(NetworkWeights(tensors, new_arch.name), new_arch, plan)


def _seed_base(seed) -> tuple[int, ...]:
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    return tuple(int(s) for s in seed)
