"""Constrained sampling of pruning recipes.

A pruning space is the set of recipes passing every active constraint:
a relative-FLOPs band, a relative-parameter band, an upper bound on the
recipe's population std, and a band on the compute-to-parameter ratio (mcb).

Sampling is rejection-based around a uniform anchor: bisection finds the
uniform ratio u whose cost hits the primary target, each attempt perturbs it
with iid Gaussian noise per unit, clamps to [0, R], and keeps the first draw
whose membership report is clean. Derived per-index seeds make populations
order-deterministic and safe to generate in parallel.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .arch import ArchitectureSpec, RATIO_MAX_DEFAULT, prunable_units, resolve_plan
from .cost import fractional_uniform_metrics, network_cost
from .errors import FeasibilityError, SchemaError, ValidationError

DEFAULT_DELTA = 0.002
DEFAULT_SIGMA = 0.05
DEFAULT_MAX_ATTEMPTS = 100_000

_SPACE_FIELDS = {
    "target_cflops", "delta", "target_cparams", "delta_params",
    "std_cap", "mcb_band", "ratio_max",
}


@dataclass(frozen=True)
class PruningRecipe:
    """Per-unit pruning ratios for one architecture."""

    arch: str
    ratios: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.ratios)

    def to_json(self) -> dict:
        return {"arch": self.arch, "ratios": list(self.ratios)}


def recipe_from_json(document: str | Mapping) -> PruningRecipe:
    doc = json.loads(document) if isinstance(document, (str, bytes)) else dict(document)
    if not isinstance(doc, dict) or set(doc) != {"arch", "ratios"}:
        raise SchemaError("recipe document must have exactly the fields 'arch' and 'ratios'")
    ratios = doc["ratios"]
    if not isinstance(ratios, list) or not all(isinstance(r, (int, float)) for r in ratios):
        raise SchemaError("'ratios' must be a list of numbers")
    return PruningRecipe(str(doc["arch"]), tuple(float(r) for r in ratios))


@dataclass(frozen=True)
class SpaceSpec:
    """Constraint set defining one pruning space. At least one cost target."""

    target_cflops: float | None = None
    delta: float = DEFAULT_DELTA
    target_cparams: float | None = None
    delta_params: float = DEFAULT_DELTA
    std_cap: float | None = None
    mcb_band: tuple[float, float] | None = None
    ratio_max: float = RATIO_MAX_DEFAULT

    def __post_init__(self):
        if self.target_cflops is None and self.target_cparams is None:
            raise ValidationError("space needs a c_flops or c_params target")
        for name, t in (("target_cflops", self.target_cflops), ("target_cparams", self.target_cparams)):
            if t is not None and not (0.0 < t <= 1.0):
                raise ValidationError(f"{name} must be in (0, 1], got {t}")
        if self.delta < 0 or self.delta_params < 0:
            raise ValidationError("band half-widths must be non-negative")
        if self.std_cap is not None and self.std_cap < 0:
            raise ValidationError("std_cap must be non-negative")
        if self.mcb_band is not None:
            center, half = self.mcb_band
            if center <= 0 or half < 0:
                raise ValidationError(f"bad mcb band {self.mcb_band}")
            object.__setattr__(self, "mcb_band", (float(center), float(half)))
        if not (0.0 < self.ratio_max < 1.0):
            raise ValidationError(f"ratio_max must be in (0, 1), got {self.ratio_max}")

    def to_json(self) -> dict:
        doc: dict = {}
        if self.target_cflops is not None:
            doc["target_cflops"] = self.target_cflops
            doc["delta"] = self.delta
        if self.target_cparams is not None:
            doc["target_cparams"] = self.target_cparams
            doc["delta_params"] = self.delta_params
        if self.std_cap is not None:
            doc["std_cap"] = self.std_cap
        if self.mcb_band is not None:
            doc["mcb_band"] = list(self.mcb_band)
        doc["ratio_max"] = self.ratio_max
        return doc


def space_from_json(document: str | Mapping) -> SpaceSpec:
    doc = json.loads(document) if isinstance(document, (str, bytes)) else dict(document)
    if not isinstance(doc, dict):
        raise SchemaError("space document must be a JSON object")
    unknown = doc.keys() - _SPACE_FIELDS
    if unknown:
        raise SchemaError(f"space has unknown fields: {sorted(unknown)}")
    kwargs: dict = {}
    for key in ("target_cflops", "delta", "target_cparams", "delta_params", "std_cap", "ratio_max"):
        if key in doc and doc[key] is not None:
            if not isinstance(doc[key], (int, float)):
                raise SchemaError(f"space field {key!r} must be a number")
            kwargs[key] = float(doc[key])
    band = doc.get("mcb_band")
    if band is not None:
        if not (isinstance(band, list) and len(band) == 2):
            raise SchemaError("'mcb_band' must be [center, half_width]")
        kwargs["mcb_band"] = (float(band[0]), float(band[1]))
    return SpaceSpec(**kwargs)


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    value: float
    lower: float
    upper: float
    passed: bool


@dataclass(frozen=True)
class MembershipReport:
    passed: bool
    checks: tuple[ConstraintCheck, ...]

    def failed_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.checks if not c.passed)


@dataclass(frozen=True)
class UniformBase:
    """Anchor ratio for a space: uniform recipe whose cost meets the target."""

    ratio: float
    in_band: bool
    achieved: float


def recipe_std(recipe: PruningRecipe | Sequence[float]) -> float:
    """Population standard deviation of the ratio vector (divide by N)."""
    ratios = recipe.ratios if isinstance(recipe, PruningRecipe) else tuple(recipe)
    if len(ratios) == 0:
        raise ValidationError("recipe is empty")
    return float(np.std(np.asarray(ratios, dtype=np.float64)))


def _ratios_of(
    arch: ArchitectureSpec, recipe: PruningRecipe | Sequence[float]
) -> tuple[float, ...]:
    if isinstance(recipe, PruningRecipe):
        if recipe.arch and recipe.arch != arch.name:
            raise ValidationError(f"recipe is for {recipe.arch!r}, not {arch.name!r}")
        return recipe.ratios
    return tuple(float(r) for r in recipe)


def is_member(
    arch: ArchitectureSpec, space: SpaceSpec, recipe: PruningRecipe | Sequence[float]
) -> MembershipReport:
    """Evaluate every active constraint; raises on malformed recipes."""
    ratios = _ratios_of(arch, recipe)
    plan = resolve_plan(arch, ratios, ratio_max=space.ratio_max)
    report = network_cost(arch, plan)
    checks: list[ConstraintCheck] = []
    if space.target_cflops is not None:
        lo, hi = space.target_cflops - space.delta, space.target_cflops + space.delta
        checks.append(ConstraintCheck("c_flops", report.c_flops, lo, hi, lo <= report.c_flops <= hi))
    if space.target_cparams is not None:
        lo, hi = space.target_cparams - space.delta_params, space.target_cparams + space.delta_params
        checks.append(ConstraintCheck("c_params", report.c_params, lo, hi, lo <= report.c_params <= hi))
    if space.std_cap is not None:
        std = recipe_std(ratios)
        checks.append(ConstraintCheck("recipe_std", std, 0.0, space.std_cap, std <= space.std_cap))
    if space.mcb_band is not None:
        center, half = space.mcb_band
        lo, hi = center - half, center + half
        checks.append(ConstraintCheck("mcb", report.mcb, lo, hi, lo <= report.mcb <= hi))
    return MembershipReport(all(c.passed for c in checks), tuple(checks))


def _uniform_metric(arch: ArchitectureSpec, u: float, metric: str, ratio_max: float) -> float:
    plan = resolve_plan(arch, [u] * len(prunable_units(arch)), ratio_max=ratio_max)
    report = network_cost(arch, plan)
    return report.c_flops if metric == "flops" else report.c_params


def _breakpoints(arch: ArchitectureSpec, ratio_max: float) -> list[float]:
    """Ratios where some unit's kept count changes (rounding plateau edges)."""
    points: set[float] = set()
    for unit in prunable_units(arch):
        c = unit.c_out
        for j in range(c):
            b = 1.0 - (j + 0.5) / c
            if 0.0 < b <= ratio_max:
                points.add(b)
    return sorted(points)


def uniform_base_ratio(
    arch: ArchitectureSpec,
    target: float,
    delta: float = DEFAULT_DELTA,
    metric: str = "flops",
    ratio_max: float = RATIO_MAX_DEFAULT,
) -> UniformBase:
    """Find the uniform ratio whose relative cost lands in [target - delta, target + delta].

    Bisects the continuous relaxation (fractional kept channels), then checks
    the banded target on the real rounded map at the root and at neighboring
    rounding plateaus. If the step map jumps clean over the band, the nearest
    plateau boundary comes back flagged (in_band=False).
    """
    if metric not in ("flops", "params"):
        raise ValidationError(f"metric must be 'flops' or 'params', got {metric!r}")
    if not prunable_units(arch):
        raise FeasibilityError(f"{arch.name}: no prunable units to sample")
    if not (0.0 < target <= 1.0):
        raise ValidationError(f"target must be in (0, 1], got {target}")
    if delta < 0:
        raise ValidationError("delta must be non-negative")

    idx = 0 if metric == "flops" else 1
    rounded = lambda u: _uniform_metric(arch, u, metric, ratio_max)
    floor_cost = rounded(ratio_max)
    if floor_cost > target + delta:
        raise FeasibilityError(
            f"target {metric} {target} +- {delta} unreachable: kept channels floor at 1, "
            f"minimum reachable is {floor_cost:.6g}"
        )
    if target - delta > 1.0:
        raise FeasibilityError(f"target {metric} {target} - {delta} exceeds the dense cost 1.0")

    frac = lambda u: fractional_uniform_metrics(arch, u)[idx]
    lo, hi = 0.0, ratio_max
    if frac(lo) <= target:
        root = lo
    elif frac(hi) >= target:
        root = hi
    else:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if frac(mid) > target:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-13:
                break
        root = 0.5 * (lo + hi)

    achieved = rounded(root)
    if abs(achieved - target) <= delta:
        return UniformBase(root, True, achieved)

    # The rounded map plateaus; probe the plateaus around the root before
    # declaring the band skipped.
    points = _breakpoints(arch, ratio_max)
    probes: list[float] = []
    left = [b for b in points if b <= root]
    right = [b for b in points if b > root]
    for b in left[-2:]:
        probes.append(max(0.0, b - 1e-9))
        probes.append(b)
    for b in right[:2]:
        probes.append(b)
        probes.append(min(ratio_max, b + 1e-9))
    for u in probes:
        c = rounded(u)
        if abs(c - target) <= delta:
            return UniformBase(u, True, c)
    nearest = min(points, key=lambda b: abs(b - root)) if points else root
    return UniformBase(nearest, False, rounded(nearest))


def derive_seed(seed: int | Sequence[int], index: int) -> tuple[int, ...]:
    """Per-item seed key: append the index to the base seed tuple."""
    if isinstance(seed, (int, np.integer)):
        return (int(seed), int(index))
    return tuple(int(s) for s in seed) + (int(index),)


def sample_recipe(
    arch: ArchitectureSpec,
    space: SpaceSpec,
    seed: int | Sequence[int],
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    _base: UniformBase | None = None,
) -> PruningRecipe:
    """First accepted draw of uniform-anchor + Gaussian-perturbation sampling.

    Deterministic given (arch, space, seed). Raises FeasibilityError when
    max_attempts draws all miss the space.
    """
    units = prunable_units(arch)
    if not units:
        raise FeasibilityError(f"{arch.name}: no prunable units to sample")
    if space.target_cflops is not None:
        base = _base or uniform_base_ratio(
            arch, space.target_cflops, space.delta, "flops", space.ratio_max
        )
    else:
        base = _base or uniform_base_ratio(
            arch, space.target_cparams, space.delta_params, "params", space.ratio_max
        )
    sigma = space.std_cap if space.std_cap is not None else DEFAULT_SIGMA
    rng = np.random.default_rng(seed)
    n = len(units)
    for _ in range(max_attempts):
        eps = rng.normal(0.0, sigma, size=n) if sigma > 0 else np.zeros(n)
        ratios = np.clip(base.ratio + eps, 0.0, space.ratio_max)
        candidate = tuple(float(r) for r in ratios)
        if is_member(arch, space, candidate).passed:
            return PruningRecipe(arch.name, candidate)
    raise FeasibilityError(
        f"no member of the space found in {max_attempts} attempts "
        f"(anchor u={base.ratio:.6g}, in_band={base.in_band})",
        attempts=max_attempts,
    )


def sample_population(
    arch: ArchitectureSpec,
    space: SpaceSpec,
    n: int,
    seed: int | Sequence[int],
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> list[PruningRecipe]:
    """n recipes with derived seeds (seed, index); order-deterministic."""
    if n < 1:
        raise ValidationError(f"population size must be >= 1, got {n}")
    if space.target_cflops is not None:
        base = uniform_base_ratio(arch, space.target_cflops, space.delta, "flops", space.ratio_max)
    else:
        base = uniform_base_ratio(
            arch, space.target_cparams, space.delta_params, "params", space.ratio_max
        )
    return [
        sample_recipe(arch, space, derive_seed(seed, i), max_attempts, _base=base)
        for i in range(n)
    ]
