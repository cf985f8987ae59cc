"""Exact multiply-count and parameter accounting for pruned subnetworks.

All absolute numbers are integers (MACs for conv/fc layers; weights plus
biases plus per-channel affine parameters). Relative metrics divide by the
dense network's totals:

    c_flops  = flops(sub) / flops(dense)
    c_params = params(sub) / params(dense)
    mcb      = c_flops / c_params

Pooling and elementwise ops are excluded from the counts.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .arch import ArchitectureSpec, LayerSpec, SubnetworkPlan, prunable_units, resolve_plan
from .errors import ValidationError


@dataclass(frozen=True)
class CostReport:
    flops: int
    params: int
    c_flops: float
    c_params: float
    mcb: float

    def to_json(self) -> dict:
        return {
            "flops": self.flops,
            "params": self.params,
            "c_flops": self.c_flops,
            "c_params": self.c_params,
            "mcb": self.mcb,
        }


def layer_cost(layer: LayerSpec, in_ch: int, out_ch: int) -> tuple[int, int]:
    """(macs, params) for one layer at the given effective channel counts."""
    if not (1 <= in_ch <= layer.c_in):
        raise ValidationError(f"layer {layer.id}: in_ch {in_ch} outside [1, {layer.c_in}]")
    if not (1 <= out_ch <= layer.c_out):
        raise ValidationError(f"layer {layer.id}: out_ch {out_ch} outside [1, {layer.c_out}]")
    if layer.kind == "conv":
        k2 = layer.kernel * layer.kernel
        macs = in_ch * out_ch * k2 * layer.out_h * layer.out_w
        params = in_ch * out_ch * k2
    else:
        macs = in_ch * out_ch
        params = in_ch * out_ch
    if layer.has_bias:
        params += out_ch
    if layer.has_affine:
        params += 2 * out_ch
    return macs, params


def effective_channels(
    arch: ArchitectureSpec, plan: SubnetworkPlan | None = None
) -> dict[int, tuple[int, int]]:
    """Per-layer (in_ch, out_ch) under a plan; input channels are never pruned."""
    out: dict[int, tuple[int, int]] = {}
    for l in arch.layers:
        kept_out = l.c_out if plan is None else plan.kept[l.id]
        prods = arch.producers[l.id]
        if not prods:
            in_ch = arch.input_shape[0]
        else:
            vals = {arch.layer(p).c_out if plan is None else plan.kept[p] for p in prods}
            if len(vals) != 1:
                raise ValidationError(
                    f"layer {l.id}: producers disagree on kept channels {sorted(vals)}"
                )
            in_ch = vals.pop()
        out[l.id] = (in_ch, kept_out)
    return out


def network_cost(
    arch: ArchitectureSpec, plan: SubnetworkPlan | Sequence[float] | None = None
) -> CostReport:
    """Totals for the (sub)network plus ratios relative to the dense network.

    `plan` may be a resolved SubnetworkPlan, a per-unit ratio vector, or any
    object with a `ratios` attribute (a sampled recipe); None means dense.
    """
    if plan is not None and not isinstance(plan, SubnetworkPlan):
        plan = resolve_plan(arch, getattr(plan, "ratios", plan))
    channels = effective_channels(arch, plan)
    flops = 0
    params = 0
    dense_flops = 0
    dense_params = 0
    for l in arch.layers:
        in_ch, out_ch = channels[l.id]
        m, p = layer_cost(l, in_ch, out_ch)
        flops += m
        params += p
        m, p = layer_cost(l, l.c_in, l.c_out)
        dense_flops += m
        dense_params += p
    c_flops = flops / dense_flops
    c_params = params / dense_params
    return CostReport(flops, params, c_flops, c_params, mcb(c_flops, c_params))


def mcb(c_flops: float, c_params: float) -> float:
    """Compute-to-parameter budget ratio of a subnetwork, both relative to dense."""
    for name, v in (("c_flops", c_flops), ("c_params", c_params)):
        if not (0.0 < v <= 1.0):
            raise ValidationError(f"{name} must be in (0, 1], got {v}")
    return c_flops / c_params


def fractional_uniform_metrics(arch: ArchitectureSpec, ratio: float) -> tuple[float, float]:
    """(c_flops, c_params) of a uniform recipe with real-valued kept channels.

    The continuous relaxation of the rounding rule: every prunable unit keeps
    max(1, (1 - ratio) * c_out) fractional channels. Strictly monotone in the
    ratio wherever rounding has plateaus, which makes it the right map to
    bisect when hunting a cost target.
    """
    if not (0.0 <= ratio <= 1.0):
        raise ValidationError(f"uniform ratio {ratio} outside [0, 1]")
    frac_out: dict[int, float] = {l.id: float(l.c_out) for l in arch.layers}
    for unit in prunable_units(arch):
        kept = max(1.0, (1.0 - ratio) * unit.c_out)
        for lid in unit.layer_ids:
            frac_out[lid] = kept
    flops = 0.0
    params = 0.0
    dense_flops = 0
    dense_params = 0
    for l in arch.layers:
        prods = arch.producers[l.id]
        in_ch = float(arch.input_shape[0]) if not prods else frac_out[prods[0]]
        out_ch = frac_out[l.id]
        if l.kind == "conv":
            scale = l.kernel * l.kernel
            m = in_ch * out_ch * scale * l.out_h * l.out_w
            p = in_ch * out_ch * scale
        else:
            m = in_ch * out_ch
            p = in_ch * out_ch
        if l.has_bias:
            p += out_ch
        if l.has_affine:
            p += 2 * out_ch
        flops += m
        params += p
        m2, p2 = layer_cost(l, l.c_in, l.c_out)
        dense_flops += m2
        dense_params += p2
    return flops / dense_flops, params / dense_params
