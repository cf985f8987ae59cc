"""Numpy CNN kernel: weights, forward pass, gradients, evaluation.

Execution follows the architecture graph: each conv layer computes
cross-correlation -> optional bias -> optional per-channel affine -> ReLU,
a consumer with several producers sums their outputs first (residual add),
and the classifier applies global average pooling before its fc transform.

Conv weights are stored (c_in, c_out, k, k) and fc weights (c_in, c_out);
filters are therefore columns w[:, j]. The forward pass gathers k x k input
windows into a view and reduces them with one tensordot per layer, which keeps
desk-scale training in large BLAS calls. Gradients are hand-derived
reverse-mode over the same graph.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .arch import ArchitectureSpec
from .dataset import Batch
from .errors import ValidationError


class NetworkWeights:
    """Per-layer tensors keyed by role: "w", and optionally "b", "scale", "shift"."""

    def __init__(self, tensors: dict[int, dict[str, np.ndarray]], arch_name: str = ""):
        self.tensors = tensors
        self.arch_name = arch_name

    @property
    def dtype(self) -> np.dtype:
        first = next(iter(self.tensors.values()))
        return first["w"].dtype

    def copy(self) -> "NetworkWeights":
        return NetworkWeights(
            {lid: {role: a.copy() for role, a in t.items()} for lid, t in self.tensors.items()},
            self.arch_name,
        )

    def astype(self, dtype) -> "NetworkWeights":
        return NetworkWeights(
            {lid: {role: a.astype(dtype) for role, a in t.items()} for lid, t in self.tensors.items()},
            self.arch_name,
        )

    def num_params(self) -> int:
        return sum(a.size for t in self.tensors.values() for a in t.values())

    def items(self):
        for lid in sorted(self.tensors):
            for role in sorted(self.tensors[lid]):
                yield lid, role, self.tensors[lid][role]


def init_weights(arch: ArchitectureSpec, seed, dtype=np.float32) -> NetworkWeights:
    """Fan-in-scaled Gaussian init: w ~ Normal(0, g / fan_in) with g = 2 for
    layers followed by an activation, g = 1 for the classifier. Biases start
    at zero, affine at scale 1 / shift 0."""
    rng = np.random.default_rng(seed)
    tensors: dict[int, dict[str, np.ndarray]] = {}
    for l in arch.layers:
        t: dict[str, np.ndarray] = {}
        if l.kind == "conv":
            fan_in = l.c_in * l.kernel * l.kernel
            gain = 2.0
            shape = (l.c_in, l.c_out, l.kernel, l.kernel)
        else:
            fan_in = l.c_in
            gain = 1.0 if l.id == arch.classifier_id else 2.0
            shape = (l.c_in, l.c_out)
        t["w"] = rng.normal(0.0, math.sqrt(gain / fan_in), size=shape).astype(dtype)
        if l.has_bias:
            t["b"] = np.zeros(l.c_out, dtype=dtype)
        if l.has_affine:
            t["scale"] = np.ones(l.c_out, dtype=dtype)
            t["shift"] = np.zeros(l.c_out, dtype=dtype)
        tensors[l.id] = t
    return NetworkWeights(tensors, arch.name)


def _check_weights(weights: NetworkWeights, arch: ArchitectureSpec) -> None:
    for l in arch.layers:
        t = weights.tensors.get(l.id)
        if t is None:
            raise ValidationError(f"weights missing layer {l.id}")
        w = t["w"]
        expect = (l.c_in, l.c_out, l.kernel, l.kernel) if l.kind == "conv" else (l.c_in, l.c_out)
        if w.shape != expect:
            raise ValidationError(f"layer {l.id}: weight shape {w.shape} != {expect}")


def _as_inputs(batch) -> np.ndarray:
    return batch.inputs if isinstance(batch, Batch) else np.asarray(batch)


def _conv_windows(x: np.ndarray, kernel: int, stride: int, padding: int) -> np.ndarray:
    """(B, c_in, oh, ow, k, k) view of the padded input's sliding windows."""
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kernel, kernel), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def forward(weights: NetworkWeights, arch: ArchitectureSpec, batch) -> tuple[np.ndarray, dict]:
    """(logits, cache). The cache carries every intermediate the backward pass needs."""
    x = _as_inputs(batch)
    if x.ndim != 4 or x.shape[1:] != arch.input_shape:
        raise ValidationError(f"inputs shaped {x.shape[1:]} do not match {arch.input_shape}")
    _check_weights(weights, arch)
    cache: dict = {"outputs": {}, "layers": {}, "input": x}
    outputs = cache["outputs"]
    logits = None
    for lid in arch.topo_order:
        l = arch.layer(lid)
        prods = arch.producers[lid]
        if not prods:
            x_in = x
        elif len(prods) == 1:
            x_in = outputs[prods[0]]
        else:
            x_in = outputs[prods[0]] + outputs[prods[1]]
            for p in prods[2:]:
                x_in = x_in + outputs[p]
        t = weights.tensors[lid]
        if l.kind == "conv":
            win = _conv_windows(x_in, l.kernel, l.stride, l.padding)
            z = np.tensordot(win, t["w"], axes=((1, 4, 5), (0, 2, 3)))  # (B, oh, ow, c_out)
            z = np.ascontiguousarray(z.transpose(0, 3, 1, 2))
            if "b" in t:
                z += t["b"][None, :, None, None]
            z_pre = z
            if "scale" in t:
                z = z * t["scale"][None, :, None, None] + t["shift"][None, :, None, None]
            out = np.maximum(z, 0.0)
            cache["layers"][lid] = {"win": win, "z_pre": z_pre, "z_act": z, "x_shape": x_in.shape}
            outputs[lid] = out
        else:
            feats = x_in.mean(axis=(2, 3))
            logits = feats @ t["w"]
            if "b" in t:
                logits = logits + t["b"]
            cache["layers"][lid] = {"feats": feats, "spatial": x_in.shape[2:]}
            outputs[lid] = logits
    return outputs[arch.classifier_id], cache


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """(mean loss, d loss / d logits)."""
    if logits.shape[0] != labels.shape[0]:
        raise ValidationError("logits and labels disagree on batch size")
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ValidationError("label out of range")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(total)
    n = logits.shape[0]
    loss = float(-log_probs[np.arange(n), labels].mean())
    grad = exp / total
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def loss_and_grads(
    weights: NetworkWeights, arch: ArchitectureSpec, batch: Batch
) -> tuple[float, dict[int, dict[str, np.ndarray]]]:
    """Mean softmax cross-entropy and gradients for every weight tensor."""
    logits, cache = forward(weights, arch, batch)
    loss, dlogits = softmax_cross_entropy(logits, batch.labels)

    grads: dict[int, dict[str, np.ndarray]] = {}
    douts: dict[int, np.ndarray] = {arch.classifier_id: dlogits}
    for lid in reversed(arch.topo_order):
        l = arch.layer(lid)
        t = weights.tensors[lid]
        c = cache["layers"][lid]
        dout = douts.pop(lid, None)
        if dout is None:
            continue
        g: dict[str, np.ndarray] = {}
        if l.kind == "fc":
            feats = c["feats"]
            g["w"] = feats.T @ dout
            if "b" in t:
                g["b"] = dout.sum(axis=0)
            dfeats = dout @ t["w"].T
            h, w_sp = c["spatial"]
            dx = np.broadcast_to(
                dfeats[:, :, None, None] / (h * w_sp), (dfeats.shape[0], dfeats.shape[1], h, w_sp)
            )
        else:
            dz = dout * (c["z_act"] > 0)
            if "scale" in t:
                g["scale"] = (dz * c["z_pre"]).sum(axis=(0, 2, 3))
                g["shift"] = dz.sum(axis=(0, 2, 3))
                dz = dz * t["scale"][None, :, None, None]
            if "b" in t:
                g["b"] = dz.sum(axis=(0, 2, 3))
            win = c["win"]
            dw = np.tensordot(win, dz, axes=((0, 2, 3), (0, 2, 3)))  # (c_in, k, k, c_out)
            g["w"] = np.ascontiguousarray(dw.transpose(0, 3, 1, 2))
            dx = None
            if arch.producers[lid]:
                dx = _conv_input_grad(dz, t["w"], c["x_shape"], l.kernel, l.stride, l.padding)
        grads[lid] = g
        prods = arch.producers[lid]
        for p in prods:
            if p in douts:
                douts[p] = douts[p] + dx
            else:
                douts[p] = dx
    return loss, grads


def _conv_input_grad(
    dz: np.ndarray, w: np.ndarray, x_shape: tuple, kernel: int, stride: int, padding: int
) -> np.ndarray:
    b, c_in, h, w_sp = x_shape
    hp, wp = h + 2 * padding, w_sp + 2 * padding
    oh, ow = dz.shape[2], dz.shape[3]
    # (B, oh, ow, c_in, k, k) contributions, scattered back to input positions
    dcols = np.tensordot(dz, w, axes=(1, 1))
    dxp = np.zeros((b, c_in, hp, wp), dtype=dz.dtype)
    for ki in range(kernel):
        for kj in range(kernel):
            dxp[:, :, ki : ki + stride * oh : stride, kj : kj + stride * ow : stride] += (
                dcols[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
            )
    if padding:
        return dxp[:, :, padding : padding + h, padding : padding + w_sp]
    return dxp


def evaluate(
    weights: NetworkWeights, arch: ArchitectureSpec, batch: Batch, chunk: int = 512
) -> float:
    """Top-1 accuracy; argmax breaks ties toward the lower class index."""
    n = len(batch)
    if n == 0:
        raise ValidationError("cannot evaluate an empty batch")
    correct = 0
    for start in range(0, n, chunk):
        part = Batch(batch.inputs[start : start + chunk], batch.labels[start : start + chunk])
        logits, _ = forward(weights, arch, part)
        correct += int((logits.argmax(axis=1) == part.labels).sum())
    return correct / n
