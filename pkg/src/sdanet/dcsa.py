"""Dynamic channel-sparse attention.

Attention runs across channels, not pixels: Q, K, V come from depthwise
3x3 projections, the C x C score map is thinned row-wise to a per-sample
budget k chosen by a learned gate, and only the surviving scores are
softmax-normalized. The budget path is discrete, so the gate's scalar g
re-enters the output through a factor g / detach(g): the value is exactly
one and forward results are untouched, while backward feeds the gating
parameters a surrogate signal proportional to the attention output.

The gate branch reads a detached copy of the features. Only the gate's own
weights receive the surrogate gradient; every other parameter and the
module input keep gradients that match finite differences.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import (Parameter, Tensor, concat, conv2d, global_avg_pool,
                     matmul, narrow, reshape, sigmoid, softmax_rows,
                     topk_row_mask, transpose)

__all__ = ["DcsaParams", "GateDecision", "compute_qkv", "dynamic_gate",
           "sparse_channel_attention", "dcsa_forward"]


@dataclass
class DcsaParams:
    """Weights of one attention module over C feature channels."""

    q_dconv: Parameter      # (C, 1, 3, 3) depthwise
    k_dconv: Parameter      # (C, 1, 3, 3) depthwise
    v_dconv: Parameter      # (C, 1, 3, 3) depthwise
    gate_dconv: Parameter   # (C, 1, 3, 3) depthwise
    gate_w1: Parameter      # (ceil(C/4), C, 1, 1) pointwise
    gate_b1: Parameter      # (ceil(C/4),)
    gate_w2: Parameter      # (1, ceil(C/4), 1, 1) pointwise
    gate_b2: Parameter      # (1,)
    out_proj: Parameter     # (C, C, 1, 1) pointwise

    @property
    def channels(self):
        return self.q_dconv.shape[0]

    def all(self):
        return [self.q_dconv, self.k_dconv, self.v_dconv, self.gate_dconv,
                self.gate_w1, self.gate_b1, self.gate_w2, self.gate_b2,
                self.out_proj]


@dataclass
class GateDecision:
    """Per-sample gate value g in (0, 1) and integer budget k."""

    g: Tensor              # shape (batch,)
    k_budget: np.ndarray   # int array, shape (batch,), each in [1, C]


def _check_features(f, channels):
    if f.ndim != 4:
        raise ShapeError(f"features must be rank 4; got rank {f.ndim}")
    if f.shape[1] != channels:
        raise ShapeError(f"feature channels {f.shape[1]} != parameter channels {channels}")


def compute_qkv(features, params):
    """Depthwise-project features and flatten each sample:
    Q and V as (H*W, C), K as (C, H*W)."""
    c = params.channels
    _check_features(features, c)
    n, _, h, w = features.shape
    q = conv2d(features, params.q_dconv, groups=c, padding=1)
    k = conv2d(features, params.k_dconv, groups=c, padding=1)
    v = conv2d(features, params.v_dconv, groups=c, padding=1)
    qs, ks, vs = [], [], []
    for i in range(n):
        qf = reshape(narrow(q, 0, i, 1), (c, h * w))
        kf = reshape(narrow(k, 0, i, 1), (c, h * w))
        vf = reshape(narrow(v, 0, i, 1), (c, h * w))
        qs.append(transpose(qf, (1, 0)))
        ks.append(kf)
        vs.append(transpose(vf, (1, 0)))
    return qs, ks, vs


def dynamic_gate(features, params):
    """Per-sample sparsity decision.

    sigmoid(pointwise-MLP(depthwise conv)) gives a score per position;
    its spatial mean is g, and the budget is clamp(floor(C * g), 1, C).
    The features enter detached: g stays differentiable in the gate's own
    weights only.
    """
    c = params.channels
    _check_features(features, c)
    fd = features.detach()
    hmap = conv2d(fd, params.gate_dconv, groups=c, padding=1)
    hid = conv2d(hmap, params.gate_w1, params.gate_b1)
    score = conv2d(hid, params.gate_w2, params.gate_b2)
    g = global_avg_pool(sigmoid(score), axes=(1, 2, 3))
    k_budget = np.clip(np.floor(c * g.data).astype(np.int64), 1, c)
    return GateDecision(g=g, k_budget=k_budget)


def sparse_channel_attention(qs, ks, vs, gate, params, height, width,
                             return_attention=False):
    """Budgeted channel attention for a batch of flattened samples.

    Per sample: scores = (K @ Q) / sqrt(H*W); keep the k largest entries
    of each row (ties to the lower channel index), softmax over survivors,
    aggregate values, then a pointwise projection mixes channels back.
    With return_attention the per-sample C x C attention maps come back
    alongside the output.
    """
    c = params.channels
    n = len(qs)
    if not (len(ks) == len(vs) == n):
        raise ShapeError(f"Q/K/V sample counts differ: {n}, {len(ks)}, {len(vs)}")
    if len(gate.k_budget) != n:
        raise ShapeError(f"gate carries {len(gate.k_budget)} budgets for {n} samples")
    temperature = 1.0 / math.sqrt(height * width)
    outs = []
    maps = []
    for i in range(n):
        scores = matmul(ks[i], qs[i]) * temperature
        mask = topk_row_mask(scores.data, int(gate.k_budget[i]))
        attn = softmax_rows(scores, mask)
        maps.append(attn)
        mixed = matmul(attn, transpose(vs[i], (1, 0)))
        outs.append(reshape(mixed, (1, c, height, width)))
    out = concat(outs, axis=0) if n > 1 else outs[0]
    out = conv2d(out, params.out_proj)
    # Value-neutral factor; carries the surrogate signal to the gate weights.
    factor = gate.g / gate.g.detach()
    out = out * reshape(factor, (n, 1, 1, 1))
    return (out, maps) if return_attention else out


def dcsa_forward(features, params, k_override=None, return_attention=False):
    """Full module: projections, gate, budgeted attention.

    k_override replaces the learned budget with a fixed one (same value
    for every sample) and bypasses the gate entirely, for ablations.
    """
    c = params.channels
    _check_features(features, c)
    n, _, h, w = features.shape
    qs, ks, vs = compute_qkv(features, params)
    if k_override is None:
        gate = dynamic_gate(features, params)
    else:
        if not isinstance(k_override, (int, np.integer)) or not 1 <= k_override <= c:
            raise ConfigError(f"k_override must lie in [1, {c}]; got {k_override!r}")
        gate = GateDecision(g=Tensor(np.ones(n)),
                            k_budget=np.full(n, int(k_override), dtype=np.int64))
    return sparse_channel_attention(qs, ks, vs, gate, params, h, w,
                                    return_attention=return_attention)
