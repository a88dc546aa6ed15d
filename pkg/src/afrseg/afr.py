"""Attention-based feature refinement.

Two attention branches gate high-resolution features before the final head:

* cala: a logit-guided map. Low-resolution class logits are projected to one
  channel and squashed, multiplied by the squashed high-resolution
  uncertainty, and sharpened by the logits' high-frequency residual
  (projected with the same 1x1 weight, bias excluded so constant logits
  contribute exactly zero).
* uhfa: a feature-guided map. The channel mean of the features plus its
  high-frequency residual passes a 3x3 conv and is damped by exp(-U_LR), so
  attention weakens where the low-resolution prediction is uncertain.

A learned scalar (sigmoid of a raw logit, so the blend stays convex) fuses
the branches; refinement is the gated residual f * (1 + A).
"""

import math
from dataclasses import dataclass

import numpy as np

from . import gaussian, ops
from .tensor import Param, ShapeError
from .uncertainty import uncertainty_from_logits


@dataclass
class AfrParams:
    """Trainable pieces of the refinement module."""

    cala_w: Param   # (1, C) logit projection, reused for the high-freq term
    cala_b: Param   # (1,)
    uhfa_w: Param   # (1, 1, 3, 3)
    uhfa_b: Param   # (1,)
    alpha_raw: Param  # () fusion logit, sigmoid-squashed

    @classmethod
    def create(cls, num_classes, rng, prefix="afr"):
        """Zero-mean uniform init with bound 1/sqrt(fan_in); biases zero."""
        cb = 1.0 / math.sqrt(num_classes)
        ub = 1.0 / 3.0  # fan_in = 9
        return cls(
            cala_w=Param(f"{prefix}.cala_w", rng.uniform(-cb, cb, (1, num_classes))),
            cala_b=Param(f"{prefix}.cala_b", np.zeros(1)),
            uhfa_w=Param(f"{prefix}.uhfa_w", rng.uniform(-ub, ub, (1, 1, 3, 3))),
            uhfa_b=Param(f"{prefix}.uhfa_b", np.zeros(1)),
            alpha_raw=Param(f"{prefix}.alpha_raw", 0.0),
        )

    def params(self):
        return [self.cala_w, self.cala_b, self.uhfa_w, self.uhfa_b, self.alpha_raw]


@dataclass
class LevelMaps:
    """Attention maps produced for one feature level."""

    a1: object   # Tensor or None
    a2: object
    a_final: object


@dataclass
class AfrIntermediates:
    """Everything the module computed, for dumps and tests."""

    u_hr: object        # B x 1 x H x W at aux-head resolution, or None
    u_lr: object        # B x 1 x h x w at low-res logits resolution, or None
    a1: object          # logit-guided map at low resolution, or None
    levels: list        # LevelMaps per feature level


def cala(lr_logits, u_hr, params, kernel, use_hf=True):
    """Logit-guided attention map, single channel at lr_logits resolution.

    u_hr must already be resized to lr_logits' spatial extent.
    """
    if u_hr.data.shape[1] != 1 or u_hr.data.shape[2:] != lr_logits.data.shape[2:]:
        raise ShapeError(f"cala: uncertainty shape {u_hr.data.shape} does not sit on "
                         f"logits grid {lr_logits.data.shape}")
    l_attn = ops.sigmoid(ops.conv1x1(lr_logits, params.cala_w, params.cala_b))
    u_attn = ops.sigmoid(u_hr)
    gate = ops.mul(l_attn, u_attn)
    if not use_hf:
        return ops.sigmoid(gate)
    hf = gaussian.high_freq(lr_logits, kernel)
    sharp = ops.conv1x1(hf, params.cala_w)  # weight reuse, no bias
    return ops.sigmoid(ops.add(gate, sharp))


def uhfa(f_hr, u_lr, params, kernel, use_hf=True):
    """Feature-guided attention map, single channel at f_hr resolution.

    u_lr must already be resized to f_hr's spatial extent.
    """
    if u_lr.data.shape[1] != 1 or u_lr.data.shape[2:] != f_hr.data.shape[2:]:
        raise ShapeError(f"uhfa: uncertainty shape {u_lr.data.shape} does not sit on "
                         f"feature grid {f_hr.data.shape}")
    g = ops.channel_mean(f_hr)
    if use_hf:
        g = ops.add(g, gaussian.high_freq(g, kernel))
    a = ops.conv3x3(g, params.uhfa_w, params.uhfa_b)
    damp = ops.exp(ops.scale(u_lr, -1.0))
    return ops.sigmoid(ops.mul(a, damp))


def fuse(a1, a2, params):
    """Convex blend sigmoid(alpha_raw)*a1 + (1-sigmoid(alpha_raw))*a2."""
    alpha = ops.sigmoid(ops.read(params.alpha_raw))
    return ops.lerp(a1, a2, alpha)


def refine(f, a_final):
    """Gated residual f * (1 + A): attention amplifies, never erases."""
    return ops.add(ops.mul(f, a_final), f)


def afr_forward(features, lr_logits, hr_aux_logits, params, kernel, cfg):
    """Refine every feature level; returns (refined levels, intermediates).

    The logit-guided map is computed once at low resolution and resized per
    level; uncertainty maps are likewise resized to each level's grid.
    Disabled branches drop out of the blend; with both branches (or the
    whole module) disabled the features pass through untouched.
    """
    if not features:
        raise ShapeError("afr_forward: needs at least one feature level")

    enabled = cfg.enable_afr and (cfg.enable_cala or cfg.enable_uhfa)
    if not enabled:
        return list(features), AfrIntermediates(
            u_hr=None, u_lr=None, a1=None,
            levels=[LevelMaps(None, None, None) for _ in features])

    u_hr = u_lr = a1 = None
    if cfg.enable_cala:
        u_hr = uncertainty_from_logits(hr_aux_logits)
        if cfg.detach_uncertainty:
            u_hr = ops.detach(u_hr)
        h, w = lr_logits.data.shape[2:]
        a1 = cala(lr_logits, ops.resize_bilinear(u_hr, h, w), params, kernel,
                  use_hf=cfg.enable_hf_cala)
    if cfg.enable_uhfa:
        u_lr = uncertainty_from_logits(lr_logits)
        if cfg.detach_uncertainty:
            u_lr = ops.detach(u_lr)

    refined = []
    levels = []
    for f in features:
        h, w = f.data.shape[2:]
        a1_n = ops.resize_bilinear(a1, h, w) if a1 is not None else None
        a2_n = None
        if cfg.enable_uhfa:
            a2_n = uhfa(f, ops.resize_bilinear(u_lr, h, w), params, kernel,
                        use_hf=cfg.enable_hf_uhfa)
        if a1_n is not None and a2_n is not None:
            a_final = fuse(a1_n, a2_n, params)
        else:
            a_final = a1_n if a1_n is not None else a2_n
        refined.append(refine(f, a_final))
        levels.append(LevelMaps(a1=a1_n, a2=a2_n, a_final=a_final))

    return refined, AfrIntermediates(u_hr=u_hr, u_lr=u_lr, a1=a1, levels=levels)
