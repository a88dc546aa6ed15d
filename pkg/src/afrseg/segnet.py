"""Two-branch toy segmentation network.

A low-resolution branch runs on a 2x downsampled image and supplies class
logits with global context; a high-resolution branch runs at full size and
supplies detail features. The refinement module gates the HR features with
attention derived from the LR logits and an auxiliary HR head, then a final
1x1 head maps the refined features to logits. The output averages the
upsampled LR logits with the HR logits.

Both encoder branches are two 3x3 conv layers with ReLU; no normalization
layers, so forwards are bit-deterministic.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import afr, gaussian, ops
from .tensor import Param, ShapeError


@dataclass
class NetParams:
    """All trainable parameters, student and teacher share the layout."""

    lr1_w: Param
    lr1_b: Param
    lr2_w: Param
    lr2_b: Param
    lr_head_w: Param
    lr_head_b: Param
    hr1_w: Param
    hr1_b: Param
    hr2_w: Param
    hr2_b: Param
    aux_head_w: Param
    aux_head_b: Param
    hr_head_w: Param
    hr_head_b: Param
    afr: afr.AfrParams

    @classmethod
    def create(cls, num_classes, rng, lr_channels=16, hr_channels=16):
        """Uniform +-1/sqrt(fan_in) weights, zero biases."""
        def conv(name, co, ci, k):
            bound = 1.0 / math.sqrt(ci * k * k)
            return (Param(f"{name}.w", rng.uniform(-bound, bound, (co, ci, k, k))),
                    Param(f"{name}.b", np.zeros(co)))

        def head(name, co, ci):
            bound = 1.0 / math.sqrt(ci)
            return (Param(f"{name}.w", rng.uniform(-bound, bound, (co, ci))),
                    Param(f"{name}.b", np.zeros(co)))

        lr1 = conv("net.lr1", lr_channels, 3, 3)
        lr2 = conv("net.lr2", lr_channels, lr_channels, 3)
        lr_head = head("net.lr_head", num_classes, lr_channels)
        hr1 = conv("net.hr1", hr_channels, 3, 3)
        hr2 = conv("net.hr2", hr_channels, hr_channels, 3)
        aux_head = head("net.aux_head", num_classes, hr_channels)
        hr_head = head("net.hr_head", num_classes, hr_channels)
        return cls(lr1_w=lr1[0], lr1_b=lr1[1], lr2_w=lr2[0], lr2_b=lr2[1],
                   lr_head_w=lr_head[0], lr_head_b=lr_head[1],
                   hr1_w=hr1[0], hr1_b=hr1[1], hr2_w=hr2[0], hr2_b=hr2[1],
                   aux_head_w=aux_head[0], aux_head_b=aux_head[1],
                   hr_head_w=hr_head[0], hr_head_b=hr_head[1],
                   afr=afr.AfrParams.create(num_classes, rng))

    def params(self):
        """Fixed traversal order; EMA pairing and checkpoints rely on it."""
        own = [self.lr1_w, self.lr1_b, self.lr2_w, self.lr2_b,
               self.lr_head_w, self.lr_head_b,
               self.hr1_w, self.hr1_b, self.hr2_w, self.hr2_b,
               self.aux_head_w, self.aux_head_b,
               self.hr_head_w, self.hr_head_b]
        return own + self.afr.params()

    @property
    def num_classes(self):
        return self.lr_head_w.value.data.shape[0]


@dataclass
class Intermediates:
    """Every tensor the forward pass produced besides the output."""

    lr_logits: object
    hr_aux_logits: object
    features: list
    refined: list
    hr_logits: object
    afr: afr.AfrIntermediates


_kernel_cache = {}


def _kernel(cfg):
    key = (cfg.gaussian_sigma, cfg.gaussian_kernel_size)
    if key not in _kernel_cache:
        _kernel_cache[key] = gaussian.build_kernel(*key)
    return _kernel_cache[key]


def forward(image, params, cfg):
    """Full forward pass; returns (final logits B,C,H,W, Intermediates)."""
    if image.data.ndim != 4 or image.data.shape[1] != 3:
        raise ShapeError(f"forward: image must be B,3,H,W, got {image.data.shape}")
    h, w = image.data.shape[2:]
    if h % 4 or w % 4:
        raise ShapeError(f"forward: spatial dims must be divisible by 4, got {h}x{w}")

    kernel = _kernel(cfg)
    lr_image = ops.resize_bilinear(image, h // 2, w // 2)
    f = ops.relu(ops.conv2d(lr_image, params.lr1_w, params.lr1_b))
    f = ops.relu(ops.conv2d(f, params.lr2_w, params.lr2_b))
    lr_logits = ops.conv1x1(f, params.lr_head_w, params.lr_head_b)

    g = ops.relu(ops.conv2d(image, params.hr1_w, params.hr1_b))
    g = ops.relu(ops.conv2d(g, params.hr2_w, params.hr2_b))
    hr_aux_logits = ops.conv1x1(g, params.aux_head_w, params.aux_head_b)

    features = [g]
    if cfg.hr_levels == 2:
        features.append(ops.resize_bilinear(g, h // 2, w // 2))
    refined, afr_inter = afr.afr_forward(
        features, lr_logits, hr_aux_logits, params.afr, kernel, cfg)

    hr_logits = ops.conv1x1(refined[0], params.hr_head_w, params.hr_head_b)
    final = ops.scale(ops.add(ops.resize_bilinear(lr_logits, h, w), hr_logits), 0.5)
    return final, Intermediates(lr_logits=lr_logits, hr_aux_logits=hr_aux_logits,
                                features=features, refined=refined,
                                hr_logits=hr_logits, afr=afr_inter)


def predict(image, params, cfg):
    """Per-pixel argmax class map (B,H,W int64); ties go to the lower index."""
    logits, _ = forward(image, params, cfg)
    return np.argmax(logits.data, axis=1)
