"""Procedural two-domain segmentation data.

Scenes are flat-color shapes on a flat background: disks, rectangles, and
thin bars one to three pixels wide (the small-structure probe). Content is a
pure function of (seed, index); the target domain applies an appearance
shift (color offset, dimming, horizontal stripes, pixel noise) to the image
only, so source and target labels at the same index are identical.
"""

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor

NUM_CLASSES = 4  # background, disk, rectangle, thin bar

# per-class base colors, jittered per image
PALETTE = np.array([
    [0.45, 0.50, 0.55],   # background
    [0.75, 0.35, 0.35],   # disk
    [0.35, 0.70, 0.40],   # rectangle
    [0.80, 0.75, 0.35],   # thin bar
])
COLOR_JITTER = 0.08
BAR_FORCE_PROB = 0.4    # chance the first shape is forced to be a bar


@dataclass(frozen=True)
class SceneSpec:
    height: int = 32
    width: int = 32
    shapes_min: int = 1
    shapes_max: int = 4
    seed: int = 0


@dataclass(frozen=True)
class DomainShift:
    color_offset: tuple = (0.15, 0.0, -0.15)
    brightness: float = 0.8
    noise_sigma: float = 0.05
    stripe_amplitude: float = 0.05
    stripe_period: int = 8


def _paint(label, rng, spec, cls):
    h, w = spec.height, spec.width
    yy, xx = np.ogrid[:h, :w]
    if cls == 1:
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        r = rng.uniform(2.0, h / 4.0)
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    elif cls == 2:
        rh, rw = rng.integers(3, h // 2 + 1), rng.integers(3, w // 2 + 1)
        y0, x0 = rng.integers(0, h - rh + 1), rng.integers(0, w - rw + 1)
        mask = (yy >= y0) & (yy < y0 + rh) & (xx >= x0) & (xx < x0 + rw)
    else:
        thick = int(rng.integers(1, 4))
        length = rng.integers(h // 2, h + 1)
        if rng.uniform() < 0.5:
            y0 = rng.integers(0, h - thick + 1)
            x0 = rng.integers(0, w - length + 1)
            mask = (yy >= y0) & (yy < y0 + thick) & (xx >= x0) & (xx < x0 + length)
        else:
            x0 = rng.integers(0, w - thick + 1)
            y0 = rng.integers(0, h - length + 1)
            mask = (xx >= x0) & (xx < x0 + thick) & (yy >= y0) & (yy < y0 + length)
    label[mask] = cls


def generate(spec, domain, index, shift=DomainShift()):
    """One (image 3xHxW in [0,1], label HxW int64) pair, bit-deterministic."""
    if domain not in ("source", "target"):
        raise ValueError(f"generate: unknown domain {domain!r}")
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, index]))

    colors = np.clip(
        PALETTE + rng.uniform(-COLOR_JITTER, COLOR_JITTER, PALETTE.shape), 0.0, 1.0)
    label = np.zeros((spec.height, spec.width), dtype=np.int64)
    n_shapes = int(rng.integers(spec.shapes_min, spec.shapes_max + 1))
    force_bar = rng.uniform() < BAR_FORCE_PROB
    for s in range(n_shapes):
        cls = 3 if (s == 0 and force_bar) else int(rng.integers(1, NUM_CLASSES))
        _paint(label, rng, spec, cls)
    img = colors[label].transpose(2, 0, 1).copy()

    if domain == "target":
        srng = np.random.default_rng(np.random.SeedSequence([spec.seed, index, 1]))
        img = (img + np.asarray(shift.color_offset)[:, None, None]) * shift.brightness
        rows = np.arange(spec.height)
        stripes = shift.stripe_amplitude * np.sin(2.0 * np.pi * rows / shift.stripe_period)
        img = img + stripes[None, :, None]
        img = img + srng.normal(0.0, shift.noise_sigma, img.shape)
        img = np.clip(img, 0.0, 1.0)
    return Tensor(img), label


def dataset_mean(spec, domain, n, shift=DomainShift()):
    """Per-channel mean color over the first n images."""
    if n < 1:
        raise ValueError("dataset_mean: n must be >= 1")
    acc = np.zeros(3)
    for i in range(n):
        img, _ = generate(spec, domain, i, shift)
        acc += img.data.mean(axis=(1, 2))
    return acc / n
