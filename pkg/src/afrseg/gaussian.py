"""Gaussian smoothing and high-frequency residuals.

The kernel weights follow exp(-(i^2+j^2)/(2*sigma^2)) on an odd square grid
centered at zero, normalized to sum to one; the normalization cancels any
leading constant. Weights are baked constants, not parameters: smoothing is
differentiable in the image but never in the kernel. Padding is reflect, so
a constant image smooths to itself and its high-frequency residual is zero.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels, ops
from .tensor import ShapeError, Tensor


@dataclass(frozen=True)
class GaussianKernel:
    """Odd square smoothing kernel; weights sum to 1."""

    size: int
    sigma: float
    weights: np.ndarray = field(repr=False)


def build_kernel(sigma=1.0, size=3):
    """Normalized Gaussian weights on a size x size grid."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 1, got {size}")
    half = size // 2
    ax = np.arange(-half, half + 1, dtype=np.float64)
    sq = ax[:, None] ** 2 + ax[None, :] ** 2
    w = np.exp(-sq / (2.0 * sigma * sigma))
    w /= w.sum()
    w.flags.writeable = False
    return GaussianKernel(size=size, sigma=float(sigma), weights=w)


def smooth(x, kernel):
    """Correlate every channel with the kernel under reflect padding."""
    if x.data.ndim != 4:
        raise ShapeError(f"smooth: expected B,C,H,W input, got shape {x.data.shape}")
    k2 = kernel.weights
    od = kernels.depthwise_forward(x.data, k2)
    out = Tensor._wrap(od)

    def vjp(g):
        return (kernels.depthwise_backward_input(k2, np.ascontiguousarray(g)),)

    ops._record(out, (x,), vjp)
    return out


def high_freq(x, kernel):
    """The residual x - smooth(x); exactly zero for constant inputs."""
    return ops.sub(x, smooth(x, kernel))
