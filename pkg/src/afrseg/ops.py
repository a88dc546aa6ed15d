"""Differentiable operations over Tensors.

Every op computes its value eagerly with numpy (or the compiled kernels)
and, when a tape is active, records a closure that maps the output
cotangent to input cotangents. Feature maps are B x C x H x W.

Broadcasting is deliberately narrow: binary elementwise ops accept equal
shapes, or a single-channel second operand (B x 1 x H x W) against a
multi-channel first operand. Anything wider is a shape error.
"""

import numpy as np

from . import kernels
from .tensor import Param, ShapeError, Tensor, active_tape

_SIG_LO = np.nextafter(0.0, 1.0)
_SIG_HI = np.nextafter(1.0, 0.0)


def _record(output, inputs, vjp):
    tape = active_tape()
    if tape is not None:
        tape.record(output, inputs, vjp)


def read(param):
    """The param's value as a Tensor, watched by the active tape."""
    tape = active_tape()
    if tape is not None:
        tape.watch(param)
    return param.value


def detach(x):
    """A copy of x that blocks gradient flow."""
    return Tensor._wrap(x.data)


def _require_4d(x, op):
    if x.data.ndim != 4:
        raise ShapeError(f"{op}: expected a 4-d B,C,H,W tensor, got shape {x.data.shape}")


def _pair_broadcast(a, b, op):
    """True when b broadcasts over a's channel axis; ShapeError otherwise."""
    if a.data.shape == b.data.shape:
        return False
    sa, sb = a.data.shape, b.data.shape
    if (len(sa) == 4 and len(sb) == 4 and sb[1] == 1 and sa[1] > 1
            and sa[0] == sb[0] and sa[2:] == sb[2:]):
        return True
    raise ShapeError(f"{op}: incompatible shapes {sa} and {sb}")


def add(a, b):
    bcast = _pair_broadcast(a, b, "add")
    out = Tensor._wrap(a.data + b.data)

    def vjp(g):
        gb = g.sum(axis=1, keepdims=True) if bcast else g
        return g, gb

    _record(out, (a, b), vjp)
    return out


def sub(a, b):
    bcast = _pair_broadcast(a, b, "sub")
    out = Tensor._wrap(a.data - b.data)

    def vjp(g):
        gb = (-g).sum(axis=1, keepdims=True) if bcast else -g
        return g, gb

    _record(out, (a, b), vjp)
    return out


def mul(a, b):
    bcast = _pair_broadcast(a, b, "mul")
    ad, bd = a.data, b.data
    out = Tensor._wrap(ad * bd)

    def vjp(g):
        ga = g * bd
        gb = g * ad
        if bcast:
            gb = gb.sum(axis=1, keepdims=True)
        return ga, gb

    _record(out, (a, b), vjp)
    return out


def scale(x, c):
    """x * c for a plain float constant c."""
    c = float(c)
    out = Tensor._wrap(x.data * c)
    _record(out, (x,), lambda g: (g * c,))
    return out


def add_scalar(x, c):
    """x + c for a plain float constant c."""
    out = Tensor._wrap(x.data + float(c))
    _record(out, (x,), lambda g: (g,))
    return out


def exp(x):
    od = np.exp(x.data)
    out = Tensor._wrap(od)
    _record(out, (x,), lambda g: (g * od,))
    return out


def relu(x):
    mask = x.data > 0
    out = Tensor._wrap(np.where(mask, x.data, 0.0))
    _record(out, (x,), lambda g: (g * mask,))
    return out


def sigmoid(x):
    """Logistic function, saturating to the nearest values inside (0,1)."""
    t = np.exp(-np.abs(x.data))
    od = np.where(x.data >= 0, 1.0 / (1.0 + t), t / (1.0 + t))
    od = np.clip(od, _SIG_LO, _SIG_HI)
    out = Tensor._wrap(od)
    _record(out, (x,), lambda g: (g * od * (1.0 - od),))
    return out


def sum_all(x):
    """Sum of all elements as a 0-d scalar."""
    shape = x.data.shape
    out = Tensor._wrap(np.asarray(x.data.sum()))
    _record(out, (x,), lambda g: (np.broadcast_to(g, shape),))
    return out


def softmax_channels(x):
    """Softmax along the channel axis of a B x C x H x W tensor, C >= 2."""
    _require_4d(x, "softmax_channels")
    if x.data.shape[1] < 2:
        raise ShapeError(f"softmax_channels: needs C >= 2, got C={x.data.shape[1]}")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    od = e / e.sum(axis=1, keepdims=True)
    out = Tensor._wrap(od)

    def vjp(g):
        dot = (g * od).sum(axis=1, keepdims=True)
        return (od * (g - dot),)

    _record(out, (x,), vjp)
    return out


def channel_max(x):
    """Channelwise maximum, B x 1 x H x W; ties route gradient to the lowest index."""
    _require_4d(x, "channel_max")
    od = x.data.max(axis=1, keepdims=True)
    arg = x.data.argmax(axis=1)
    shape = x.data.shape
    out = Tensor._wrap(od)

    def vjp(g):
        gx = np.zeros(shape)
        np.put_along_axis(gx, arg[:, None], g, axis=1)
        return (gx,)

    _record(out, (x,), vjp)
    return out


def channel_mean(x):
    """Mean over the channel axis, B x 1 x H x W."""
    _require_4d(x, "channel_mean")
    c = x.data.shape[1]
    shape = x.data.shape
    out = Tensor._wrap(x.data.mean(axis=1, keepdims=True))
    _record(out, (x,), lambda g: (np.broadcast_to(g / c, shape),))
    return out


def conv1x1(x, weight, bias=None):
    """Pointwise channel projection: weight (Co,Ci), optional bias (Co,)."""
    _require_4d(x, "conv1x1")
    wv = read(weight)
    if wv.data.ndim != 2 or wv.data.shape[1] != x.data.shape[1]:
        raise ShapeError(f"conv1x1: weight {wv.data.shape} does not match input "
                         f"channels {x.data.shape[1]}")
    b_, ci, h, w_ = x.data.shape
    co = wv.data.shape[0]
    wd = wv.data
    xd = x.data
    od = np.matmul(wd, xd.reshape(b_, ci, h * w_)).reshape(b_, co, h, w_)
    if bias is not None:
        bv = read(bias)
        if bv.data.shape != (co,):
            raise ShapeError(f"conv1x1: bias {bv.data.shape} does not match ({co},)")
        od = od + bv.data[None, :, None, None]
    out = Tensor._wrap(od)

    if bias is None:
        def vjp(g):
            gr = g.reshape(b_, co, h * w_)
            gx = np.matmul(wd.T, gr).reshape(b_, ci, h, w_)
            gw = np.tensordot(g, xd, axes=([0, 2, 3], [0, 2, 3]))
            return gx, gw

        _record(out, (x, wv), vjp)
    else:
        def vjp(g):
            gr = g.reshape(b_, co, h * w_)
            gx = np.matmul(wd.T, gr).reshape(b_, ci, h, w_)
            gw = np.tensordot(g, xd, axes=([0, 2, 3], [0, 2, 3]))
            gb = g.sum(axis=(0, 2, 3))
            return gx, gw, gb

        _record(out, (x, wv, bv), vjp)
    return out


def _conv2d(x, weight, bias, op):
    wv = read(weight)
    wd = wv.data
    if wd.ndim != 4 or wd.shape[2] != wd.shape[3] or wd.shape[2] % 2 == 0:
        raise ShapeError(f"{op}: weight must be Co,Ci,K,K with odd K, got {wd.shape}")
    if wd.shape[1] != x.data.shape[1]:
        raise ShapeError(f"{op}: weight {wd.shape} does not match input channels "
                         f"{x.data.shape[1]}")
    bv = read(bias) if bias is not None else None
    if bv is not None and bv.data.shape != (wd.shape[0],):
        raise ShapeError(f"{op}: bias {bv.data.shape} does not match ({wd.shape[0]},)")
    xd = x.data
    od = kernels.conv2d_forward(xd, wd, None if bv is None else bv.data)
    out = Tensor._wrap(od)

    if bv is None:
        def vjp(g):
            gx, gw, _ = kernels.conv2d_backward(xd, wd, np.ascontiguousarray(g))
            return gx, gw

        _record(out, (x, wv), vjp)
    else:
        def vjp(g):
            gx, gw, gb = kernels.conv2d_backward(xd, wd, np.ascontiguousarray(g))
            return gx, gw, gb

        _record(out, (x, wv, bv), vjp)
    return out


def conv2d(x, weight, bias=None):
    """General odd-k correlation with reflect padding, any Ci -> Co."""
    _require_4d(x, "conv2d")
    return _conv2d(x, weight, bias, "conv2d")


def conv3x3(x, weight, bias=None):
    """Single-channel 3x3 correlation with reflect padding (1 -> 1 only)."""
    _require_4d(x, "conv3x3")
    if x.data.shape[1] != 1:
        raise ShapeError(f"conv3x3: expects a single-channel input, got C={x.data.shape[1]}")
    wv = weight.value.data
    if wv.shape != (1, 1, 3, 3):
        raise ShapeError(f"conv3x3: weight must be (1,1,3,3), got {wv.shape}")
    return _conv2d(x, weight, bias, "conv3x3")


def _axis_lerp(n_in, n_out):
    # half-pixel-center mapping with edge clamping
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    i0 = np.minimum(np.floor(src).astype(np.intp), n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    w1 = src - i0
    return i0, i1, 1.0 - w1, w1


def _unlerp(g, i0, i1, w0, w1, n_in, axis):
    shape = list(g.shape)
    shape[axis] = n_in
    out = np.zeros(shape)
    om = np.moveaxis(out, axis, 0)
    gm = np.moveaxis(g, axis, 0)
    wshape = (-1,) + (1,) * (gm.ndim - 1)
    np.add.at(om, i0, gm * w0.reshape(wshape))
    np.add.at(om, i1, gm * w1.reshape(wshape))
    return out


def resize_bilinear(x, out_h, out_w):
    """Bilinear resize of the spatial axes (half-pixel centers, edges clamped).

    Resizing to the input size is an exact identity.
    """
    _require_4d(x, "resize_bilinear")
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"resize_bilinear: target size {out_h}x{out_w} must be >= 1")
    b, c, h, w = x.data.shape
    if (out_h, out_w) == (h, w):
        out = Tensor._wrap(x.data.copy())
        _record(out, (x,), lambda g: (g,))
        return out

    r0, r1, rw0, rw1 = _axis_lerp(h, out_h)
    c0, c1, cw0, cw1 = _axis_lerp(w, out_w)
    mid = x.data[:, :, r0, :] * rw0[:, None] + x.data[:, :, r1, :] * rw1[:, None]
    od = mid[:, :, :, c0] * cw0 + mid[:, :, :, c1] * cw1
    out = Tensor._wrap(od)

    def vjp(g):
        gm = _unlerp(g, c0, c1, cw0, cw1, w, axis=3)
        return (_unlerp(gm, r0, r1, rw0, rw1, h, axis=2),)

    _record(out, (x,), vjp)
    return out


def lerp(a, b, t):
    """t*a + (1-t)*b for a 0-d scalar tensor t; gradients flow to all three."""
    if t.data.ndim != 0:
        raise ShapeError(f"lerp: t must be a 0-d scalar, got shape {t.data.shape}")
    if a.data.shape != b.data.shape:
        raise ShapeError(f"lerp: endpoint shapes differ: {a.data.shape} vs {b.data.shape}")
    ad, bd, td = a.data, b.data, float(t.data)
    out = Tensor._wrap(td * ad + (1.0 - td) * bd)

    def vjp(g):
        return g * td, g * (1.0 - td), np.asarray((g * (ad - bd)).sum())

    _record(out, (a, b, t), vjp)
    return out
