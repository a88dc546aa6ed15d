"""Central finite-difference verification of tape gradients.

A check takes a builder that constructs fresh parameters and a scalar loss
function of them, runs the tape backward once, then perturbs sampled
coordinates by +/-step and compares (f+ - f-)/(2*step) against the
accumulated analytic gradient.
"""

import numpy as np

from .tensor import Tape, Tensor, backward

DEFAULT_STEP = 1e-5
DEFAULT_TOL = 1e-4


def gradient_error(fn, params, rng, samples=100, step=DEFAULT_STEP):
    """Max relative error between analytic and numeric gradients.

    fn: () -> scalar Tensor, a pure function of the params' current values.
    Relative error uses a 1e-3 denominator floor so near-zero gradients are
    compared absolutely.
    """
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = fn()
    backward(tape, loss)
    analytic = [p.grad.data.copy() for p in params]

    sizes = [p.value.data.size for p in params]
    total = sum(sizes)
    chosen = rng.choice(total, size=min(samples, total), replace=False)

    bounds = np.cumsum([0] + sizes)
    worst = 0.0
    for flat in sorted(int(i) for i in chosen):
        pi = int(np.searchsorted(bounds, flat, side="right") - 1)
        li = flat - bounds[pi]
        p = params[pi]
        base = p.value

        arr = base.data.copy()
        arr.flat[li] += step
        p.value = Tensor._wrap(arr)
        f_plus = fn().item()

        arr = base.data.copy()
        arr.flat[li] -= step
        p.value = Tensor._wrap(arr)
        f_minus = fn().item()

        p.value = base
        numeric = (f_plus - f_minus) / (2.0 * step)
        ana = analytic[pi].flat[li]
        rel = abs(ana - numeric) / max(abs(ana), abs(numeric), 1e-3)
        worst = max(worst, rel)
    return worst


def check(make, seeds=(0, 1, 2, 3, 4), samples=100, step=DEFAULT_STEP, tol=DEFAULT_TOL):
    """Run gradient_error across seeds; return the worst error.

    make: (rng) -> (fn, params). Raises AssertionError above tol.
    """
    worst = 0.0
    for seed in seeds:
        rng = np.random.default_rng(seed)
        fn, params = make(rng)
        err = gradient_error(fn, params, rng, samples=samples, step=step)
        worst = max(worst, err)
    if worst >= tol:
        raise AssertionError(f"gradient check failed: max rel err {worst:.3e} >= {tol:.0e}")
    return worst


def _probed(op_fn, rng):
    """Dot the op's output with one fixed random tensor.

    Makes every output coordinate matter while keeping the loss a
    deterministic function of the parameters (the probe is drawn once).
    """
    from . import ops
    probe = Tensor(rng.normal(0.0, 1.0, op_fn().data.shape))
    return lambda: ops.sum_all(ops.mul(op_fn(), probe))


def standard_checks():
    """(name, make) builders covering every differentiable operation.

    Shared by the unit tests, the gradcheck CLI subcommand, and the
    acceptance suite. Inputs avoid relu/max kinks by construction (random
    continuous draws put ties and zero crossings at probability zero).
    """
    from types import SimpleNamespace

    from . import afr, gaussian, ops, segnet, train
    from .tensor import Param

    kernel = gaussian.build_kernel(1.0, 3)

    def tparam(rng, name, shape, lo=-1.5, hi=1.5):
        return Param(name, rng.uniform(lo, hi, shape))

    def unary(op, lo=-1.5, hi=1.5, away_from_zero=False):
        def make(rng):
            vals = rng.uniform(lo, hi, (2, 3, 5, 4))
            if away_from_zero:  # keep finite differences off the relu kink
                vals = rng.choice([-1.0, 1.0], vals.shape) * (np.abs(vals) + 0.1)
            x = Param("x", vals)
            return _probed(lambda: op(ops.read(x)), rng), [x]
        return make

    def binary(op, b_shape):
        def make(rng):
            a = tparam(rng, "a", (2, 3, 4, 4))
            b = tparam(rng, "b", b_shape)
            return _probed(lambda: op(ops.read(a), ops.read(b)), rng), [a, b]
        return make

    def make_conv1x1(rng):
        x = tparam(rng, "x", (2, 3, 4, 4))
        w = tparam(rng, "w", (5, 3))
        b = tparam(rng, "b", (5,))
        return _probed(lambda: ops.conv1x1(ops.read(x), w, b), rng), [x, w, b]

    def make_conv2d(rng):
        x = tparam(rng, "x", (2, 3, 6, 5))
        w = tparam(rng, "w", (4, 3, 3, 3))
        b = tparam(rng, "b", (4,))
        return _probed(lambda: ops.conv2d(ops.read(x), w, b), rng), [x, w, b]

    def make_conv3x3(rng):
        x = tparam(rng, "x", (2, 1, 5, 5))
        w = tparam(rng, "w", (1, 1, 3, 3))
        b = tparam(rng, "b", (1,))
        return _probed(lambda: ops.conv3x3(ops.read(x), w, b), rng), [x, w, b]

    def make_resize(up):
        def make(rng):
            x = tparam(rng, "x", (1, 2, 4, 5))
            h, w = (9, 7) if up else (2, 3)
            return _probed(lambda: ops.resize_bilinear(ops.read(x), h, w), rng), [x]
        return make

    def make_lerp(rng):
        a = tparam(rng, "a", (1, 2, 3, 3))
        b = tparam(rng, "b", (1, 2, 3, 3))
        t = tparam(rng, "t", ())
        fn = _probed(lambda: ops.lerp(ops.read(a), ops.read(b),
                                      ops.sigmoid(ops.read(t))), rng)
        return fn, [a, b, t]

    def make_smooth(rng):
        x = tparam(rng, "x", (2, 3, 5, 5))
        return _probed(lambda: gaussian.smooth(ops.read(x), kernel), rng), [x]

    def make_high_freq(rng):
        x = tparam(rng, "x", (2, 3, 5, 5))
        return _probed(lambda: gaussian.high_freq(ops.read(x), kernel), rng), [x]

    def make_uncertainty(rng):
        from .uncertainty import uncertainty_from_logits
        x = tparam(rng, "x", (2, 4, 4, 4))
        return _probed(lambda: uncertainty_from_logits(ops.read(x)), rng), [x]

    def make_cross_entropy(rng):
        x = tparam(rng, "x", (1, 4, 4, 4))
        labels = rng.integers(0, 4, (1, 4, 4))
        labels[0, 0, 0] = train.IGNORE_ID
        weight = rng.uniform(0.2, 1.0, (1, 4, 4))
        return lambda: train.cross_entropy(ops.read(x), labels, weight), [x]

    def afr_cfg(**over):
        cfg = SimpleNamespace(enable_afr=True, enable_cala=True, enable_uhfa=True,
                              enable_hf_cala=True, enable_hf_uhfa=True,
                              detach_uncertainty=False, hr_levels=1,
                              gaussian_sigma=1.0, gaussian_kernel_size=3)
        for k, v in over.items():
            setattr(cfg, k, v)
        return cfg

    def make_afr(rng):
        params = afr.AfrParams.create(4, rng)
        feats = tparam(rng, "f", (1, 6, 6, 6))
        lr_logits = tparam(rng, "ll", (1, 4, 3, 3))
        aux = tparam(rng, "aux", (1, 4, 6, 6))
        cfg = afr_cfg()

        def refined0():
            refined, _ = afr.afr_forward([ops.read(feats)], ops.read(lr_logits),
                                         ops.read(aux), params, kernel, cfg)
            return refined[0]

        return _probed(refined0, rng), [feats, lr_logits, aux] + params.params()

    def make_segnet(rng):
        net = segnet.NetParams.create(4, rng, lr_channels=4, hr_channels=4)
        img = Tensor(rng.uniform(0.0, 1.0, (1, 3, 4, 4)))
        labels = rng.integers(0, 4, (1, 4, 4))
        cfg = afr_cfg()

        def fn():
            logits, _ = segnet.forward(img, net, cfg)
            return train.cross_entropy(logits, labels)

        return fn, net.params()

    return [
        ("add", binary(ops.add, (2, 3, 4, 4))),
        ("add_broadcast", binary(ops.add, (2, 1, 4, 4))),
        ("sub", binary(ops.sub, (2, 3, 4, 4))),
        ("mul", binary(ops.mul, (2, 3, 4, 4))),
        ("mul_broadcast", binary(ops.mul, (2, 1, 4, 4))),
        ("scale", unary(lambda x: ops.scale(x, -1.7))),
        ("add_scalar", unary(lambda x: ops.add_scalar(x, 0.3))),
        ("exp", unary(ops.exp)),
        ("relu", unary(ops.relu, away_from_zero=True)),
        ("sigmoid", unary(ops.sigmoid, lo=-4.0, hi=4.0)),
        ("sum_all", unary(lambda x: ops.sum_all(x))),
        ("softmax_channels", unary(ops.softmax_channels)),
        ("channel_max", unary(ops.channel_max)),
        ("channel_mean", unary(ops.channel_mean)),
        ("conv1x1", make_conv1x1),
        ("conv2d", make_conv2d),
        ("conv3x3", make_conv3x3),
        ("resize_up", make_resize(True)),
        ("resize_down", make_resize(False)),
        ("lerp", make_lerp),
        ("smooth", make_smooth),
        ("high_freq", make_high_freq),
        ("uncertainty", make_uncertainty),
        ("cross_entropy", make_cross_entropy),
        ("afr_forward", make_afr),
        ("segnet_cross_entropy", make_segnet),
    ]
