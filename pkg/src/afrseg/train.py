"""Mean-teacher self-training with mixing and masked consistency.

One step: the frozen teacher pseudo-labels a target batch with a per-image
quality score q (fraction of pixels above the confidence threshold), the
student trains on three fronts - labeled source, class-mixed source/target,
and patch-masked target against the pseudo-labels - then SGD updates the
student and the teacher follows by exponential moving average. Pseudo-labels
are produced outside the gradient tape, so no gradient ever reaches the
teacher.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from . import checkpoint, metrics, netpbm, ops, segnet, synthdata
from .checkpoint import CheckpointError
from .fileio import atomic_write_bytes
from .tensor import ShapeError, Tape, Tensor, active_tape, backward

IGNORE_ID = 255


def cross_entropy(logits, labels, weight=None, ignore_id=IGNORE_ID):
    """Mean over non-ignored pixels of -w * log softmax(logits)[label].

    labels: (B,H,W) integers in [0,C) or ignore_id; weight: optional
    per-pixel (B,H,W) reals. The mean divides by the pixel count, not the
    weight sum. Differentiable in logits only.
    """
    if logits.data.ndim != 4:
        raise ShapeError(f"cross_entropy: logits must be B,C,H,W, got {logits.data.shape}")
    b, c, h, w = logits.data.shape
    labels = np.asarray(labels)
    if labels.shape != (b, h, w):
        raise ShapeError(f"cross_entropy: labels {labels.shape} do not match {(b, h, w)}")
    valid = labels != ignore_id
    seen = labels[valid]
    if seen.size and (seen.min() < 0 or seen.max() >= c):
        raise ValueError(f"cross_entropy: label id outside [0,{c})")
    if weight is None:
        w_eff = valid.astype(np.float64)
    else:
        weight = np.asarray(weight, dtype=np.float64)
        if weight.shape != (b, h, w):
            raise ShapeError(f"cross_entropy: weight {weight.shape} does not match {(b, h, w)}")
        w_eff = np.where(valid, weight, 0.0)
    n = int(valid.sum())
    if n == 0:
        return Tensor(0.0)

    lv = np.where(valid, labels, 0)[:, None]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    ez = np.exp(z)
    se = ez.sum(axis=1, keepdims=True)
    logp = z - np.log(se)
    picked = np.take_along_axis(logp, lv, axis=1)[:, 0]
    out = Tensor._wrap(np.asarray(-(w_eff * picked).sum() / n))

    def vjp(g):
        p = ez / se
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, lv, 1.0, axis=1)
        return ((g / n) * w_eff[:, None] * (p - onehot),)

    ops._record(out, (logits,), vjp)
    return out


def ema_update(student, teacher, alpha):
    """teacher <- alpha * teacher + (1 - alpha) * student, elementwise."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"ema_update: alpha must lie in [0,1], got {alpha}")
    for s, t in zip(student.params(), teacher.params()):
        if s.name != t.name or s.value.data.shape != t.value.data.shape:
            raise ValueError(f"ema_update: parameter mismatch {s.name} vs {t.name}")
        t.assign(alpha * t.value.data + (1.0 - alpha) * s.value.data)


@dataclass
class PseudoLabelBatch:
    labels: np.ndarray   # (B,H,W) int64 argmax of teacher logits
    q: np.ndarray        # (B,) fraction of pixels with confidence above tau


def pseudo_label(target_images, teacher, tau, cfg):
    """Teacher argmax labels plus per-image quality, never on the tape."""
    if active_tape() is not None:
        raise RuntimeError("pseudo_label: teacher inference must run outside a tape")
    c = teacher.num_classes
    if not 1.0 / c < tau < 1.0:
        raise ValueError(f"pseudo_label: tau must lie in (1/{c}, 1), got {tau}")
    logits, _ = segnet.forward(target_images, teacher, cfg)
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    ez = np.exp(z)
    conf = (ez / ez.sum(axis=1, keepdims=True)).max(axis=1)
    return PseudoLabelBatch(labels=np.argmax(logits.data, axis=1),
                            q=(conf > tau).mean(axis=(1, 2)))


@dataclass
class MixResult:
    image: np.ndarray    # (3,H,W)
    label: np.ndarray    # (H,W)
    weight: np.ndarray   # (H,W): 1 on source-origin pixels, q on target-origin


def classmix(src_image, src_label, tgt_image, tgt_label, q, rng, chosen=None):
    """Paste a random half of the source classes onto the target sample.

    chosen overrides the class draw (tests force the endpoints with it).
    """
    si = np.asarray(getattr(src_image, "data", src_image))
    ti = np.asarray(getattr(tgt_image, "data", tgt_image))
    if si.shape != ti.shape or src_label.shape != tgt_label.shape \
            or si.shape[1:] != src_label.shape:
        raise ShapeError(f"classmix: mismatched shapes {si.shape}/{src_label.shape} "
                         f"vs {ti.shape}/{tgt_label.shape}")
    if chosen is None:
        classes = np.unique(src_label)
        chosen = rng.choice(classes, size=math.ceil(len(classes) / 2), replace=False)
    keep = np.isin(src_label, chosen)
    return MixResult(image=np.where(keep[None], si, ti),
                     label=np.where(keep, src_label, tgt_label),
                     weight=np.where(keep, 1.0, q))


@dataclass
class MaskPattern:
    patch: int
    dropped: np.ndarray  # boolean cell grid, True = blanked out
    ratio: float


def make_mask(h, w, b, r, rng):
    """Drop round(r * cells) distinct b x b cells of an h x w image."""
    if b <= 0 or h % b or w % b:
        raise ValueError(f"make_mask: patch {b} must divide {h}x{w}")
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"make_mask: ratio must lie in [0,1], got {r}")
    gh, gw = h // b, w // b
    k = int(round(r * gh * gw))
    dropped = np.zeros(gh * gw, dtype=bool)
    if k:
        dropped[rng.choice(gh * gw, size=k, replace=False)] = True
    return MaskPattern(patch=b, dropped=dropped.reshape(gh, gw), ratio=r)


def apply_mask(image, pattern, fill):
    """Blank the dropped cells to the fill color; keep the rest bitwise."""
    arr = np.asarray(getattr(image, "data", image))
    b = pattern.patch
    gh, gw = pattern.dropped.shape
    if arr.shape[-2:] != (gh * b, gw * b):
        raise ShapeError(f"apply_mask: pattern covers {(gh * b, gw * b)}, "
                         f"image is {arr.shape[-2:]}")
    pix = np.repeat(np.repeat(pattern.dropped, b, axis=0), b, axis=1)
    return np.where(pix[None], np.asarray(fill)[:, None, None], arr)


@dataclass
class TrainState:
    student: segnet.NetParams
    teacher: segnet.NetParams
    iteration: int
    momentum: dict               # param name -> velocity array
    rng: np.random.Generator


@dataclass
class StepLosses:
    loss_s: float
    loss_t: float
    loss_m: float
    total: float
    q_mean: float


def create_state(cfg):
    """Fresh student, teacher initialized as an exact copy, zero momentum."""
    init_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    student = segnet.NetParams.create(synthdata.NUM_CLASSES, init_rng,
                                      cfg.lr_channels, cfg.hr_channels)
    shadow_rng = np.random.default_rng(0)
    teacher = segnet.NetParams.create(synthdata.NUM_CLASSES, shadow_rng,
                                      cfg.lr_channels, cfg.hr_channels)
    ema_update(student, teacher, 0.0)
    momentum = {p.name: np.zeros(p.value.data.shape) for p in student.params()}
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    return TrainState(student=student, teacher=teacher, iteration=0,
                      momentum=momentum, rng=rng)


def sgd_step(state, lr, momentum):
    """Classic momentum: v <- mu v + g; p <- p - lr v. Grads left in place."""
    for p in state.student.params():
        v = state.momentum[p.name]
        v *= momentum
        v += p.grad.data
        p.assign(p.value.data - lr * v)


def ema_alpha_at(iteration, cap):
    """Warmup schedule: the teacher tracks the student closely at first.

    alpha ramps as 1 - 1/(t+2) up to the configured cap, so early
    pseudo-labels come from a teacher that has already left its random
    init. A cap of exactly 1 freezes the teacher instead.
    """
    return min(1.0 - 1.0 / (iteration + 2), cap)


def train_step(state, src_images, src_labels, tgt_images, cfg, fill):
    """One optimization step; returns the component losses."""
    use_teacher = cfg.enable_target_loss or cfg.enable_masked_loss
    plb = None
    mixed_images = mixed_labels = mixed_weight = None
    masked_images = masked_weight = None
    if use_teacher:
        plb = pseudo_label(tgt_images, state.teacher, cfg.tau, cfg)
        b, _, h, w = tgt_images.data.shape
        if cfg.enable_target_loss:
            mixes = [classmix(src_images.data[i], src_labels[i], tgt_images.data[i],
                              plb.labels[i], plb.q[i], state.rng)
                     for i in range(b)]
            mixed_images = Tensor(np.stack([m.image for m in mixes]))
            mixed_labels = np.stack([m.label for m in mixes])
            if not cfg.unweighted_mix:
                mixed_weight = np.stack([m.weight for m in mixes])
        if cfg.enable_masked_loss:
            patterns = [make_mask(h, w, cfg.mask_patch, cfg.mask_ratio, state.rng)
                        for _ in range(b)]
            masked_images = Tensor(np.stack(
                [apply_mask(tgt_images.data[i], patterns[i], fill) for i in range(b)]))
            masked_weight = np.broadcast_to(plb.q[:, None, None], (b, h, w))

    loss_t = loss_m = None
    with Tape() as tape:
        logits_s, _ = segnet.forward(src_images, state.student, cfg)
        loss_s = cross_entropy(logits_s, src_labels)
        total = loss_s
        if cfg.enable_target_loss:
            logits_t, _ = segnet.forward(mixed_images, state.student, cfg)
            loss_t = cross_entropy(logits_t, mixed_labels, mixed_weight)
            total = ops.add(total, loss_t)
        if cfg.enable_masked_loss:
            logits_m, _ = segnet.forward(masked_images, state.student, cfg)
            loss_m = cross_entropy(logits_m, plb.labels, masked_weight)
            term = loss_m if cfg.lambda_mask == 1.0 else ops.scale(loss_m, cfg.lambda_mask)
            total = ops.add(total, term)
    backward(tape, total)
    sgd_step(state, cfg.lr, cfg.momentum)
    for p in state.student.params():
        p.zero_grad()
    if cfg.ema_alpha < 1.0:
        ema_update(state.student, state.teacher,
                   ema_alpha_at(state.iteration, cfg.ema_alpha))
    state.iteration += 1
    return StepLosses(
        loss_s=loss_s.item(),
        loss_t=0.0 if loss_t is None else loss_t.item(),
        loss_m=0.0 if loss_m is None else loss_m.item(),
        total=total.item(),
        q_mean=0.0 if plb is None else float(plb.q.mean()))


def evaluate(params, cfg, images, labels):
    """mIoU of argmax predictions over an evaluation pool."""
    cm = metrics.ConfusionMatrix(synthdata.NUM_CLASSES)
    pred = segnet.predict(Tensor(images), params, cfg)
    cm.accumulate(pred, labels)
    return cm.iou()


@dataclass
class DataPools:
    src_images: np.ndarray
    src_labels: np.ndarray
    tgt_images: np.ndarray
    eval_images: np.ndarray
    eval_labels: np.ndarray
    fill: np.ndarray         # target-pool mean color, the mask fill value


def build_pools(cfg):
    """Pregenerate disjoint source / target / eval index ranges."""
    spec = synthdata.SceneSpec(cfg.image_size, cfg.image_size,
                               cfg.shapes_min, cfg.shapes_max, cfg.seed)
    shift = synthdata.DomainShift(
        (cfg.shift_offset_r, cfg.shift_offset_g, cfg.shift_offset_b),
        cfg.shift_brightness, cfg.shift_noise_sigma, cfg.shift_stripe_amplitude)

    def gen(domain, start, n, with_labels):
        imgs = np.empty((n, 3, cfg.image_size, cfg.image_size))
        labs = np.empty((n, cfg.image_size, cfg.image_size), dtype=np.int64)
        for i in range(n):
            img, lab = synthdata.generate(spec, domain, start + i, shift)
            imgs[i] = img.data
            labs[i] = lab
        return (imgs, labs) if with_labels else (imgs, None)

    src_images, src_labels = gen("source", 0, cfg.n_source, True)
    tgt_images, _ = gen("target", cfg.n_source, cfg.n_target, False)
    eval_images, eval_labels = gen("target", cfg.n_source + cfg.n_target,
                                   cfg.n_eval, True)
    return DataPools(src_images=src_images, src_labels=src_labels,
                     tgt_images=tgt_images, eval_images=eval_images,
                     eval_labels=eval_labels, fill=tgt_images.mean(axis=(0, 2, 3)))


def dump_attention(params, cfg, image, out_dir, tag):
    """Write the level-0 attention maps (and branch difference) as gray images."""
    _, inter = segnet.forward(image, params, cfg)
    lvl = inter.afr.levels[0]
    for name, t in (("a1", lvl.a1), ("a2", lvl.a2), ("a_final", lvl.a_final)):
        if t is not None:
            netpbm.write_image(os.path.join(out_dir, f"{tag}_{name}.pgm"),
                               t.data[0, 0], "gray")
    if lvl.a1 is not None and lvl.a2 is not None:
        netpbm.write_image(os.path.join(out_dir, f"{tag}_diff.pgm"),
                           lvl.a1.data[0, 0] - lvl.a2.data[0, 0], "gray")


def state_tensors(state):
    out = [("student/" + p.name, p.value.data) for p in state.student.params()]
    out += [("teacher/" + p.name, p.value.data) for p in state.teacher.params()]
    out += [("momentum/" + p.name, state.momentum[p.name])
            for p in state.student.params()]
    return out


def save_state(path, state):
    checkpoint.save(path, state_tensors(state), state.iteration, state.rng)


def load_state(path, cfg):
    """Rebuild a TrainState; every expected tensor must match by name+shape."""
    tensors, iteration, rng = checkpoint.load(path)
    state = create_state(cfg)
    got = dict(tensors)
    if len(got) != len(tensors):
        raise CheckpointError("duplicate tensor names")
    expected = state_tensors(state)
    if len(got) != len(expected):
        raise CheckpointError(f"expected {len(expected)} tensors, found {len(got)}")
    for name, cur in expected:
        if name not in got:
            raise CheckpointError(f"missing tensor {name}")
        if got[name].shape != cur.shape:
            raise CheckpointError(
                f"{name}: shape {got[name].shape} does not match {cur.shape}")
    for p in state.student.params():
        p.assign(got["student/" + p.name])
    for p in state.teacher.params():
        p.assign(got["teacher/" + p.name])
    for name in state.momentum:
        state.momentum[name] = got["momentum/" + name].copy()
    state.iteration = iteration
    state.rng = rng
    return state


def _metric_line(t, miou, sums, steps):
    k = max(steps, 1)
    return (f"iter {t} mIoU {miou:.6g} loss_s {sums[0] / k:.6g} "
            f"loss_t {sums[1] / k:.6g} loss_m {sums[2] / k:.6g} "
            f"q_mean {sums[3] / k:.6g}")


def train_loop(cfg):
    """Run cfg.iterations steps with periodic eval/checkpoint/dump output.

    Returns (final TrainState, metric lines). mIoU is the teacher's score on
    the held-out target pool; loss columns are means over the steps since
    the previous evaluation (the iteration-0 line reports zeros since no
    step has run).
    """
    os.makedirs(cfg.output_dir, exist_ok=True)
    pools = build_pools(cfg)
    state = create_state(cfg)
    lines = []
    metrics_path = os.path.join(cfg.output_dir, "metrics.txt")

    def emit(t, sums, steps):
        # the smoothed teacher is the deployed model, so it is what we score
        _, miou = evaluate(state.teacher, cfg, pools.eval_images, pools.eval_labels)
        lines.append(_metric_line(t, miou, sums, steps))
        atomic_write_bytes(metrics_path, ("\n".join(lines) + "\n").encode())

    if cfg.iterations == 0:
        atomic_write_bytes(metrics_path, b"")
        return state, lines

    sums = [0.0, 0.0, 0.0, 0.0]
    steps = 0
    emit(0, sums, steps)
    for t in range(1, cfg.iterations + 1):
        si = state.rng.integers(0, cfg.n_source, size=cfg.batch_size)
        ti = state.rng.integers(0, cfg.n_target, size=cfg.batch_size)
        losses = train_step(state, Tensor(pools.src_images[si]),
                            pools.src_labels[si], Tensor(pools.tgt_images[ti]),
                            cfg, pools.fill)
        sums[0] += losses.loss_s
        sums[1] += losses.loss_t
        sums[2] += losses.loss_m
        sums[3] += losses.q_mean
        steps += 1
        if t % cfg.eval_interval == 0 or t == cfg.iterations:
            emit(t, sums, steps)
            sums = [0.0, 0.0, 0.0, 0.0]
            steps = 0
        if cfg.checkpoint_interval and t % cfg.checkpoint_interval == 0 \
                and t != cfg.iterations:
            save_state(os.path.join(cfg.output_dir, f"checkpoint_{t:06d}.bin"), state)
        if cfg.attention_interval and t % cfg.attention_interval == 0:
            dump_attention(state.student, cfg, Tensor(pools.eval_images[:1]),
                           cfg.output_dir, f"iter{t:06d}")
    save_state(os.path.join(cfg.output_dir, "checkpoint_final.bin"), state)
    return state, lines
