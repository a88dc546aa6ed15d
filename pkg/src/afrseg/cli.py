"""Command-line entry point.

Subcommands: train, eval, gradcheck, dump-attention, gen-data. Usage errors
exit 2 (argparse); internal failures print to stderr and exit 1.
"""

import argparse
import os
import sys

from . import config, gradcheck, netpbm, synthdata, train
from .tensor import Tensor

CLASS_NAMES = ("background", "disk", "rectangle", "thin-bar")


def _config_from(args):
    cfg = config.load(args.config)
    if args.set:
        cfg = config.apply_overrides(cfg, args.set)
    return cfg


def _add_config_args(sub, config_required=True):
    sub.add_argument("--config", required=config_required,
                     help="path to a key = value config file")
    sub.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override a config key (repeatable)")


def cmd_train(args):
    cfg = _config_from(args)
    _, lines = train.train_loop(cfg)
    for line in lines:
        print(line)
    return 0


def iou_table(per_class, miou):
    width = max(len(n) for n in CLASS_NAMES + ("mIoU",))
    rows = [f"{'class':<{width}}  IoU"]
    for name, v in zip(CLASS_NAMES, per_class):
        rows.append(f"{name:<{width}}  " + ("absent" if v is None else f"{v:.4f}"))
    rows.append(f"{'mIoU':<{width}}  {miou:.4f}")
    return "\n".join(rows)


def cmd_eval(args):
    cfg = _config_from(args)
    state = train.load_state(args.checkpoint, cfg)
    pools = train.build_pools(cfg)
    per_class, miou = train.evaluate(state.teacher, cfg,
                                     pools.eval_images, pools.eval_labels)
    print(iou_table(per_class, miou))
    return 0


def cmd_gradcheck(args):
    failures = 0
    for name, make in gradcheck.standard_checks():
        try:
            err = gradcheck.check(make, samples=args.samples)
            print(f"ok   {name:22s} max rel err {err:.2e}")
        except AssertionError as e:
            failures += 1
            print(f"FAIL {name:22s} {e}")
    if failures:
        print(f"{failures} gradient check(s) failed", file=sys.stderr)
        return 1
    return 0


def cmd_dump_attention(args):
    cfg = _config_from(args)
    state = train.load_state(args.checkpoint, cfg)
    pools = train.build_pools(cfg)
    if not 0 <= args.index < len(pools.eval_images):
        raise ValueError(f"index {args.index} outside the eval pool "
                         f"[0,{len(pools.eval_images)})")
    out_dir = args.out or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    train.dump_attention(state.teacher, cfg,
                         Tensor(pools.eval_images[args.index:args.index + 1]),
                         out_dir, f"idx{args.index:04d}")
    return 0


def cmd_gen_data(args):
    cfg = _config_from(args)
    spec = synthdata.SceneSpec(cfg.image_size, cfg.image_size,
                               cfg.shapes_min, cfg.shapes_max, cfg.seed)
    shift = synthdata.DomainShift(
        (cfg.shift_offset_r, cfg.shift_offset_g, cfg.shift_offset_b),
        cfg.shift_brightness, cfg.shift_noise_sigma, cfg.shift_stripe_amplitude)
    os.makedirs(args.out, exist_ok=True)
    for i in range(args.count):
        img, lab = synthdata.generate(spec, args.domain, i, shift)
        stem = os.path.join(args.out, f"{args.domain}_{i:04d}")
        netpbm.write_image(stem + ".ppm", img.data, "rgb")
        netpbm.write_image(stem + "_label.ppm", lab, "label")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="afrseg",
        description="attention-refined self-training segmentation, desk scale")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("train", help="run the training loop")
    _add_config_args(p)
    p.set_defaults(fn=cmd_train)

    p = subs.add_parser("eval", help="per-class IoU of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    _add_config_args(p)
    p.set_defaults(fn=cmd_eval)

    p = subs.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--samples", type=int, default=100)
    p.set_defaults(fn=cmd_gradcheck)

    p = subs.add_parser("dump-attention", help="write attention maps as images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--index", type=int, default=0, help="eval-pool image index")
    p.add_argument("--out", default=None, help="output directory (default: config)")
    _add_config_args(p)
    p.set_defaults(fn=cmd_dump_attention)

    p = subs.add_parser("gen-data", help="export sample image/label pairs")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--domain", choices=("source", "target"), default="source")
    _add_config_args(p)
    p.set_defaults(fn=cmd_gen_data)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
