"""Flat `key = value` run configuration.

One key per line, `#` starts a comment, unknown keys are rejected, every
value is range-checked. serialize() round-trips through parse() exactly
(floats are written with repr).
"""

from dataclasses import dataclass, fields, replace


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    # dataset
    image_size: int = 32
    shapes_min: int = 1
    shapes_max: int = 4
    n_source: int = 200
    n_target: int = 200
    n_eval: int = 50
    shift_offset_r: float = 0.15
    shift_offset_g: float = 0.0
    shift_offset_b: float = -0.15
    shift_brightness: float = 0.8
    shift_noise_sigma: float = 0.05
    shift_stripe_amplitude: float = 0.05
    # network
    lr_channels: int = 16
    hr_channels: int = 16
    hr_levels: int = 1
    gaussian_sigma: float = 1.0
    gaussian_kernel_size: int = 3
    # refinement ablations
    enable_afr: bool = True
    enable_cala: bool = True
    enable_uhfa: bool = True
    enable_hf_cala: bool = True
    enable_hf_uhfa: bool = True
    detach_uncertainty: bool = False
    # training
    iterations: int = 2000
    batch_size: int = 1
    lr: float = 0.01
    momentum: float = 0.9
    ema_alpha: float = 0.999
    tau: float = 0.968
    mask_patch: int = 8
    mask_ratio: float = 0.7
    lambda_mask: float = 1.0
    unweighted_mix: bool = False
    enable_target_loss: bool = True
    enable_masked_loss: bool = True
    seed: int = 0
    # output
    eval_interval: int = 250
    checkpoint_interval: int = 0
    attention_interval: int = 0
    output_dir: str = "out"


_FIELDS = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(key, raw):
    kind = _FIELDS[key]
    try:
        if kind == "bool" or kind is bool:
            if raw not in ("true", "false"):
                raise ValueError
            return raw == "true"
        if kind == "int" or kind is int:
            return int(raw)
        if kind == "float" or kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None


def validate(cfg):
    def need(ok, msg):
        if not ok:
            raise ConfigError(msg)

    need(cfg.image_size > 0 and cfg.image_size % 4 == 0,
         f"image_size must be a positive multiple of 4, got {cfg.image_size}")
    need(1 <= cfg.shapes_min <= cfg.shapes_max,
         f"need 1 <= shapes_min <= shapes_max, got {cfg.shapes_min}..{cfg.shapes_max}")
    need(cfg.n_source >= 1 and cfg.n_target >= 1 and cfg.n_eval >= 1,
         "pool sizes must be >= 1")
    need(cfg.shift_brightness > 0, "shift_brightness must be positive")
    need(cfg.shift_noise_sigma >= 0, "shift_noise_sigma must be >= 0")
    need(cfg.shift_stripe_amplitude >= 0, "shift_stripe_amplitude must be >= 0")
    need(cfg.lr_channels >= 1 and cfg.hr_channels >= 1, "channel widths must be >= 1")
    need(cfg.hr_levels in (1, 2), f"hr_levels must be 1 or 2, got {cfg.hr_levels}")
    need(cfg.gaussian_sigma > 0, "gaussian_sigma must be positive")
    need(cfg.gaussian_kernel_size >= 1 and cfg.gaussian_kernel_size % 2 == 1,
         f"gaussian_kernel_size must be odd and >= 1, got {cfg.gaussian_kernel_size}")
    need(cfg.iterations >= 0, "iterations must be >= 0")
    need(cfg.batch_size >= 1, "batch_size must be >= 1")
    need(cfg.lr > 0, "lr must be positive")
    need(0.0 <= cfg.momentum < 1.0, f"momentum must lie in [0,1), got {cfg.momentum}")
    need(0.0 <= cfg.ema_alpha <= 1.0, f"ema_alpha must lie in [0,1], got {cfg.ema_alpha}")
    need(0.25 < cfg.tau < 1.0, f"tau must lie in (0.25, 1), got {cfg.tau}")
    need(cfg.mask_patch >= 1 and cfg.image_size % cfg.mask_patch == 0,
         f"mask_patch must divide image_size, got {cfg.mask_patch}")
    need(0.0 <= cfg.mask_ratio <= 1.0, "mask_ratio must lie in [0,1]")
    need(cfg.lambda_mask >= 0, "lambda_mask must be >= 0")
    need(cfg.seed >= 0, "seed must be >= 0")
    need(cfg.eval_interval >= 1, "eval_interval must be >= 1")
    need(cfg.checkpoint_interval >= 0, "checkpoint_interval must be >= 0")
    need(cfg.attention_interval >= 0, "attention_interval must be >= 0")
    need(cfg.output_dir != "", "output_dir must not be empty")
    return cfg


def parse(text):
    """Config from `key = value` text; unknown keys and bad ranges raise."""
    cfg = RunConfig()
    seen = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, eq, raw = body.partition("=")
        key = key.strip()
        raw = raw.strip()
        if not eq or not key:
            raise ConfigError(f"line {lineno}: expected `key = value`, got {line!r}")
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        setattr(cfg, key, _parse_value(key, raw))
    return validate(cfg)


def load(path):
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse(text)


def serialize(cfg):
    out = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            s = "true" if v else "false"
        elif isinstance(v, float):
            s = repr(v)
        else:
            s = str(v)
        out.append(f"{f.name} = {s}")
    return "\n".join(out) + "\n"


def apply_overrides(cfg, pairs):
    """Apply `key=value` strings (the --set flag) on top of a config."""
    cfg = replace(cfg)
    for pair in pairs:
        key, eq, raw = pair.partition("=")
        key = key.strip()
        if not eq or key not in _FIELDS:
            raise ConfigError(f"bad override {pair!r}")
        setattr(cfg, key, _parse_value(key, raw.strip()))
    return validate(cfg)
