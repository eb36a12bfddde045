"""Flat line-oriented ``key = value`` config files for training runs.

Every TrainConfig field maps to exactly one key; unknown keys are
rejected rather than ignored. ``#`` starts a comment.
"""

from .losses import LossWeights
from .pipeline import AdamConfig, TrainConfig
from .tensor import ArgumentError


def _parse_bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ArgumentError(f"not a boolean: {s!r}")


# key -> (type tag, getter path)
KEYS = {
    "seed": int,
    "steps": int,
    "batch": int,
    "decay_start": float,
    "image_h": int,
    "image_w": int,
    "tps_k": int,
    "feature_channels": int,
    "unet_depth": int,
    "lr": float,
    "beta1": float,
    "beta2": float,
    "eps": float,
    "lambda_1": float,
    "lambda_2": float,
    "lambda_reg": float,
    "lambda_vgg": float,
    "lambda_mask": float,
    "use_b4": _parse_bool,
    "reg_gx_only": _parse_bool,
    "perceptual_seed": int,
    "checkpoint_every": int,
}


def parse_config(text: str) -> TrainConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ArgumentError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in KEYS:
            raise ArgumentError(f"config line {lineno}: unknown key {key!r}")
        if key in values:
            raise ArgumentError(f"config line {lineno}: duplicate key {key!r}")
        try:
            values[key] = KEYS[key](val)
        except ArgumentError:
            raise
        except ValueError as e:
            raise ArgumentError(f"config line {lineno}: bad value for {key}: {e}") from e
    cfg = TrainConfig()
    weights = LossWeights(
        lambda_1=values.pop("lambda_1", cfg.weights.lambda_1),
        lambda_2=values.pop("lambda_2", cfg.weights.lambda_2),
        lambda_reg=values.pop("lambda_reg", cfg.weights.lambda_reg),
        lambda_vgg=values.pop("lambda_vgg", cfg.weights.lambda_vgg),
        lambda_mask=values.pop("lambda_mask", cfg.weights.lambda_mask),
    )
    adam = AdamConfig(
        lr=values.pop("lr", cfg.adam.lr),
        beta1=values.pop("beta1", cfg.adam.beta1),
        beta2=values.pop("beta2", cfg.adam.beta2),
        eps=values.pop("eps", cfg.adam.eps),
    )
    h = values.pop("image_h", cfg.image_size[0])
    w = values.pop("image_w", cfg.image_size[1])
    return TrainConfig(weights=weights, adam=adam, image_size=(h, w),
                       **{k: values.get(k, getattr(cfg, k))
                          for k in ("steps", "batch", "decay_start", "tps_k",
                                    "feature_channels", "unet_depth", "seed",
                                    "use_b4", "reg_gx_only", "perceptual_seed",
                                    "checkpoint_every")})


def config_text(cfg: TrainConfig) -> str:
    lines = [
        f"seed = {cfg.seed}",
        f"steps = {cfg.steps}",
        f"batch = {cfg.batch}",
        f"decay_start = {cfg.decay_start}",
        f"image_h = {cfg.image_size[0]}",
        f"image_w = {cfg.image_size[1]}",
        f"tps_k = {cfg.tps_k}",
        f"feature_channels = {cfg.feature_channels}",
        f"unet_depth = {cfg.unet_depth}",
        f"lr = {cfg.adam.lr}",
        f"beta1 = {cfg.adam.beta1}",
        f"beta2 = {cfg.adam.beta2}",
        f"eps = {cfg.adam.eps}",
        f"lambda_1 = {cfg.weights.lambda_1}",
        f"lambda_2 = {cfg.weights.lambda_2}",
        f"lambda_reg = {cfg.weights.lambda_reg}",
        f"lambda_vgg = {cfg.weights.lambda_vgg}",
        f"lambda_mask = {cfg.weights.lambda_mask}",
        f"use_b4 = {str(cfg.use_b4).lower()}",
        f"reg_gx_only = {str(cfg.reg_gx_only).lower()}",
        f"perceptual_seed = {cfg.perceptual_seed}",
        f"checkpoint_every = {cfg.checkpoint_every}",
    ]
    return "\n".join(lines) + "\n"
