"""Two-stage model assembly, Adam training, and inference.

Stage I: feature extraction -> hierarchical cross-attention -> warp
parameter regression -> TPS warp of clothing and mask. Stage II: the
warped items plus the person representation drive a U-Net that renders
the person and a composition mask; the output image blends the two.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import data, hca, losses, nn, tps
from .tensor import ArgumentError, ShapeError


@dataclass
class AdamConfig:
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class TrainConfig:
    weights: losses.LossWeights = field(default_factory=losses.LossWeights)
    adam: AdamConfig = field(default_factory=AdamConfig)
    steps: int = 500
    batch: int = 4
    decay_start: float = 0.5
    image_size: tuple = (256, 192)
    tps_k: int = 5
    feature_channels: int = 64
    unet_depth: int = 4
    seed: int = 0
    use_b4: bool = True
    reg_gx_only: bool = False
    perceptual_seed: int = 1234
    checkpoint_every: int = 0


POSE_CH = data.N_KEYPOINTS  # 18
UNET_EXTRA_CH = POSE_CH + 1 + 3 + 3 + 1  # person parts + warped clothing + mask


class Model:
    """Parameter container plus the precomputed TPS basis."""

    def __init__(self, cfg: TrainConfig, params: dict | None = None):
        h, w = cfg.image_size
        if h % 4 or w % 4:
            raise ShapeError(f"image size {h}x{w} must be divisible by 4")
        if h % (2 ** cfg.unet_depth) or w % (2 ** cfg.unet_depth):
            raise ShapeError(
                f"image size {h}x{w} must be divisible by 2^{cfg.unet_depth} for the U-Net")
        self.cfg = cfg
        self.basis = tps.tps_basis(cfg.tps_k, h, w)
        self.feat_params = losses.perceptual_params(cfg.perceptual_seed)
        expected = self._init_params()
        if params is None:
            self.params = expected
        else:
            missing = set(expected) - set(params)
            extra = set(params) - set(expected)
            if missing or extra:
                raise ArgumentError(
                    f"checkpoint does not match model: missing {sorted(missing)[:4]}, "
                    f"unexpected {sorted(extra)[:4]}")
            for k, v in expected.items():
                if params[k].shape != v.shape:
                    raise ShapeError(
                        f"parameter {k} shape {params[k].shape} != expected {v.shape}")
            self.params = {k: np.asarray(params[k], dtype=np.float64) for k in expected}

    def _init_params(self) -> dict:
        cfg = self.cfg
        h, w = cfg.image_size
        f = cfg.feature_channels
        rng = np.random.default_rng(cfg.seed)
        p: dict = {}
        nn.init_extractor(p, rng, "stage1.ext_p1", POSE_CH, f)
        nn.init_extractor(p, rng, "stage1.ext_p2", 1, f)
        nn.init_extractor(p, rng, "stage1.ext_p3", 3, f)
        nn.init_extractor(p, rng, "stage1.ext_c", 3, f)
        hca.init_hca(p, rng, "stage1.hca", f)
        nn.init_regressor(p, rng, "stage1.reg", f, h // 4, w // 4, cfg.tps_k)
        nn.init_extractor(p, rng, "stage2.ext_p1", POSE_CH, f)
        nn.init_extractor(p, rng, "stage2.ext_p2", 1, f)
        nn.init_extractor(p, rng, "stage2.ext_p3", 3, f)
        nn.init_extractor(p, rng, "stage2.ext_c", 4, f)
        hca.init_hca(p, rng, "stage2.hca", f)
        nn.init_unet(p, rng, "stage2.unet", UNET_EXTRA_CH + f, f, cfg.unet_depth)
        return p


def model_from_checkpoint(params: dict, image_size, base_cfg: TrainConfig | None = None) -> Model:
    """Rebuild a model around checkpointed parameters, inferring the widths."""
    cfg = base_cfg or TrainConfig()
    f = params["stage1.ext_c.conv0.weight"].shape[0]
    tps_k = int(round(math.sqrt(params["stage1.reg.head.bias"].size / 2)))
    depth = 1 + max(int(k.split("enc")[1].split(".")[0])
                    for k in params if ".unet.enc" in k and k.endswith(".weight"))
    cfg = TrainConfig(weights=cfg.weights, adam=cfg.adam, steps=cfg.steps,
                      batch=cfg.batch, decay_start=cfg.decay_start,
                      image_size=tuple(image_size), tps_k=tps_k,
                      feature_channels=f, unet_depth=depth, seed=cfg.seed,
                      use_b4=cfg.use_b4, reg_gx_only=cfg.reg_gx_only,
                      perceptual_seed=cfg.perceptual_seed,
                      checkpoint_every=cfg.checkpoint_every)
    return Model(cfg, params)


def _person_features(pn: dict, prefix: str, sample: data.Sample) -> hca.PersonFeatures:
    return hca.PersonFeatures(
        x_p1=nn.extractor_forward(pn, f"{prefix}.ext_p1", ad.constant(sample.person.pose)),
        x_p2=nn.extractor_forward(pn, f"{prefix}.ext_p2", ad.constant(sample.person.body_shape)),
        x_p3=nn.extractor_forward(pn, f"{prefix}.ext_p3", ad.constant(sample.person.reserved)),
    )


def stage1_forward(model: Model, pn: dict, sample: data.Sample,
                   attn_out: dict | None = None) -> dict:
    """Person/clothing features -> attention -> warp parameters -> warped items."""
    pf = _person_features(pn, "stage1", sample)
    clothing = ad.constant(sample.clothing)
    clothing_mask = ad.constant(sample.clothing_mask)
    f_c = nn.extractor_forward(pn, "stage1.ext_c", clothing)
    x_i = hca.hca_forward(pn, "stage1.hca", pf, f_c, attn_out)
    theta = nn.regressor_forward(pn, "stage1.reg", x_i)
    grid = tps.tps_grid_node(theta, model.basis)
    return {
        "theta": theta,
        "grid": grid,
        "warped_c": ad.grid_sample(clothing, grid),
        "warped_cm": ad.grid_sample(clothing_mask, grid),
    }


def stage2_forward(model: Model, pn: dict, sample: data.Sample,
                   warped_c: ad.Node, warped_cm: ad.Node,
                   attn_out: dict | None = None):
    """Warped items + person representation -> composition mask and output."""
    pf = _person_features(pn, "stage2", sample)
    cloth_in = ad.concat_channels([warped_c, warped_cm])
    f_c = nn.extractor_forward(pn, "stage2.ext_c", cloth_in)
    x_ii = hca.hca_forward(pn, "stage2.hca", pf, f_c, attn_out)
    x_up = ad.upsample_nearest2(ad.upsample_nearest2(x_ii))
    unet_in = ad.concat_channels([
        ad.constant(sample.person.pose),
        ad.constant(sample.person.body_shape),
        ad.constant(sample.person.reserved),
        warped_c,
        warped_cm,
        x_up,
    ])
    rendered, mask = nn.unet_forward(pn, "stage2.unet", unet_in, model.cfg.unet_depth)
    i_o = losses.compose_output(mask, warped_c, rendered)
    return mask, rendered, i_o


def lr_at(t: int, cfg: TrainConfig) -> float:
    """Constant until decay_start*steps, then linear to 0 at steps."""
    ds = cfg.decay_start * cfg.steps
    if t <= ds or cfg.steps <= ds:
        return cfg.adam.lr
    return cfg.adam.lr * max(0.0, (cfg.steps - t) / (cfg.steps - ds))


def adam_step(params: dict, grads: dict, state: dict, t: int, cfg: TrainConfig):
    """Bias-corrected Adam update in place, at the scheduled learning rate."""
    if t < 1:
        raise ArgumentError(f"Adam step index must be >= 1, got {t}")
    a = cfg.adam
    lr = lr_at(t, cfg)
    m = state.setdefault("m", {})
    v = state.setdefault("v", {})
    for name, g in grads.items():
        m[name] = a.beta1 * m.get(name, 0.0) + (1 - a.beta1) * g
        v[name] = a.beta2 * v.get(name, 0.0) + (1 - a.beta2) * g * g
        mhat = m[name] / (1 - a.beta1 ** t)
        vhat = v[name] / (1 - a.beta2 ** t)
        params[name] -= lr * mhat / (np.sqrt(vhat) + a.eps)


def _sample_loss(model: Model, pn: dict, sample: data.Sample, mode: str):
    w = model.cfg.weights
    parts = {"l1": 0.0, "reg": 0.0, "vgg": 0.0, "mask": 0.0}
    total = None
    s1 = stage1_forward(model, pn, sample)
    if mode in ("stage1", "joint"):
        terms = losses.matching_loss_terms(
            s1["warped_c"], sample.gt_warped, s1["grid"],
            s1["warped_cm"], sample.gt_onbody_mask,
            use_b4=model.cfg.use_b4, gx_only=model.cfg.reg_gx_only)
        total = ad.scale(terms["l1"], w.lambda_1) + ad.scale(terms["reg"], w.lambda_reg)
        parts["l1"] += float(terms["l1"].value)
        parts["reg"] += float(terms["reg"].value)
        if model.cfg.use_b4:
            total = total + ad.scale(terms["mask"], w.lambda_2)
            parts["mask"] += float(terms["mask"].value)
    if mode in ("stage2", "joint"):
        m_o, _, i_o = stage2_forward(model, pn, sample, s1["warped_c"], s1["warped_cm"])
        terms = losses.tryon_loss_terms(i_o, sample.gt_image, m_o,
                                        sample.gt_onbody_mask, model.feat_params)
        t2 = (ad.scale(terms["l1"], w.lambda_1)
              + ad.scale(terms["vgg"], w.lambda_vgg)
              + ad.scale(terms["mask"], w.lambda_mask))
        total = t2 if total is None else total + t2
        parts["l1"] += float(terms["l1"].value)
        parts["vgg"] += float(terms["vgg"].value)
        parts["mask"] += float(terms["mask"].value)
    return total, parts


def train(dataset, cfg: TrainConfig, mode: str = "stage1",
          params: dict | None = None, checkpoint_dir=None, progress=None):
    """Run Adam training; returns (params, history rows).

    ``mode`` selects the objective: stage1 (matching loss), stage2
    (try-on loss with stage-I parameters frozen), or joint (sum, all
    parameters trainable). Deterministic for fixed seed and dataset.
    """
    if mode not in ("stage1", "stage2", "joint"):
        raise ArgumentError(f"unknown training mode {mode!r}")
    if not dataset:
        raise ArgumentError("empty dataset")
    model = Model(cfg, params)
    frozen = {"stage1": ("stage2.",), "stage2": ("stage1.",), "joint": ()}[mode]
    state: dict = {}
    history = []
    for t in range(1, cfg.steps + 1):
        grads: dict = {}
        totals = {"total": 0.0, "l1": 0.0, "reg": 0.0, "vgg": 0.0, "mask": 0.0}
        for j in range(cfg.batch):
            sample = dataset[((t - 1) * cfg.batch + j) % len(dataset)]
            pn = nn.bind(model.params, frozen_prefixes=frozen)
            total, parts = _sample_loss(model, pn, sample, mode)
            if not np.isfinite(total.value):
                raise ArithmeticError(
                    f"non-finite loss at step {t}, batch element {j}: {total.value}")
            ad.backward(total)
            for name, node in pn.items():
                if node.trainable:
                    acc = grads.get(name)
                    grads[name] = node.grad if acc is None else acc + node.grad
            totals["total"] += float(total.value)
            for k in parts:
                totals[k] += parts[k]
        grads = {k: g / cfg.batch for k, g in grads.items()}
        adam_step(model.params, grads, state, t, cfg)
        row = {"step": t}
        row.update({k: v / cfg.batch for k, v in totals.items()})
        history.append(row)
        if progress is not None:
            progress(row)
        if (checkpoint_dir is not None and cfg.checkpoint_every > 0
                and t % cfg.checkpoint_every == 0):
            nn.save_checkpoint(Path(checkpoint_dir) / f"step_{t:06d}.ckpt", model.params)
    return model.params, history


def history_csv(history) -> str:
    lines = ["step,loss_total,loss_l1,loss_reg,loss_vgg,loss_mask"]
    for row in history:
        lines.append(f"{row['step']},{row['total']:.9g},{row['l1']:.9g},"
                     f"{row['reg']:.9g},{row['vgg']:.9g},{row['mask']:.9g}")
    return "\n".join(lines) + "\n"


def infer(model: Model, sample: data.Sample, attn_out: dict | None = None) -> dict:
    """Full forward pass without gradient bookkeeping needs."""
    pn = nn.bind(model.params, trainable=False)
    s1 = stage1_forward(model, pn, sample, attn_out)
    m_o, i_r, i_o = stage2_forward(model, pn, sample,
                                   s1["warped_c"], s1["warped_cm"], attn_out)
    return {
        "theta": s1["theta"].value,
        "grid": s1["grid"].value,
        "warped_c": s1["warped_c"].value,
        "warped_cm": s1["warped_cm"].value,
        "m_o": m_o.value,
        "i_r": i_r.value,
        "i_o": i_o.value,
    }
