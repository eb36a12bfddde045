"""Finite-difference gradient suites for every primitive and both losses.

Each check compares analytic gradients against central differences and
returns (max relative error, tolerance). The CLI and the acceptance
tests both run these.
"""

import numpy as np

from . import autodiff as ad
from . import data, hca, losses, nn, pipeline, tps

PRIMITIVE_TOL = 1e-5
COMPOSITE_TOL = 1e-4


def _rng(seed=0):
    return np.random.default_rng(seed)


def _proj_loss(out: ad.Node, r: np.ndarray) -> ad.Node:
    """Generic scalar readout: sum(out * fixed random projection)."""
    return ad.sum_all(out * ad.constant(r))


def _away_from_zero(rng, shape, lo=0.05):
    """Random values with magnitude >= lo, clear of activation kinks."""
    mag = rng.uniform(lo, 1.0, shape)
    sign = np.where(rng.uniform(size=shape) < 0.5, -1.0, 1.0)
    return mag * sign


def check_matmul():
    rng = _rng(1)
    a, b = rng.standard_normal((4, 3)), rng.standard_normal((3, 5))
    r = rng.standard_normal((4, 5))
    err = ad.grad_check(lambda p: _proj_loss(ad.matmul(p["a"], p["b"]), r),
                        {"a": a, "b": b})
    return err, PRIMITIVE_TOL


def check_softmax_rows():
    rng = _rng(2)
    a = rng.standard_normal((3, 6))
    r = rng.standard_normal((3, 6))
    err = ad.grad_check(lambda p: _proj_loss(ad.softmax_rows(p["a"]), r), {"a": a})
    return err, PRIMITIVE_TOL


def _check_conv(stride, seed):
    rng = _rng(seed)
    x = rng.standard_normal((2, 6, 5))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    out = ad.conv2d(ad.Node(x), ad.Node(w), ad.Node(b), stride, 1)
    r = rng.standard_normal(out.shape)
    err = ad.grad_check(
        lambda p: _proj_loss(ad.conv2d(p["x"], p["w"], p["b"], stride, 1), r),
        {"x": x, "w": w, "b": b})
    return err, PRIMITIVE_TOL


def check_conv2d_stride1():
    return _check_conv(1, 3)


def check_conv2d_stride2():
    return _check_conv(2, 4)


def check_grid_sample():
    rng = _rng(5)
    x = rng.standard_normal((2, 5, 6))
    # keep sample points off cell boundaries so central differences stay valid
    grid = rng.uniform(-0.85, 0.85, (2, 4, 4))
    r = rng.standard_normal((2, 4, 4))
    err = ad.grad_check(
        lambda p: _proj_loss(ad.grid_sample(p["x"], p["grid"]), r),
        {"x": x, "grid": grid}, step=1e-6)
    return err, PRIMITIVE_TOL


def check_elementwise():
    rng = _rng(6)
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
    r = rng.standard_normal((3, 4))
    err = ad.grad_check(
        lambda p: _proj_loss(p["a"] * p["b"] + (p["a"] - p["b"]), r),
        {"a": a, "b": b})
    return err, PRIMITIVE_TOL


def check_reshape_permute():
    rng = _rng(7)
    a = rng.standard_normal((2, 3, 4))
    r = rng.standard_normal((4, 6))
    err = ad.grad_check(
        lambda p: _proj_loss(ad.reshape(ad.permute(p["a"], (2, 0, 1)), (4, 6)), r),
        {"a": a})
    return err, PRIMITIVE_TOL


def check_concat_crop():
    rng = _rng(8)
    a, b = rng.standard_normal((2, 3, 3)), rng.standard_normal((1, 3, 3))
    r = rng.standard_normal((2, 2, 3))
    err = ad.grad_check(
        lambda p: _proj_loss(
            ad.crop(ad.concat_channels([p["a"], p["b"]]), (1, 3), (0, 2), (0, 3)), r),
        {"a": a, "b": b})
    return err, PRIMITIVE_TOL


def check_reduce():
    rng = _rng(9)
    a = _away_from_zero(rng, (4, 5))
    err = ad.grad_check(
        lambda p: ad.mean_all(ad.absval(p["a"])) + ad.scale(ad.sum_all(p["a"]), 0.1),
        {"a": a}, step=1e-6)
    return err, PRIMITIVE_TOL


def check_activations():
    rng = _rng(10)
    a = _away_from_zero(rng, (2, 4, 4))
    r = rng.standard_normal((2, 4, 4))
    err = ad.grad_check(
        lambda p: _proj_loss(
            ad.tanh(p["a"]) + ad.sigmoid(p["a"]) + ad.leaky_relu(p["a"], 0.2), r),
        {"a": a}, step=1e-6)
    return err, PRIMITIVE_TOL


def check_upsample():
    rng = _rng(11)
    a = rng.standard_normal((2, 3, 4))
    r = rng.standard_normal((2, 6, 8))
    err = ad.grad_check(lambda p: _proj_loss(ad.upsample_nearest2(p["a"]), r), {"a": a})
    return err, PRIMITIVE_TOL


def check_tps_warp():
    rng = _rng(12)
    basis = tps.tps_basis(3, 8, 6)
    image = rng.uniform(0.0, 1.0, (1, 8, 6))
    target = rng.uniform(0.0, 1.0, (1, 8, 6))
    theta = rng.uniform(-0.2, 0.2, 18)
    err = ad.grad_check(
        lambda p: losses.l1_loss(tps.warp_node(ad.constant(image), p["theta"], basis),
                                 target),
        {"theta": theta}, step=1e-6)
    return err, COMPOSITE_TOL


def check_grid_regularization():
    rng = _rng(13)
    grid = rng.standard_normal((2, 5, 5))
    err = ad.grad_check(lambda p: losses.grid_regularization(p["grid"]),
                        {"grid": grid}, step=1e-5)
    return err, COMPOSITE_TOL


def check_perceptual():
    rng = _rng(14)
    feat = losses.perceptual_params(99)
    a = rng.uniform(0.1, 0.9, (3, 8, 8))
    b = rng.uniform(0.1, 0.9, (3, 8, 8))
    err = ad.grad_check(lambda p: losses.perceptual_loss(p["a"], b, feat),
                        {"a": a}, step=1e-6)
    return err, COMPOSITE_TOL


def check_compose():
    rng = _rng(15)
    m = rng.uniform(0.05, 0.95, (1, 4, 4))
    wc = rng.uniform(0.0, 1.0, (3, 4, 4))
    ir = rng.uniform(0.0, 1.0, (3, 4, 4))
    gt = rng.uniform(0.0, 1.0, (3, 4, 4))
    err = ad.grad_check(
        lambda p: losses.l1_loss(
            losses.compose_output(p["m"], p["wc"], p["ir"]), gt),
        {"m": m, "wc": wc, "ir": ir}, step=1e-6)
    return err, COMPOSITE_TOL


def check_hca():
    rng = _rng(16)
    f, h, w = 2, 3, 3
    params = {}
    hca.init_hca(params, rng, "hca", f)
    feats = {k: rng.standard_normal((f, h, w)) * 0.5 for k in ("p1", "p2", "p3", "c")}
    target = rng.uniform(0.0, 1.0, (f, h, w))

    def loss(p):
        pf = hca.PersonFeatures(ad.constant(feats["p1"]), ad.constant(feats["p2"]),
                                ad.constant(feats["p3"]))
        out = hca.hca_forward(p, "hca", pf, ad.constant(feats["c"]))
        return losses.l1_loss(out, target)

    return ad.grad_check(loss, params, step=1e-6), COMPOSITE_TOL


def check_extractor():
    rng = _rng(17)
    params = {}
    nn.init_extractor(params, rng, "ext", 2, 3)
    x = rng.standard_normal((2, 8, 8))
    target = rng.standard_normal((3, 2, 2))
    err = ad.grad_check(
        lambda p: losses.l1_loss(nn.extractor_forward(p, "ext", ad.constant(x)), target),
        params, step=1e-6)
    return err, COMPOSITE_TOL


def check_regressor():
    rng = _rng(18)
    params = {}
    nn.init_regressor(params, rng, "reg", 2, 8, 6, 2)
    x = rng.standard_normal((2, 8, 6))
    r = rng.standard_normal(8)
    err = ad.grad_check(
        lambda p: _proj_loss(nn.regressor_forward(p, "reg", ad.constant(x)), r),
        params, step=1e-6)
    return err, COMPOSITE_TOL


def check_unet():
    rng = _rng(19)
    params = {}
    nn.init_unet(params, rng, "unet", 3, 2, 2)
    x = rng.standard_normal((3, 8, 8))
    t_r = rng.uniform(0.0, 1.0, (3, 8, 8))
    t_m = rng.uniform(0.0, 1.0, (1, 8, 8))

    def loss(p):
        rendered, mask = nn.unet_forward(p, "unet", ad.constant(x), 2)
        return losses.l1_loss(rendered, t_r) + losses.l1_loss(mask, t_m)

    return ad.grad_check(loss, params, step=1e-6), COMPOSITE_TOL


def _tiny_setup(seed=20):
    cfg = pipeline.TrainConfig(image_size=(32, 24), feature_channels=4,
                               unet_depth=2, tps_k=3, seed=seed)
    model = pipeline.Model(cfg)
    # jitter away from the zero-bias init: synthetic images have exact-zero
    # regions, which would land pre-activations exactly on activation kinks
    # where a finite-difference oracle is meaningless
    rng = np.random.default_rng(seed + 1)
    for v in model.params.values():
        v += rng.uniform(-0.05, 0.05, v.shape)
    sample = data.synth_sample(
        data.random_spec(seed, image_size=(32, 24), tps_k=3))
    return model, sample


def check_stage1_matching_loss():
    """Full matching objective through extractors, attention, TPS warp."""
    model, sample = _tiny_setup(20)
    w = model.cfg.weights

    def loss(p):
        s1 = pipeline.stage1_forward(model, p, sample)
        return losses.matching_loss(s1["warped_c"], sample.gt_warped, s1["grid"],
                                    s1["warped_cm"], sample.gt_onbody_mask, w)

    params = {k: v for k, v in model.params.items() if k.startswith("stage1.")}
    err = ad.grad_check_sampled(loss, params, step=1e-6, per_param=2, seed=0)
    return err, COMPOSITE_TOL


def check_tryon_loss_end_to_end():
    """Try-on objective through both stages, including the warp path."""
    model, sample = _tiny_setup(21)
    w = model.cfg.weights

    def loss(p):
        s1 = pipeline.stage1_forward(model, p, sample)
        m_o, _, i_o = pipeline.stage2_forward(model, p, sample,
                                              s1["warped_c"], s1["warped_cm"])
        return losses.tryon_loss(i_o, sample.gt_image, m_o, sample.gt_onbody_mask,
                                 model.feat_params, w)

    err = ad.grad_check_sampled(loss, model.params, step=1e-6, per_param=1, seed=1)
    return err, COMPOSITE_TOL


SUITES = {
    "tensor": [
        ("matmul", check_matmul),
        ("softmax_rows", check_softmax_rows),
        ("conv2d_stride1", check_conv2d_stride1),
        ("conv2d_stride2", check_conv2d_stride2),
        ("grid_sample", check_grid_sample),
        ("elementwise", check_elementwise),
        ("reshape_permute", check_reshape_permute),
        ("concat_crop", check_concat_crop),
        ("reduce", check_reduce),
        ("activations", check_activations),
        ("upsample", check_upsample),
    ],
    "tps": [("tps_warp", check_tps_warp)],
    "losses": [
        ("grid_regularization", check_grid_regularization),
        ("perceptual", check_perceptual),
        ("compose", check_compose),
    ],
    "hca": [("hca_forward", check_hca)],
    "nn": [
        ("extractor", check_extractor),
        ("regressor", check_regressor),
        ("unet", check_unet),
    ],
    "pipeline": [
        ("stage1_matching_loss", check_stage1_matching_loss),
        ("tryon_loss_end_to_end", check_tryon_loss_end_to_end),
    ],
}


def run(module: str | None = None):
    """Run one suite (or all); returns rows of (module, name, err, tol)."""
    if module is not None and module not in SUITES:
        raise KeyError(f"unknown gradcheck module {module!r}; "
                       f"choices: {', '.join(SUITES)}")
    rows = []
    for mod, checks in SUITES.items():
        if module is not None and mod != module:
            continue
        for name, fn in checks:
            err, tol = fn()
            rows.append((mod, name, err, tol))
    return rows
