"""Training objectives: warp matching, grid smoothness, try-on, composition.

All loss functions take graph Nodes (plain arrays are wrapped as
constants) and return scalar Nodes, so they can sit at the root of a
backward pass. Every L1 term is mean-normalized so the lambda weights
are resolution independent.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .tensor import ArgumentError, ShapeError


@dataclass
class LossWeights:
    lambda_1: float = 1.0
    lambda_2: float = 1.0
    lambda_reg: float = 1.0
    lambda_vgg: float = 1.0
    lambda_mask: float = 1.0

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if not (np.isfinite(v) and v >= 0):
                raise ArgumentError(f"loss weight {name}={v} must be finite and >= 0")


def _node(x):
    return x if isinstance(x, ad.Node) else ad.constant(np.asarray(x, dtype=np.float64))


def l1_loss(a, b) -> ad.Node:
    """Mean absolute difference."""
    a, b = _node(a), _node(b)
    if a.shape != b.shape:
        raise ShapeError(f"l1_loss shapes differ: {a.shape} vs {b.shape}")
    return ad.mean_all(ad.absval(a - b))


def grid_regularization(grid, gx_only: bool = False) -> ad.Node:
    """Mean absolute difference between each grid value and its 4 neighbors.

    Applied to both coordinate planes and both shift signs (so each
    adjacent pair is counted twice), normalized by the term count. With
    ``gx_only`` the y-coordinate plane is excluded.
    """
    grid = _node(grid)
    if grid.value.ndim != 3 or grid.shape[0] != 2:
        raise ShapeError(f"grid must be (2,H,W), got {grid.shape}")
    _, h, w = grid.shape
    if h < 3 or w < 3:
        raise ShapeError(f"grid too small for regularization: {h}x{w}")
    nch = 1 if gx_only else 2
    g = ad.channels(grid, 0, nch)
    total = None
    for rows, cols, rows2, cols2 in (
        ((0, h), (1, w), (0, h), (0, w - 1)),   # x-shift +1
        ((0, h), (0, w - 1), (0, h), (1, w)),   # x-shift -1
        ((1, h), (0, w), (0, h - 1), (0, w)),   # y-shift +1
        ((0, h - 1), (0, w), (1, h), (0, w)),   # y-shift -1
    ):
        d = ad.sum_all(ad.absval(ad.crop(g, (0, nch), rows, cols)
                                 - ad.crop(g, (0, nch), rows2, cols2)))
        total = d if total is None else total + d
    count = nch * 2 * (h * (w - 1) + (h - 1) * w)
    return ad.scale(total, 1.0 / count)


def perceptual_params(seed: int, in_ch: int = 3, widths=(8, 16, 32)) -> dict:
    """Frozen random conv pyramid standing in for a pretrained feature stack.

    Weights are fixed by seed and never trained; the loss built on them
    is symmetric, nonnegative, and zero iff its inputs agree.
    """
    rng = np.random.default_rng(seed)
    params = {}
    prev = in_ch
    for i, width in enumerate(widths):
        fan_in = prev * 9
        bound = np.sqrt(6.0 / fan_in)
        params[f"feat{i}.weight"] = rng.uniform(-bound, bound, (width, prev, 3, 3))
        params[f"feat{i}.bias"] = np.zeros(width)
        prev = width
    return params


def _pyramid(x: ad.Node, feat_params: dict):
    feats = []
    cur = x
    n_levels = len([k for k in feat_params if k.endswith(".weight")])
    for i in range(n_levels):
        w = ad.constant(feat_params[f"feat{i}.weight"])
        b = ad.constant(feat_params[f"feat{i}.bias"])
        cur = ad.leaky_relu(ad.conv2d(cur, w, b, stride=1 if i == 0 else 2, padding=1))
        feats.append(cur)
    return feats


def perceptual_loss(a, b, feat_params: dict) -> ad.Node:
    a, b = _node(a), _node(b)
    if a.shape != b.shape:
        raise ShapeError(f"perceptual_loss shapes differ: {a.shape} vs {b.shape}")
    total = None
    for fa, fb in zip(_pyramid(a, feat_params), _pyramid(b, feat_params)):
        term = ad.mean_all(ad.absval(fa - fb))
        total = term if total is None else total + term
    return total


def compose_output(m_o, warped, rendered) -> ad.Node:
    """Blend warped clothing over the rendered person by the composition mask."""
    m_o, warped, rendered = _node(m_o), _node(warped), _node(rendered)
    if m_o.shape[0] != 1 or warped.shape != rendered.shape:
        raise ShapeError(
            f"compose_output shapes: mask {m_o.shape}, warped {warped.shape}, rendered {rendered.shape}")
    if np.any(m_o.value < -1e-9) or np.any(m_o.value > 1 + 1e-9):
        raise ArgumentError("composition mask must lie in [0,1]")
    m3 = ad.concat_channels([m_o] * warped.shape[0])
    return m3 * warped + (1.0 - m3) * rendered


def matching_loss_terms(warped_c, gt_ct, grid, warped_cm, gt_tm,
                        use_b4: bool = True, gx_only: bool = False) -> dict:
    terms = {
        "l1": l1_loss(warped_c, gt_ct),
        "reg": grid_regularization(grid, gx_only=gx_only),
    }
    if use_b4:
        terms["mask"] = l1_loss(warped_cm, gt_tm)
    return terms


def matching_loss(warped_c, gt_ct, grid, warped_cm, gt_tm,
                  w: LossWeights, use_b4: bool = True, gx_only: bool = False) -> ad.Node:
    """Stage-I objective: warp L1 + grid smoothness (+ optional mask L1)."""
    terms = matching_loss_terms(warped_c, gt_ct, grid, warped_cm, gt_tm,
                                use_b4=use_b4, gx_only=gx_only)
    total = ad.scale(terms["l1"], w.lambda_1) + ad.scale(terms["reg"], w.lambda_reg)
    if use_b4:
        total = total + ad.scale(terms["mask"], w.lambda_2)
    return total


def tryon_loss_terms(i_o, i_gt, m_o, i_tm, feat_params: dict) -> dict:
    return {
        "l1": l1_loss(i_o, i_gt),
        "vgg": perceptual_loss(i_o, i_gt, feat_params),
        "mask": l1_loss(m_o, i_tm),
    }


def tryon_loss(i_o, i_gt, m_o, i_tm, feat_params: dict, w: LossWeights) -> ad.Node:
    """Stage-II objective: output L1 + feature-pyramid distance + mask L1."""
    m_val = m_o.value if isinstance(m_o, ad.Node) else np.asarray(m_o)
    if np.any(m_val < -1e-9) or np.any(m_val > 1 + 1e-9):
        raise ArgumentError("composition mask must lie in [0,1]")
    terms = tryon_loss_terms(i_o, i_gt, m_o, i_tm, feat_params)
    return (ad.scale(terms["l1"], w.lambda_1)
            + ad.scale(terms["vgg"], w.lambda_vgg)
            + ad.scale(terms["mask"], w.lambda_mask))
