"""Hierarchical cross-attention block.

Stage one attends within the three person feature maps; stage two runs
bidirectional attention between the refined person feature and the
clothing feature and sums the two attended outputs. All projections are
1x1 convolutions, so the block is exactly equivariant to spatial
permutations of its inputs.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nn
from .tensor import ShapeError


@dataclass
class PersonFeatures:
    """Features of pose heatmaps, body shape, and reserved-region image."""

    x_p1: ad.Node
    x_p2: ad.Node
    x_p3: ad.Node

    def __post_init__(self):
        if not (self.x_p1.shape == self.x_p2.shape == self.x_p3.shape):
            raise ShapeError(
                f"person feature shapes differ: {self.x_p1.shape}, "
                f"{self.x_p2.shape}, {self.x_p3.shape}")


def _flatten_positions(x: ad.Node):
    """(c,h,w) -> (c,n) with n = h*w."""
    c, h, w = x.shape
    return ad.reshape(x, (c, h * w))


def _attend(query: ad.Node, key: ad.Node, value: ad.Node):
    """Row-stochastic attention over spatial positions.

    query/key/value are (c,h,w); scores are (query position) x (key
    position) dot products with no scaling factor. Returns the attended
    feature as (c,h,w) plus the attention matrix for inspection.
    """
    c, h, w = value.shape
    q = ad.permute(_flatten_positions(query), (1, 0))   # n x c
    k = _flatten_positions(key)                         # c x n
    att = ad.softmax_rows(ad.matmul(q, k))              # n x n, rows sum to 1
    v = _flatten_positions(value)                       # c x n
    attended = ad.matmul(att, ad.permute(v, (1, 0)))    # n x c
    return ad.reshape(ad.permute(attended, (1, 0)), (c, h, w)), att


def init_person_attention(params: dict, rng, prefix: str, f: int):
    nn.init_conv(params, rng, f"{prefix}.proj_v", f, f, k=1)
    nn.init_conv(params, rng, f"{prefix}.proj_q", f, f, k=1)
    nn.init_conv(params, rng, f"{prefix}.proj_k", f, f, k=1)
    nn.init_conv(params, rng, f"{prefix}.fuse", 4 * f, f, k=1)


def person_cross_attention(pn: dict, prefix: str, p: PersonFeatures,
                           attn_out: dict | None = None) -> ad.Node:
    """Refine the person representation by attending across its three parts.

    The body-shape projection queries the reserved-region projection; the
    attended pose projection is concatenated with all three raw inputs
    and fused back to the input channel count.
    """
    v = nn.conv(pn, f"{prefix}.proj_v", p.x_p1, padding=0)
    q = nn.conv(pn, f"{prefix}.proj_q", p.x_p2, padding=0)
    k = nn.conv(pn, f"{prefix}.proj_k", p.x_p3, padding=0)
    attended, att = _attend(q, k, v)
    if attn_out is not None:
        attn_out[f"{prefix}.att_pp"] = att
    cat = ad.concat_channels([attended, p.x_p1, p.x_p2, p.x_p3])
    return nn.conv(pn, f"{prefix}.fuse", cat, padding=0)


def init_cross_pc(params: dict, rng, prefix: str, f: int):
    for name in ("p1", "p2", "p3", "c1", "c2", "c3"):
        nn.init_conv(params, rng, f"{prefix}.proj_{name}", f, f, k=1)


def cross_attention_pc(pn: dict, prefix: str, p_hat: ad.Node, c: ad.Node,
                       attn_out: dict | None = None) -> ad.Node:
    """Bidirectional person<->clothing attention, summed into one output."""
    if p_hat.shape != c.shape:
        raise ShapeError(f"feature shapes differ: {p_hat.shape} vs {c.shape}")
    p1 = nn.conv(pn, f"{prefix}.proj_p1", p_hat, padding=0)
    p2 = nn.conv(pn, f"{prefix}.proj_p2", p_hat, padding=0)
    p3 = nn.conv(pn, f"{prefix}.proj_p3", p_hat, padding=0)
    c1 = nn.conv(pn, f"{prefix}.proj_c1", c, padding=0)
    c2 = nn.conv(pn, f"{prefix}.proj_c2", c, padding=0)
    c3 = nn.conv(pn, f"{prefix}.proj_c3", c, padding=0)
    cp_out, att_cp = _attend(p2, c3, p1)
    pc_out, att_pc = _attend(c2, p3, c1)
    if attn_out is not None:
        attn_out[f"{prefix}.att_cp"] = att_cp
        attn_out[f"{prefix}.att_pc"] = att_pc
    return cp_out + pc_out


def init_hca(params: dict, rng, prefix: str, f: int):
    init_person_attention(params, rng, f"{prefix}.person", f)
    init_cross_pc(params, rng, f"{prefix}.pc", f)


def hca_forward(pn: dict, prefix: str, p: PersonFeatures, c: ad.Node,
                attn_out: dict | None = None) -> ad.Node:
    """Person-internal attention followed by person<->clothing attention."""
    p_hat = person_cross_attention(pn, f"{prefix}.person", p, attn_out)
    return cross_attention_pc(pn, f"{prefix}.pc", p_hat, c, attn_out)
