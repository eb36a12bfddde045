"""Sub-network shapes, determinism, and checkpoint persistence."""

import numpy as np
import pytest

from vton import autodiff as ad
from vton import nn


def _node(arr):
    return ad.constant(arr)


def test_extractor_quarters_spatial_dims(rng):
    params = {}
    nn.init_extractor(params, rng, "ext", in_ch=3, f=6)
    pn = nn.bind(params)
    out = nn.extractor_forward(pn, "ext", _node(rng.normal(size=(3, 16, 12))))
    assert out.shape == (6, 4, 3)


def test_extractor_rejects_indivisible(rng):
    params = {}
    nn.init_extractor(params, rng, "ext", in_ch=1, f=2)
    pn = nn.bind(params)
    with pytest.raises(ValueError):
        nn.extractor_forward(pn, "ext", _node(rng.normal(size=(1, 10, 8))))


def test_regressor_output_range_and_shape(rng):
    params = {}
    nn.init_regressor(params, rng, "reg", f=4, h=8, w=6, tps_k=3)
    pn = nn.bind(params)
    theta = nn.regressor_forward(pn, "reg", _node(rng.normal(size=(4, 8, 6)) * 5))
    assert theta.shape == (18,)
    assert np.all(np.abs(theta.value) < 1.0)  # tanh head


def test_regressor_too_small_rejected(rng):
    with pytest.raises(ValueError):
        nn.init_regressor({}, rng, "reg", f=2, h=3, w=8, tps_k=3)


def test_unet_shapes_and_ranges(rng):
    params = {}
    nn.init_unet(params, rng, "unet", in_ch=5, base=4, depth=2)
    pn = nn.bind(params)
    rendered, mask = nn.unet_forward(pn, "unet", _node(rng.normal(size=(5, 8, 12))), 2)
    assert rendered.shape == (3, 8, 12)
    assert mask.shape == (1, 8, 12)
    assert rendered.value.min() >= 0.0 and rendered.value.max() <= 1.0
    assert mask.value.min() >= 0.0 and mask.value.max() <= 1.0


def test_unet_rejects_indivisible(rng):
    params = {}
    nn.init_unet(params, rng, "unet", in_ch=2, base=2, depth=3)
    pn = nn.bind(params)
    with pytest.raises(ValueError):
        nn.unet_forward(pn, "unet", _node(rng.normal(size=(2, 12, 8))), 3)


def test_unet_skip_ablation_changes_output(rng):
    params = {}
    nn.init_unet(params, rng, "unet", in_ch=3, base=4, depth=2)
    pn = nn.bind(params)
    x = _node(rng.normal(size=(3, 8, 8)))
    r1, m1 = nn.unet_forward(pn, "unet", x, 2)
    r2, m2 = nn.unet_forward(pn, "unet", x, 2, zero_skips=True)
    assert not np.allclose(r1.value, r2.value)


def test_init_deterministic_for_seed():
    p1, p2 = {}, {}
    nn.init_extractor(p1, np.random.default_rng(9), "e", 3, 4)
    nn.init_extractor(p2, np.random.default_rng(9), "e", 3, 4)
    for k in p1:
        np.testing.assert_array_equal(p1[k], p2[k])


def test_bind_frozen_prefixes(rng):
    params = {"stage1.w": rng.normal(size=3), "stage2.w": rng.normal(size=3)}
    pn = nn.bind(params, frozen_prefixes=("stage1.",))
    assert not pn["stage1.w"].trainable
    assert pn["stage2.w"].trainable


def test_dense_matches_numpy(rng):
    params = {}
    nn.init_dense(params, rng, "d", nin=12, nout=5)
    pn = nn.bind(params)
    x = rng.normal(size=(3, 2, 2))
    out = nn.dense(pn, "d", _node(x))
    expected = x.reshape(1, -1) @ params["d.weight"] + params["d.bias"]
    np.testing.assert_allclose(out.value, expected.ravel(), atol=1e-12)


# --- checkpoints ------------------------------------------------------------

def test_checkpoint_roundtrip_bit_exact(rng, tmp_path):
    params = {"a.weight": rng.normal(size=(3, 2, 1, 1)),
              "a.bias": rng.normal(size=3),
              "long.name.with.dots": rng.normal(size=(2, 2))}
    path = tmp_path / "model.ckpt"
    nn.save_checkpoint(path, params)
    back = nn.load_checkpoint(path)
    assert list(back) == list(params)  # order preserved
    for k in params:
        assert back[k].tobytes() == params[k].tobytes()


def test_checkpoint_bad_magic():
    with pytest.raises(ValueError, match="byte 0"):
        nn.checkpoint_from_bytes(b"NOPE" + b"\x00" * 8)


def test_checkpoint_truncated(rng):
    buf = nn.checkpoint_to_bytes({"w": rng.normal(size=4)})
    with pytest.raises(ValueError):
        nn.checkpoint_from_bytes(buf[:-8])
