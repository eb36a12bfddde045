"""Cross-attention block against hand-computed closed forms."""

import numpy as np

from vton import autodiff as ad
from vton import hca, nn


def _softmax(row):
    e = np.exp(row - row.max())
    return e / e.sum()


def _conv1(w, b, x):
    # 1x1 conv on a single channel: scalar affine map
    return w * x + b


def _node(arr):
    return ad.constant(np.asarray(arr, dtype=np.float64))


def _scalar_params(names, values):
    params = {}
    for name, (w, b) in zip(names, values):
        params[f"{name}.weight"] = np.full((1, 1, 1, 1), w)
        params[f"{name}.bias"] = np.full(1, b)
    return params


def test_person_attention_closed_form_n2_c1():
    # two spatial positions, one channel, hand-set affine projections
    p1 = np.array([[[0.3, -0.7]]])
    p2 = np.array([[[1.1, 0.4]]])
    p3 = np.array([[[-0.2, 0.9]]])
    wv, bv = 1.3, 0.1
    wq, bq = -0.7, 0.2
    wk, bk = 0.5, -0.3
    params = _scalar_params(
        ["pa.proj_v", "pa.proj_q", "pa.proj_k"],
        [(wv, bv), (wq, bq), (wk, bk)])
    params["pa.fuse.weight"] = np.array([0.9, -0.4, 0.6, 0.2]).reshape(1, 4, 1, 1)
    params["pa.fuse.bias"] = np.full(1, 0.05)
    pn = nn.bind(params)
    feats = hca.PersonFeatures(_node(p1), _node(p2), _node(p3))
    attn = {}
    out = hca.person_cross_attention(pn, "pa", feats, attn)

    v = _conv1(wv, bv, p1[0, 0])
    q = _conv1(wq, bq, p2[0, 0])
    k = _conv1(wk, bk, p3[0, 0])
    att = np.stack([_softmax(q[i] * k) for i in range(2)])
    attended = att @ v
    expected = (0.9 * attended - 0.4 * p1[0, 0] + 0.6 * p2[0, 0]
                + 0.2 * p3[0, 0] + 0.05)
    np.testing.assert_allclose(out.value[0, 0], expected, atol=1e-12)
    np.testing.assert_allclose(attn["pa.att_pp"].value, att, atol=1e-12)


def test_cross_pc_closed_form_n2_c1():
    p_hat = np.array([[[0.8, -0.3]]])
    c = np.array([[[0.2, 1.4]]])
    coeffs = [(0.7, 0.0), (-0.5, 0.1), (1.2, -0.2),
              (0.4, 0.3), (0.9, 0.0), (-1.1, 0.05)]
    names = [f"pc.proj_{n}" for n in ("p1", "p2", "p3", "c1", "c2", "c3")]
    params = _scalar_params(names, coeffs)
    pn = nn.bind(params)
    attn = {}
    out = hca.cross_attention_pc(pn, "pc", _node(p_hat), _node(c), attn)

    proj = {n: _conv1(w, b, (p_hat if n.startswith("p") else c)[0, 0])
            for n, (w, b) in zip(("p1", "p2", "p3", "c1", "c2", "c3"), coeffs)}
    att_cp = np.stack([_softmax(proj["p2"][i] * proj["c3"]) for i in range(2)])
    att_pc = np.stack([_softmax(proj["c2"][i] * proj["p3"]) for i in range(2)])
    expected = att_cp @ proj["p1"] + att_pc @ proj["c1"]
    np.testing.assert_allclose(out.value[0, 0], expected, atol=1e-12)
    np.testing.assert_allclose(attn["pc.att_cp"].value, att_cp, atol=1e-12)
    np.testing.assert_allclose(attn["pc.att_pc"].value, att_pc, atol=1e-12)


def test_attention_rows_stochastic_100_cases():
    f, h, w = 2, 2, 3
    for case in range(100):
        rng = np.random.default_rng(case)
        params = {}
        hca.init_hca(params, rng, "hca", f)
        pn = nn.bind(params)
        feats = hca.PersonFeatures(*[_node(rng.normal(size=(f, h, w)) * 3)
                                     for _ in range(3)])
        cfeat = _node(rng.normal(size=(f, h, w)) * 3)
        attn = {}
        hca.hca_forward(pn, "hca", feats, cfeat, attn)
        assert set(attn) == {"hca.person.att_pp", "hca.pc.att_cp", "hca.pc.att_pc"}
        for mat in attn.values():
            assert mat.shape == (h * w, h * w)
            np.testing.assert_allclose(mat.value.sum(axis=1), 1.0, atol=1e-9)
            assert (mat.value >= 0).all()


def test_spatial_permutation_equivariance(rng):
    # 1x1 projections only, so permuting positions permutes the output
    f, h, w = 3, 1, 5
    params = {}
    hca.init_hca(params, rng, "hca", f)
    pn = nn.bind(params)
    arrs = [rng.normal(size=(f, h, w)) for _ in range(4)]
    perm = rng.permutation(w)
    out = hca.hca_forward(pn, "hca",
                          hca.PersonFeatures(*map(_node, arrs[:3])),
                          _node(arrs[3]))
    out_p = hca.hca_forward(pn, "hca",
                            hca.PersonFeatures(*[_node(a[:, :, perm]) for a in arrs[:3]]),
                            _node(arrs[3][:, :, perm]))
    np.testing.assert_allclose(out_p.value, out.value[:, :, perm], atol=1e-10)


def test_shape_mismatch_rejected(rng):
    f = 2
    params = {}
    hca.init_cross_pc(params, rng, "pc", f)
    pn = nn.bind(params)
    import pytest

    with pytest.raises(ValueError):
        hca.cross_attention_pc(pn, "pc", _node(rng.normal(size=(f, 2, 2))),
                               _node(rng.normal(size=(f, 2, 3))))
