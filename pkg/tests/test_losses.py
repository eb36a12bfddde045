"""Loss terms against brute-force oracles and fixed points."""

import numpy as np
import pytest

from vton import autodiff as ad
from vton import losses, tps
from vton.losses import LossWeights


def test_l1_matches_numpy(rng):
    a = rng.normal(size=(3, 4, 5))
    b = rng.normal(size=(3, 4, 5))
    assert losses.l1_loss(a, b).value == pytest.approx(np.abs(a - b).mean())


def test_l1_zero_on_equal(rng):
    a = rng.normal(size=(2, 3, 3))
    assert losses.l1_loss(a, a.copy()).value == 0.0


def _brute_force_reg(grid, gx_only=False):
    nch = 1 if gx_only else 2
    total = 0.0
    count = 0
    _, h, w = grid.shape
    for c in range(nch):
        for i in range(h):
            for j in range(w):
                for di, dj in ((0, 1), (0, -1), (1, 0), (-1, 0)):
                    ii, jj = i + di, j + dj
                    if 0 <= ii < h and 0 <= jj < w:
                        total += abs(grid[c, i, j] - grid[c, ii, jj])
                        count += 1
    return total / count


def test_grid_regularization_brute_force_3x3(rng):
    grid = rng.normal(size=(2, 3, 3))
    assert losses.grid_regularization(grid).value == pytest.approx(
        _brute_force_reg(grid), abs=1e-12)
    assert losses.grid_regularization(grid, gx_only=True).value == pytest.approx(
        _brute_force_reg(grid, gx_only=True), abs=1e-12)


def test_grid_regularization_brute_force_larger(rng):
    grid = rng.normal(size=(2, 5, 4))
    assert losses.grid_regularization(grid).value == pytest.approx(
        _brute_force_reg(grid), abs=1e-12)


def test_grid_regularization_zero_on_constant_grid():
    grid = np.full((2, 6, 6), 0.37)
    assert losses.grid_regularization(grid).value == 0.0


def test_grid_regularization_shape_errors():
    with pytest.raises(ValueError):
        losses.grid_regularization(np.zeros((3, 4, 4)))
    with pytest.raises(ValueError):
        losses.grid_regularization(np.zeros((2, 2, 4)))


def test_perceptual_loss_properties(rng):
    fp = losses.perceptual_params(seed=11)
    a = rng.uniform(0, 1, (3, 8, 8))
    b = rng.uniform(0, 1, (3, 8, 8))
    assert losses.perceptual_loss(a, a.copy(), fp).value == 0.0
    lab = losses.perceptual_loss(a, b, fp).value
    lba = losses.perceptual_loss(b, a, fp).value
    assert lab == pytest.approx(lba, abs=1e-12)
    assert lab > 0


def test_perceptual_params_deterministic():
    p1 = losses.perceptual_params(seed=5)
    p2 = losses.perceptual_params(seed=5)
    for k in p1:
        np.testing.assert_array_equal(p1[k], p2[k])


def test_compose_limits_exact(rng):
    warped = rng.uniform(0, 1, (3, 4, 4))
    rendered = rng.uniform(0, 1, (3, 4, 4))
    ones = np.ones((1, 4, 4))
    np.testing.assert_array_equal(
        losses.compose_output(ones, warped, rendered).value, warped)
    np.testing.assert_array_equal(
        losses.compose_output(np.zeros((1, 4, 4)), warped, rendered).value, rendered)
    # checkerboard mask selects per pixel
    m = np.indices((4, 4)).sum(axis=0) % 2
    out = losses.compose_output(m[None].astype(float), warped, rendered).value
    np.testing.assert_array_equal(out, np.where(m[None] == 1, warped, rendered))


def test_compose_mask_range_validated(rng):
    with pytest.raises(ValueError):
        losses.compose_output(np.full((1, 3, 3), 1.5),
                              rng.uniform(0, 1, (3, 3, 3)),
                              rng.uniform(0, 1, (3, 3, 3)))


def test_matching_loss_zero_on_perfect_warp():
    # perfect reconstruction plus a constant grid has no residual term
    h, w = 8, 6
    basis = tps.tps_basis(3, h, w)
    rng = np.random.default_rng(3)
    clothing = rng.uniform(0, 1, (3, h, w))
    mask = (rng.uniform(size=(1, h, w)) > 0.5).astype(float)
    theta = rng.uniform(-0.1, 0.1, 18)
    warped = tps.warp(clothing, theta, basis)
    warped_m = tps.warp(mask, theta, basis)
    const_grid = np.full((2, h, w), 0.2)
    loss = losses.matching_loss(warped, warped.copy(), const_grid,
                                warped_m, warped_m.copy(), LossWeights())
    assert loss.value == 0.0


def test_matching_loss_is_weighted_term_sum(rng):
    warped = rng.uniform(0, 1, (3, 5, 5))
    gt = rng.uniform(0, 1, (3, 5, 5))
    grid = rng.normal(size=(2, 5, 5))
    wm = rng.uniform(0, 1, (1, 5, 5))
    gm = rng.uniform(0, 1, (1, 5, 5))
    w = LossWeights(lambda_1=2.0, lambda_2=0.5, lambda_reg=0.25)
    terms = losses.matching_loss_terms(warped, gt, grid, wm, gm)
    total = losses.matching_loss(warped, gt, grid, wm, gm, w)
    expected = (2.0 * terms["l1"].value + 0.25 * terms["reg"].value
                + 0.5 * terms["mask"].value)
    assert total.value == pytest.approx(expected, abs=1e-12)
    no_b4 = losses.matching_loss(warped, gt, grid, wm, gm, w, use_b4=False)
    assert no_b4.value == pytest.approx(
        2.0 * terms["l1"].value + 0.25 * terms["reg"].value, abs=1e-12)


def test_tryon_loss_zero_at_ground_truth(rng):
    fp = losses.perceptual_params(seed=2)
    gt = rng.uniform(0, 1, (3, 8, 8))
    tm = rng.uniform(0, 1, (1, 8, 8))
    loss = losses.tryon_loss(gt.copy(), gt, tm.copy(), tm, fp, LossWeights())
    assert loss.value == 0.0


def test_tryon_loss_is_weighted_term_sum(rng):
    fp = losses.perceptual_params(seed=2)
    i_o = rng.uniform(0, 1, (3, 8, 8))
    gt = rng.uniform(0, 1, (3, 8, 8))
    m = rng.uniform(0, 1, (1, 8, 8))
    tm = rng.uniform(0, 1, (1, 8, 8))
    w = LossWeights(lambda_1=1.5, lambda_vgg=0.7, lambda_mask=2.0)
    terms = losses.tryon_loss_terms(i_o, gt, m, tm, fp)
    total = losses.tryon_loss(i_o, gt, m, tm, fp, w)
    expected = (1.5 * terms["l1"].value + 0.7 * terms["vgg"].value
                + 2.0 * terms["mask"].value)
    assert total.value == pytest.approx(expected, abs=1e-12)


def test_tryon_loss_mask_range_validated(rng):
    fp = losses.perceptual_params(seed=2)
    img = rng.uniform(0, 1, (3, 8, 8))
    with pytest.raises(ValueError):
        losses.tryon_loss(img, img, np.full((1, 8, 8), -0.2),
                          np.zeros((1, 8, 8)), fp, LossWeights())


def test_loss_weights_validated():
    with pytest.raises(ValueError):
        LossWeights(lambda_1=-1.0)
    with pytest.raises(ValueError):
        LossWeights(lambda_vgg=float("nan"))


def test_losses_are_graph_nodes(rng):
    a = ad.parameter(rng.normal(size=(2, 3, 3)), "a")
    loss = losses.l1_loss(a, np.zeros((2, 3, 3)))
    ad.backward(loss)
    assert np.any(a.grad != 0)
