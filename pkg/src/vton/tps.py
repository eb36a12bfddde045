"""Differentiable thin-plate-spline warping.

A k x k lattice of control points spans the normalized square [-1,1]^2.
The warp parameters are per-control-point displacements (dx then dy,
2*k^2 values); the dense sampling grid is an exactly linear function of
the displaced target coordinates, precomputed once as a basis matrix so
that parameters -> grid is a single matmul (and trivially differentiable).
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .tensor import ShapeError

RIDGE = 1e-6


def _tps_kernel(r2):
    """U(r) = r^2 log(r^2), with U(0) = 0."""
    out = np.zeros_like(r2)
    nz = r2 > 0
    out[nz] = r2[nz] * np.log(r2[nz])
    return out


def control_lattice(k: int):
    """Row-major k x k lattice over [-1,1]^2; returns (sx, sy) flat arrays."""
    if k < 2:
        raise ShapeError(f"TPS lattice side must be >= 2, got {k}")
    line = np.linspace(-1.0, 1.0, k)
    sy, sx = np.meshgrid(line, line, indexing="ij")
    return sx.ravel(), sy.ravel()


@dataclass
class TpsBasis:
    """Precomputed linear map from target control coordinates to grid values."""

    k: int
    height: int
    width: int
    matrix: np.ndarray  # (H*W, k*k); rows sum to 1
    source_x: np.ndarray = field(repr=False, default=None)
    source_y: np.ndarray = field(repr=False, default=None)


def tps_basis(k: int, height: int, width: int) -> TpsBasis:
    """Solve the TPS kernel system once for a fixed lattice and output size.

    With the affine part and radial kernel folded into a single matrix B,
    each grid coordinate plane is B @ targets for that axis. A small ridge
    on the kernel diagonal keeps the system solvable.
    """
    sx, sy = control_lattice(k)
    n = k * k
    d2 = (sx[:, None] - sx[None, :]) ** 2 + (sy[:, None] - sy[None, :]) ** 2
    kmat = _tps_kernel(d2) + RIDGE * np.eye(n)
    pmat = np.column_stack([np.ones(n), sx, sy])
    lmat = np.zeros((n + 3, n + 3))
    lmat[:n, :n] = kmat
    lmat[:n, n:] = pmat
    lmat[n:, :n] = pmat.T
    try:
        linv = np.linalg.inv(lmat)
    except np.linalg.LinAlgError as e:
        raise ArithmeticError(f"TPS system singular for k={k}: {e}") from e

    qx = np.linspace(-1.0, 1.0, width)
    qy = np.linspace(-1.0, 1.0, height)
    gy, gx = np.meshgrid(qy, qx, indexing="ij")
    gx = gx.ravel()
    gy = gy.ravel()
    q2 = (gx[:, None] - sx[None, :]) ** 2 + (gy[:, None] - sy[None, :]) ** 2
    qmat = np.column_stack([_tps_kernel(q2), np.ones(gx.size), gx, gy])
    basis = qmat @ linv[:, :n]
    return TpsBasis(k, height, width, np.ascontiguousarray(basis), sx, sy)


def identity_grid(height: int, width: int) -> np.ndarray:
    gx = np.broadcast_to(np.linspace(-1.0, 1.0, width), (height, width))
    gy = np.broadcast_to(np.linspace(-1.0, 1.0, height)[:, None], (height, width))
    return np.ascontiguousarray(np.stack([gx, gy]))


def _check_theta(theta_shape, k: int):
    if theta_shape != (2 * k * k,):
        raise ShapeError(f"theta shape {theta_shape} != ({2 * k * k},) for k={k}")


def tps_grid(theta: np.ndarray, basis: TpsBasis) -> np.ndarray:
    """Dense (2,H,W) sampling grid for displacement parameters theta."""
    theta = np.asarray(theta, dtype=np.float64)
    _check_theta(theta.shape, basis.k)
    n = basis.k * basis.k
    tx = basis.source_x + theta[:n]
    ty = basis.source_y + theta[n:]
    gx = (basis.matrix @ tx).reshape(basis.height, basis.width)
    gy = (basis.matrix @ ty).reshape(basis.height, basis.width)
    return np.ascontiguousarray(np.stack([gx, gy]))


def tps_grid_node(theta: ad.Node, basis: TpsBasis) -> ad.Node:
    """Graph version of tps_grid; gradient flows into theta."""
    _check_theta(theta.shape, basis.k)
    n = basis.k * basis.k
    bmat = ad.constant(basis.matrix)
    both = ad.reshape(theta, (2, n, 1))
    tx = ad.reshape(ad.channels(both, 0, 1), (n, 1)) + basis.source_x[:, None]
    ty = ad.reshape(ad.channels(both, 1, 2), (n, 1)) + basis.source_y[:, None]
    gx = ad.reshape(ad.matmul(bmat, tx), (1, basis.height, basis.width))
    gy = ad.reshape(ad.matmul(bmat, ty), (1, basis.height, basis.width))
    return ad.concat_channels([gx, gy])


def warp(image: np.ndarray, theta: np.ndarray, basis: TpsBasis) -> np.ndarray:
    """Backward-warp an image by the TPS grid induced by theta."""
    from . import tensor

    return tensor.grid_sample(np.asarray(image, dtype=np.float64),
                              tps_grid(theta, basis))


def warp_node(image: ad.Node, theta: ad.Node, basis: TpsBasis) -> ad.Node:
    return ad.grid_sample(image, tps_grid_node(theta, basis))
