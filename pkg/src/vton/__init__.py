"""Two-stage virtual try-on: differentiable TPS geometric matching with
hierarchical cross-attention, U-Net composition, and desk-scale training."""

__version__ = "0.1.0"

from .kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
