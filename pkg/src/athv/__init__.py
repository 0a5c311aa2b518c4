"""Dual-domain compressed-sensing MRI reconstruction toolkit."""

from .tensor import Tensor, no_grad, ShapeError

__all__ = ["Tensor", "no_grad", "ShapeError"]
__version__ = "0.1.0"
