from . import functional
from .core import DEFAULT_DTYPE, DiffTensor, ShapeError, as_tensor, concat
from .nn import BatchNorm2d, Conv2d, Dropout, LayerNorm, Linear, Module

__all__ = [
    "DEFAULT_DTYPE",
    "BatchNorm2d",
    "Conv2d",
    "DiffTensor",
    "Dropout",
    "LayerNorm",
    "Linear",
    "Module",
    "ShapeError",
    "as_tensor",
    "concat",
    "functional",
]
