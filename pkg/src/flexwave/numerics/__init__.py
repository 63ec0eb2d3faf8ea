"""Complex tensors with reverse-mode gradients, and a finite-difference oracle."""

from . import tensor as ops
from .gradcheck import finite_diff
from .tensor import Gradient, Tape, Tensor, as_tensor, backward, value_of

__all__ = [
    "Gradient",
    "Tape",
    "Tensor",
    "as_tensor",
    "backward",
    "finite_diff",
    "ops",
    "value_of",
]
