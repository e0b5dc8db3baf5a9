"""Minimal dense reverse-mode autodiff on numpy arrays."""

from uareg.autodiff.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from uareg.autodiff.gradcheck import grad_check
from uareg.autodiff.ops import (avg_pool2d, batch_norm2d, concat, conv2d, exp, flatten, linear, log,
                                log_softmax, matmul, max_pool2d, relu, reshape,
                                scaled_dot_product_attention, softmax)
from uareg.autodiff.tensor import (NonFiniteError, Tensor, default_dtype, get_default_dtype,
                                   no_grad, set_default_dtype, tensor)

__all__ = [
    "CheckpointError", "NonFiniteError", "Tensor", "avg_pool2d", "batch_norm2d", "concat",
    "conv2d", "default_dtype", "exp", "flatten", "get_default_dtype", "grad_check", "linear",
    "load_checkpoint", "log", "log_softmax", "matmul", "max_pool2d", "no_grad", "relu",
    "reshape", "save_checkpoint", "scaled_dot_product_attention", "set_default_dtype",
    "softmax", "tensor",
]
