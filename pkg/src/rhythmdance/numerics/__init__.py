"""Float64 tensors with reverse-mode gradients, plus the layers the model needs."""
from .gradcheck import NonFiniteLoss, grad_check
from .layers import (
    BatchNormState,
    MaskError,
    activation,
    batchnorm,
    cross_entropy,
    linear,
    log_softmax,
    rmsnorm,
    softmax,
)
from .optim import SGD, Adam, clip_grad_norm, make_optimizer
from .params import ParamStore
from .tensor import ShapeError, Tensor, as_tensor, concat, no_grad

__all__ = [
    "Adam",
    "BatchNormState",
    "MaskError",
    "NonFiniteLoss",
    "ParamStore",
    "SGD",
    "ShapeError",
    "Tensor",
    "activation",
    "as_tensor",
    "batchnorm",
    "clip_grad_norm",
    "concat",
    "cross_entropy",
    "grad_check",
    "linear",
    "log_softmax",
    "make_optimizer",
    "no_grad",
    "rmsnorm",
    "softmax",
]
