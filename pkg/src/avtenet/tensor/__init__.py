from .autograd import (
    Tensor,
    as_tensor,
    clip,
    concat,
    exp,
    gelu,
    is_recording,
    log,
    matmul,
    mean,
    no_grad,
    relu,
    stack,
    tanh,
)
from .checkpoint import CheckpointError
from .gradcheck import grad_check
from .ops import (
    backward,
    conv1d,
    conv2d,
    conv_out_len,
    layer_norm,
    linear,
    log_softmax,
    multi_head_attention,
    softmax,
)
from .optim import AdamState, adam_step
from .params import Module, ParameterSet

__all__ = [
    "AdamState",
    "CheckpointError",
    "Module",
    "ParameterSet",
    "Tensor",
    "adam_step",
    "as_tensor",
    "backward",
    "clip",
    "concat",
    "conv1d",
    "conv2d",
    "conv_out_len",
    "exp",
    "gelu",
    "grad_check",
    "is_recording",
    "layer_norm",
    "linear",
    "log",
    "log_softmax",
    "matmul",
    "mean",
    "multi_head_attention",
    "no_grad",
    "relu",
    "softmax",
    "stack",
    "tanh",
]
