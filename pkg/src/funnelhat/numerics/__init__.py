"""Float64 autodiff core: tensors, parameters, gradient checking."""

from ..errors import ConfigError, NumericError, ShapeError
from .gradcheck import grad_check
from .params import ParamSet, glorot_uniform
from .tensor import (
    Tensor,
    accum,
    add,
    concat,
    depthwise_conv1d,
    div,
    exp,
    from_op,
    layer_norm,
    log,
    log_softmax,
    matmul,
    mul,
    no_grad,
    pool1d,
    power,
    reduce_mean,
    reduce_sum,
    reshape,
    sigmoid,
    softmax,
    softplus,
    sqrt,
    stack_scalars,
    swish,
    take_last_axis,
    take_rows,
    take_slice,
    tanh,
    transpose,
)

__all__ = [
    "ConfigError",
    "NumericError",
    "ParamSet",
    "ShapeError",
    "Tensor",
    "accum",
    "add",
    "concat",
    "depthwise_conv1d",
    "div",
    "exp",
    "from_op",
    "glorot_uniform",
    "grad_check",
    "layer_norm",
    "log",
    "log_softmax",
    "matmul",
    "mul",
    "no_grad",
    "pool1d",
    "power",
    "reduce_mean",
    "reduce_sum",
    "reshape",
    "sigmoid",
    "softmax",
    "softplus",
    "sqrt",
    "stack_scalars",
    "swish",
    "take_last_axis",
    "take_rows",
    "take_slice",
    "tanh",
    "transpose",
]
