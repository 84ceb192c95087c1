"""Reverse-mode differentiation over numpy arrays."""
from .errors import ContractError, DimensionError, NumericError
from .gradcheck import GradCheckReport, grad_check, relative_error
from .params import ParameterSet, ParameterSnapshot, load_checkpoint, save_checkpoint
from .tensor import (
    Tensor,
    add,
    as_tensor,
    backward,
    bmm,
    check_finite,
    concat,
    conv2d,
    custom_op,
    elementwise,
    exp,
    expand,
    getitem,
    grad,
    linear,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    reciprocal,
    relu,
    reshape,
    set_check_finite,
    sigmoid,
    sigmoid_xent,
    softmax_xent,
    square,
    stack,
    stop_gradient,
    sub,
    sum,
    tanh,
    transpose,
    where_mask,
)
