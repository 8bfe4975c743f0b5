from .autodiff import (
    ShapeMismatchError,
    Tensor,
    add,
    conv1d,
    div,
    exp,
    gather_rows,
    linear,
    log,
    log_softmax,
    lstm_cell,
    matmul,
    mean,
    mul,
    neg,
    relu,
    reshape,
    select,
    sigmoid,
    softmax,
    sqrt,
    stack,
    sub,
    sum_,
    tanh,
    transpose,
)
from .graph import (
    ExprGraph,
    NonFiniteValueError,
    NonScalarOutputError,
    UnboundInputError,
    grad_check,
)
from .kernels import backend_name
from .optim import Adam, AdamState, adam_init, adam_step
