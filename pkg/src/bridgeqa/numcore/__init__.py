"""Minimal dense-tensor numeric core: reverse-mode autodiff, recurrent cells,
Adam, and a finite-difference gradient checker."""

from .cells import (
    gru_cell,
    init_bidirectional,
    init_gru,
    init_lstm,
    lstm_cell,
    recurrent_cell,
    run_bidirectional,
    run_recurrent,
)
from .gradcheck import GradCheckReport, grad_check
from .optim import adam_step
from .params import ParamStore, glorot
from .tensor import (
    Tensor,
    accumulate,
    add,
    backward,
    concat,
    constant,
    cross_entropy_from_logits,
    dropout,
    gather_rows,
    matmul,
    max_pool_over_time,
    mul,
    relu,
    reshape,
    row_max,
    scale,
    shift,
    sigmoid,
    slice_cols,
    softmax_rows,
    sum_all,
    take_row,
    tanh,
    transpose,
)

__all__ = [
    "Tensor",
    "ParamStore",
    "GradCheckReport",
    "accumulate",
    "adam_step",
    "add",
    "backward",
    "concat",
    "constant",
    "cross_entropy_from_logits",
    "dropout",
    "gather_rows",
    "glorot",
    "grad_check",
    "gru_cell",
    "init_bidirectional",
    "init_gru",
    "init_lstm",
    "lstm_cell",
    "matmul",
    "max_pool_over_time",
    "mul",
    "recurrent_cell",
    "relu",
    "reshape",
    "row_max",
    "run_bidirectional",
    "run_recurrent",
    "scale",
    "shift",
    "sigmoid",
    "slice_cols",
    "softmax_rows",
    "sum_all",
    "take_row",
    "tanh",
    "transpose",
]
