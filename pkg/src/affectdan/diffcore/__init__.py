from .tensor import (CHECK_DTYPE, MAX_RANK, TRAIN_DTYPE, Tape, Tensor, add, as_tensor, backward,
                     clamp_min, default_dtype, div, exp, get_default_dtype, log, mean, mul, neg,
                     no_grad, power, reshape, set_debug, stack, sub, tsum)
from .ops import (Mode, RunningStats, batchnorm, conv2d, dense, global_avg_pool, log_softmax,
                  max_pool, relu, sigmoid, softmax, tanh_op)
from .gradcheck import GradCheckReport, SuiteResult, finite_diff_check, run_diffcore_suite

__all__ = [
    "Tensor", "Tape", "backward", "no_grad", "default_dtype", "get_default_dtype", "set_debug",
    "TRAIN_DTYPE", "CHECK_DTYPE", "MAX_RANK",
    "add", "sub", "mul", "div", "neg", "power", "exp", "log", "clamp_min", "tsum", "mean",
    "reshape", "stack", "as_tensor",
    "Mode", "RunningStats", "conv2d", "dense", "batchnorm", "relu", "sigmoid", "tanh_op",
    "softmax", "log_softmax", "max_pool", "global_avg_pool",
    "finite_diff_check", "GradCheckReport", "SuiteResult", "run_diffcore_suite",
]
