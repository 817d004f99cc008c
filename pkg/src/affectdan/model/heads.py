# Task heads: dense -> batchnorm -> dense -> softmax (expression) | tanh (valence/arousal).

from ..diffcore import Mode, RunningStats, Tensor, batchnorm, dense, softmax, tanh_op
from .config import ModelConfig, Task
from .params import TASK_BN


def task_logits(fused: Tensor, params: dict[str, Tensor], config: ModelConfig,
                mode: Mode, running: dict[str, RunningStats]) -> Tensor:
    h = dense(fused, params["task.fc1.weight"], params["task.fc1.bias"])
    h = batchnorm(h, params[f"{TASK_BN}.gamma"], params[f"{TASK_BN}.beta"], mode, running[TASK_BN],
                  momentum=config.bn_momentum, epsilon=config.bn_epsilon)
    return dense(h, params["task.fc2.weight"], params["task.fc2.bias"])


def task_head(fused: Tensor, params: dict[str, Tensor], config: ModelConfig,
              mode: Mode, running: dict[str, RunningStats]) -> Tensor:
    """probs [N,8] for EXPR, va [N,2] strictly inside (-1,1) for VA."""
    logits = task_logits(fused, params, config, mode, running)
    if config.task is Task.EXPR:
        return softmax(logits, axis=1)
    return tanh_op(logits)
