# Finite-difference cases for the differentiable losses, including the full
# combined objective through a tiny network.

import numpy as np

from ..diffcore import CHECK_DTYPE, Mode, Tensor, softmax, tanh_op
from ..diffcore.gradcheck import CaseBuilder, run_cases
from ..model.config import NUM_CLASSES, ModelConfig, Task
from ..model.network import model_forward
from ..model.params import init_params, init_running_stats
from .config import ClassCenters, LossConfig, va_bins
from .losses import affinity_loss, ccc_loss, combined_loss, focal_loss, partition_loss

TINY_MODEL = {"input_size": 8, "backbone_widths": [4], "num_heads": 2, "blocks_per_stage": 1}


def _t(rng, *shape, low=-1.0, high=1.0) -> Tensor:
    return Tensor(rng.uniform(low, high, size=shape), dtype=CHECK_DTYPE)


def _case_focal(rng):
    labels = rng.integers(0, NUM_CLASSES, size=6)
    config = LossConfig(focal_gamma=2.0, focal_alpha=list(rng.uniform(0.5, 2.0, size=NUM_CLASSES)))
    return (lambda x: focal_loss(softmax(x, axis=1), labels, config)), _t(rng, 6, NUM_CLASSES, low=-2, high=2)


def _case_affinity(rng):
    centers = ClassCenters.zeros(NUM_CLASSES, 5, dtype=np.float64)
    for c in range(4):
        centers.set(c, rng.normal(size=5))
    labels = rng.integers(0, 4, size=6)
    return (lambda x: affinity_loss(x, labels, centers)), _t(rng, 6, 5)


def _case_partition(rng):
    def f(x):
        return partition_loss([x[h] for h in range(3)])
    return f, _t(rng, 3, 4, 5)


def _case_ccc(rng):
    target = rng.uniform(-0.9, 0.9, size=(8, 2))
    return (lambda x: ccc_loss(tanh_op(x), target)), _t(rng, 8, 2, low=-1.5, high=1.5)


def _tiny_combined(task: Task, param: str) -> CaseBuilder:
    def build(rng):
        config = ModelConfig(**TINY_MODEL, task=task, seed=int(rng.integers(0, 2 ** 31)))
        params = init_params(config, dtype=CHECK_DTYPE)
        running = init_running_stats(config, dtype=CHECK_DTYPE)
        images = Tensor(rng.uniform(-1, 1, size=(4, 3, 8, 8)), dtype=CHECK_DTYPE)
        loss_config = LossConfig(lambda_affinity=1.0, lambda_affinity_va=1.0, lambda_partition=1.0)
        if task is Task.EXPR:
            targets = rng.integers(0, NUM_CLASSES, size=4)
            centers = ClassCenters.for_task(task, config.feature_dim, dtype=np.float64)
            ids = targets
        else:
            targets = rng.uniform(-0.9, 0.9, size=(4, 2))
            centers = ClassCenters.for_task(task, config.feature_dim, dtype=np.float64)
            ids = va_bins(targets)
        for c in np.unique(ids):
            centers.set(int(c), rng.normal(size=config.feature_dim))

        def f(x):
            local = dict(params)
            local[param] = x
            stats = {k: v.copy() for k, v in running.items()}
            out = model_forward(images, local, config, Mode.TRAIN, stats)
            return combined_loss(out, targets, loss_config, centers).total

        return f, Tensor(params[param].data.copy(), dtype=CHECK_DTYPE)
    return build


OBJECTIVE_CASES: dict[str, CaseBuilder] = {
    "focal": _case_focal,
    "affinity": _case_affinity,
    "partition": _case_partition,
    "ccc_loss": _case_ccc,
    "combined/expr/task.fc1.weight": _tiny_combined(Task.EXPR, "task.fc1.weight"),
    "combined/expr/head0.channel.squeeze.weight": _tiny_combined(Task.EXPR, "head0.channel.squeeze.weight"),
    "combined/va/task.fc2.weight": _tiny_combined(Task.VA, "task.fc2.weight"),
}


def run_objectives_suite(instances: int = 20, seed: int = 0, **kwargs):
    return run_cases(OBJECTIVE_CASES, instances=instances, seed=seed, **kwargs)
