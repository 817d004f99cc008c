# Parameter updates: Adam with decoupled weight decay, SGD with momentum,
# learning-rate schedules and optional global-norm gradient clipping.

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..diffcore import Tensor
from ..errors import CheckpointError, DimensionError, TrainingDivergenceError
from .config import TrainConfig

logger = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    """Step count and per-parameter moment buffers.

    Adam keeps ``m`` (first moment) and ``v`` (second moment); SGD keeps its
    velocity in ``m`` and leaves ``v`` empty.
    """

    family: str
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def create(cls, family: str, params: dict[str, Tensor]) -> "OptimizerState":
        m = {name: np.zeros_like(p.data) for name, p in params.items()}
        v = {name: np.zeros_like(p.data) for name, p in params.items()} if family == "adam" else {}
        return cls(family, 0, m, v)

    def meta(self, config: TrainConfig | None = None) -> dict:
        meta = {"family": self.family, "step": self.step}
        if config is not None:
            meta.update(learning_rate=config.learning_rate, weight_decay=config.weight_decay,
                        betas=list(config.betas), epsilon=config.epsilon, momentum=config.momentum,
                        schedule=config.schedule, grad_clip=config.grad_clip)
        return meta

    def buffers(self) -> dict[str, dict[str, np.ndarray]]:
        out = {}
        for name, m in self.m.items():
            out[name] = {"m": m}
            if name in self.v:
                out[name]["v"] = self.v[name]
        return out

    @classmethod
    def from_checkpoint(cls, meta: dict, buffers: dict[str, dict[str, np.ndarray]],
                        params: dict[str, Tensor]) -> "OptimizerState":
        family = meta.get("family", "adam")
        state = cls.create(family, params)
        state.step = int(meta.get("step", 0))
        for name, slots in buffers.items():
            if name not in params:
                raise CheckpointError(f"optimizer buffer for unknown parameter '{name}'")
            for slot, arr in slots.items():
                target = state.m if slot == "m" else state.v
                if arr.shape != params[name].shape:
                    raise CheckpointError(f"optimizer buffer '{name}/{slot}' has shape {arr.shape}, "
                                          f"expected {params[name].shape}")
                target[name] = arr.copy()
        return state


def learning_rate_at(config: TrainConfig, step: int, total_steps: int) -> float:
    """Learning rate for the 0-based global ``step``."""
    if config.schedule == "constant" or total_steps <= 1:
        return config.learning_rate
    return config.learning_rate * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so their global L2 norm is at most ``max_norm``; returns the norm."""
    norm = math.sqrt(math.fsum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads.values():
            g *= g.dtype.type(scale)
    return norm


def _gather_gradients(params: dict[str, Tensor], grads: dict[str, np.ndarray] | None,
                      step: int) -> dict[str, np.ndarray]:
    out = {}
    for name, p in params.items():
        g = grads.get(name) if grads is not None else p.grad
        if g is None:
            g = np.zeros_like(p.data)
        else:
            g = np.array(g, dtype=p.dtype, copy=True)
        if g.shape != p.shape:
            raise DimensionError(f"gradient of '{name}' has shape {g.shape}, parameter has {p.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingDivergenceError(f"non-finite gradient in parameter '{name}'",
                                          {"parameter": name, "step": step})
        out[name] = g
    return out


def optimizer_step(params: dict[str, Tensor], state: OptimizerState, config: TrainConfig,
                   grads: dict[str, np.ndarray] | None = None, lr: float | None = None) -> OptimizerState:
    """Apply one update to ``params`` in place.

    ``grads`` defaults to each parameter's accumulated ``.grad``; ``lr``
    overrides ``config.learning_rate`` (schedules, tests). Weight decay is
    decoupled: p <- p - lr * wd * p after the adaptive step.
    """
    grads = _gather_gradients(params, grads, state.step)
    if config.grad_clip is not None:
        clip_gradients(grads, config.grad_clip)
    lr = config.learning_rate if lr is None else float(lr)
    state.step += 1
    if lr == 0.0:
        return state

    if state.family == "adam":
        beta1, beta2 = config.betas
        c1 = 1.0 - beta1 ** state.step
        c2 = 1.0 - beta2 ** state.step
        for name, p in params.items():
            g = grads[name]
            m = state.m[name]
            v = state.v[name]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + config.epsilon)
            p.data -= (lr * update).astype(p.dtype, copy=False)
    else:
        for name, p in params.items():
            velocity = state.m[name]
            velocity *= config.momentum
            velocity += grads[name]
            p.data -= (lr * velocity).astype(p.dtype, copy=False)

    shrink = 1.0 - lr * config.weight_decay
    for p in params.values():
        p.data *= p.dtype.type(shrink)
    return state
