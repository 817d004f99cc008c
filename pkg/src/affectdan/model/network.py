# Full forward pass: backbone -> H attention heads -> fusion -> task head.

import logging
from dataclasses import dataclass

import numpy as np

from ..diffcore import Mode, RunningStats, Tensor
from ..errors import DimensionError
from .attention import HeadOutput, attention_fusion, attention_head
from .backbone import backbone_forward
from .config import ModelConfig, Task
from .heads import task_head
from .params import count_parameters, init_params, init_running_stats

logger = logging.getLogger(__name__)


@dataclass
class ModelOutput:
    task: Task
    fused_features: Tensor           # [N, C]
    head_outputs: list[HeadOutput]   # length H
    backbone_features: Tensor        # pooled backbone output, input of the affinity loss
    probs: Tensor | None = None      # EXPR [N, 8]
    va: Tensor | None = None         # VA [N, 2]

    @property
    def prediction(self) -> Tensor:
        return self.probs if self.task is Task.EXPR else self.va

    @property
    def head_features(self) -> list[Tensor]:
        return [h.features for h in self.head_outputs]


def model_forward(images: Tensor, params: dict[str, Tensor], config: ModelConfig,
                  mode: Mode | str, running: dict[str, RunningStats]) -> ModelOutput:
    mode = Mode(mode)
    feature_map, pooled = backbone_forward(images, params, config)
    heads = [attention_head(feature_map, params, f"head{h}") for h in range(config.num_heads)]
    fused = attention_fusion(heads)
    out = task_head(fused, params, config, mode, running)
    if config.task is Task.EXPR:
        return ModelOutput(config.task, fused, heads, pooled, probs=out)
    return ModelOutput(config.task, fused, heads, pooled, va=out)


class DanModel:
    """Parameters, batchnorm statistics and config of one network instance."""

    def __init__(self, config: ModelConfig, params: dict[str, Tensor] | None = None,
                 running: dict[str, RunningStats] | None = None):
        self.config = config
        self.params = params if params is not None else init_params(config)
        self.running = running if running is not None else init_running_stats(config)

    @property
    def task(self) -> Task:
        return self.config.task

    def forward(self, images, mode: Mode | str = Mode.EVAL) -> ModelOutput:
        if not isinstance(images, Tensor):
            images = Tensor(np.asarray(images, dtype=next(iter(self.params.values())).dtype))
        if images.ndim != 4:
            raise DimensionError(f"model expects an [N,3,S,S] batch, got shape {images.shape}")
        return model_forward(images, self.params, self.config, mode, self.running)

    __call__ = forward

    def parameters(self) -> list[tuple[str, Tensor]]:
        return list(self.params.items())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def num_parameters(self) -> int:
        return count_parameters(self.params)

    def clone(self) -> "DanModel":
        params = {k: Tensor(v.data.copy(), requires_grad=v.requires_grad) for k, v in self.params.items()}
        return DanModel(self.config, params, {k: v.copy() for k, v in self.running.items()})
