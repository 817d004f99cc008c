# Architecture configuration for the attention network.

from dataclasses import asdict, dataclass, field
from enum import Enum

from ..errors import ConfigError
from ..utils.resource_loader import dataclass_from_dict

NUM_CLASSES = 8
FULL_SCALE_INPUT_SIZE = 224
DESK_INPUT_SIZE = 64
DESK_WIDTHS = (16, 32, 64)


class Task(str, Enum):
    EXPR = "expr"
    VA = "va"

    @classmethod
    def parse(cls, value) -> "Task":
        if isinstance(value, Task):
            return value
        try:
            return cls(str(value).lower())
        except ValueError as e:
            raise ConfigError(f"unknown task '{value}' (expected 'expr' or 'va')") from e


@dataclass
class ModelConfig:
    input_size: int = DESK_INPUT_SIZE
    channels: int = 3
    num_heads: int = 4
    num_classes: int = NUM_CLASSES
    backbone_widths: list[int] = field(default_factory=lambda: list(DESK_WIDTHS))
    blocks_per_stage: int = 2
    reduction: int = 4
    hidden_dim: int | None = None     # task-head width; None means feature_dim
    task: Task = Task.EXPR
    seed: int = 0
    bn_momentum: float = 0.1
    bn_epsilon: float = 1e-5

    def __post_init__(self):
        self.task = Task.parse(self.task)
        self.backbone_widths = [int(w) for w in self.backbone_widths]
        if not self.backbone_widths or any(w < 1 for w in self.backbone_widths):
            raise ConfigError(f"backbone_widths must be a non-empty list of positive ints, got {self.backbone_widths}")
        if self.num_heads < 1:
            raise ConfigError(f"num_heads must be >= 1, got {self.num_heads}")
        if self.blocks_per_stage < 1:
            raise ConfigError(f"blocks_per_stage must be >= 1, got {self.blocks_per_stage}")
        if self.channels != 3:
            raise ConfigError(f"channels must be 3 (RGB), got {self.channels}")
        if self.task is Task.EXPR and self.num_classes != NUM_CLASSES:
            raise ConfigError(f"num_classes must be {NUM_CLASSES} for the expression task, got {self.num_classes}")
        if self.input_size < 1 or self.input_size % (2 ** self.stages):
            raise ConfigError(
                f"input_size {self.input_size} must be divisible by 2^{self.stages} for {self.stages} stages")
        if self.reduction < 1 or self.feature_dim < self.reduction:
            raise ConfigError(
                f"feature_dim {self.feature_dim} must be >= the attention reduction ratio {self.reduction}")
        if self.hidden_dim is not None and self.hidden_dim < 1:
            raise ConfigError(f"hidden_dim must be positive, got {self.hidden_dim}")
        if not 0.0 < self.bn_momentum <= 1.0 or self.bn_epsilon <= 0:
            raise ConfigError("bn_momentum must be in (0,1] and bn_epsilon > 0")

    @property
    def stages(self) -> int:
        return len(self.backbone_widths)

    @property
    def feature_dim(self) -> int:
        return self.backbone_widths[-1]

    @property
    def feature_size(self) -> int:
        return self.input_size // (2 ** self.stages)

    @property
    def attention_dim(self) -> int:
        return self.feature_dim // self.reduction

    @property
    def head_hidden(self) -> int:
        return self.hidden_dim or self.feature_dim

    @property
    def output_dim(self) -> int:
        return self.num_classes if self.task is Task.EXPR else 2

    @classmethod
    def from_dict(cls, d: dict | None) -> "ModelConfig":
        return dataclass_from_dict(cls, d, "model")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["task"] = self.task.value
        return d
