# Training configuration and the run-config file loader.
#
# A run-config file (YAML, or JSON) holds the sections
#   model, loss, train, data, synth, ensemble, logging
# whose keys mirror the dataclass field names; unknown keys are errors.

import math
from dataclasses import asdict, dataclass, field

from ..data.loader import DataConfig
from ..data.synth import SynthSpec
from ..errors import ConfigError
from ..model.config import ModelConfig
from ..objectives.config import LossConfig
from ..utils.resource_loader import dataclass_from_dict, load_config

FULL_SCALE_BATCH_SIZE = 1024
DESK_BATCH_SIZE = 32

RUN_SECTIONS = ("model", "loss", "train", "data", "synth", "ensemble", "logging")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    epochs: int = 8
    batch_size: int = DESK_BATCH_SIZE
    seed: int = 0
    optimizer: str = "adam"              # adam | sgd
    betas: list[float] = field(default_factory=lambda: [0.9, 0.999])
    epsilon: float = 1e-8
    momentum: float = 0.9                # sgd only
    schedule: str = "constant"           # constant | cosine
    grad_clip: float | None = None       # global-norm clip, off by default
    checkpoint_every: int = 1
    steps_per_epoch: int | None = None   # None: one pass worth of draws
    eval_batch_size: int = 64
    progress: bool = True
    loss: LossConfig = field(default_factory=LossConfig)
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if not isinstance(self.loss, LossConfig):
            self.loss = LossConfig.from_dict(self.loss)
        if not isinstance(self.model, ModelConfig):
            self.model = ModelConfig.from_dict(self.model)
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ConfigError(f"train.learning_rate must be > 0, got {self.learning_rate}")
        if not (math.isfinite(self.weight_decay) and self.weight_decay > 0):
            raise ConfigError(f"train.weight_decay must be > 0, got {self.weight_decay}")
        if self.batch_size < 2:
            raise ConfigError(f"train.batch_size must be >= 2 for batch normalization, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"train.epochs must be >= 0, got {self.epochs}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"train.optimizer must be 'adam' or 'sgd', got '{self.optimizer}'")
        if self.schedule not in ("constant", "cosine"):
            raise ConfigError(f"train.schedule must be 'constant' or 'cosine', got '{self.schedule}'")
        self.betas = [float(b) for b in self.betas]
        if len(self.betas) != 2 or not all(0.0 <= b < 1.0 for b in self.betas):
            raise ConfigError(f"train.betas must be two values in [0, 1), got {self.betas}")
        if self.epsilon <= 0:
            raise ConfigError(f"train.epsilon must be > 0, got {self.epsilon}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError(f"train.grad_clip must be > 0 when set, got {self.grad_clip}")
        if self.checkpoint_every < 1:
            raise ConfigError(f"train.checkpoint_every must be >= 1, got {self.checkpoint_every}")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise ConfigError(f"train.steps_per_epoch must be >= 1 when set, got {self.steps_per_epoch}")

    @classmethod
    def from_dict(cls, d: dict | None) -> "TrainConfig":
        return dataclass_from_dict(cls, d, "train")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        d["loss"] = self.loss.to_dict()
        return d


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    synth: SynthSpec = field(default_factory=SynthSpec)
    ensemble: dict = field(default_factory=dict)
    logging: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict | None) -> "RunConfig":
        d = dict(d or {})
        unknown = sorted(set(d) - set(RUN_SECTIONS))
        if unknown:
            raise ConfigError(f"unknown top-level section(s) {unknown}; expected {list(RUN_SECTIONS)}")
        train = dict(d.get("train") or {})
        for section in ("model", "loss"):
            if section in d:
                if section in train:
                    raise ConfigError(f"'{section}' given both at top level and inside 'train'")
                train[section] = d[section] or {}
        return cls(
            train=TrainConfig.from_dict(train),
            data=DataConfig.from_dict(d.get("data")),
            synth=SynthSpec.from_dict(d.get("synth")),
            ensemble=dict(d.get("ensemble") or {}),
            logging=dict(d.get("logging") or {}),
        )


def load_run_config(path: str | None = None, seed: int | None = None) -> RunConfig:
    """Parse a run-config file (or defaults); ``seed`` overrides train.seed and model.seed."""
    config = RunConfig.from_dict(load_config(path))
    if seed is not None:
        config.train.seed = int(seed)
        config.train.model.seed = int(seed)
        config.synth.seed = int(seed)
    return config
