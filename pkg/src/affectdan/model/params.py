# Parameter naming, initialization and counting.
#
# Parameters live in one ordered dict of leaf Tensors keyed by dotted names
# ("backbone.stage1.block0.conv1.weight", "head2.channel.expand.bias", ...).
# Batchnorm running statistics are kept apart since they are not trained.

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..diffcore import RunningStats, TRAIN_DTYPE, Tensor
from .config import ModelConfig

logger = logging.getLogger(__name__)

# SeedSequence spawn keys: one stream per parameter group
_BACKBONE_STREAM = 0
_HEAD_STREAM = 1
_TASK_STREAM = 2

TASK_BN = "task.bn"


@dataclass(frozen=True)
class ParamSpec:
    name: str
    shape: tuple
    fan_in: int | None     # None: not a weight (bias / gamma / beta)
    fill: float = 0.0


def _conv(prefix: str, c_in: int, c_out: int, k: int) -> list[ParamSpec]:
    return [ParamSpec(f"{prefix}.weight", (c_out, c_in, k, k), c_in * k * k),
            ParamSpec(f"{prefix}.bias", (c_out,), None)]


def _dense(prefix: str, f_in: int, f_out: int) -> list[ParamSpec]:
    return [ParamSpec(f"{prefix}.weight", (f_in, f_out), f_in),
            ParamSpec(f"{prefix}.bias", (f_out,), None)]


def block_prefix(stage: int, block: int) -> str:
    return f"backbone.stage{stage}.block{block}"


def backbone_specs(config: ModelConfig) -> list[ParamSpec]:
    widths = config.backbone_widths
    specs = _conv("backbone.stem", config.channels, widths[0], 3)
    c_in = widths[0]
    for s, width in enumerate(widths):
        for b in range(config.blocks_per_stage):
            prefix = block_prefix(s, b)
            specs += _conv(f"{prefix}.conv1", c_in, width, 3)
            specs += _conv(f"{prefix}.conv2", width, width, 3)
            if c_in != width:
                specs += _conv(f"{prefix}.proj", c_in, width, 1)
            c_in = width
    return specs


def head_specs(config: ModelConfig, head: int) -> list[ParamSpec]:
    c, d = config.feature_dim, config.attention_dim
    prefix = f"head{head}"
    return (_conv(f"{prefix}.spatial.reduce", c, d, 1)
            + _conv(f"{prefix}.spatial.mix", d, d, 3)
            + _conv(f"{prefix}.spatial.score", d, 1, 1)
            + _dense(f"{prefix}.channel.squeeze", c, d)
            + _dense(f"{prefix}.channel.expand", d, c))


def task_specs(config: ModelConfig) -> list[ParamSpec]:
    hidden = config.head_hidden
    return (_dense("task.fc1", config.feature_dim, hidden)
            + [ParamSpec(f"{TASK_BN}.gamma", (hidden,), None, 1.0),
               ParamSpec(f"{TASK_BN}.beta", (hidden,), None, 0.0)]
            + _dense("task.fc2", hidden, config.output_dim))


def all_specs(config: ModelConfig) -> list[ParamSpec]:
    specs = backbone_specs(config)
    for h in range(config.num_heads):
        specs += head_specs(config, h)
    return specs + task_specs(config)


def _materialize(specs: list[ParamSpec], rng: np.random.Generator, dtype) -> dict[str, Tensor]:
    out = {}
    for spec in specs:
        if spec.fan_in is None:
            data = np.full(spec.shape, spec.fill, dtype=dtype)
        else:
            bound = math.sqrt(6.0 / spec.fan_in)   # Kaiming-uniform for relu nets
            data = rng.uniform(-bound, bound, size=spec.shape).astype(dtype)
        out[spec.name] = Tensor(data, requires_grad=True)
    return out


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *key]))


def init_params(config: ModelConfig, dtype=TRAIN_DTYPE) -> dict[str, Tensor]:
    """Fresh parameters: Kaiming-uniform weights, zero biases, gamma 1, beta 0.

    Each attention head draws from its own seed-derived stream, so heads start distinct.
    """
    params = _materialize(backbone_specs(config), _stream(config.seed, _BACKBONE_STREAM), dtype)
    for h in range(config.num_heads):
        params.update(_materialize(head_specs(config, h), _stream(config.seed, _HEAD_STREAM, h), dtype))
    params.update(_materialize(task_specs(config), _stream(config.seed, _TASK_STREAM), dtype))
    logger.debug("Initialized %d parameter tensors (%d values)", len(params), count_parameters(params))
    return params


def init_running_stats(config: ModelConfig, dtype=TRAIN_DTYPE) -> dict[str, RunningStats]:
    return {TASK_BN: RunningStats.fresh(config.head_hidden, dtype)}


def count_parameters(params: dict[str, Tensor]) -> int:
    return int(sum(p.size for p in params.values()))


def expected_parameter_count(config: ModelConfig) -> int:
    """Closed-form trainable-parameter count; mirrors docs/architecture.md."""
    def conv(c_in, c_out, k):
        return k * k * c_in * c_out + c_out

    widths = config.backbone_widths
    total = conv(config.channels, widths[0], 3)
    c_in = widths[0]
    for width in widths:
        for _ in range(config.blocks_per_stage):
            total += conv(c_in, width, 3) + conv(width, width, 3)
            if c_in != width:
                total += conv(c_in, width, 1)
            c_in = width

    c, d = config.feature_dim, config.attention_dim
    spatial = conv(c, d, 1) + conv(d, d, 3) + conv(d, 1, 1)
    channel = (c * d + d) + (d * c + c)
    total += config.num_heads * (spatial + channel)

    hidden = config.head_hidden
    total += (c * hidden + hidden) + 2 * hidden + (hidden * config.output_dim + config.output_dim)
    return total
