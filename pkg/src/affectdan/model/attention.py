# Attention heads (spatial unit x channel unit) and their fusion.

from dataclasses import dataclass

import numpy as np

from ..diffcore import (Tensor, conv2d, dense, global_avg_pool, log_softmax, relu, sigmoid,
                        stack)
from ..errors import ConfigError, DimensionError
from .config import ModelConfig

GATE_OVERRIDE_BIAS = 40.0


@dataclass
class HeadOutput:
    features: Tensor       # f_h [N, C]
    spatial_map: Tensor    # a_h [N, 1, H', W'], in (0,1)
    channel_gate: Tensor   # c_h [N, C], in (0,1)


def _check_units(feature_map: Tensor, params: dict[str, Tensor], prefix: str, unit: str) -> None:
    if feature_map.ndim != 4:
        raise DimensionError(f"{unit} attention expects a [N,C,H,W] feature map, got shape {feature_map.shape}")
    expected = params[f"{prefix}.channel.squeeze.weight"].shape[0]
    if feature_map.shape[1] != expected:
        raise DimensionError(
            f"{unit} attention ({prefix}) expects {expected} channels, got {feature_map.shape[1]}")


def spatial_attention_unit(feature_map: Tensor, params: dict[str, Tensor], prefix: str) -> Tensor:
    """1x1 reduce, relu, 3x3 mix, relu, 1x1 score, sigmoid -> [N,1,H,W]."""
    _check_units(feature_map, params, prefix, "spatial")
    p = f"{prefix}.spatial"
    h = relu(conv2d(feature_map, params[f"{p}.reduce.weight"], params[f"{p}.reduce.bias"]))
    h = relu(conv2d(h, params[f"{p}.mix.weight"], params[f"{p}.mix.bias"], padding=1))
    return sigmoid(conv2d(h, params[f"{p}.score.weight"], params[f"{p}.score.bias"]))


def channel_attention_unit(feature_map: Tensor, params: dict[str, Tensor], prefix: str) -> Tensor:
    """Global average pool, squeeze dense, relu, expand dense, sigmoid -> [N,C]."""
    _check_units(feature_map, params, prefix, "channel")
    p = f"{prefix}.channel"
    h = relu(dense(global_avg_pool(feature_map), params[f"{p}.squeeze.weight"], params[f"{p}.squeeze.bias"]))
    return sigmoid(dense(h, params[f"{p}.expand.weight"], params[f"{p}.expand.bias"]))


def attention_head(feature_map: Tensor, params: dict[str, Tensor], prefix: str) -> HeadOutput:
    spatial_map = spatial_attention_unit(feature_map, params, prefix)
    gate = channel_attention_unit(feature_map, params, prefix)
    n, c = gate.shape
    attended = feature_map * spatial_map * gate.reshape(n, c, 1, 1)
    return HeadOutput(global_avg_pool(attended), spatial_map, gate)


def attention_fusion(head_outputs: list[HeadOutput]) -> Tensor:
    """Per-feature convex combination of the head vectors.

    Weights are the softmax across heads of the head features themselves
    (computed as exp(log_softmax)), so the result is invariant to head order.
    """
    if not head_outputs:
        raise ConfigError("attention_fusion needs at least one head")
    stacked = stack([h.features for h in head_outputs], axis=0)   # [H, N, C]
    weights = log_softmax(stacked, axis=0).exp()
    return (stacked * weights).sum(axis=0)


def force_attention_gates(params: dict[str, Tensor], config: ModelConfig,
                          bias: float = GATE_OVERRIDE_BIAS, heads=None) -> None:
    """Pin spatial maps and channel gates of the given heads to sigmoid(bias).

    Zeroes the final weights of both units and sets their biases, so +40 drives
    every gate to 1 and -40 drives every gate towards 0.
    """
    for h in (range(config.num_heads) if heads is None else heads):
        for layer in (f"head{h}.spatial.score", f"head{h}.channel.expand"):
            params[f"{layer}.weight"].data[...] = 0.0
            params[f"{layer}.bias"].data[...] = np.asarray(bias, dtype=params[f"{layer}.bias"].dtype)
