# Residual CNN feature extractor.
#
# stem 3x3 conv -> for each stage: 2x2 max-pool, then blocks of
# relu(conv3x3(relu(conv3x3(x))) + shortcut), where the shortcut is a 1x1
# projection when the width changes and the identity otherwise.

from ..diffcore import Tensor, conv2d, global_avg_pool, max_pool, relu
from ..errors import DimensionError, GeometryError
from .config import ModelConfig
from .params import block_prefix


def residual_block(x: Tensor, params: dict[str, Tensor], prefix: str) -> Tensor:
    h = relu(conv2d(x, params[f"{prefix}.conv1.weight"], params[f"{prefix}.conv1.bias"], padding=1))
    h = conv2d(h, params[f"{prefix}.conv2.weight"], params[f"{prefix}.conv2.bias"], padding=1)
    if f"{prefix}.proj.weight" in params:
        shortcut = conv2d(x, params[f"{prefix}.proj.weight"], params[f"{prefix}.proj.bias"])
    else:
        shortcut = x
    return relu(h + shortcut)


def backbone_forward(images: Tensor, params: dict[str, Tensor], config: ModelConfig) -> tuple[Tensor, Tensor]:
    """images [N,3,S,S] -> (feature_map [N,C,S/2^stages,S/2^stages], pooled [N,C])."""
    if images.ndim != 4 or images.shape[1] != config.channels:
        raise DimensionError(f"backbone expects [N,{config.channels},S,S] images, got shape {images.shape}")
    size = config.input_size
    if images.shape[2:] != (size, size):
        raise GeometryError(f"backbone expects {size}x{size} images, got {images.shape[2]}x{images.shape[3]}")

    x = relu(conv2d(images, params["backbone.stem.weight"], params["backbone.stem.bias"], padding=1))
    for s in range(config.stages):
        x = max_pool(x, 2, 2)
        for b in range(config.blocks_per_stage):
            x = residual_block(x, params, block_prefix(s, b))
    return x, global_avg_pool(x)
