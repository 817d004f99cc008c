# Checkpoint container: a safetensors file (8-byte little-endian header length,
# JSON header with the tensor index, raw little-endian arrays). All run
# information sits in a single metadata entry holding sorted-key JSON, so
# identical runs produce identical bytes.

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from safetensors import SafetensorError
from safetensors.numpy import load as load_tensors
from safetensors.numpy import save_file

from ..diffcore import RunningStats, Tensor
from ..errors import CheckpointError, ConfigError, TaskMismatchError
from .config import ModelConfig, Task
from .network import DanModel
from .params import all_specs

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
METADATA_KEY = "affectdan"
PARAM_PREFIX = "param/"
RUNNING_PREFIX = "running/"
OPTIM_PREFIX = "optim/"
CENTERS_PREFIX = "centers/"


@dataclass
class Checkpoint:
    model_config: ModelConfig
    params: dict[str, np.ndarray]
    running: dict[str, RunningStats]
    optimizer: dict = field(default_factory=dict)                 # family, step, hyper-parameters
    optimizer_buffers: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    centers: dict[str, np.ndarray] = field(default_factory=dict)
    info: dict = field(default_factory=dict)                      # train config, epoch, scores

    @property
    def task(self) -> Task:
        return self.model_config.task

    def to_model(self) -> DanModel:
        params = {k: Tensor(v.copy(), requires_grad=True) for k, v in self.params.items()}
        running = {k: v.copy() for k, v in self.running.items()}
        return DanModel(self.model_config, params, running)


def save_checkpoint(path: str | os.PathLike, model: DanModel, *, optimizer: dict | None = None,
                    optimizer_buffers: dict[str, dict[str, np.ndarray]] | None = None,
                    centers: dict[str, np.ndarray] | None = None, info: dict | None = None) -> Path:
    tensors: dict[str, np.ndarray] = {}
    for name, p in model.params.items():
        tensors[PARAM_PREFIX + name] = np.ascontiguousarray(p.data)
    for name, stats in model.running.items():
        tensors[f"{RUNNING_PREFIX}{name}/mean"] = np.ascontiguousarray(stats.mean)
        tensors[f"{RUNNING_PREFIX}{name}/var"] = np.ascontiguousarray(stats.var)
    for pname, buffers in (optimizer_buffers or {}).items():
        for key, arr in buffers.items():
            tensors[f"{OPTIM_PREFIX}{pname}/{key}"] = np.ascontiguousarray(arr)
    for key, arr in (centers or {}).items():
        tensors[CENTERS_PREFIX + key] = np.ascontiguousarray(arr)

    header = {
        "format_version": FORMAT_VERSION,
        "model": model.config.to_dict(),
        "task": model.task.value,
        "optimizer": optimizer or {},
        "info": info or {},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    save_file(tensors, str(tmp), metadata={METADATA_KEY: json.dumps(header, sort_keys=True)})
    os.replace(tmp, path)
    logger.debug("Saved checkpoint %s (%d tensors)", path, len(tensors))
    return path


def _read_index(raw: bytes) -> dict:
    """Validate the container framing before any tensor is decoded."""
    if len(raw) < 8:
        raise CheckpointError("file is shorter than the 8-byte header length", offset=len(raw))
    header_len = int.from_bytes(raw[:8], "little")
    if 8 + header_len > len(raw):
        raise CheckpointError(f"header length {header_len} runs past the end of the file", offset=0)
    try:
        index = json.loads(raw[8:8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as e:
        raise CheckpointError(f"header is not valid JSON: {e}", offset=8) from e
    if not isinstance(index, dict):
        raise CheckpointError("header is not a JSON object", offset=8)

    body = len(raw) - 8 - header_len
    for name, entry in index.items():
        if name == "__metadata__":
            continue
        try:
            start, end = entry["data_offsets"]
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointError(f"tensor '{name}' has no valid data_offsets", offset=8) from e
        if not 0 <= start <= end or end > body:
            raise CheckpointError(f"tensor '{name}' is truncated", offset=8 + header_len + min(int(start), body))
    return index


def _read_info(index: dict) -> dict:
    meta = index.get("__metadata__") or {}
    if METADATA_KEY not in meta:
        raise CheckpointError(f"missing '{METADATA_KEY}' metadata entry", offset=8)
    try:
        info = json.loads(meta[METADATA_KEY])
    except ValueError as e:
        raise CheckpointError(f"metadata is not valid JSON: {e}", offset=8) from e
    version = info.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {version!r} (expected {FORMAT_VERSION})", offset=8)
    return info


def read_checkpoint_config(path: str | os.PathLike) -> ModelConfig:
    """Model config of a checkpoint, without decoding its tensors."""
    return _parse(_read_raw(path))[1]


def _read_raw(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint '{path}': {e}") from e


def _parse(raw: bytes) -> tuple[dict, ModelConfig]:
    info = _read_info(_read_index(raw))
    try:
        config = ModelConfig.from_dict(info["model"])
    except (ConfigError, KeyError, TypeError) as e:
        raise CheckpointError(f"invalid model config in checkpoint: {e}", offset=8) from e
    return info, config


def load_checkpoint(path: str | os.PathLike, expected_task: Task | str | None = None) -> Checkpoint:
    """Load and validate a checkpoint; nothing is returned unless every tensor checks out."""
    raw = _read_raw(path)
    info, config = _parse(raw)
    if expected_task is not None and Task.parse(expected_task) is not config.task:
        raise TaskMismatchError(
            f"checkpoint was trained for task '{config.task.value}', requested '{Task.parse(expected_task).value}'")
    try:
        arrays = load_tensors(raw)
    except (SafetensorError, ValueError) as e:
        raise CheckpointError(f"cannot decode tensors: {e}", offset=8) from e

    params, running_parts, buffers, centers = {}, {}, {}, {}
    for key, arr in arrays.items():
        if key.startswith(PARAM_PREFIX):
            params[key[len(PARAM_PREFIX):]] = arr
        elif key.startswith(RUNNING_PREFIX):
            name, _, stat = key[len(RUNNING_PREFIX):].rpartition("/")
            running_parts.setdefault(name, {})[stat] = arr
        elif key.startswith(OPTIM_PREFIX):
            pname, _, slot = key[len(OPTIM_PREFIX):].rpartition("/")
            buffers.setdefault(pname, {})[slot] = arr
        elif key.startswith(CENTERS_PREFIX):
            centers[key[len(CENTERS_PREFIX):]] = arr
        else:
            raise CheckpointError(f"unexpected tensor '{key}'", offset=8)

    expected = {spec.name: spec.shape for spec in all_specs(config)}
    if set(params) != set(expected):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise CheckpointError(f"parameter set mismatch (missing {missing[:5]}, unexpected {extra[:5]})", offset=8)
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise CheckpointError(f"parameter '{name}' has shape {params[name].shape}, expected {shape}", offset=8)
    try:
        running = {name: RunningStats(parts["mean"], parts["var"]) for name, parts in running_parts.items()}
    except KeyError as e:
        raise CheckpointError(f"incomplete running statistics: missing {e}", offset=8) from e

    return Checkpoint(config, params, running, info.get("optimizer", {}), buffers, centers, info.get("info", {}))
