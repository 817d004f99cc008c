# Training loop and validation pass.

import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from tqdm import tqdm

from ..data.loader import ImageSet
from ..data.sampler import make_sampler
from ..diffcore import Mode, Tape, Tensor, no_grad
from ..errors import EmptyDatasetError, TaskMismatchError, TrainingDivergenceError
from ..model.checkpoint import save_checkpoint
from ..model.config import Task
from ..model.network import DanModel
from ..objectives import (ClassCenters, LossConfig, affinity_labels, ccc_loss, combined_loss, focal_loss,
                          macro_f1, mean_ccc)
from .config import TrainConfig
from .metrics_log import METRICS_FILENAME, EpochMetrics, MetricsLog
from .optim import OptimizerState, learning_rate_at, optimizer_step

logger = logging.getLogger(__name__)

BEST_CHECKPOINT = "best.safetensors"


def epoch_checkpoint_name(epoch: int) -> str:
    return f"epoch_{epoch:03d}.safetensors"


def metric_name_for(task: Task) -> str:
    return "macro_f1" if task is Task.EXPR else "mean_ccc"


@dataclass
class TrainState:
    model: DanModel
    optimizer: OptimizerState
    centers: ClassCenters | None = None
    epoch: int = 0                      # epochs completed
    draws: int = 0                      # sampler positions consumed
    best_score: float | None = None
    best_epoch: int | None = None
    history: list[EpochMetrics] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)


@dataclass
class ValidationResult:
    loss: float
    metric_name: str
    metric_value: float
    outputs: np.ndarray
    targets: np.ndarray

    def to_dict(self) -> dict:
        return {"loss": self.loss, self.metric_name: self.metric_value}


def score_outputs(task: Task, outputs: np.ndarray, targets: np.ndarray,
                  loss_config: LossConfig | None = None) -> tuple[float, float]:
    """(primary task loss, task metric) over concatenated outputs."""
    loss_config = loss_config or LossConfig()
    with no_grad():
        if task is Task.EXPR:
            loss = focal_loss(Tensor(outputs), targets, loss_config).item()
            metric = macro_f1(np.argmax(outputs, axis=1), targets)
        else:
            loss = ccc_loss(Tensor(outputs), targets).item()
            metric = mean_ccc(outputs, targets)[0]
    return float(loss), float(metric)


def validate(model: DanModel, data: ImageSet, loss_config: LossConfig | None = None,
             batch_size: int = 64) -> ValidationResult:
    """Single eval-mode pass in manifest order; parameters and statistics are left untouched."""
    if len(data) == 0:
        raise EmptyDatasetError("validation set is empty")
    if data.task is not model.task:
        raise TaskMismatchError(f"model task '{model.task.value}' does not match data task '{data.task.value}'")
    outputs, targets = [], []
    with no_grad():
        for _, images, batch_targets in data.sequential(batch_size):
            outputs.append(model.forward(images, Mode.EVAL).prediction.numpy())
            targets.append(batch_targets)
    outputs = np.concatenate(outputs)
    targets = np.concatenate(targets)
    loss, metric = score_outputs(model.task, outputs, targets, loss_config)
    return ValidationResult(loss, metric_name_for(model.task), metric, outputs, targets)


def _checkpoint(state: TrainState, config: TrainConfig, path: Path) -> Path:
    info = {
        "epoch": state.epoch,
        "draws": state.draws,
        "best_score": state.best_score,
        "best_epoch": state.best_epoch,
        "train": config.to_dict(),
    }
    saved = save_checkpoint(path, state.model, optimizer=state.optimizer.meta(config),
                            optimizer_buffers=state.optimizer.buffers(),
                            centers=state.centers.state_arrays() if state.centers is not None else None,
                            info=info)
    state.checkpoints.append(saved)
    return saved


def init_train_state(model: DanModel, config: TrainConfig) -> TrainState:
    centers = None
    if config.loss.affinity_weight(model.task) > 0:
        centers = ClassCenters.for_task(model.task, model.config.feature_dim,
                                        dtype=next(iter(model.params.values())).dtype)
    return TrainState(model, OptimizerState.create(config.optimizer, model.params), centers)


def train(model: DanModel, train_set: ImageSet, config: TrainConfig, val_set: ImageSet | None = None,
          out_dir: str | os.PathLike | None = None,
          sink: Callable[[EpochMetrics], None] | None = None,
          balanced: bool = True) -> TrainState:
    """Run ``config.epochs`` epochs of sampled mini-batch training.

    Each step: forward in train mode, combined loss, backward, optimizer step,
    then the class-center update. After every epoch the train (and, when given,
    validation) metrics are logged; with ``out_dir`` checkpoints are written
    every ``checkpoint_every`` epochs plus ``best.safetensors``.
    """
    if len(train_set) == 0:
        raise EmptyDatasetError("training set is empty")
    if train_set.task is not model.task:
        raise TaskMismatchError(f"model task '{model.task.value}' does not match data task '{train_set.task.value}'")

    task = model.task
    state = init_train_state(model, config)
    out_dir = Path(out_dir) if out_dir is not None else None
    log = MetricsLog(out_dir / METRICS_FILENAME if out_dir is not None else None)
    if config.epochs == 0:
        return state

    sampler = make_sampler(train_set.records, config.seed, balanced and task is Task.EXPR)
    stream = iter(sampler)
    steps = config.steps_per_epoch or math.ceil(len(train_set) / config.batch_size)
    total_steps = steps * config.epochs
    metric_name = metric_name_for(task)
    logger.info("Training %s model (%d parameters) for %d epochs x %d steps, batch %d",
                task.value, model.num_parameters(), config.epochs, steps, config.batch_size)

    for epoch in range(config.epochs):
        started = time.perf_counter()
        losses, outputs, targets = [], [], []
        bar = tqdm(range(steps), desc=f"epoch {epoch + 1}/{config.epochs}", unit="step",
                   disable=not config.progress, leave=False)
        for step in bar:
            indices = [next(stream) for _ in range(config.batch_size)]
            draws = range(state.draws, state.draws + len(indices))
            state.draws += len(indices)
            images, batch_targets = train_set.batch(indices, draws)

            model.zero_grad()
            with Tape() as tape:
                out = model.forward(images, Mode.TRAIN)
                ids = None
                if state.centers is not None:
                    ids = affinity_labels(task, batch_targets)
                    state.centers.ensure(ids, out.backbone_features.numpy())
                breakdown = combined_loss(out, batch_targets, config.loss, state.centers)
                loss_value = breakdown.total.item()
                if not math.isfinite(loss_value):
                    raise TrainingDivergenceError(
                        f"loss became non-finite at epoch {epoch + 1}, step {step + 1}",
                        {"epoch": epoch + 1, "step": step + 1, "batch_indices": indices,
                         "components": breakdown.values()})
                tape.backward(breakdown.total)

            lr = learning_rate_at(config, epoch * steps + step, total_steps)
            optimizer_step(model.params, state.optimizer, config, lr=lr)
            if state.centers is not None:
                state.centers.update(ids, out.backbone_features.numpy(), config.loss.affinity_center_lr)

            losses.append(loss_value)
            outputs.append(out.prediction.numpy().copy())
            targets.append(batch_targets)
            bar.set_postfix(loss=f"{loss_value:.4f}")
        bar.close()

        state.epoch = epoch + 1
        train_metric = _epoch_metric(task, np.concatenate(outputs), np.concatenate(targets))
        entry = EpochMetrics(state.epoch, "train", math.fsum(losses) / len(losses), metric_name,
                             train_metric, (time.perf_counter() - started) * 1000.0)
        _emit(state, log, sink, entry)
        score = train_metric

        if val_set is not None:
            started = time.perf_counter()
            result = validate(model, val_set, config.loss, config.eval_batch_size)
            entry = EpochMetrics(state.epoch, "val", result.loss, metric_name, result.metric_value,
                                 (time.perf_counter() - started) * 1000.0)
            _emit(state, log, sink, entry)
            score = result.metric_value

        improved = state.best_score is None or score > state.best_score
        if improved:
            state.best_score, state.best_epoch = score, state.epoch
        if out_dir is not None:
            if state.epoch % config.checkpoint_every == 0 or state.epoch == config.epochs:
                _checkpoint(state, config, out_dir / epoch_checkpoint_name(state.epoch))
            if improved:
                _checkpoint(state, config, out_dir / BEST_CHECKPOINT)

    logger.info("Training finished: best %s %.4f at epoch %s", metric_name, state.best_score, state.best_epoch)
    return state


def _epoch_metric(task: Task, outputs: np.ndarray, targets: np.ndarray) -> float:
    if task is Task.EXPR:
        return macro_f1(np.argmax(outputs, axis=1), targets)
    return mean_ccc(outputs, targets)[0]


def _emit(state: TrainState, log: MetricsLog, sink, entry: EpochMetrics) -> None:
    state.history.append(entry)
    log.write(entry)
    if sink is not None:
        sink(entry)
