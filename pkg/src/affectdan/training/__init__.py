from .config import DESK_BATCH_SIZE, FULL_SCALE_BATCH_SIZE, RunConfig, TrainConfig, load_run_config
from .metrics_log import METRICS_FILENAME, EpochMetrics, MetricsLog, read_metrics
from .optim import OptimizerState, clip_gradients, learning_rate_at, optimizer_step
from .trainer import (BEST_CHECKPOINT, TrainState, ValidationResult, epoch_checkpoint_name, init_train_state,
                      score_outputs, train, validate)
