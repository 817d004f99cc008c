from .config import DESK_INPUT_SIZE, FULL_SCALE_INPUT_SIZE, NUM_CLASSES, ModelConfig, Task
from .params import count_parameters, expected_parameter_count, init_params, init_running_stats
from .backbone import backbone_forward
from .attention import (HeadOutput, attention_fusion, attention_head, channel_attention_unit,
                        force_attention_gates, spatial_attention_unit)
from .heads import task_head
from .network import DanModel, ModelOutput, model_forward
from .checkpoint import Checkpoint, load_checkpoint, read_checkpoint_config, save_checkpoint
