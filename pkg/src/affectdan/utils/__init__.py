# Shared helpers: config loading and logging setup.
from .logging_setup import configure_logging
from .resource_loader import dataclass_from_dict, get_base_path, load_config
