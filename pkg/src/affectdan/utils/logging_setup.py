# Process-wide logging configuration from the `logging` config section.

import logging
import logging.handlers
import os

from rich.logging import RichHandler

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(module)s - %(message)s"

_configured_handlers: list[logging.Handler] = []


def configure_logging(section: dict | None = None, console: bool = True) -> None:
    """Install console (rich) and optional rotating-file handlers on the root logger.

    Keys: level, log_file, max_log_size_mb, backup_count. AFFECTDAN_LOG_LEVEL
    overrides ``level``. Calling again replaces the handlers from the previous call.
    """
    section = dict(section or {})
    level_name = os.environ.get("AFFECTDAN_LOG_LEVEL") or section.get("level", "INFO")
    level = logging.getLevelName(str(level_name).upper())
    if not isinstance(level, int):
        level = logging.INFO

    root = logging.getLogger()
    for handler in _configured_handlers:
        root.removeHandler(handler)
        handler.close()
    _configured_handlers.clear()

    if console:
        rich_handler = RichHandler(show_path=False, rich_tracebacks=False)
        rich_handler.setFormatter(logging.Formatter("%(message)s"))
        _configured_handlers.append(rich_handler)

    log_file = section.get("log_file")
    if log_file:
        os.makedirs(os.path.dirname(os.path.abspath(log_file)), exist_ok=True)
        file_handler = logging.handlers.RotatingFileHandler(
            log_file,
            maxBytes=int(float(section.get("max_log_size_mb", 10)) * 1024 * 1024),
            backupCount=int(section.get("backup_count", 3)),
            encoding="utf-8",
        )
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        _configured_handlers.append(file_handler)

    for handler in _configured_handlers:
        root.addHandler(handler)
    root.setLevel(level)
