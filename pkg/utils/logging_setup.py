"""
Logging configuration shared by the CLI and the simulation scripts
"""

import logging
from pathlib import Path
from typing import Mapping, Optional

DEFAULT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def configure_logging(settings: Optional[Mapping] = None, level: Optional[str] = None) -> None:
    """
    Configure the root logger from the `logging:` section of a config file

    Args:
        settings: Mapping with optional 'level', 'format' and 'file' keys
        level: Explicit level that overrides the configured one
    """
    settings = dict(settings or {})
    resolved_level = (level or settings.get("level") or "INFO").upper()
    handlers = [logging.StreamHandler()]

    log_file = settings.get("file")
    if log_file:
        path = Path(log_file)
        path.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(path))

    logging.basicConfig(
        level=getattr(logging, resolved_level, logging.INFO),
        format=settings.get("format", DEFAULT_FORMAT),
        handlers=handlers,
        force=True,
    )
