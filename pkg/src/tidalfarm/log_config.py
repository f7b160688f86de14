import logging
from typing import Optional, Union


def setup_logging(log_level: Union[int, str] = logging.INFO, log_file: Optional[str] = None):
    """Console logging, plus a log file when one is given."""
    if isinstance(log_level, str):
        log_level = getattr(logging, log_level.upper(), logging.INFO)
    handlers = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=log_level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )