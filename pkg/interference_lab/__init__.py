import logging

from .api import Client  # noqa
from .version import __version__  # noqa

# Silent by default. Call set_stream_logger('interference_lab') or
# set_file_logger('interference_lab', path) to see sampling, enumeration
# and fallback messages.
logging.getLogger(__name__).addHandler(logging.NullHandler())

default_format_string = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"


def _attach(name: str, handler: logging.Handler, level: int, format_string) -> logging.Logger:
    logger = logging.getLogger(name)
    logger.setLevel(level)
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(format_string or default_format_string))
    logger.addHandler(handler)
    return logger


def set_stream_logger(name: str, level: int = logging.INFO, format_string: str = None) -> logging.Logger:
    """
    Send the named logger's records to stderr.
    """
    return _attach(name, logging.StreamHandler(), level, format_string)


def set_file_logger(name: str, filepath: str, level: int = logging.INFO, format_string: str = None) -> logging.Logger:
    """
    Append the named logger's records to ``filepath``.
    """
    return _attach(name, logging.FileHandler(filepath), level, format_string)
