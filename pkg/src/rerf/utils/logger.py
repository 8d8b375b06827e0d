import logging
import os
import pathlib
import sys
from typing import Literal, Optional, Union

from rich.logging import RichHandler


LogLevel = Union[Literal[10, 20, 30, 40, 50], int]

LOG_FORMAT = '%(asctime)s [%(levelname)5s] %(message)s'
LOG_DATEFMT = '%H:%M:%S'
LOG_FILENAME = 'logging.log'


class DefaultLogger:
    """Logger writing plain lines to stderr and, optionally, to a run directory."""

    def __init__(
        self,
        level     : LogLevel = logging.INFO,
        directory : Union[str, pathlib.Path, None] = None,
        name      : Optional[str] = None,
        reinit    : bool = True,
        file_open_mode : str = 'a',
    ):
        self.level = level
        self.directory = pathlib.Path(directory) if directory else None
        self.name = name
        self.reinit = reinit
        self.file_open_mode = 'w' if reinit else file_open_mode

    def setup(self) -> logging.Logger:
        """Setup logger with default configuration."""
        if self.directory and not os.path.exists(self.directory):
            os.makedirs(self.directory)

        logger = logging.getLogger(self.name or 'rerf')

        # Skip if already configured and reinit=False
        if not self.reinit and logger.handlers:
            return logger

        if self.reinit:
            for handler in list(logger.handlers):
                handler.close()
            logger.handlers.clear()

        logger.setLevel(self.level)
        self.add_handlers(logger)
        return logger

    def file_handler(self) -> Optional[logging.Handler]:
        if not self.directory:
            return None
        handler = logging.FileHandler(
            self.directory / LOG_FILENAME,
            mode=self.file_open_mode,
            encoding='utf8',
        )
        handler.setFormatter(logging.Formatter(fmt=LOG_FORMAT, datefmt=LOG_DATEFMT))
        return handler

    def add_handlers(self, logger: logging.Logger) -> None:
        """Add file and stream handlers."""
        file_handler = self.file_handler()
        if file_handler:
            logger.addHandler(file_handler)

        stream_handler = logging.StreamHandler(sys.stderr)
        stream_handler.setFormatter(logging.Formatter(fmt=LOG_FORMAT, datefmt=LOG_DATEFMT))
        logger.addHandler(stream_handler)


class RichLogger(DefaultLogger):
    """Rich console output plus the plain file handler."""

    def __init__(
        self,
        level     : LogLevel = logging.INFO,
        directory : Union[str, pathlib.Path, None] = None,
        name      : Optional[str] = None,
        reinit    : bool = True,
        file_open_mode  : str = 'a',
        rich_tracebacks : bool = True,
    ):
        super().__init__(level, directory, name, reinit, file_open_mode)
        self.rich_tracebacks = rich_tracebacks

    def add_handlers(self, logger: logging.Logger) -> None:
        logger.addHandler(RichHandler(rich_tracebacks=self.rich_tracebacks))

        file_handler = self.file_handler()
        if file_handler:
            logger.addHandler(file_handler)


def enable_default_logger(
    level     : LogLevel = logging.INFO,
    directory : Union[str, pathlib.Path, None] = None,
    name      : Optional[str] = None,
    reinit    : bool = True,
    file_open_mode : str = 'a',
) -> logging.Logger:
    """Create default logger."""
    return DefaultLogger(level, directory, name, reinit, file_open_mode).setup()


def enable_rich_logger(
    level     : LogLevel = logging.INFO,
    directory : Union[str, pathlib.Path, None] = None,
    name      : Optional[str] = None,
    reinit    : bool = True,
    file_open_mode  : str = 'a',
    rich_tracebacks : bool = True,
) -> logging.Logger:
    """Create rich logger."""
    return RichLogger(level, directory, name, reinit, file_open_mode, rich_tracebacks).setup()
