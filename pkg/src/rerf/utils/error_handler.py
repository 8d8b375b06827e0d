import logging
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator, Optional, Tuple, Type


@dataclass
class CapturedError:
    """Handle yielded by `capture_errors`; `error` is set when something was caught."""
    label: str = ''
    error: Optional[BaseException] = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def message(self) -> str:
        if self.error is None:
            return ''
        return f"{type(self.error).__name__}: {self.error}"


@contextmanager
def capture_errors(
    logger: Optional[logging.Logger] = None,
    label: str = '',
    warning_exceptions: Tuple[Type[Exception], ...] = (ValueError, ArithmeticError, FloatingPointError),
    error_message_prefix: str = "Unexpected error",
) -> Iterator[CapturedError]:
    """
    Context manager that records exceptions instead of raising them.

    Expected failures (validation errors, numerical errors) are downgraded to
    warnings; anything else is logged as an error. Either way the exception is
    stored on the yielded handle so the caller can exclude the failed unit of
    work (a tuning cell, a replicate) and keep going.

    Args:
        logger: Logger instance to use. If None, uses this module's logger.
        label: Short description of the unit of work, prefixed to messages.
        warning_exceptions: Exception types downgraded to warnings.
        error_message_prefix: Prefix for unexpected error messages.

    Usage:
        with capture_errors(self.logger, label="cell 12 fold 3") as captured:
            rmse = score_cell(...)
        if captured.failed:
            ...

    Example:
        >>> with capture_errors(label="demo") as captured:
        ...     raise ValueError("bad input")
        >>> captured.failed
        True
    """
    if logger is None:
        logger = logging.getLogger(__name__)

    captured = CapturedError(label=label)
    prefix = f"[{label}] " if label else ''

    try:
        yield captured
    except warning_exceptions as e:
        captured.error = e
        # Multi-line messages are logged line by line
        for line in str(e).split('\n'):
            if line.strip():
                logger.warning(f"{prefix}{line}")
    except Exception as e:
        captured.error = e
        logger.error(f"{prefix}{error_message_prefix}: {str(e)}")
