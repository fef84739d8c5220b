"""
Logging configuration for the PhysMotion pipeline.
Provides structured logging with window/iteration correlation fields so long
optimization runs can be traced back to a window and CMA-ES iteration.
"""
import logging
import sys
from pathlib import Path
from typing import Optional
from config import LOG_LEVEL, LOG_DIR

# Create logs directory if it doesn't exist
LOGS_DIR = Path(LOG_DIR)
LOGS_DIR.mkdir(parents=True, exist_ok=True)


class CorrelationFilter(logging.Filter):
    """
    Adds correlation fields (window, iteration) to log records.
    Records logged outside an optimization show '-' for both.
    """
    def filter(self, record):
        if not hasattr(record, 'window'):
            record.window = '-'
        if not hasattr(record, 'iteration'):
            record.iteration = '-'
        return True


def setup_logger(name: str = "physmotion") -> logging.Logger:
    """
    Configure and return a logger with both file and console handlers.

    Log format: [2026-02-04 10:47:28] [INFO] [window=1] [iteration=40] Message
    """
    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, LOG_LEVEL.upper()))

    # Prevent duplicate handlers
    if logger.handlers:
        return logger

    correlation_filter = CorrelationFilter()

    formatter = logging.Formatter(
        '[%(asctime)s] [%(levelname)s] [window=%(window)s] [iteration=%(iteration)s] %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    # Console handler (stderr, stdout is left to command output)
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(logging.INFO)
    console_handler.setFormatter(formatter)
    console_handler.addFilter(correlation_filter)
    logger.addHandler(console_handler)

    # File handler (all logs)
    file_handler = logging.FileHandler(LOGS_DIR / "physmotion.log", encoding="utf-8")
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(formatter)
    file_handler.addFilter(correlation_filter)
    logger.addHandler(file_handler)

    # Error file handler (errors only)
    error_handler = logging.FileHandler(LOGS_DIR / "errors.log", encoding="utf-8")
    error_handler.setLevel(logging.ERROR)
    error_handler.setFormatter(formatter)
    error_handler.addFilter(correlation_filter)
    logger.addHandler(error_handler)

    return logger


def log_with_context(logger: logging.Logger, level: str, message: str,
                     window: Optional[int] = None, iteration: Optional[int] = None):
    """
    Log a message with correlation context.

    Example:
        log_with_context(logger, "INFO", "Window converged", window=2, iteration=180)
        Output: [INFO] [window=2] [iteration=180] Window converged
    """
    extra = {
        'window': '-' if window is None else window,
        'iteration': '-' if iteration is None else iteration,
    }
    getattr(logger, level.lower())(message, extra=extra)


# Create default logger instance
logger = setup_logger()
