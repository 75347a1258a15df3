import logging
import os

from hho_plate.errors import ConfigError

THREADS_ENV = "HHO_THREADS"


def to_float(x, name="value"):
    """
    Converts input to float, accepting numbers and numeric strings.
    Raises ConfigError instead of silently returning a default.
    """
    if x is None:
        raise ConfigError(f"{name}: missing value")
    if isinstance(x, (int, float)):
        return float(x)
    try:
        return float(str(x).strip())
    except ValueError:
        raise ConfigError(f"{name}: '{x}' is not a number") from None


def parse_number_list(text, name="value"):
    """'1e-3, 1e-2,1' -> [0.001, 0.01, 1.0]"""
    if isinstance(text, (list, tuple)):
        return [to_float(t, name) for t in text]
    items = [t for t in str(text).replace(";", ",").split(",") if t.strip()]
    if not items:
        raise ConfigError(f"{name}: empty list")
    return [to_float(t, name) for t in items]


def worker_count(override=None):
    """Number of worker threads for element-local work; 0 means serial."""
    raw = override if override is not None else os.environ.get(THREADS_ENV, "0")
    try:
        n = int(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{THREADS_ENV} must be a non-negative integer, got '{raw}'") from None
    if n < 0:
        raise ConfigError(f"{THREADS_ENV} must be a non-negative integer, got '{raw}'")
    return n


def configure_logging(level=logging.INFO):
    logger = logging.getLogger("hho_plate")
    # exactly one handler, bound to the current sys.stderr
    for old in list(logger.handlers):
        logger.removeHandler(old)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logger.addHandler(handler)
    logger.setLevel(level)
    return logger
