"""
Utility functions for the CosDefense simulator

This module contains helper functions used throughout the package:
logging, seeded random streams, vector similarity and value validation.
"""

import logging
import math
from typing import Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd

# Import configuration
from . import config
from .exceptions import ShapeError

# Setup logging
logging.basicConfig(level=getattr(logging, config.LOG_LEVEL), format=config.LOG_FORMAT)
logger = logging.getLogger(__name__)


def set_log_level(level: str) -> None:
    """
    Change the root log level at runtime.

    Args:
        level: One of DEBUG, INFO, WARNING, ERROR, CRITICAL
    """
    logging.getLogger().setLevel(getattr(logging, level.upper()))


def log_analysis_step(step_name: str, message: str, level: str = "INFO"):
    """
    Log a pipeline step with consistent formatting.

    Args:
        step_name: Name of the pipeline step
        message: Log message
        level: Log level ('DEBUG', 'INFO', 'WARNING', 'ERROR')
    """
    formatted_message = f"[{step_name}] {message}"

    if level == "DEBUG":
        logger.debug(formatted_message)
    elif level == "INFO":
        logger.info(formatted_message)
    elif level == "WARNING":
        logger.warning(formatted_message)
    elif level == "ERROR":
        logger.error(formatted_message)
    else:
        logger.info(formatted_message)


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """
    Build an independent generator for one (seed, keys...) stream.

    The same arguments always produce the same stream, regardless of the
    order in which streams are requested. This is what lets local updates
    run in any order or concurrently with bit-identical results.

    Args:
        seed: Experiment seed
        keys: Stream coordinates, e.g. (round, client_id, stream)

    Returns:
        numpy Generator

    Example:
        >>> a = derive_rng(7, 3, 12).random()
        >>> b = derive_rng(7, 3, 12).random()
        >>> a == b
        True
    """
    entropy = [int(seed)] + [int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def child_seed(base_seed: int, cell_index: int) -> int:
    """
    Seed for one sweep cell: base_seed * stride + cell_index.
    """
    return base_seed * config.SWEEP_SEED_STRIDE + cell_index


def cosine_similarity(x: np.ndarray, y: np.ndarray) -> float:
    """
    Cosine of the angle between two flat vectors.

    Returns 0.0 when either vector has zero norm. The result is clamped to
    [-1, 1] to absorb rounding drift.

    Args:
        x: Flat vector
        y: Flat vector of the same length

    Returns:
        <x, y> / (||x|| * ||y||)

    Example:
        >>> round(cosine_similarity(np.array([1.0, 2.0]), np.array([2.0, 1.0])), 12)
        0.8
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ShapeError(f"Cosine operands differ in length: {x.size} vs {y.size}")
    if x.size == 0:
        raise ShapeError("Cosine of empty vectors is undefined")

    norm_x = float(np.linalg.norm(x))
    norm_y = float(np.linalg.norm(y))
    if norm_x == 0.0 or norm_y == 0.0:
        return 0.0

    value = float(np.dot(x, y)) / (norm_x * norm_y)
    if abs(value) > 1.0 + config.COSINE_CLAMP_TOLERANCE:
        logger.warning(f"Cosine {value!r} outside [-1, 1] beyond rounding")
    return min(1.0, max(-1.0, value))


def safe_mean(values: Iterable[float]) -> float:
    """
    Mean of a possibly empty sequence; NaN when empty.
    """
    values = list(values)
    if not values:
        return math.nan
    return float(np.mean(values))


def validate_data(
    df: pd.DataFrame, column: str, low: float, high: float
) -> Tuple[bool, List[str]]:
    """
    Validate data values are within [low, high] (NaN is ignored).

    Args:
        df: DataFrame to validate
        column: Column name to validate
        low: Minimum allowed value
        high: Maximum allowed value

    Returns:
        Tuple of (is_valid, error_messages)
    """
    is_valid = True
    errors = []

    below_min = df[column] < low
    above_max = df[column] > high

    if below_min.any():
        is_valid = False
        errors.append(f"{int(below_min.sum())} values in '{column}' below minimum ({low})")

    if above_max.any():
        is_valid = False
        errors.append(f"{int(above_max.sum())} values in '{column}' above maximum ({high})")

    return is_valid, errors


def format_metric(value: Optional[float], digits: int = 4) -> str:
    """
    Format a metric for log messages; undefined values print as 'n/a'.
    """
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "n/a"
    return f"{value:.{digits}f}"
