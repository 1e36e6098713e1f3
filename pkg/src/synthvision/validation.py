"""Input validation helpers shared across the estimators and pipeline stages."""

from __future__ import annotations

import numpy as np


def check_image_array(x, *, channels: int | None = None, name: str = "image") -> np.ndarray:
    """Validate a single HxWxC image array and return it as float32.

    Accepts HxW arrays and promotes them to HxWx1.
    """
    arr = np.asarray(x)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"{name} must be HxW or HxWxC, got shape {arr.shape}")
    if channels is not None and arr.shape[2] != channels:
        raise ValueError(f"{name} must have {channels} channels, got {arr.shape[2]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr.astype(np.float32)


def check_image_batch(x, *, channels: int | None = None, name: str = "X") -> np.ndarray:
    """Validate an NxHxWxC batch of images and return it as float32."""
    arr = np.asarray(x)
    if arr.ndim == 3:
        arr = arr[:, :, :, None]
    if arr.ndim != 4:
        raise ValueError(f"{name} must be NxHxWxC, got shape {arr.shape}")
    if channels is not None and arr.shape[3] != channels:
        raise ValueError(f"{name} must have {channels} channels, got {arr.shape[3]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr.astype(np.float32)


def check_labels(y, n: int | None = None, name: str = "y") -> np.ndarray:
    """Validate binary labels (0/1) and return them as int64."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"{name} has {arr.shape[0]} entries, expected {n}")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0/1 labels")
    return arr.astype(np.int64)


def check_seed(seed, name: str = "seed") -> int:
    """Validate a non-negative integer seed."""
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool) or seed < 0:
        raise ValueError(f"{name} must be a non-negative integer, got {seed!r}")
    return int(seed)


def check_positive(value, name: str):
    """Validate a strictly positive number."""
    if value <= 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    return value


def check_unit_interval(value, name: str, *, closed_right: bool = False):
    """Validate a rate in [0, 1) (or [0, 1] when closed_right)."""
    hi_ok = value <= 1 if closed_right else value < 1
    if not (0 <= value and hi_ok):
        hi = "1]" if closed_right else "1)"
        raise ValueError(f"{name} must be in [0, {hi}, got {value}")
    return value
