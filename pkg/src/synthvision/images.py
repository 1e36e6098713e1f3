"""PNG/JPEG loading and saving with the [-1, 1] pixel convention."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def load_image(path: str | Path, size: int | None = None, channels: int = 3) -> np.ndarray:
    """Load an image file as an HxWxC float32 array in [-1, 1]."""
    with Image.open(path) as im:
        im = im.convert("RGB" if channels == 3 else "L")
        if size is not None and im.size != (size, size):
            im = im.resize((size, size), Image.BILINEAR)
        arr = np.asarray(im, dtype=np.float32)
    if channels == 1:
        arr = arr[:, :, None]
    return arr / 127.5 - 1.0


def save_image(array: np.ndarray, path: str | Path) -> Path:
    """Save an HxWxC float array in [-1, 1] as PNG (or JPEG by extension)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.asarray(array, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    pixels = np.clip((arr + 1.0) * 127.5, 0, 255).astype(np.uint8)
    if pixels.shape[2] == 1:
        im = Image.fromarray(pixels[:, :, 0], mode="L")
    else:
        im = Image.fromarray(pixels, mode="RGB")
    im.save(path)
    return path


def resize_image(array: np.ndarray, size: int) -> np.ndarray:
    """Bilinear-resize an HxWxC float array in [-1, 1] to size x size."""
    arr = np.asarray(array, dtype=np.float32)
    if arr.shape[0] == size and arr.shape[1] == size:
        return arr
    pixels = np.clip((arr + 1.0) * 127.5, 0, 255).astype(np.uint8)
    mode = "L" if pixels.shape[2] == 1 else "RGB"
    im = Image.fromarray(pixels[:, :, 0] if mode == "L" else pixels, mode=mode)
    im = im.resize((size, size), Image.BILINEAR)
    out = np.asarray(im, dtype=np.float32)
    if out.ndim == 2:
        out = out[:, :, None]
    return out / 127.5 - 1.0
