"""Raster conventions and PNG round trips.

Images are H×W float arrays with intensities in [0, 1]; label masks are
H×W integer arrays in {0..C} with 0 = background. On disk both are 8-bit
PNG: images scaled by 255, masks stored with raw label values.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def validate_image(image) -> np.ndarray:
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {img.shape}")
    if img.shape[0] < 8 or img.shape[1] < 8:
        raise ValueError(f"image sides must be >= 8, got {img.shape}")
    if not np.issubdtype(img.dtype, np.floating):
        raise ValueError(f"image must be float-valued, got dtype {img.dtype}")
    if not np.isfinite(img).all():
        raise ValueError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError(f"image intensities outside [0,1]: [{img.min()}, {img.max()}]")
    return img


def validate_mask(mask, num_classes: int, image: np.ndarray | None = None) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"mask must be integer-valued, got dtype {arr.dtype}")
    if arr.min() < 0 or arr.max() > num_classes:
        raise ValueError(f"mask labels outside 0..{num_classes}: [{arr.min()}, {arr.max()}]")
    if image is not None and arr.shape != image.shape:
        raise ValueError(f"mask shape {arr.shape} differs from image shape {image.shape}")
    return arr


def save_png_image(path, image: np.ndarray) -> None:
    img = validate_image(image)
    data = np.rint(img * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(Path(path), format="PNG")


def load_png_image(path) -> np.ndarray:
    with Image.open(Path(path)) as im:
        data = np.asarray(im.convert("L"), dtype=np.float32)
    return data / 255.0


def save_png_mask(path, mask: np.ndarray) -> None:
    arr = np.asarray(mask)
    if arr.min() < 0 or arr.max() > 255:
        raise ValueError("mask labels do not fit in 8-bit PNG")
    Image.fromarray(arr.astype(np.uint8), mode="L").save(Path(path), format="PNG")


def load_png_mask(path) -> np.ndarray:
    with Image.open(Path(path)) as im:
        data = np.asarray(im.convert("L"), dtype=np.int64)
    return data
