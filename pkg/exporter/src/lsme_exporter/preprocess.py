"""Masked-crop preprocessing: isolate one object before feature extraction.

Background and other objects are zeroed via the instance mask, the crop is
the mask's tight bounding box padded to a centered square, and the result is
resized to the backbone's input size with values in [0, 1].
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .maskfiles import ExportError


def masked_crop(image: np.ndarray, bitmap: np.ndarray, size: int) -> np.ndarray:
    """(H, W, 3) uint8 image + boolean mask -> (size, size, 3) float32."""
    if image.shape[:2] != bitmap.shape:
        raise ExportError(
            f"image {image.shape[:2]} does not match mask {bitmap.shape}"
        )
    rows = np.flatnonzero(bitmap.any(axis=1))
    cols = np.flatnonzero(bitmap.any(axis=0))
    if rows.size == 0:
        raise ExportError("cannot crop an empty mask")
    isolated = np.where(bitmap[..., None], image, 0).astype(np.uint8)
    crop = isolated[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]

    height, width = crop.shape[:2]
    side = max(height, width)
    square = np.zeros((side, side, 3), dtype=np.uint8)
    top = (side - height) // 2
    left = (side - width) // 2
    square[top : top + height, left : left + width] = crop

    resized = Image.fromarray(square).resize((size, size), Image.BILINEAR)
    return np.asarray(resized, dtype=np.float32) / 255.0
