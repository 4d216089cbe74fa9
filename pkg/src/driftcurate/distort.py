"""Pyramidal down/up-scaling used to manufacture low-quality images.

Downscaling averages non-overlapping 2x2 blocks; upscaling copies the
nearest source pixel. One round trip leaves a blocky, blurred image with
the original shape.
"""

from __future__ import annotations

import numpy as np

from .core_io import Image
from .errors import DegenerateDims, TooManyLevels


def _plane(plane) -> np.ndarray:
    arr = np.asarray(plane, dtype=np.float64)
    if arr.ndim != 2:
        raise DegenerateDims(f"expected a 2-D plane, got shape {arr.shape}")
    return arr


def pyr_down(plane) -> np.ndarray:
    """Average each 2x2 block; an odd trailing row/column is dropped."""
    arr = _plane(plane)
    h, w = arr.shape
    if h < 2 or w < 2:
        raise DegenerateDims(f"pyr_down needs at least 2x2, got {h}x{w}")
    a = arr[: h // 2 * 2, : w // 2 * 2]
    return (a[0::2, 0::2] + a[0::2, 1::2] + a[1::2, 0::2] + a[1::2, 1::2]) / 4.0


def pyr_up(plane, target_h: int, target_w: int) -> np.ndarray:
    """Nearest-pixel upscaling: ``out[i, j] = in[min(i//2, h-1), min(j//2, w-1)]``."""
    arr = _plane(plane)
    h, w = arr.shape
    if h < 1 or w < 1 or target_h < 1 or target_w < 1:
        raise DegenerateDims("pyr_up needs non-empty input and positive target dims")
    rows = np.minimum(np.arange(target_h) // 2, h - 1)
    cols = np.minimum(np.arange(target_w) // 2, w - 1)
    return arr[np.ix_(rows, cols)]


def max_levels(height: int, width: int) -> int:
    """Largest admissible ``levels`` for :func:`degrade`: floor(log2(min dim)) - 1."""
    return max(min(height, width).bit_length() - 2, 0)


def degrade_plane(plane, levels: int) -> np.ndarray:
    arr = _plane(plane)
    h, w = arr.shape
    for _ in range(levels):
        arr = pyr_up(pyr_down(arr), h, w)
    return arr


def degrade(img: Image, levels: int) -> Image:
    """Apply ``levels`` down/up round trips to every channel; 0 is the identity."""
    if levels < 0:
        raise ValueError("levels must be non-negative")
    if levels == 0:
        return img
    limit = max_levels(img.height, img.width)
    if levels > limit:
        raise TooManyLevels(
            f"levels={levels} exceeds {limit} for a {img.height}x{img.width} image"
        )
    out = np.stack([degrade_plane(img.channel(k), levels) for k in range(img.channels)], axis=2)
    return Image(out)
