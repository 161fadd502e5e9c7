"""Multi-scale image partitioning, patch extraction, scatter-back of
per-patch scores and bilinear upsampling.

All resampling uses the half-pixel-center convention: the source coordinate
for destination pixel `i` is `(i + 0.5) * (src / dst) - 0.5`, clamped to the
source borders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coretypes import ImageTensor, ScoreMap

DEFAULT_PATCH_SIZES = (256, 128, 64)
MIN_PATCH_SIZE = 8


@dataclass(frozen=True)
class ScaleConfig:
    """Ordered patch sizes, coarsest first; `global_scale0` swaps the first
    scale for a single full-image window."""

    patch_sizes: tuple = DEFAULT_PATCH_SIZES
    global_scale0: bool = False

    def __post_init__(self):
        sizes = tuple(int(p) for p in self.patch_sizes)
        if not sizes:
            raise ValueError("scale list must be non-empty")
        if any(p < MIN_PATCH_SIZE for p in sizes):
            raise ValueError(f"patch sizes must be >= {MIN_PATCH_SIZE}, got {sizes}")
        if any(sizes[i] <= sizes[i + 1] for i in range(len(sizes) - 1)):
            raise ValueError(f"patch sizes must be strictly decreasing, got {sizes}")
        object.__setattr__(self, "patch_sizes", sizes)

    def __len__(self) -> int:
        return len(self.patch_sizes)

    def single_scale(self) -> "ScaleConfig":
        """Keep only the coarsest scale (used by the no_multiscale ablation)."""
        return ScaleConfig((self.patch_sizes[0],), self.global_scale0)


@dataclass(frozen=True)
class PatchGrid:
    """One scale's partition of an image into non-overlapping windows.

    `windows` holds (y0, x0, y1, x1) pixel rectangles in row-major cell
    order; interior windows are `patch_size` square, last-row/column windows
    are clipped to the image boundary.
    """

    scale_index: int
    rows: int
    cols: int
    windows: tuple
    image_height: int
    image_width: int

    def __len__(self) -> int:
        return len(self.windows)


def make_grid(height: int, width: int, patch_size: int, scale_index: int = 0) -> PatchGrid:
    """Partition a height x width image into ceil-division cells of
    `patch_size`, clipping the last row/column to the boundary."""
    if height < 1 or width < 1:
        raise ValueError(f"image dimensions must be positive, got {height}x{width}")
    if patch_size < 1:
        raise ValueError(f"patch size must be positive, got {patch_size}")
    rows = math.ceil(height / patch_size)
    cols = math.ceil(width / patch_size)
    windows = []
    for r in range(rows):
        y0 = r * patch_size
        y1 = min(y0 + patch_size, height)
        for c in range(cols):
            x0 = c * patch_size
            x1 = min(x0 + patch_size, width)
            windows.append((y0, x0, y1, x1))
    return PatchGrid(scale_index, rows, cols, tuple(windows), height, width)


def full_image_grid(height: int, width: int, scale_index: int = 0) -> PatchGrid:
    """A 1x1 grid whose single window is the whole image (global scale)."""
    if height < 1 or width < 1:
        raise ValueError(f"image dimensions must be positive, got {height}x{width}")
    return PatchGrid(scale_index, 1, 1, ((0, 0, height, width),), height, width)


def _axis_gather(src: int, dst: int):
    """Index/weight vectors for 1-D half-pixel-center bilinear sampling."""
    coords = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
    lo = np.floor(coords).astype(np.int64)
    frac = coords - lo
    i0 = np.clip(lo, 0, src - 1)
    i1 = np.clip(lo + 1, 0, src - 1)
    return i0, i1, frac


def resize_bilinear(arr: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Bilinear resize of an (H, W) or (H, W, C) array, half-pixel centers.

    Computed separably (rows then columns); output values are clipped to the
    source min/max per channel to keep convexity exact under rounding.
    """
    arr = np.asarray(arr, dtype=np.float64)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[:, :, None]
    if target_h < 1 or target_w < 1:
        raise ValueError(f"target size must be positive, got {target_h}x{target_w}")
    r0, r1, rf = _axis_gather(arr.shape[0], target_h)
    rows = arr[r0] + rf[:, None, None] * (arr[r1] - arr[r0])
    c0, c1, cf = _axis_gather(arr.shape[1], target_w)
    out = rows[:, c0] + cf[None, :, None] * (rows[:, c1] - rows[:, c0])
    lo = arr.min(axis=(0, 1))
    hi = arr.max(axis=(0, 1))
    np.clip(out, lo, hi, out=out)
    return out[:, :, 0] if squeeze else out


def resize_nearest(arr: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Nearest-neighbor resize with pixel-center mapping (for label maps)."""
    arr = np.asarray(arr)
    ri = np.minimum(
        ((np.arange(target_h) + 0.5) * (arr.shape[0] / target_h)).astype(np.int64),
        arr.shape[0] - 1,
    )
    ci = np.minimum(
        ((np.arange(target_w) + 0.5) * (arr.shape[1] / target_w)).astype(np.int64),
        arr.shape[1] - 1,
    )
    return arr[np.ix_(ri, ci)]


def extract_patches(image: ImageTensor, grid: PatchGrid, encoder_input: int = 224) -> list:
    """Cut out each grid window and bilinearly resize it to the encoder's
    square input size; row-major window order."""
    if (grid.image_height, grid.image_width) != (image.height, image.width):
        raise ValueError(
            f"grid built for {grid.image_height}x{grid.image_width} but image is "
            f"{image.height}x{image.width}"
        )
    patches = []
    for y0, x0, y1, x1 in grid.windows:
        window = image.data[y0:y1, x0:x1]
        if window.shape[0] == encoder_input and window.shape[1] == encoder_input:
            resized = window
        else:
            resized = resize_bilinear(window, encoder_input, encoder_input)
        patches.append(ImageTensor(resized))
    return patches


def scatter_scores(grid: PatchGrid, per_patch_scores: np.ndarray) -> ScoreMap:
    """Place one score vector per window onto the (rows, cols) cell grid."""
    scores = np.asarray(per_patch_scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ValueError(f"expected (windows, classes) scores, got shape {scores.shape}")
    if scores.shape[0] != len(grid.windows):
        raise ValueError(
            f"score count {scores.shape[0]} does not match window count {len(grid.windows)}"
        )
    return ScoreMap(scores.reshape(grid.rows, grid.cols, scores.shape[1]))


def upsample_bilinear(coarse: ScoreMap, target_h: int, target_w: int) -> ScoreMap:
    """Bilinear upsampling of a coarse cell map to image resolution."""
    return ScoreMap(resize_bilinear(coarse.data, target_h, target_w))
