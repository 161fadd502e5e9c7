"""Dense multi-scale inference.

An image is partitioned into non-overlapping window grids at several patch
sizes.  Every window is embedded by the image tower, scored against the text
matrix by scaled cosine similarity, and the coarse per-scale score grids are
bilinearly upsampled back to image resolution.  Scales are averaged with
equal weight; there is no learned component anywhere in the path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coretypes import ImageTensor, ScoreMap
from .encoders import encode_image_batch, image_content_hash, patch_content_key
from .partitioner import (
    PatchGrid,
    ScaleConfig,
    extract_patches,
    full_image_grid,
    make_grid,
    resize_bilinear,
    scatter_scores,
    upsample_bilinear,
)
from .vocabulary import TextEmbeddingMatrix, normalize_rows

EVAL_SHORT_SIDE = 448
ENCODER_INPUT = 224
DEFAULT_LOGIT_SCALE = 1.0


@dataclass(frozen=True)
class DenseInferenceConfig:
    """Knobs for the dense inference path.

    `scales` accepts a ScaleConfig or a plain decreasing size tuple.  The
    logit scale multiplies raw cosines before fusion; 1.0 keeps them as-is,
    larger values sharpen the final softmax (a pretrained tower's learned
    temperature is around 100).
    """

    scales: ScaleConfig = ScaleConfig()
    encoder_input: int = ENCODER_INPUT
    short_side: int = EVAL_SHORT_SIDE
    logit_scale: float = DEFAULT_LOGIT_SCALE

    def __post_init__(self):
        scales = self.scales
        if not isinstance(scales, ScaleConfig):
            scales = ScaleConfig(tuple(int(s) for s in scales))
        object.__setattr__(self, "scales", scales)
        if self.encoder_input < 1:
            raise ValueError("encoder_input must be positive")
        if self.short_side < 1:
            raise ValueError("short_side must be positive")
        if not (self.logit_scale > 0 and np.isfinite(self.logit_scale)):
            raise ValueError("logit_scale must be positive and finite")

    @property
    def patch_sizes(self) -> tuple:
        return self.scales.patch_sizes


@dataclass(frozen=True)
class MultiScaleResult:
    """Per-scale upsampled score maps plus their unweighted mean."""

    per_scale: tuple
    grids: tuple
    aggregated: ScoreMap = field(init=False)

    def __post_init__(self):
        if not self.per_scale:
            raise ValueError("no per-scale maps")
        shapes = {m.data.shape for m in self.per_scale}
        if len(shapes) != 1:
            raise ValueError(f"per-scale maps disagree on shape: {sorted(shapes)}")
        stack = np.stack([m.data for m in self.per_scale])
        object.__setattr__(self, "aggregated", ScoreMap(stack.mean(axis=0)))


def prepare_image(image: ImageTensor, short_side: int = EVAL_SHORT_SIDE) -> ImageTensor:
    """Resize so the shorter side equals `short_side`, keeping aspect ratio.

    The longer side is rounded half up.  Images already at the target are
    returned unchanged.
    """
    h, w = image.height, image.width
    if min(h, w) == short_side:
        return image
    if h <= w:
        th = short_side
        tw = int(np.floor(w * short_side / h + 0.5))
    else:
        tw = short_side
        th = int(np.floor(h * short_side / w + 0.5))
    return ImageTensor(resize_bilinear(image.data, th, tw))


def similarity_map(
    image: ImageTensor,
    grid: PatchGrid,
    text: TextEmbeddingMatrix,
    provider,
    logit_scale: float = DEFAULT_LOGIT_SCALE,
    encoder_input: int = ENCODER_INPUT,
    image_hash: str = None,
) -> ScoreMap:
    """Score one window grid against the vocabulary and upsample.

    Each window's score vector is logit_scale times the cosine between its
    normalized embedding and each text row, so every value lies within
    [-logit_scale, +logit_scale].  Returns an (H, W, C) map at image
    resolution.
    """
    patches = extract_patches(image, grid, encoder_input)
    if image_hash is None:
        image_hash = image_content_hash(image)
    keys = [patch_content_key(image_hash, win, encoder_input) for win in grid.windows]
    embeddings = encode_image_batch(provider, patches, keys=keys)
    units = normalize_rows(embeddings)
    scores = logit_scale * (units @ text.rows.T)  # (windows, classes)
    coarse = scatter_scores(grid, scores)
    return upsample_bilinear(coarse, grid.image_height, grid.image_width)


def multiscale_inference(
    image: ImageTensor,
    text: TextEmbeddingMatrix,
    provider,
    config: DenseInferenceConfig = DenseInferenceConfig(),
) -> MultiScaleResult:
    """Run dense inference at every configured scale and average.

    With `global_scale0` set, the first scale is one full-image window
    instead of a grid of its patch size.  Per-scale failures are re-raised
    with the scale index attached.
    """
    image_hash = image_content_hash(image)
    grids = []
    maps = []
    for idx, patch_size in enumerate(config.patch_sizes):
        if idx == 0 and config.scales.global_scale0:
            grid = full_image_grid(image.height, image.width, scale_index=0)
        else:
            grid = make_grid(image.height, image.width, patch_size, scale_index=idx)
        grids.append(grid)
        try:
            maps.append(
                similarity_map(
                    image,
                    grid,
                    text,
                    provider,
                    logit_scale=config.logit_scale,
                    encoder_input=config.encoder_input,
                    image_hash=image_hash,
                )
            )
        except Exception as exc:
            raise RuntimeError(
                f"scale {idx} (patch size {patch_size}): {exc}"
            ) from exc
    return MultiScaleResult(per_scale=tuple(maps), grids=tuple(grids))
