"""Objectness-guided fusion and the end-to-end segmentation entry point.

The dense similarity volume knows *what* is where but trusts the background
channel too little; the saliency map knows *where* objects are but not what
they are.  Fusion multiplies the two maps element-wise (background weighted
by 1 - saliency, semantic classes by saliency) and softmaxes over the class
axis into per-pixel probabilities.  Labels are the argmax, lowest index
winning ties.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont
from PIL.PngImagePlugin import PngInfo

from .coretypes import ImageTensor, LabelMap, ScoreMap, tensor_write
from .pipeline import DenseInferenceConfig, multiscale_inference, prepare_image
from .saliency import ConstantSaliency, load_saliency, objectness_weights
from .vocabulary import ClassVocabulary, encode_vocabulary

ABLATIONS = ("full", "no_multiscale", "no_objectness")


def softmax_over_classes(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax along the last axis."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=-1, keepdims=True)


def labels_from_probabilities(probs: ScoreMap) -> LabelMap:
    """Argmax labels; ties resolve to the lowest class index."""
    if probs.classes > 255:
        raise ValueError("more than 255 classes cannot be stored as 8-bit labels")
    return LabelMap(np.argmax(probs.data, axis=-1).astype(np.uint8))


@dataclass(frozen=True)
class SegmentationResult:
    """Per-pixel class probabilities and labels, plus run metadata.

    Probabilities sum to 1 per pixel (within 1e-5) with every value in
    [0, 1]; each label is the smallest class index attaining that pixel's
    maximum probability.  `meta` echoes the effective configuration
    (classes, scales, logit scale, provider identities, fingerprint) so
    every downstream artifact is self-describing.
    """

    probabilities: ScoreMap
    labels: LabelMap
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        probs = self.probabilities.data
        shape = (self.probabilities.height, self.probabilities.width)
        if self.labels.data.shape != shape:
            raise ValueError(
                f"labels shape {self.labels.data.shape} does not match "
                f"probabilities {shape}"
            )
        if probs.min() < 0.0 or probs.max() > 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        sums = probs.sum(axis=-1)
        if not np.allclose(sums, 1.0, atol=1e-5):
            raise ValueError("probabilities must sum to 1 per pixel")
        if not (self.labels.data == np.argmax(probs, axis=-1)).all():
            raise ValueError("labels must be the lowest argmax of the probabilities")
        names = self.meta.get("classes")
        if names is not None and len(names) != self.probabilities.classes:
            raise ValueError(
                f"{self.probabilities.classes} probability channels for "
                f"{len(names)} classes"
            )

    @property
    def classes(self) -> tuple:
        return tuple(self.meta.get("classes", ()))

    @property
    def ablation(self) -> str:
        return self.meta.get("ablation", "full")

    @property
    def fingerprint(self) -> str:
        return self.meta.get("fingerprint", "")

    @property
    def height(self) -> int:
        return self.labels.data.shape[0]

    @property
    def width(self) -> int:
        return self.labels.data.shape[1]


def fuse(m_clip: ScoreMap, weights: ScoreMap, meta: dict = None) -> SegmentationResult:
    """Weight the similarity volume and softmax it into a result.

    Logits are the element-wise product of the two maps; no further scaling
    happens here.  Shapes must match exactly.
    """
    if weights.data.shape != m_clip.data.shape:
        raise ValueError(
            f"weights shape {weights.data.shape} does not match "
            f"scores {m_clip.data.shape}"
        )
    probs = ScoreMap(softmax_over_classes(m_clip.data * weights.data))
    return SegmentationResult(
        probabilities=probs,
        labels=labels_from_probabilities(probs),
        meta={} if meta is None else meta,
    )


def provider_identity(provider) -> str:
    """Short stable description of an embedding provider."""
    dim = getattr(provider, "embedding_dim", None)
    return f"{type(provider).__name__}:dim={dim}"


def saliency_identity(provider) -> str:
    """Short stable description of a saliency provider."""
    value = getattr(provider, "value", None)
    if value is not None:
        return f"{type(provider).__name__}:{value}"
    return type(provider).__name__


def build_meta(
    vocab: ClassVocabulary,
    config: DenseInferenceConfig,
    effective_scales,
    ablation: str,
    provider,
    saliency_provider,
) -> dict:
    """Assemble the metadata dict echoed into every output.

    The fingerprint is the sha256 of the canonical JSON of everything else,
    so two results compare equal iff every knob matched.
    """
    meta = {
        "classes": list(vocab.names),
        "ablation": ablation,
        "scales": [int(s) for s in effective_scales],
        "global_scale0": bool(config.scales.global_scale0),
        "encoder_input": int(config.encoder_input),
        "short_side": int(config.short_side),
        "logit_scale": float(config.logit_scale),
        "providers": {
            "embedding": provider_identity(provider),
            "saliency": saliency_identity(saliency_provider),
        },
    }
    canonical = json.dumps(meta, sort_keys=True, separators=(",", ":"))
    meta["fingerprint"] = hashlib.sha256(canonical.encode("utf-8")).hexdigest()
    return meta


def segment(
    image: ImageTensor,
    vocab: ClassVocabulary,
    provider,
    saliency_provider=None,
    config: DenseInferenceConfig = DenseInferenceConfig(),
    ablation: str = "full",
    image_id=None,
    text=None,
) -> SegmentationResult:
    """Segment one image against an open vocabulary.

    `ablation` picks the inference variant: "full" runs everything,
    "no_multiscale" keeps only the coarsest window grid, "no_objectness"
    fixes every fusion weight at 1.  Pass a precomputed `text` matrix when
    segmenting many images against one vocabulary.  Errors are re-raised
    with the failing stage named.
    """
    if ablation not in ABLATIONS:
        raise ValueError(f"unknown ablation {ablation!r}, expected one of {ABLATIONS}")
    if len(vocab) > 255:
        raise ValueError("vocabularies beyond 255 classes are not supported")
    if saliency_provider is None:
        saliency_provider = ConstantSaliency(1.0)
    if text is None:
        text = encode_vocabulary(vocab, provider)
    if text.count != len(vocab):
        raise ValueError(f"text matrix has {text.count} rows for {len(vocab)} classes")

    prepared = prepare_image(image, config.short_side)
    if ablation == "no_multiscale":
        scales = config.scales.single_scale()
    else:
        scales = config.scales
    run_config = DenseInferenceConfig(
        scales=scales,
        encoder_input=config.encoder_input,
        short_side=config.short_side,
        logit_scale=config.logit_scale,
    )
    try:
        inference = multiscale_inference(prepared, text, provider, run_config)
    except Exception as exc:
        raise RuntimeError(f"dense inference: {exc}") from exc

    num_classes = len(vocab)
    if ablation == "no_objectness":
        weights = ScoreMap(np.ones_like(inference.aggregated.data))
    else:
        try:
            sal = load_saliency(
                saliency_provider,
                image_id,
                prepared.height,
                prepared.width,
                image=prepared,
            )
        except Exception as exc:
            raise RuntimeError(f"saliency: {exc}") from exc
        weights = objectness_weights(sal, num_classes)

    meta = build_meta(vocab, config, scales.patch_sizes, ablation, provider, saliency_provider)
    return fuse(inference.aggregated, weights, meta=meta)


def color_palette(n: int) -> np.ndarray:
    """(n, 3) uint8 palette; index 0 is black, colors repeat after 255."""
    pal = np.zeros((n, 3), dtype=np.uint8)
    for i in range(n):
        c = i
        r = g = b = 0
        for j in range(8):
            r |= ((c >> 0) & 1) << (7 - j)
            g |= ((c >> 1) & 1) << (7 - j)
            b |= ((c >> 2) & 1) << (7 - j)
            c >>= 3
        pal[i] = (r, g, b)
    return pal


def render_overlay(image: ImageTensor, result: SegmentationResult, alpha: float = 0.5) -> Image.Image:
    """Blend class colors over the image and append a legend strip.

    Background pixels keep their original color; the legend lists every
    class present in the label map with its swatch.
    """
    if (image.height, image.width) != (result.height, result.width):
        raise ValueError("overlay needs the image at result resolution")
    palette = color_palette(256)
    labels = result.labels.data
    base = image.data * 255.0
    colors = palette[labels].astype(np.float64)
    blended = np.where(
        (labels > 0)[..., None], (1.0 - alpha) * base + alpha * colors, base
    )
    canvas = Image.fromarray(np.clip(np.round(blended), 0, 255).astype(np.uint8), "RGB")

    names = result.classes or tuple(
        f"class {i}" for i in range(result.probabilities.classes)
    )
    present = sorted(int(v) for v in np.unique(labels))
    row_h = 16
    legend = Image.new("RGB", (canvas.width, row_h * len(present) + 4), (32, 32, 32))
    draw = ImageDraw.Draw(legend)
    font = ImageFont.load_default()
    for row, idx in enumerate(present):
        y = 2 + row * row_h
        draw.rectangle([4, y + 2, 16, y + 14], fill=tuple(palette[idx]))
        draw.text((22, y + 2), names[idx], fill=(230, 230, 230), font=font)
    out = Image.new("RGB", (canvas.width, canvas.height + legend.height))
    out.paste(canvas, (0, 0))
    out.paste(legend, (0, canvas.height))
    return out


def export_result(result: SegmentationResult, prepared: ImageTensor, out_dir, stem: str):
    """Write the three artifacts for one image and return their paths.

    * ``<stem>_labels.png``  indexed label map; the full run metadata is
      embedded as a text chunk so artifacts are self-describing.
    * ``<stem>_probs.cdiy``  float32 probability volume.
    * ``<stem>_overlay.png`` color overlay with legend.

    Nothing time-dependent is written, so identical runs produce identical
    bytes.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    palette = color_palette(256)

    info = PngInfo()
    info.add_text(
        "ovseg-config",
        json.dumps(result.meta, sort_keys=True, separators=(",", ":")),
    )
    labels_path = out_dir / f"{stem}_labels.png"
    img = Image.fromarray(np.asarray(result.labels.data), mode="P")
    img.putpalette(palette.reshape(-1).tolist())
    img.save(labels_path, format="PNG", pnginfo=info)

    probs_path = out_dir / f"{stem}_probs.cdiy"
    tensor_write(result.probabilities, probs_path)

    overlay_path = out_dir / f"{stem}_overlay.png"
    render_overlay(prepared, result).save(overlay_path, format="PNG")
    return [labels_path, probs_path, overlay_path]
