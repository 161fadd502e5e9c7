"""Objectness (saliency) sources and instance-mask aggregation.

A saliency map assigns every pixel a foreground confidence in [0, 1].  The
fusion stage uses it to arbitrate between the background channel and the
semantic channels, so any source works: a constant, a stored map per image,
or a forward pass of a saliency network.  Class-agnostic instance masks with
confidences can be collapsed into a single map here as well.

Providers hand back maps at whatever resolution they have; `load_saliency`
is the one place that resamples to the working resolution and clamps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coretypes import ImageTensor, SaliencyMap, ScoreMap, load_saliency_file
from .partitioner import resize_bilinear, resize_nearest

DEFAULT_SCORE_THRESHOLD = 0.3


@dataclass(frozen=True)
class InstanceMaskSet:
    """Binary instance masks with per-mask confidence scores."""

    masks: np.ndarray  # (N, H, W) float64 with values in {0, 1}
    scores: np.ndarray  # (N,) float64 in [0, 1]

    def __post_init__(self):
        masks = np.ascontiguousarray(np.asarray(self.masks, dtype=np.float64))
        scores = np.ascontiguousarray(np.asarray(self.scores, dtype=np.float64))
        if masks.ndim != 3:
            raise ValueError(f"masks must be (N, H, W), got shape {masks.shape}")
        if scores.shape != (masks.shape[0],):
            raise ValueError(
                f"scores shape {scores.shape} does not match {masks.shape[0]} masks"
            )
        if masks.size and not np.isin(masks, (0.0, 1.0)).all():
            raise ValueError("masks must be binary")
        if scores.size and ((scores < 0).any() or (scores > 1).any()):
            raise ValueError("scores must lie in [0, 1]")
        masks.setflags(write=False)
        scores.setflags(write=False)
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "scores", scores)

    def __len__(self) -> int:
        return self.masks.shape[0]


def aggregate_instance_masks(
    mask_set: InstanceMaskSet, score_threshold: float = DEFAULT_SCORE_THRESHOLD
) -> SaliencyMap:
    """Collapse scored instance masks into one saliency map.

    Masks scoring below the threshold are dropped.  Survivors are summed with
    their scores as weights and the sum is divided by its maximum pixel, so
    the strongest pixel is exactly 1.  With no survivors the map is zero.

    Survivors are accumulated in a canonical order (score, then mask bytes),
    which makes the result bit-identical under any permutation of the input.
    """
    h, w = mask_set.masks.shape[1:]
    kept = [i for i in range(len(mask_set)) if mask_set.scores[i] >= score_threshold]
    if not kept:
        return SaliencyMap(np.zeros((h, w)))
    kept.sort(key=lambda i: (mask_set.scores[i], mask_set.masks[i].tobytes()))
    weighted = np.zeros((h, w))
    for i in kept:
        weighted += mask_set.scores[i] * mask_set.masks[i]
    peak = weighted.max()
    if peak <= 0:
        return SaliencyMap(np.zeros((h, w)))
    return SaliencyMap(weighted / peak)


def load_mask_directory(directory) -> InstanceMaskSet:
    """Read one image's scored instance masks from a directory.

    Layout: any number of binary mask PNGs (pixel >= 128 counts as inside)
    plus a ``scores.txt`` holding one confidence per line.  Scores pair with
    masks by sorted filename, so ``000.png`` takes the first line.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"mask directory {directory} not found")
    mask_paths = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png")
    if not mask_paths:
        raise ValueError(f"{directory}: no mask PNGs found")
    scores_path = directory / "scores.txt"
    if not scores_path.is_file():
        raise FileNotFoundError(f"{directory}: scores.txt is missing")
    lines = [ln.strip() for ln in scores_path.read_text(encoding="utf-8").splitlines()]
    scores = [float(ln) for ln in lines if ln]
    if len(scores) != len(mask_paths):
        raise ValueError(
            f"{directory}: {len(scores)} scores for {len(mask_paths)} mask PNGs"
        )
    masks = []
    for path in mask_paths:
        raw = load_saliency_file(path).data
        masks.append((raw >= 0.5).astype(np.float64))
    shapes = {m.shape for m in masks}
    if len(shapes) != 1:
        raise ValueError(f"{directory}: masks disagree on shape: {sorted(shapes)}")
    return InstanceMaskSet(np.stack(masks), np.asarray(scores))


def resize_saliency(
    sal: SaliencyMap, height: int, width: int, nearest: bool = False
) -> SaliencyMap:
    """Resample a saliency map, clamping interpolated values into [0, 1].

    Bilinear by default; nearest keeps hard 0/1 masks binary.
    """
    if (sal.height, sal.width) == (height, width):
        return sal
    if nearest:
        out = resize_nearest(sal.data, height, width)
    else:
        out = np.clip(resize_bilinear(sal.data, height, width), 0.0, 1.0)
    return SaliencyMap(out)


def load_saliency(
    provider, image_key, target_h: int, target_w: int, image: ImageTensor = None
) -> SaliencyMap:
    """Fetch a provider's map for one image at the working resolution.

    The provider returns its raw map; this op resamples it (nearest when the
    provider asks for it, bilinear with clamping otherwise).  Model-backed
    providers additionally need the image itself.
    """
    raw = provider.raw_map(image_key=image_key, image=image)
    nearest = bool(getattr(provider, "nearest", False))
    return resize_saliency(raw, target_h, target_w, nearest)


class ConstantSaliency:
    """Same foreground confidence everywhere."""

    nearest = False

    def __init__(self, value: float = 1.0):
        value = float(value)
        if not (0.0 <= value <= 1.0):
            raise ValueError(f"constant saliency must be in [0, 1], got {value}")
        self.value = value

    def raw_map(self, image_key=None, image: ImageTensor = None) -> SaliencyMap:
        # 1x1; resizing replicates the value exactly.
        return SaliencyMap(np.full((1, 1), self.value))


class FileSaliency:
    """One stored map (PNG grayscale or rank-2 tensor file) for every image."""

    def __init__(self, path, nearest: bool = False):
        self.path = Path(path)
        self.nearest = nearest
        self._map = load_saliency_file(self.path)

    def raw_map(self, image_key=None, image: ImageTensor = None) -> SaliencyMap:
        return self._map


class DirectorySaliency:
    """Per-image maps looked up by image key (file stem) in one directory."""

    SUFFIXES = (".png", ".cdiy")

    def __init__(self, directory, nearest: bool = False):
        self.directory = Path(directory)
        self.nearest = nearest
        if not self.directory.is_dir():
            raise FileNotFoundError(f"saliency directory {self.directory} not found")

    def raw_map(self, image_key=None, image: ImageTensor = None) -> SaliencyMap:
        if image_key is None:
            raise ValueError("directory saliency lookup needs an image key")
        for suffix in self.SUFFIXES:
            path = self.directory / f"{image_key}{suffix}"
            if path.exists():
                return load_saliency_file(path)
        raise FileNotFoundError(
            f"no saliency map for {image_key!r} under {self.directory}"
        )


class ManifestSaliency:
    """Per-image maps from a JSON manifest: ``{"maps": {"key": "file"}}``."""

    def __init__(self, manifest_path, nearest: bool = False):
        self.manifest_path = Path(manifest_path)
        self.nearest = nearest
        spec = json.loads(self.manifest_path.read_text(encoding="utf-8"))
        self._paths = {k: self.manifest_path.parent / v for k, v in spec["maps"].items()}

    def raw_map(self, image_key=None, image: ImageTensor = None) -> SaliencyMap:
        if image_key is None or image_key not in self._paths:
            raise KeyError(f"no saliency manifest entry for image key {image_key!r}")
        return load_saliency_file(self._paths[image_key])


class NeuralSaliency:
    """TorchScript saliency network.

    Directory layout mirrors the neural encoder: ``manifest.json`` naming a
    ``net`` archive mapping (B, 3, H, W) float32 to per-pixel foreground
    confidence (values outside [0, 1] are clamped), plus optional
    ``input_size``, ``image_mean`` and ``image_std``.
    """

    nearest = False

    def __init__(self, model_dir):
        self.model_dir = Path(model_dir)
        manifest = json.loads((self.model_dir / "manifest.json").read_text(encoding="utf-8"))
        self._input_size = manifest.get("input_size")
        self._mean = np.asarray(manifest.get("image_mean", [0.0, 0.0, 0.0]), dtype=np.float64)
        self._std = np.asarray(manifest.get("image_std", [1.0, 1.0, 1.0]), dtype=np.float64)
        try:
            import torch
        except ImportError as exc:
            raise RuntimeError(
                "the neural saliency backend needs torch; install the 'neural' extra"
            ) from exc
        self._torch = torch
        self._net = torch.jit.load(
            str(self.model_dir / manifest["net"]), map_location="cpu"
        ).eval()

    def raw_map(self, image_key=None, image: ImageTensor = None) -> SaliencyMap:
        if image is None:
            raise ValueError("model-backed saliency needs the image itself")
        arr = image.data
        if self._input_size is not None:
            arr = resize_bilinear(arr, self._input_size, self._input_size)
        arr = (arr - self._mean) / self._std
        tensor = self._torch.from_numpy(
            np.ascontiguousarray(arr.transpose(2, 0, 1)[None], dtype=np.float32)
        )
        with self._torch.no_grad():
            out = self._net(tensor)
        out = np.asarray(out.numpy(), dtype=np.float64).squeeze()
        if out.ndim != 2:
            raise ValueError(f"saliency net returned shape {out.shape}, expected 2-D")
        return SaliencyMap(np.clip(out, 0.0, 1.0))


def make_saliency_provider(source: str):
    """Build a provider from a CLI-style source string.

    Accepted forms: ``constant:<v>``, ``stub`` (constant 1.0), ``file:<path>``,
    ``dir:<path>``, ``precomputed:<path>`` (file or directory by inspection),
    ``manifest:<path>``, ``model:<path>``, or a bare path.  Append
    ``:nearest`` to stored-map forms to resample without interpolation.
    """
    nearest = False
    if source.endswith(":nearest"):
        nearest = True
        source = source[: -len(":nearest")]
    if source == "stub":
        return ConstantSaliency(1.0)
    kind, sep, rest = source.partition(":")
    if not sep:
        path = Path(source)
        if path.is_dir():
            return DirectorySaliency(path, nearest=nearest)
        return FileSaliency(path, nearest=nearest)
    if kind == "constant":
        return ConstantSaliency(float(rest))
    if kind == "file":
        return FileSaliency(rest, nearest=nearest)
    if kind == "dir":
        return DirectorySaliency(rest, nearest=nearest)
    if kind == "precomputed":
        path = Path(rest)
        if path.is_dir():
            return DirectorySaliency(path, nearest=nearest)
        return FileSaliency(path, nearest=nearest)
    if kind == "manifest":
        return ManifestSaliency(rest, nearest=nearest)
    if kind == "model":
        return NeuralSaliency(rest)
    raise ValueError(f"unknown saliency source {source!r}")


def objectness_weights(sal: SaliencyMap, num_classes: int) -> ScoreMap:
    """Per-pixel class weights from a saliency map.

    Channel 0 (background) gets 1 - saliency, every semantic channel gets
    the saliency itself, so the background and any one foreground channel
    always sum to 1.  Shape (H, W, C).
    """
    if num_classes < 2:
        raise ValueError("need a background channel plus at least one class")
    weights = np.empty((sal.height, sal.width, num_classes))
    weights[..., 0] = 1.0 - sal.data
    weights[..., 1:] = sal.data[..., None]
    return ScoreMap(weights)
