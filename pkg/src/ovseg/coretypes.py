"""Shared value types and the on-disk tensor / label formats.

All array-backed types are immutable after construction (the wrapped numpy
buffers are marked read-only) and therefore safe to share across threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

IGNORE_INDEX = 255

TENSOR_MAGIC = b"CDIY"
TENSOR_VERSION = 1
TENSOR_DTYPE_F32 = 1
_HEADER = struct.Struct("<4sHHB7x")  # magic, version, dtype, rank, padding


class TensorFormatError(ValueError):
    """Raised when a tensor file does not conform to the binary format."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr:
        out = arr.copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ImageTensor:
    """RGB image with float channel values in [0, 1], shape (H, W, 3)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"image must have shape (H, W, 3), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image must be at least 1x1, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("image contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ScoreMap:
    """Per-pixel per-class real-valued map, shape (H, W, C)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"score map must have shape (H, W, C), got {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"score map must be non-empty, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("score map contains non-finite values")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def classes(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class SaliencyMap:
    """Per-pixel objectness confidence in [0, 1], shape (H, W)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2 or min(arr.shape) < 1:
            raise ValueError(f"saliency map must have shape (H, W), got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("saliency map contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("saliency values must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel class indices, shape (H, W); `ignore_index` marks pixels
    excluded from evaluation."""

    data: np.ndarray
    ignore_index: int = IGNORE_INDEX

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2 or min(arr.shape) < 1:
            raise ValueError(f"label map must have shape (H, W), got {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError(f"label map must be integer-typed, got {arr.dtype}")
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError("label values must lie in [0, 255]")
        object.__setattr__(self, "data", _freeze(arr.astype(np.uint8)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def validate_against(self, num_classes: int) -> None:
        """Check every non-ignored value is a valid class index."""
        vals = self.data[self.data != self.ignore_index]
        if vals.size and int(vals.max()) >= num_classes:
            raise ValueError(
                f"label value {int(vals.max())} out of range for {num_classes} classes"
            )


def tensor_dumps(tensor) -> bytes:
    """Serialize a tensor to CDIY bytes.

    Accepts ScoreMap / SaliencyMap / ImageTensor or a plain ndarray of rank
    1-4.  The payload is always little-endian float32, row-major; reading it
    back yields bit-identical float32 values.
    """
    arr = getattr(tensor, "data", tensor)
    arr = np.asarray(arr)
    if arr.ndim < 1 or arr.ndim > 4:
        raise ValueError(f"tensor rank must be 1-4, got {arr.ndim}")
    if min(arr.shape) < 1:
        raise ValueError(f"refusing to write empty tensor of shape {arr.shape}")
    payload = np.ascontiguousarray(arr, dtype="<f4")
    header = _HEADER.pack(TENSOR_MAGIC, TENSOR_VERSION, TENSOR_DTYPE_F32, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + dims + payload.tobytes()


def tensor_write(tensor, path) -> None:
    """Write a tensor to `path` in the CDIY binary format."""
    blob = tensor_dumps(tensor)
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise OSError(f"failed to write tensor to {path}: {exc}") from exc


def tensor_loads(raw: bytes, name: str = "<bytes>") -> np.ndarray:
    """Parse CDIY bytes, returning a float32 ndarray.

    Validates magic, version, dtype and the declared shape against the
    payload length before returning.
    """
    path = name
    if len(raw) < _HEADER.size:
        raise TensorFormatError(f"{path}: file shorter than fixed header")
    magic, version, dtype, rank = _HEADER.unpack_from(raw)
    if magic != TENSOR_MAGIC:
        raise TensorFormatError(f"{path}: bad magic {magic!r}, expected {TENSOR_MAGIC!r}")
    if version != TENSOR_VERSION:
        raise TensorFormatError(f"{path}: unsupported version {version}")
    if dtype != TENSOR_DTYPE_F32:
        raise TensorFormatError(f"{path}: unsupported dtype code {dtype}")
    if not 1 <= rank <= 4:
        raise TensorFormatError(f"{path}: rank {rank} outside 1-4")
    dims_end = _HEADER.size + 8 * rank
    if len(raw) < dims_end:
        raise TensorFormatError(f"{path}: truncated shape block")
    shape = struct.unpack_from(f"<{rank}Q", raw, _HEADER.size)
    if any(d < 1 for d in shape):
        raise TensorFormatError(f"{path}: zero-sized dimension in shape {shape}")
    expected = int(np.prod(shape)) * 4
    payload = raw[dims_end:]
    if len(payload) < expected:
        raise TensorFormatError(
            f"{path}: truncated payload, shape {shape} needs {expected} bytes, "
            f"found {len(payload)}"
        )
    if len(payload) > expected:
        raise TensorFormatError(
            f"{path}: payload length {len(payload)} exceeds shape product {expected}"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(shape).copy()


def tensor_read(path) -> np.ndarray:
    """Read a CDIY tensor file, returning a float32 ndarray."""
    with open(path, "rb") as fh:
        raw = fh.read()
    return tensor_loads(raw, name=str(path))


def load_image(path) -> ImageTensor:
    """Decode an image file to an RGB ImageTensor with values in [0, 1]."""
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        arr = np.asarray(rgb, dtype=np.float64) / 255.0
    return ImageTensor(arr)


def save_image_png(image: ImageTensor, path) -> None:
    arr = np.clip(np.round(image.data * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def load_label_png(path) -> LabelMap:
    """Read an 8-bit single-channel (grayscale or indexed) PNG as class indices."""
    with Image.open(path) as img:
        if img.mode not in ("L", "P"):
            raise ValueError(
                f"{path}: label PNG must be 8-bit single-channel, got mode {img.mode}"
            )
        arr = np.asarray(img, dtype=np.uint8)
    return LabelMap(arr)


def save_label_png(label: LabelMap, path, palette=None, pnginfo=None) -> None:
    """Write a label map as an indexed PNG; `palette` is a flat RGB list.

    A full 256-entry palette is always attached so the encoder cannot
    renumber indices.
    """
    img = Image.fromarray(np.asarray(label.data), mode="P")
    if palette is None:
        palette = [v for i in range(256) for v in (i, i, i)]
    img.putpalette(palette)
    img.save(path, format="PNG", pnginfo=pnginfo)


def load_saliency_file(path) -> SaliencyMap:
    """Read a saliency map from a CDIY file or an 8-bit grayscale PNG.

    PNG pixel values are interpreted as value/255.
    """
    p = Path(path)
    if p.suffix.lower() == ".png":
        with Image.open(p) as img:
            arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
        return SaliencyMap(arr)
    arr = tensor_read(p)
    if arr.ndim != 2:
        raise TensorFormatError(f"{path}: saliency tensor must be rank 2, got {arr.ndim}")
    return SaliencyMap(np.asarray(arr, dtype=np.float64))
