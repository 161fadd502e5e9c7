"""Run-length encodings used on the wire.

Two JSON-friendly layouts, both row-major:

* binary masks: ``{"size": [h, w], "counts": [...]}`` where counts alternate
  zero-runs and one-runs, always starting with the zero-run (which may be 0).
* label maps: ``{"size": [h, w], "runs": [[value, length], ...]}``.
"""

from __future__ import annotations

import numpy as np


def _runs(flat: np.ndarray):
    """Run lengths and the value starting each run."""
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [flat.size]))
    return (ends - starts).tolist(), flat[starts].tolist()


def encode_binary_mask(mask: np.ndarray) -> dict:
    mask = np.asarray(mask)
    if mask.ndim != 2 or mask.size == 0:
        raise ValueError(f"mask must be a non-empty 2-D array, got shape {mask.shape}")
    flat = mask.reshape(-1).astype(np.uint8)
    if not np.isin(flat, (0, 1)).all():
        raise ValueError("mask values must be 0 or 1")
    lengths, values = _runs(flat)
    counts = [0] + lengths if values[0] == 1 else lengths
    return {"size": [int(mask.shape[0]), int(mask.shape[1])], "counts": counts}


def decode_binary_mask(obj: dict) -> np.ndarray:
    h, w = (int(v) for v in obj["size"])
    counts = [int(c) for c in obj["counts"]]
    if h < 1 or w < 1:
        raise ValueError(f"invalid mask size {obj['size']}")
    if any(c < 0 for c in counts):
        raise ValueError("negative run length")
    if any(c == 0 for c in counts[1:]):
        raise ValueError("only the leading zero-run may be empty")
    if sum(counts) != h * w:
        raise ValueError(f"runs cover {sum(counts)} pixels, mask has {h * w}")
    values = np.arange(len(counts), dtype=np.uint8) % 2
    return np.repeat(values, counts).reshape(h, w)


def encode_label_map(labels: np.ndarray) -> dict:
    labels = np.asarray(labels)
    if labels.ndim != 2 or labels.size == 0:
        raise ValueError(f"labels must be a non-empty 2-D array, got shape {labels.shape}")
    if labels.min() < 0:
        raise ValueError("label values must be non-negative")
    lengths, values = _runs(labels.reshape(-1))
    return {
        "size": [int(labels.shape[0]), int(labels.shape[1])],
        "runs": [[int(v), int(n)] for v, n in zip(values, lengths)],
    }


def decode_label_map(obj: dict) -> np.ndarray:
    h, w = (int(v) for v in obj["size"])
    if h < 1 or w < 1:
        raise ValueError(f"invalid label map size {obj['size']}")
    runs = obj["runs"]
    if not runs:
        raise ValueError("label map has no runs")
    values = [int(v) for v, _ in runs]
    lengths = [int(n) for _, n in runs]
    if any(n < 1 for n in lengths):
        raise ValueError("run lengths must be positive")
    if any(v < 0 for v in values):
        raise ValueError("label values must be non-negative")
    if sum(lengths) != h * w:
        raise ValueError(f"runs cover {sum(lengths)} pixels, map has {h * w}")
    return np.repeat(np.asarray(values, dtype=np.int64), lengths).reshape(h, w)
