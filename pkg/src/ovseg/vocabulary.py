"""Open-vocabulary query sets: background handling, prompt templating and
text-embedding matrices."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BACKGROUND = "background"
DEFAULT_TEMPLATE = "a photo of a {}"

_MIN_NORM = 1e-12


class VocabularyError(ValueError):
    """Raised for invalid class lists or prompt templates."""


@dataclass(frozen=True)
class ClassVocabulary:
    """Ordered class-name list with the background class pinned at index 0."""

    names: tuple
    prompt_template: str = DEFAULT_TEMPLATE

    def __post_init__(self):
        if len(self.names) < 2:
            raise VocabularyError(
                "vocabulary needs the background class plus at least one query"
            )
        if self.names[0] != BACKGROUND:
            raise VocabularyError(f"names[0] must be {BACKGROUND!r}, got {self.names[0]!r}")

    def __len__(self) -> int:
        return len(self.names)


def build_vocabulary(raw_names, prompt_template: str = DEFAULT_TEMPLATE) -> ClassVocabulary:
    """Build a vocabulary from user-supplied class names.

    Names are whitespace-trimmed (case is preserved); the background class is
    prepended at index 0 when the caller did not list it, and the order of
    the remaining names is kept as given.
    """
    cleaned = [str(n).strip() for n in raw_names]
    cleaned = [n for n in cleaned if n]
    if not cleaned:
        raise VocabularyError("class list is empty")
    seen = set()
    for name in cleaned:
        if name in seen:
            raise VocabularyError(f"duplicate class name {name!r}")
        seen.add(name)
    if BACKGROUND in seen:
        if cleaned[0] != BACKGROUND:
            raise VocabularyError(
                f"{BACKGROUND!r} must be the first entry when listed explicitly"
            )
    else:
        cleaned.insert(0, BACKGROUND)
    return ClassVocabulary(tuple(cleaned), prompt_template)


def load_vocabulary_file(path, prompt_template: str = DEFAULT_TEMPLATE) -> ClassVocabulary:
    """Load class names from a UTF-8 text file, one per line, '#' comments allowed."""
    names = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            names.append(line)
    if not names:
        raise VocabularyError(f"{path}: no class names found")
    return build_vocabulary(names, prompt_template)


def render_prompts(vocab: ClassVocabulary) -> list:
    """Apply the prompt template to every class, background included."""
    if "{}" not in vocab.prompt_template:
        raise VocabularyError(
            f"prompt template {vocab.prompt_template!r} lacks a '{{}}' placeholder"
        )
    return [vocab.prompt_template.format(name) for name in vocab.names]


@dataclass(frozen=True)
class TextEmbeddingMatrix:
    """Unit-norm text embeddings, one row per vocabulary entry."""

    rows: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.rows, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"embedding matrix must be 2-D, got shape {arr.shape}")
        norms = np.linalg.norm(arr, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-5):
            raise ValueError("embedding rows must be unit-norm")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "rows", arr)

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    @property
    def count(self) -> int:
        return self.rows.shape[0]

    def permuted(self, order) -> "TextEmbeddingMatrix":
        return TextEmbeddingMatrix(self.rows[list(order)])


def normalize_rows(rows: np.ndarray) -> np.ndarray:
    """L2-normalize each row; degenerate (near-zero) rows are an error."""
    rows = np.asarray(rows, dtype=np.float64)
    norms = np.linalg.norm(rows, axis=-1, keepdims=True)
    if np.any(norms < _MIN_NORM):
        bad = int(np.argmin(norms))
        raise ValueError(f"embedding row {bad} has near-zero norm {float(norms.flat[bad]):g}")
    return rows / norms


def encode_vocabulary(vocab: ClassVocabulary, text_encoder) -> TextEmbeddingMatrix:
    """Encode every prompt with `text_encoder`, returning unit-norm rows in
    vocabulary order."""
    prompts = render_prompts(vocab)
    rows = []
    dim = None
    for name, prompt in zip(vocab.names, prompts):
        try:
            vec = np.asarray(text_encoder.encode_text(prompt), dtype=np.float64)
        except Exception as exc:
            raise RuntimeError(f"text encoder failed on class {name!r}: {exc}") from exc
        if vec.ndim != 1:
            raise RuntimeError(f"text encoder returned rank-{vec.ndim} output for {name!r}")
        if dim is None:
            dim = vec.shape[0]
        elif vec.shape[0] != dim:
            raise RuntimeError(
                f"text encoder dimension mismatch on {name!r}: {vec.shape[0]} != {dim}"
            )
        if not np.isfinite(vec).all():
            raise RuntimeError(f"text encoder returned non-finite values for {name!r}")
        rows.append(vec)
    matrix = normalize_rows(np.stack(rows))
    return TextEmbeddingMatrix(matrix)
