"""Pluggable image/text embedding providers.

Three backends share two narrow interfaces:

* ``StubEncoder`` — deterministic hash-derived unit vectors for tests.
* ``PrecomputedEncoder`` — content-addressed lookup of stored vectors,
  enabling model-free reproduction fixtures.
* ``NeuralRuntimeEncoder`` — TorchScript vision/text towers plus a
  preprocessing manifest (lazy torch import; install the ``neural`` extra).

Providers return raw vectors; the engine L2-normalizes at the similarity
boundary.  Providers declare ``concurrent`` and ``batched`` capabilities and
must not mutate state inside encode calls.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .coretypes import ImageTensor, tensor_read, tensor_write


class BackendError(RuntimeError):
    """An embedding backend failed or was queried for an unknown key."""


def image_content_hash(image: ImageTensor) -> str:
    """Stable hex digest of an image's pixel content."""
    return hashlib.sha256(np.ascontiguousarray(image.data).tobytes()).hexdigest()


def patch_content_key(image_hash: str, window, input_size: int) -> str:
    """Content key for one extracted patch: which image, which window
    rectangle, and the encoder input size it was resized to."""
    y0, x0, y1, x1 = window
    return f"img:{image_hash}:{y0},{x0},{y1},{x1}:{input_size}"


def text_content_key(prompt: str) -> str:
    return f"txt:{prompt}"


def _rng_from(*parts: bytes) -> np.random.Generator:
    digest = hashlib.blake2b(b"\x00".join(parts), digest_size=8).digest()
    return np.random.default_rng(int.from_bytes(digest, "little"))


class StubEncoder:
    """Deterministic test backend for both images and text.

    Text embeddings are derived from the prompt bytes; image embeddings from
    the per-channel mean color quantized to steps of 1/64, so patches with
    the same quantized mean color embed identically.
    """

    concurrent = True
    batched = False

    def __init__(self, dim: int = 32, seed: int = 0, input_size=None):
        self.embedding_dim = int(dim)
        self.seed = int(seed)
        self.input_size = input_size

    def _unit(self, tag: bytes, payload: bytes) -> np.ndarray:
        rng = _rng_from(str(self.seed).encode(), tag, payload)
        vec = rng.standard_normal(self.embedding_dim)
        return vec / np.linalg.norm(vec)

    def encode_text(self, prompt: str) -> np.ndarray:
        return self._unit(b"text", prompt.encode("utf-8"))

    def encode_image(self, patch: ImageTensor, key=None) -> np.ndarray:
        mean = patch.data.reshape(-1, 3).mean(axis=0)
        quantized = np.round(mean * 64.0).astype(np.int64)
        return self._unit(b"image", quantized.tobytes())


class PrecomputedEncoder:
    """Content-addressed vector store backed by CDIY files.

    The manifest is JSON: ``{"dim": d, "input_size": s, "entries":
    [{"key": k, "file": f, "row": i}, ...]}`` with file paths relative to the
    manifest.  Lookup misses raise, never return silent zeros.
    """

    concurrent = True
    batched = False

    def __init__(self, manifest_path):
        self.manifest_path = Path(manifest_path)
        spec = json.loads(self.manifest_path.read_text(encoding="utf-8"))
        self.embedding_dim = int(spec["dim"])
        self.input_size = spec.get("input_size")
        self._index = {}
        for entry in spec["entries"]:
            self._index[entry["key"]] = (entry["file"], int(entry["row"]))
        self._matrices = {}

    def _lookup(self, key: str) -> np.ndarray:
        if key not in self._index:
            raise BackendError(f"no precomputed embedding for key {key!r}")
        fname, row = self._index[key]
        if fname not in self._matrices:
            mat = tensor_read(self.manifest_path.parent / fname)
            if mat.ndim != 2:
                raise BackendError(f"{fname}: embedding file must be rank 2")
            self._matrices[fname] = mat
        return np.asarray(self._matrices[fname][row], dtype=np.float64)

    def encode_text(self, prompt: str) -> np.ndarray:
        return self._lookup(text_content_key(prompt))

    def encode_image(self, patch: ImageTensor, key=None) -> np.ndarray:
        if key is None:
            raise BackendError("precomputed image lookup requires a content key")
        return self._lookup(key)


def write_precomputed_index(manifest_path, entries, input_size=None) -> None:
    """Write a precomputed-embedding manifest plus one CDIY matrix file.

    `entries` is an ordered mapping of content key -> 1-D vector; all vectors
    must share one dimension.
    """
    manifest_path = Path(manifest_path)
    keys = list(entries)
    if not keys:
        raise ValueError("no entries to write")
    matrix = np.stack([np.asarray(entries[k], dtype=np.float32) for k in keys])
    matrix_file = manifest_path.with_suffix(".cdiy").name
    tensor_write(matrix, manifest_path.parent / matrix_file)
    spec = {
        "dim": int(matrix.shape[1]),
        "input_size": input_size,
        "entries": [
            {"key": k, "file": matrix_file, "row": i} for i, k in enumerate(keys)
        ],
    }
    manifest_path.write_text(json.dumps(spec, indent=1), encoding="utf-8")


class NeuralRuntimeEncoder:
    """TorchScript vision/text towers behind the provider interfaces.

    Expects a directory with ``manifest.json``::

        {
          "embedding_dim": 512, "input_size": 224,
          "image_tower": "visual.pt",        # (B,3,S,S) float32 -> (B,d)
          "text_tower": "text.pt",           # (B,L) int64 token ids -> (B,d)
          "image_mean": [...], "image_std": [...],
          "tokenizer": "tokenizer/",         # HF tokenizer assets, optional
          "context_length": 77
        }

    Tokenization is owned by this backend (via ``transformers`` when a
    tokenizer directory is given).
    """

    concurrent = False
    batched = True

    def __init__(self, model_dir):
        self.model_dir = Path(model_dir)
        manifest = json.loads((self.model_dir / "manifest.json").read_text(encoding="utf-8"))
        self.embedding_dim = int(manifest["embedding_dim"])
        self.input_size = int(manifest.get("input_size", 224))
        self._mean = np.asarray(manifest.get("image_mean", [0.0, 0.0, 0.0]), dtype=np.float64)
        self._std = np.asarray(manifest.get("image_std", [1.0, 1.0, 1.0]), dtype=np.float64)
        self._context_length = int(manifest.get("context_length", 77))
        self._manifest = manifest
        try:
            import torch
        except ImportError as exc:
            raise BackendError(
                "the neural backend needs torch; install the 'neural' extra"
            ) from exc
        self._torch = torch
        self._image_tower = torch.jit.load(
            str(self.model_dir / manifest["image_tower"]), map_location="cpu"
        ).eval()
        self._text_tower = torch.jit.load(
            str(self.model_dir / manifest["text_tower"]), map_location="cpu"
        ).eval()
        self._tokenizer = None

    def _tokenize(self, prompt: str) -> np.ndarray:
        if self._tokenizer is None:
            tok_dir = self._manifest.get("tokenizer")
            if tok_dir is None:
                raise BackendError("manifest declares no tokenizer assets")
            from transformers import AutoTokenizer

            self._tokenizer = AutoTokenizer.from_pretrained(str(self.model_dir / tok_dir))
        out = self._tokenizer(
            prompt,
            padding="max_length",
            truncation=True,
            max_length=self._context_length,
            return_tensors="np",
        )
        return out["input_ids"].astype(np.int64)

    def encode_text(self, prompt: str) -> np.ndarray:
        ids = self._torch.from_numpy(self._tokenize(prompt))
        with self._torch.no_grad():
            vec = self._text_tower(ids)
        return vec.numpy().reshape(-1).astype(np.float64)

    def _preprocess(self, patches) -> "np.ndarray":
        batch = np.stack([p.data for p in patches])  # (B, S, S, 3)
        batch = (batch - self._mean) / self._std
        return np.ascontiguousarray(batch.transpose(0, 3, 1, 2), dtype=np.float32)

    def encode_image(self, patch: ImageTensor, key=None) -> np.ndarray:
        return self.encode_image_batch([patch])[0]

    def encode_image_batch(self, patches, keys=None) -> np.ndarray:
        tensor = self._torch.from_numpy(self._preprocess(patches))
        with self._torch.no_grad():
            out = self._image_tower(tensor)
        return out.numpy().astype(np.float64)


def encode_image(provider, patch: ImageTensor, key=None) -> np.ndarray:
    """Encode one patch, enforcing the provider's declared input size."""
    size = getattr(provider, "input_size", None)
    if size is not None and (patch.height, patch.width) != (size, size):
        raise ValueError(
            f"patch is {patch.height}x{patch.width}, provider expects {size}x{size}"
        )
    vec = np.asarray(provider.encode_image(patch, key=key), dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != provider.embedding_dim:
        raise BackendError(
            f"provider returned shape {vec.shape}, expected ({provider.embedding_dim},)"
        )
    if not np.isfinite(vec).all():
        raise BackendError("provider returned non-finite embedding")
    return vec


def encode_image_batch(provider, patches, keys=None) -> np.ndarray:
    """Order-preserving batch encode.

    Uses the provider's native batching when declared, fans out across a
    thread pool for concurrent-capable providers, and falls back to an
    ordered serial loop otherwise.  The first backend failure is re-raised
    with its patch index.
    """
    if keys is None:
        keys = [None] * len(patches)
    if len(keys) != len(patches):
        raise ValueError("keys and patches must align")
    if not patches:
        return np.zeros((0, provider.embedding_dim))

    if getattr(provider, "batched", False):
        out = np.asarray(provider.encode_image_batch(patches, keys=keys), dtype=np.float64)
        if out.shape != (len(patches), provider.embedding_dim):
            raise BackendError(f"batched provider returned shape {out.shape}")
        return out

    def _one(i: int) -> np.ndarray:
        try:
            return encode_image(provider, patches[i], key=keys[i])
        except Exception as exc:
            raise BackendError(f"image encode failed on patch {i}: {exc}") from exc

    if getattr(provider, "concurrent", False) and len(patches) > 1:
        with ThreadPoolExecutor(max_workers=min(8, len(patches))) as pool:
            rows = list(pool.map(_one, range(len(patches))))
    else:
        rows = [_one(i) for i in range(len(patches))]
    return np.stack(rows)
