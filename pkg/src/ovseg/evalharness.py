"""Dataset evaluation: confusion accumulation and mean IoU.

Per-class IoU and their mean are computed over exact integer counts with
rational arithmetic and rounded to float once at the end, so results are
reproducible to the last bit and simple ratios come out exact.  Classes that
never appear in ground truth or prediction are excluded from the mean;
pixels labeled with the ignore index contribute nothing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .coretypes import IGNORE_INDEX, LabelMap, load_image, load_label_png
from .fusion import build_meta, segment
from .partitioner import resize_nearest
from .pipeline import DenseInferenceConfig
from .saliency import ConstantSaliency, FileSaliency
from .vocabulary import ClassVocabulary, encode_vocabulary


class UndefinedMetricError(RuntimeError):
    """No class had any ground-truth or predicted pixel; the mean is undefined."""


@dataclass
class ConfusionMatrix:
    """Square count matrix indexed [ground truth, prediction]."""

    num_classes: int
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError("need at least one class")
        if self.counts is None:
            self.counts = np.zeros((self.num_classes, self.num_classes), dtype=np.int64)
        else:
            self.counts = np.asarray(self.counts, dtype=np.int64)
            if self.counts.shape != (self.num_classes, self.num_classes):
                raise ValueError(f"counts must be {self.num_classes}x{self.num_classes}")

    def update(self, gt: LabelMap, pred: LabelMap) -> None:
        """Accumulate one image; ignore-index pixels in gt are skipped."""
        if gt.data.shape != pred.data.shape:
            raise ValueError(
                f"gt shape {gt.data.shape} does not match prediction {pred.data.shape}"
            )
        g = gt.data.reshape(-1).astype(np.int64)
        p = pred.data.reshape(-1).astype(np.int64)
        keep = g != IGNORE_INDEX
        g, p = g[keep], p[keep]
        if g.size and g.max() >= self.num_classes:
            raise ValueError(
                f"ground truth contains class {g.max()} outside 0..{self.num_classes - 1}"
            )
        if p.size and p.max() >= self.num_classes:
            raise ValueError(
                f"prediction contains class {p.max()} outside 0..{self.num_classes - 1}"
            )
        flat = np.bincount(g * self.num_classes + p, minlength=self.num_classes**2)
        self.counts += flat.reshape(self.num_classes, self.num_classes)

    def per_class_iou(self):
        """Exact per-class IoU as Fractions; None where the union is empty."""
        tp = np.diag(self.counts)
        union = self.counts.sum(axis=0) + self.counts.sum(axis=1) - tp
        return [
            Fraction(int(t), int(u)) if u > 0 else None for t, u in zip(tp, union)
        ]

    def miou(self) -> float:
        """Mean IoU over classes with non-empty union, rounded to float once."""
        defined = [f for f in self.per_class_iou() if f is not None]
        if not defined:
            raise UndefinedMetricError(
                "every class has an empty union; mean IoU is undefined"
            )
        return float(sum(defined, Fraction(0)) / len(defined))


@dataclass(frozen=True)
class DatasetEntry:
    image_id: str
    image_path: Path
    label_path: Path
    saliency_path: Path = None


@dataclass(frozen=True)
class DatasetManifest:
    """Tab-separated listing: image path, label PNG, optional saliency map.

    Paths are resolved relative to the manifest file and must exist when the
    manifest is loaded.  Blank lines and lines starting with '#' are skipped.
    Image ids are the image file stems and must be unique.
    """

    entries: tuple

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        root = path.parent
        entries = []
        seen = set()
        for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise ValueError(
                    f"{path}:{lineno}: expected 2 or 3 tab-separated paths, got {len(parts)}"
                )
            image_path = root / parts[0]
            image_id = image_path.stem
            if image_id in seen:
                raise ValueError(f"{path}:{lineno}: duplicate image id {image_id!r}")
            seen.add(image_id)
            entry = DatasetEntry(
                image_id=image_id,
                image_path=image_path,
                label_path=root / parts[1],
                saliency_path=root / parts[2] if len(parts) == 3 else None,
            )
            for p in (entry.image_path, entry.label_path, entry.saliency_path):
                if p is not None and not p.is_file():
                    raise FileNotFoundError(f"{path}:{lineno}: {p} does not exist")
            entries.append(entry)
        if not entries:
            raise ValueError(f"{path}: manifest lists no images")
        return cls(entries=tuple(entries))

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class EvalReport:
    """Aggregate metrics for one evaluation run.  Carries no timestamps."""

    miou: float
    per_class: dict
    images: int
    failures: list
    ablation: str
    fingerprint: str
    confusion: np.ndarray

    def to_dict(self) -> dict:
        return {
            "miou": self.miou,
            "per_class": self.per_class,
            "images": self.images,
            "failures": self.failures,
            "ablation": self.ablation,
            "fingerprint": self.fingerprint,
            "confusion": self.confusion.tolist(),
        }

    def write_json(self, path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    def render_text(self) -> str:
        """Human-readable per-class table plus a machine-readable summary line."""
        width = max(len(n) for n in list(self.per_class) + ["class"])
        lines = [f"  {'class':<{width}}  {'IoU':>10}"]
        for name, iou in self.per_class.items():
            shown = "-" if iou is None else f"{iou:.6f}"
            lines.append(f"  {name:<{width}}  {shown:>10}")
        lines.append(f"images evaluated: {self.images}")
        lines.append(f"failures: {len(self.failures)}")
        for f in self.failures:
            lines.append(f"  {f['image_id']}: {f['error']}")
        summary = {
            "miou": self.miou,
            "per_class": self.per_class,
            "images": self.images,
            "failures": len(self.failures),
            "ablation": self.ablation,
            "fingerprint": self.fingerprint,
        }
        lines.append(
            "summary " + json.dumps(summary, sort_keys=True, separators=(",", ":"))
        )
        lines.append(f"mIoU {self.miou!r}")
        return "\n".join(lines) + "\n"

    def write_text(self, path) -> None:
        Path(path).write_text(self.render_text(), encoding="utf-8")


def _evaluate_entry(entry, vocab, provider, saliency_provider, config, ablation, text):
    """Confusion counts for one manifest entry, in its own matrix."""
    image = load_image(entry.image_path)
    sal_provider = (
        FileSaliency(entry.saliency_path)
        if entry.saliency_path is not None
        else saliency_provider
    )
    result = segment(
        image,
        vocab,
        provider,
        saliency_provider=sal_provider,
        config=config,
        ablation=ablation,
        image_id=entry.image_id,
        text=text,
    )
    gt = load_label_png(entry.label_path)
    if gt.data.shape != (result.height, result.width):
        gt = LabelMap(
            resize_nearest(gt.data, result.height, result.width).astype(np.uint8)
        )
    local = ConfusionMatrix(len(vocab))
    local.update(gt, result.labels)
    return local.counts


def evaluate_dataset(
    manifest: DatasetManifest,
    vocab: ClassVocabulary,
    provider,
    saliency_provider=None,
    config: DenseInferenceConfig = DenseInferenceConfig(),
    ablation: str = "full",
    jobs: int = 1,
    progress=None,
) -> EvalReport:
    """Segment every manifest entry and score against ground truth.

    Ground truth is resampled to prediction resolution with nearest neighbor
    so class indices survive.  A saliency path in the manifest overrides the
    provider for that image.  Per-image failures are recorded and skipped,
    not fatal.  With jobs > 1 images run on a thread pool; integer count
    accumulation commutes, so the result is identical to a serial run.
    """
    text = encode_vocabulary(vocab, provider)
    matrix = ConfusionMatrix(len(vocab))
    failures = []
    evaluated = 0

    def run_one(entry):
        try:
            return _evaluate_entry(
                entry, vocab, provider, saliency_provider, config, ablation, text
            )
        except Exception as exc:
            return {"image_id": entry.image_id, "error": str(exc)}

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run_one, manifest.entries))
    else:
        outcomes = map(run_one, manifest.entries)

    for entry, outcome in zip(manifest.entries, outcomes):
        if isinstance(outcome, dict):
            failures.append(outcome)
        else:
            matrix.counts += outcome
            evaluated += 1
        if progress is not None:
            progress(entry.image_id)

    per_class = {
        name: (float(f) if f is not None else None)
        for name, f in zip(vocab.names, matrix.per_class_iou())
    }
    if ablation == "no_multiscale":
        scales = config.scales.single_scale()
    else:
        scales = config.scales
    meta = build_meta(
        vocab,
        config,
        scales.patch_sizes,
        ablation,
        provider,
        saliency_provider if saliency_provider is not None else ConstantSaliency(1.0),
    )
    return EvalReport(
        miou=matrix.miou(),
        per_class=per_class,
        images=evaluated,
        failures=failures,
        ablation=ablation,
        fingerprint=meta["fingerprint"],
        confusion=matrix.counts.copy(),
    )
