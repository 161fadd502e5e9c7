"""Build a throwaway labeled dataset on disk and score it.

Shows the full evaluation loop: manifest loading, per-image segmentation,
ground-truth resampling, exact-rational mean IoU, and the report format the
`ovseg eval` command prints.
"""

import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from ovseg import (
    DenseInferenceConfig,
    DatasetManifest,
    StubEncoder,
    build_vocabulary,
    evaluate_dataset,
)


def write_dataset(root: Path, images=4, size=48):
    rng = np.random.default_rng(11)
    lines = []
    for i in range(images):
        arr = rng.random((size, size, 3))
        gt = rng.integers(0, 3, size=(size, size)).astype(np.uint8)
        gt[:4, :4] = 255  # a little ignored region, stays out of the counts
        Image.fromarray((arr * 255).astype(np.uint8)).save(root / f"img{i}.png")
        Image.fromarray(gt, mode="L").save(root / f"gt{i}.png")
        lines.append(f"img{i}.png\tgt{i}.png")
    (root / "manifest.tsv").write_text("\n".join(lines) + "\n")
    return DatasetManifest.load(root / "manifest.tsv")


def main():
    with tempfile.TemporaryDirectory() as tmp:
        manifest = write_dataset(Path(tmp))
        vocab = build_vocabulary(["left thing", "right thing"])
        config = DenseInferenceConfig(scales=(16, 8), encoder_input=8, short_side=48)
        for ablation in ("full", "no_objectness"):
            report = evaluate_dataset(
                manifest,
                vocab,
                StubEncoder(dim=16, seed=0),
                config=config,
                ablation=ablation,
            )
            print(f"--- {ablation} ---")
            print(report.render_text(), end="")


if __name__ == "__main__":
    main()
