"""Segment one synthetic image with the hash-based stub encoder.

No downloads, no model files: the stub encoder turns pixel content into
deterministic unit vectors, so this runs anywhere and always produces the
same three artifacts (label PNG, probability tensor, overlay PNG).
"""

from pathlib import Path

import numpy as np

from ovseg import (
    ConstantSaliency,
    DenseInferenceConfig,
    ImageTensor,
    StubEncoder,
    build_vocabulary,
    export_result,
    prepare_image,
    segment,
)

OUT = Path(__file__).parent / "out"


def checkered_scene(h=96, w=128):
    """Quadrant image: four flat color regions to pull apart."""
    img = np.zeros((h, w, 3))
    img[: h // 2, : w // 2] = (0.9, 0.2, 0.2)
    img[: h // 2, w // 2 :] = (0.2, 0.9, 0.2)
    img[h // 2 :, : w // 2] = (0.2, 0.2, 0.9)
    img[h // 2 :, w // 2 :] = (0.85, 0.85, 0.85)
    return ImageTensor(img)


def main():
    image = checkered_scene()
    vocab = build_vocabulary(["red sign", "green field", "blue pool"])
    config = DenseInferenceConfig(scales=(32, 16), encoder_input=16, short_side=96)

    result = segment(
        image,
        vocab,
        StubEncoder(dim=32, seed=0),
        saliency_provider=ConstantSaliency(0.75),
        config=config,
    )

    OUT.mkdir(exist_ok=True)
    paths = export_result(result, prepare_image(image, config.short_side), OUT, "quickstart")
    for path in paths:
        print(path)
    for idx, name in enumerate(result.classes):
        frac = float((result.labels.data == idx).mean())
        print(f"{name:<12} {frac:6.1%} of pixels")
    print("fingerprint", result.fingerprint[:16], "...")


if __name__ == "__main__":
    main()
