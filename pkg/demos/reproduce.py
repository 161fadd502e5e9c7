"""Benchmark reproduction harness (optional; needs user-supplied assets).

Runs the three inference variants over a real dataset manifest with a real
TorchScript tower pair and precomputed object masks, then prints one line
per variant plus a comparison against known-good reference numbers for the
standard ViT-B/32 + mask-proposal configuration:

    full pipeline   ~0.599 mIoU   (a healthy run lands within +/-0.05)
    no_multiscale   ~0.560
    no_objectness   ~0.241

The ordering full > no_multiscale > no_objectness is the signature that the
multi-scale mean and the saliency arbitration both contribute.  Nothing in
the package test suite depends on this script; it exists so a run against
real assets can be checked end to end.

Example:
    python demos/reproduce.py \
        --model /assets/vitb32 \
        --manifest /assets/voc/manifest.tsv \
        --class-file /assets/voc/classes.txt \
        --saliency precomputed:/assets/voc/saliency \
        --scales 256,128,64 --jobs 4
"""

import argparse
import sys

from ovseg import (
    DenseInferenceConfig,
    NeuralRuntimeEncoder,
    DatasetManifest,
    ScaleConfig,
    evaluate_dataset,
    load_vocabulary_file,
    make_saliency_provider,
)

REFERENCE = {"full": 0.599, "no_multiscale": 0.560, "no_objectness": 0.241}
TOLERANCE = 0.05


def parse_args(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", required=True, help="TorchScript tower directory")
    ap.add_argument("--manifest", required=True, help="dataset manifest (tsv)")
    ap.add_argument("--class-file", required=True, help="one class name per line")
    ap.add_argument("--saliency", default=None, help="saliency source string")
    ap.add_argument("--scales", default="256,128,64")
    ap.add_argument("--short-side", type=int, default=448)
    ap.add_argument("--encoder-input", type=int, default=224)
    ap.add_argument("--logit-scale", type=float, default=100.0)
    ap.add_argument("--jobs", type=int, default=1)
    return ap.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    provider = NeuralRuntimeEncoder(args.model)
    manifest = DatasetManifest.load(args.manifest)
    vocab = load_vocabulary_file(args.class_file)
    saliency = make_saliency_provider(args.saliency) if args.saliency else None
    config = DenseInferenceConfig(
        scales=ScaleConfig(tuple(int(s) for s in args.scales.split(","))),
        encoder_input=args.encoder_input,
        short_side=args.short_side,
        logit_scale=args.logit_scale,
    )

    scores = {}
    for ablation in ("full", "no_multiscale", "no_objectness"):
        report = evaluate_dataset(
            manifest, vocab, provider, saliency_provider=saliency,
            config=config, ablation=ablation, jobs=args.jobs,
        )
        scores[ablation] = report.miou
        print(f"{ablation:<14} mIoU {report.miou:.4f}   "
              f"(reference {REFERENCE[ablation]:.3f})")

    band_ok = abs(scores["full"] - REFERENCE["full"]) <= TOLERANCE
    order_ok = scores["full"] > scores["no_multiscale"] > scores["no_objectness"]
    print(f"full within +/-{TOLERANCE} of reference: {'yes' if band_ok else 'NO'}")
    print(f"ordering full > no_multiscale > no_objectness: {'yes' if order_ok else 'NO'}")
    return 0 if (band_ok and order_ok) else 1


if __name__ == "__main__":
    sys.exit(main())
