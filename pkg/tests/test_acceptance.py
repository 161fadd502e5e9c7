"""Acceptance gate: one pass/fail line per criterion, at stated tolerances.

Each criterion prints `ACCEPTANCE <n> <label>: PASS|FAIL` on real stdout so
the verdicts survive pytest capture; the assertions carry the details.
"""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner
from PIL import Image

from ovseg import (
    ABLATIONS,
    ConfusionMatrix,
    ConstantSaliency,
    DatasetManifest,
    DenseInferenceConfig,
    InstanceMaskSet,
    LabelMap,
    MultiScaleResult,
    SaliencyMap,
    ScaleConfig,
    StubEncoder,
    aggregate_instance_masks,
    build_vocabulary,
    encode_vocabulary,
    evaluate_dataset,
    load_vocabulary_file,
    make_grid,
    multiscale_inference,
    objectness_weights,
    resize_bilinear,
    segment,
    tensor_dumps,
    tensor_loads,
    tensor_read,
    tensor_write,
)
from ovseg.cli import main as cli_main
import conftest
from conftest import ArraySaliency, random_image
from fixture_synthetic import (
    SYNTHETIC_CONFIG,
    StripAlignedEncoder,
    build_synthetic_dataset,
)
from reference import (
    ref_aggregate_masks,
    ref_resize_bilinear,
    ref_segment,
    ref_windows,
)

REPO_ROOT = Path(__file__).resolve().parent.parent


def _announce(number, label, ok):
    line = f"ACCEPTANCE {number} {label}: {'PASS' if ok else 'FAIL'}"
    conftest.ACCEPTANCE_LINES.append(line)
    sys.__stdout__.write(line + "\n")
    sys.__stdout__.flush()


def test_criterion_1_oracle_equivalence():
    """100 seeded end-to-end cases agree with the loop oracle."""
    started = time.perf_counter()
    max_prob_diff = 0.0
    label_mismatches = 0
    cases = 0
    for case in range(100):
        rng = np.random.default_rng(5000 + case)
        h = int(rng.integers(8, 65))
        w = int(rng.integers(8, 65))
        n_scales = int(rng.integers(1, 4))
        sizes = tuple(
            int(s) for s in sorted(
                rng.choice(np.arange(8, 41), size=n_scales, replace=False),
                reverse=True,
            )
        )
        n_prompts = int(rng.integers(1, 4))  # classes = prompts + background <= 4
        prompts = [f"thing {case}-{k}" for k in range(n_prompts)]
        logit_scale = 100.0 if case % 2 else 1.0
        ablation = ABLATIONS[case % 3]
        global0 = case % 4 == 0
        image = random_image(rng, h, w)

        if case % 5 == 0:
            value = float(rng.random())
            provider_sal, oracle_sal = ConstantSaliency(value), np.full((h, w), value)
        else:
            oracle_sal = rng.random((h, w))
            provider_sal = ArraySaliency(oracle_sal)

        encoder = StubEncoder(dim=8, seed=case)
        vocab = build_vocabulary(prompts)
        config = DenseInferenceConfig(
            scales=ScaleConfig(sizes, global0),
            encoder_input=8,
            short_side=min(h, w),
            logit_scale=logit_scale,
        )
        result = segment(
            image, vocab, encoder, saliency_provider=provider_sal,
            config=config, ablation=ablation,
        )
        text = encode_vocabulary(vocab, encoder)
        want_probs, want_labels = ref_segment(
            image.data, text.rows, encoder, sizes, 8, oracle_sal,
            logit_scale, ablation, global0,
        )
        max_prob_diff = max(
            max_prob_diff, float(np.abs(result.probabilities.data - want_probs).max())
        )
        label_mismatches += int((result.labels.data != want_labels).sum())
        cases += 1
    elapsed = time.perf_counter() - started

    ok = cases == 100 and max_prob_diff <= 1e-6 and label_mismatches == 0 and elapsed < 60
    _announce(1, "oracle equivalence (100 cases, probs 1e-6, labels exact)", ok)
    assert cases == 100
    assert max_prob_diff <= 1e-6, f"probability diff {max_prob_diff}"
    assert label_mismatches == 0, f"{label_mismatches} label mismatches"
    assert elapsed < 60, f"took {elapsed:.1f}s"


def test_criterion_2_equation_literal():
    """Scale-mean symmetry, exact weight complement, simplex, |S|=1 identity."""
    checks = []
    rng = np.random.default_rng(77)

    image = random_image(rng, 24, 32)
    vocab = build_vocabulary(["alpha", "beta"])
    encoder = StubEncoder(dim=8, seed=1)
    config = DenseInferenceConfig(scales=(16, 12, 8), encoder_input=8, short_side=24)
    text = encode_vocabulary(vocab, encoder)
    inference = multiscale_inference(image, text, encoder, config)
    for perm in ([2, 1, 0], [1, 2, 0], [0, 2, 1]):
        permuted = MultiScaleResult(
            per_scale=[inference.per_scale[i] for i in perm],
            grids=[inference.grids[i] for i in perm],
        )
        checks.append((
            "scale permutation leaves the mean unchanged",
            np.allclose(permuted.aggregated.data, inference.aggregated.data, atol=1e-12),
        ))

    thetas = rng.random((40, 50))
    thetas.flat[:4] = (0.0, 1.0, np.nextafter(1.0, 0.0), np.nextafter(0.0, 1.0))
    weights = objectness_weights(SaliencyMap(thetas), num_classes=4)
    complements = weights.data[..., :1] + weights.data[..., 1:]
    checks.append(("background + foreground weight == 1 exactly", (complements == 1.0).all()))

    for logit_scale in (1.0, 100.0):
        cfg = DenseInferenceConfig(scales=(16, 8), encoder_input=8,
                                   short_side=24, logit_scale=logit_scale)
        result = segment(image, vocab, encoder, saliency_provider=ArraySaliency(thetas[:24, :32]),
                         config=cfg)
        gap = float(np.abs(result.probabilities.data.sum(axis=-1) - 1.0).max())
        checks.append((f"per-pixel simplex within 1e-5 at logit scale {logit_scale:g}", gap <= 1e-5))

    single = DenseInferenceConfig(scales=(16,), encoder_input=8, short_side=24)
    full = segment(image, vocab, encoder, config=single, ablation="full")
    collapsed = segment(image, vocab, encoder, config=single, ablation="no_multiscale")
    checks.append((
        "|S|=1 makes full and no_multiscale bit-identical",
        full.probabilities.data.tobytes() == collapsed.probabilities.data.tobytes()
        and full.labels.data.tobytes() == collapsed.labels.data.tobytes(),
    ))

    ok = all(passed for _, passed in checks)
    _announce(2, "equation-literal invariants", ok)
    assert ok, [name for name, passed in checks if not passed]


def _random_mask_set(rng, n=9, h=12, w=10):
    masks = (rng.random((n, h, w)) < 0.35).astype(np.float64)
    masks[0] = 0.0
    masks[0, : h // 2] = 1.0  # guarantee coverage for the top-scored mask
    scores = rng.random(n)
    scores[0] = 0.9
    return InstanceMaskSet(masks=masks, scores=scores)


def test_criterion_3_aggregation_exactness():
    """Order invariance, exact peak, threshold, common-factor scaling: exact."""
    checks = []
    rng = np.random.default_rng(33)

    for trial in range(10):
        mask_set = _random_mask_set(np.random.default_rng(300 + trial))
        base = aggregate_instance_masks(mask_set)
        order_ok, peak_ok = True, base.data.max() == 1.0
        for _ in range(5):
            perm = rng.permutation(len(mask_set))
            shuffled = InstanceMaskSet(
                masks=mask_set.masks[perm], scores=mask_set.scores[perm]
            )
            if aggregate_instance_masks(shuffled).data.tobytes() != base.data.tobytes():
                order_ok = False
        checks.append((f"trial {trial}: permutation-exact", order_ok))
        checks.append((f"trial {trial}: peak exactly 1.0", peak_ok))

        survivors = mask_set.scores >= 0.3
        filtered = InstanceMaskSet(
            masks=mask_set.masks[survivors], scores=mask_set.scores[survivors]
        )
        checks.append((
            f"trial {trial}: below-threshold masks contribute nothing",
            aggregate_instance_masks(filtered).data.tobytes() == base.data.tobytes(),
        ))

        for factor in (0.5, 0.25):  # powers of two commute with IEEE add/divide
            scaled = InstanceMaskSet(masks=mask_set.masks, scores=mask_set.scores * factor)
            again = aggregate_instance_masks(scaled, score_threshold=0.3 * factor)
            checks.append((
                f"trial {trial}: common factor {factor} changes nothing",
                again.data.tobytes() == base.data.tobytes(),
            ))

    lone = InstanceMaskSet(
        masks=np.ones((1, 3, 3)), scores=np.array([0.2999999999])
    )
    checks.append((
        "all masks below threshold give the zero map",
        not aggregate_instance_masks(lone).data.any(),
    ))

    mask_set = _random_mask_set(np.random.default_rng(9))
    ascending = np.sort(np.linspace(0.31, 0.97, len(mask_set)))
    ordered = InstanceMaskSet(masks=mask_set.masks, scores=ascending)
    want = ref_aggregate_masks(ordered.masks, ordered.scores)
    checks.append((
        "matches the serial loop oracle bit for bit",
        aggregate_instance_masks(ordered).data.tobytes() == want.tobytes(),
    ))

    ok = all(passed for _, passed in checks)
    _announce(3, "instance-mask aggregation (all exact)", ok)
    assert ok, [name for name, passed in checks if not passed]


def test_criterion_4_geometry():
    """Exhaustive tiling, bilinear envelope, half-pixel against 1-D composition."""
    checks = []

    tiling_ok = True
    for h in range(1, 41):
        for w in range(1, 41):
            for p in range(1, 14):
                grid = make_grid(h, w, p)
                rows, cols, wins = ref_windows(h, w, p)
                if (
                    grid.rows != rows
                    or grid.cols != cols
                    or grid.rows != -(-h // p)
                    or grid.cols != -(-w // p)
                    or list(grid.windows) != wins
                ):
                    tiling_ok = False
    checks.append(("exhaustive tiling H,W<=40 P<=13 matches ceil-division oracle", tiling_ok))

    rng = np.random.default_rng(44)
    constant_ok, bounded_ok = True, True
    for _ in range(60):
        sh, sw = (int(v) for v in rng.integers(1, 25, size=2))
        th, tw = (int(v) for v in rng.integers(1, 25, size=2))
        value = float(rng.standard_normal())
        flat = resize_bilinear(np.full((sh, sw, 1), value), th, tw)
        if not (flat == value).all():
            constant_ok = False
        arr = rng.standard_normal((sh, sw, 2))
        out = resize_bilinear(arr, th, tw)
        for c in range(2):
            if out[..., c].min() < arr[..., c].min() or out[..., c].max() > arr[..., c].max():
                bounded_ok = False
    checks.append(("constant images stay exactly constant", constant_ok))
    checks.append(("values stay inside the per-channel source envelope", bounded_ok))

    max_diff = 0.0
    for case in range(50):
        rng = np.random.default_rng(4400 + case)
        sh, sw = (int(v) for v in rng.integers(1, 21, size=2))
        th, tw = (int(v) for v in rng.integers(1, 21, size=2))
        arr = rng.standard_normal((sh, sw, int(rng.integers(1, 4))))
        got = resize_bilinear(arr, th, tw)
        want = ref_resize_bilinear(arr, th, tw)
        max_diff = max(max_diff, float(np.abs(got - want).max()))
    checks.append(("half-pixel centers match per-axis 1-D composition within 1e-6",
                   max_diff <= 1e-6))

    ok = all(passed for _, passed in checks)
    _announce(4, "window geometry and resampling", ok)
    assert ok, [name for name, passed in checks if not passed] + [f"diff {max_diff}"]


def test_criterion_5_metric_and_synthetic_dataset(tmp_path):
    """Exact rational fixtures, then a dataset the full pipeline must ace."""
    from fractions import Fraction

    checks = []
    mat = ConfusionMatrix(2)
    mat.update(
        LabelMap(np.array([[0, 1], [1, 1]], dtype=np.uint8)),
        LabelMap(np.array([[0, 1], [0, 1]], dtype=np.uint8)),
    )
    checks.append(("fixture per-class IoU is exactly [1/2, 2/3]",
                   mat.per_class_iou() == [Fraction(1, 2), Fraction(2, 3)]))
    checks.append(("fixture mean is exactly 7/12", mat.miou() == float(Fraction(7, 12))))

    started = time.perf_counter()
    manifest_path, class_file = build_synthetic_dataset(tmp_path)
    manifest = DatasetManifest.load(manifest_path)
    vocab = load_vocabulary_file(class_file)
    encoder = StripAlignedEncoder()
    full = evaluate_dataset(manifest, vocab, encoder, config=SYNTHETIC_CONFIG)
    blind = evaluate_dataset(
        manifest, vocab, encoder, config=SYNTHETIC_CONFIG, ablation="no_objectness"
    )
    elapsed = time.perf_counter() - started
    checks.append(("synthetic 10-image mIoU >= 0.95", full.miou >= 0.95))
    checks.append(("no_objectness scores strictly lower", blind.miou < full.miou))
    checks.append(("well under the 30s budget", elapsed < 30))

    ok = all(passed for _, passed in checks)
    _announce(5, "metric fixtures and synthetic dataset", ok)
    assert ok, [name for name, passed in checks if not passed] + [
        f"full {full.miou} blind {blind.miou} in {elapsed:.1f}s"
    ]


def test_criterion_6_determinism(tmp_path):
    """Identical reruns byte for byte; 1000 exact tensor round trips."""
    checks = []

    rng = np.random.default_rng(66)
    Image.fromarray((rng.random((24, 24, 3)) * 255).astype(np.uint8)).save(
        tmp_path / "scene.png"
    )
    runner = CliRunner()
    blobs = []
    for sub in ("first", "second"):
        result = runner.invoke(cli_main, [
            "segment", str(tmp_path / "scene.png"), "-c", "cat", "-c", "sky",
            "--out", str(tmp_path / sub), "--scales", "16,8",
            "--encoder-input", "8", "--short-side", "24", "--stub-dim", "8",
        ])
        assert result.exit_code == 0, result.output
        blobs.append({
            p.name: p.read_bytes() for p in sorted((tmp_path / sub).iterdir())
        })
    checks.append(("segment command reruns are byte-identical",
                   len(blobs[0]) == 3 and blobs[0] == blobs[1]))

    exact = 0
    for trial in range(1000):
        rng = np.random.default_rng(6000 + trial)
        rank = int(rng.integers(1, 5))
        shape = tuple(int(v) for v in rng.integers(1, 7, size=rank))
        arr = (rng.standard_normal(shape) * 10.0 ** rng.integers(-6, 7)).astype(np.float32)
        arr.flat[0] = 0.0
        if trial % 10 == 0:
            back = tensor_read(_round_trip_file(arr, tmp_path / "t.cdiy"))
        else:
            back = tensor_loads(tensor_dumps(arr))
        if back.shape == arr.shape and back.tobytes() == arr.tobytes():
            exact += 1
    checks.append(("1000 tensor round trips exact", exact == 1000))

    ok = all(passed for _, passed in checks)
    _announce(6, "determinism and storage round trips", ok)
    assert ok, [name for name, passed in checks if not passed]


def _round_trip_file(arr, path):
    tensor_write(arr, path)
    return path


def test_criterion_7_reproduction_harness_available():
    """Non-gating: the real-assets harness ships and self-describes.

    Scoring against real towers needs user-supplied files, so this only
    verifies the harness is present, importable and documents its expected
    reference band; it never depends on downloaded assets.
    """
    script = REPO_ROOT / "demos" / "reproduce.py"
    present = script.is_file()
    helptext = subprocess.run(
        [sys.executable, str(script), "--help"],
        capture_output=True, text=True, cwd=REPO_ROOT,
    )
    documented = (
        "0.599" in script.read_text() and "no_objectness" in script.read_text()
    )
    ok = present and helptext.returncode == 0 and documented
    _announce(7, "reproduction harness present (real assets not required)", ok)
    assert ok, (present, helptext.returncode, documented)
