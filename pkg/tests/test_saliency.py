"""Saliency sources, instance-mask aggregation, objectness weights."""

import numpy as np
import pytest
from PIL import Image

from ovseg import (
    ConstantSaliency,
    DirectorySaliency,
    FileSaliency,
    ImageTensor,
    InstanceMaskSet,
    ManifestSaliency,
    SaliencyMap,
    ScoreMap,
    aggregate_instance_masks,
    load_mask_directory,
    load_saliency,
    make_saliency_provider,
    objectness_weights,
    resize_saliency,
    tensor_write,
)
from conftest import ArraySaliency
from reference import ref_aggregate_masks


def _mask(h, w, rows, cols):
    m = np.zeros((h, w))
    m[np.ix_(rows, cols)] = 1.0
    return m


class TestInstanceMaskSet:
    def test_validates_binary(self):
        with pytest.raises(ValueError, match="binary"):
            InstanceMaskSet(np.full((1, 2, 2), 0.5), np.array([0.9]))

    def test_validates_score_range(self):
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            InstanceMaskSet(np.ones((1, 2, 2)), np.array([1.5]))

    def test_validates_alignment(self):
        with pytest.raises(ValueError, match="does not match"):
            InstanceMaskSet(np.ones((2, 2, 2)), np.array([0.9]))
        with pytest.raises(ValueError, match=r"\(N, H, W\)"):
            InstanceMaskSet(np.ones((2, 2)), np.array([0.9, 0.8]))

    def test_len(self):
        assert len(InstanceMaskSet(np.ones((3, 2, 2)), np.full(3, 0.5))) == 3


class TestAggregation:
    def test_frozen_disjoint_pair(self):
        # scores 0.9 and 0.4 on disjoint regions: peak 0.9 normalizes to 1,
        # the weaker mask lands at 0.4/0.9
        masks = np.stack([_mask(4, 4, [0, 1], [0, 1]), _mask(4, 4, [2, 3], [2, 3])])
        out = aggregate_instance_masks(InstanceMaskSet(masks, np.array([0.9, 0.4])))
        assert out.data[0, 0] == 1.0
        assert out.data[2, 2] == 0.4 / 0.9
        assert out.data[0, 2] == 0.0
        assert abs(out.data[2, 2] - 0.4444444444444445) < 1e-15

    def test_frozen_overlapping_pair(self):
        a = _mask(3, 3, [0, 1], [0, 1, 2])
        b = _mask(3, 3, [1, 2], [0, 1, 2])
        out = aggregate_instance_masks(InstanceMaskSet(np.stack([a, b]), np.array([0.9, 0.4])))
        assert out.data[1, 0] == 1.0           # overlap: 1.3 / 1.3
        assert out.data[0, 0] == 0.9 / 1.3
        assert out.data[2, 0] == 0.4 / 1.3

    def test_threshold_boundary_is_inclusive(self):
        masks = np.stack([_mask(2, 2, [0], [0]), _mask(2, 2, [1], [1])])
        out = aggregate_instance_masks(
            InstanceMaskSet(masks, np.array([0.3, 0.2999999]))
        )
        assert out.data[0, 0] == 1.0   # kept: score == threshold
        assert out.data[1, 1] == 0.0   # dropped: just below

    def test_no_survivors_gives_zero_map(self):
        masks = np.ones((3, 4, 5))
        out = aggregate_instance_masks(InstanceMaskSet(masks, np.full(3, 0.1)))
        assert out.data.shape == (4, 5)
        assert (out.data == 0.0).all()

    def test_max_is_exactly_one(self, rng):
        for _ in range(20):
            n = int(rng.integers(1, 8))
            masks = (rng.random((n, 6, 7)) > 0.5).astype(np.float64)
            masks[:, 0, 0] = 1.0  # guarantee a covered pixel
            scores = rng.uniform(0.3, 1.0, n)
            out = aggregate_instance_masks(InstanceMaskSet(masks, scores))
            assert out.data.max() == 1.0

    def test_order_invariance_is_exact(self, rng):
        n = 9
        masks = (rng.random((n, 8, 8)) > 0.4).astype(np.float64)
        scores = rng.uniform(0.0, 1.0, n)
        base = aggregate_instance_masks(InstanceMaskSet(masks, scores))
        for _ in range(5):
            perm = rng.permutation(n)
            shuffled = aggregate_instance_masks(
                InstanceMaskSet(masks[perm], scores[perm])
            )
            assert (shuffled.data == base.data).all()

    def test_power_of_two_scaling_invariance_is_exact(self, rng):
        # scaling every score and the threshold by an exact binary factor
        # cannot change the normalized map
        masks = (rng.random((5, 6, 6)) > 0.4).astype(np.float64)
        scores = rng.uniform(0.4, 1.0, 5)
        base = aggregate_instance_masks(InstanceMaskSet(masks, scores), 0.3)
        for factor in (0.5, 0.25):
            scaled = aggregate_instance_masks(
                InstanceMaskSet(masks, scores * factor), 0.3 * factor
            )
            assert (scaled.data == base.data).all()

    def test_matches_loop_reference(self, rng):
        # ascending distinct scores make the reference's input order coincide
        # with the engine's canonical order, so agreement is exact
        masks = (rng.random((4, 5, 9)) > 0.5).astype(np.float64)
        scores = np.array([0.31, 0.45, 0.8, 0.97])
        got = aggregate_instance_masks(InstanceMaskSet(masks, scores))
        want = ref_aggregate_masks(masks, scores)
        assert (got.data == want).all()

    def test_single_mask_is_binary_map(self):
        m = _mask(4, 4, [1, 2], [1, 2])
        out = aggregate_instance_masks(InstanceMaskSet(m[None], np.array([0.5])))
        assert (out.data == m).all()


class TestMaskDirectory:
    def _write(self, d, masks, scores, names=None):
        d.mkdir(parents=True, exist_ok=True)
        names = names or [f"{i:03d}.png" for i in range(len(masks))]
        for name, m in zip(names, masks):
            Image.fromarray((np.asarray(m) * 255).astype(np.uint8), "L").save(d / name)
        (d / "scores.txt").write_text("".join(f"{s}\n" for s in scores))

    def test_round_trip(self, tmp_path, rng):
        masks = [(rng.random((6, 7)) > 0.5).astype(np.float64) for _ in range(3)]
        self._write(tmp_path / "m", masks, [0.9, 0.5, 0.2])
        got = load_mask_directory(tmp_path / "m")
        assert len(got) == 3
        assert (got.masks == np.stack(masks)).all()
        assert (got.scores == [0.9, 0.5, 0.2]).all()

    def test_sorted_filename_pairing(self, tmp_path):
        # files written out of order still pair with score lines by sort order
        d = tmp_path / "m"
        d.mkdir()
        Image.fromarray(np.full((2, 2), 255, np.uint8), "L").save(d / "b.png")
        Image.fromarray(np.zeros((2, 2), np.uint8), "L").save(d / "a.png")
        (d / "scores.txt").write_text("0.1\n0.9\n")
        got = load_mask_directory(d)
        assert got.scores[0] == 0.1 and (got.masks[0] == 0).all()   # a.png
        assert got.scores[1] == 0.9 and (got.masks[1] == 1).all()   # b.png

    def test_missing_scores_file(self, tmp_path):
        d = tmp_path / "m"
        d.mkdir()
        Image.fromarray(np.zeros((2, 2), np.uint8), "L").save(d / "a.png")
        with pytest.raises(FileNotFoundError, match="scores.txt"):
            load_mask_directory(d)

    def test_count_mismatch(self, tmp_path, rng):
        self._write(tmp_path / "m", [np.ones((2, 2))], [0.5, 0.7])
        with pytest.raises(ValueError, match="2 scores for 1 mask"):
            load_mask_directory(tmp_path / "m")

    def test_no_masks(self, tmp_path):
        d = tmp_path / "empty"
        d.mkdir()
        (d / "scores.txt").write_text("")
        with pytest.raises(ValueError, match="no mask PNGs"):
            load_mask_directory(d)

    def test_shape_disagreement(self, tmp_path):
        d = tmp_path / "m"
        d.mkdir()
        Image.fromarray(np.zeros((2, 2), np.uint8), "L").save(d / "a.png")
        Image.fromarray(np.zeros((3, 2), np.uint8), "L").save(d / "b.png")
        (d / "scores.txt").write_text("0.5\n0.5\n")
        with pytest.raises(ValueError, match="disagree on shape"):
            load_mask_directory(d)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="not found"):
            load_mask_directory(tmp_path / "nope")


class TestResampling:
    def test_identity_returns_same_map(self):
        sal = SaliencyMap(np.full((4, 5), 0.5))
        assert resize_saliency(sal, 4, 5) is sal

    def test_bilinear_stays_in_unit_range(self, rng):
        sal = SaliencyMap(rng.random((5, 6)))
        out = resize_saliency(sal, 17, 13)
        assert out.data.min() >= 0.0 and out.data.max() <= 1.0

    def test_nearest_keeps_binary(self, rng):
        sal = SaliencyMap((rng.random((6, 6)) > 0.5).astype(np.float64))
        out = resize_saliency(sal, 13, 11, nearest=True)
        assert set(np.unique(out.data)) <= {0.0, 1.0}

    def test_load_saliency_resizes_via_provider_flag(self, rng):
        arr = (rng.random((6, 6)) > 0.5).astype(np.float64)
        provider = ArraySaliency(arr)
        out = load_saliency(provider, "any", 9, 9)
        provider.nearest = True
        out_n = load_saliency(provider, "any", 9, 9)
        assert set(np.unique(out_n.data)) <= {0.0, 1.0}
        assert out.data.shape == out_n.data.shape == (9, 9)


class TestProviders:
    def test_constant_fills_target_exactly(self):
        out = load_saliency(ConstantSaliency(0.3), None, 7, 9)
        assert out.data.shape == (7, 9)
        assert (out.data == 0.3).all()

    def test_constant_validates_range(self):
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            ConstantSaliency(1.2)

    def test_file_provider(self, tmp_path, rng):
        arr = rng.random((5, 5))
        tensor_write(arr, tmp_path / "sal.cdiy")
        provider = FileSaliency(tmp_path / "sal.cdiy")
        out = load_saliency(provider, "whatever", 5, 5)
        assert np.allclose(out.data, arr.astype(np.float32).astype(np.float64))

    def test_directory_provider_lookup_and_miss(self, tmp_path, rng):
        d = tmp_path / "maps"
        d.mkdir()
        Image.fromarray(np.full((4, 4), 255, np.uint8), "L").save(d / "img1.png")
        tensor_write(rng.random((4, 4)), d / "img2.cdiy")
        provider = DirectorySaliency(d)
        assert (provider.raw_map("img1").data == 1.0).all()
        assert provider.raw_map("img2").data.shape == (4, 4)
        with pytest.raises(FileNotFoundError, match="'img3'"):
            provider.raw_map("img3")
        with pytest.raises(ValueError, match="image key"):
            provider.raw_map()

    def test_manifest_provider(self, tmp_path, rng):
        tensor_write(rng.random((3, 3)), tmp_path / "m0.cdiy")
        (tmp_path / "maps.json").write_text('{"maps": {"img1": "m0.cdiy"}}')
        provider = ManifestSaliency(tmp_path / "maps.json")
        assert provider.raw_map("img1").data.shape == (3, 3)
        with pytest.raises(KeyError, match="'imgX'"):
            provider.raw_map("imgX")

    def test_source_string_parsing(self, tmp_path, rng):
        assert isinstance(make_saliency_provider("constant:0.25"), ConstantSaliency)
        assert make_saliency_provider("constant:0.25").value == 0.25
        stub = make_saliency_provider("stub")
        assert isinstance(stub, ConstantSaliency) and stub.value == 1.0

        tensor_write(rng.random((2, 2)), tmp_path / "a.cdiy")
        assert isinstance(make_saliency_provider(f"file:{tmp_path}/a.cdiy"), FileSaliency)
        assert isinstance(make_saliency_provider(str(tmp_path / "a.cdiy")), FileSaliency)
        assert isinstance(make_saliency_provider(str(tmp_path)), DirectorySaliency)
        assert isinstance(make_saliency_provider(f"dir:{tmp_path}"), DirectorySaliency)
        assert isinstance(
            make_saliency_provider(f"precomputed:{tmp_path}"), DirectorySaliency
        )
        assert isinstance(
            make_saliency_provider(f"precomputed:{tmp_path}/a.cdiy"), FileSaliency
        )
        near = make_saliency_provider(f"dir:{tmp_path}:nearest")
        assert near.nearest is True
        with pytest.raises(ValueError, match="unknown saliency source"):
            make_saliency_provider("bogus:thing")


class TestObjectnessWeights:
    def test_background_complement(self, rng):
        sal = SaliencyMap(rng.random((5, 6)))
        weights = objectness_weights(sal, 4)
        assert isinstance(weights, ScoreMap)
        assert weights.data.shape == (5, 6, 4)
        assert (weights.data[..., 0] == 1.0 - sal.data).all()
        for c in range(1, 4):
            assert (weights.data[..., c] == sal.data).all()

    def test_bg_plus_fg_is_exactly_one(self, rng):
        sal = SaliencyMap(rng.random((16, 16)))
        weights = objectness_weights(sal, 3)
        for c in range(1, 3):
            assert ((weights.data[..., 0] + weights.data[..., c]) == 1.0).all()

    def test_extremes(self):
        sal = SaliencyMap(np.array([[0.0, 1.0]]))
        weights = objectness_weights(sal, 2)
        assert (weights.data[0, 0] == [1.0, 0.0]).all()
        assert (weights.data[0, 1] == [0.0, 1.0]).all()

    def test_needs_background_channel(self):
        with pytest.raises(ValueError, match="background channel"):
            objectness_weights(SaliencyMap(np.zeros((2, 2))), 1)
