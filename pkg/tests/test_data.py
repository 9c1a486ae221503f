import json

import numpy as np
import pytest

from dfseg.data import (
    DatasetManifest,
    load_manifest,
    merge_with_deepfakes,
    preprocess_manifest,
    preprocess_mask,
    preprocess_slice,
    save_manifest,
    split_dataset,
)
from dfseg.errors import LoadError, ValidationError
from tests.conftest import make_manifest


class TestManifestIO:
    def test_empty_manifest(self, tmp_path):
        path = tmp_path / "empty.json"
        save_manifest(DatasetManifest([]), path)
        loaded = load_manifest(path)
        assert len(loaded) == 0
        assert loaded.counts == {}

    def test_round_trip_preserves_order_and_ids(self, tmp_path):
        manifest = make_manifest(tmp_path, n=5)
        path = tmp_path / "manifest.json"
        save_manifest(manifest, path)
        loaded = load_manifest(path)
        assert loaded.ids() == manifest.ids()
        assert [s.domain for s in loaded.samples] == [s.domain for s in manifest.samples]

    def test_missing_image_file_names_path(self, tmp_path):
        manifest = make_manifest(tmp_path, n=2)
        missing = manifest.samples[1].image_path
        missing.unlink()
        path = tmp_path / "manifest.json"
        save_manifest(manifest, path)
        with pytest.raises(LoadError, match=missing.name):
            load_manifest(path)

    def test_duplicate_id_rejected(self, tmp_path):
        manifest = make_manifest(tmp_path, n=2)
        manifest.samples[1].id = manifest.samples[0].id
        path = tmp_path / "manifest.json"
        save_manifest(manifest, path)
        with pytest.raises(ValidationError, match="duplicate"):
            load_manifest(path)

    def test_schema_violation_names_field(self, tmp_path):
        doc = {"version": 1, "samples": [{"id": "a", "domain": "MR", "source": "x"}]}
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match=r"samples\[0\].image_path"):
            load_manifest(path)

    def test_bad_domain_rejected(self, tmp_path):
        doc = {
            "version": 1,
            "samples": [
                {"id": "a", "image_path": "a.png", "domain": "PET", "source": "x"}
            ],
        }
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match="domain"):
            load_manifest(path)

    def test_counts_tally(self, tmp_path):
        manifest = make_manifest(tmp_path, n=4)
        assert manifest.counts == {"testset": 4}


class TestPreprocess:
    def test_resize_and_normalize(self):
        rng = np.random.default_rng(0)
        raw = rng.integers(0, 256, size=(512, 512)).astype(np.float64)
        out = preprocess_slice(raw)
        assert out.shape == (256, 256)
        assert out.min() == 0.0
        assert out.max() == 1.0

    def test_constant_input_maps_to_zeros(self):
        out = preprocess_slice(np.full((64, 64), 7.0))
        assert out.shape == (256, 256)
        assert (out == 0.0).all()

    def test_unit_mode_minmax(self):
        raw = np.array([[10.0, 20.0], [30.0, 40.0]])
        out = preprocess_slice(raw, size=None)
        expected = np.array([[0.0, 1 / 3], [2 / 3, 1.0]])
        np.testing.assert_allclose(out, expected)

    def test_mask_stays_binary(self):
        mask = np.zeros((100, 100))
        mask[20:60, 20:60] = 1
        out = preprocess_mask(mask, size=256)
        assert set(np.unique(out)) <= {0, 1}
        assert out.shape == (256, 256)

    def test_preprocess_manifest_invariants(self, tmp_path):
        manifest = make_manifest(tmp_path, n=3)
        out = preprocess_manifest(manifest, tmp_path / "pp", size=64)
        for s in out.samples:
            img = s.load_image()
            assert img.shape == (64, 64)
            assert img.min() >= 0.0 and img.max() <= 1.0


class TestSplit:
    def test_table_sized_split(self, tmp_path):
        # floor(0.8 * 5290) without materializing 5290 files: check arithmetic path
        manifest = make_manifest(tmp_path, n=10)
        split = split_dataset(manifest, 0.8, seed=1)
        labels = [s.split for s in split.samples]
        assert labels.count("train") == 8
        assert labels.count("val") == 2

    def test_split_counts_match_ratio_formula(self, tmp_path):
        import math

        assert math.floor(0.8 * 5290) == 4232
        assert 5290 - 4232 == 1058

    def test_partition_and_determinism(self, tmp_path):
        manifest = make_manifest(tmp_path, n=9)
        s1 = split_dataset(manifest, 0.5, seed=42)
        s2 = split_dataset(manifest, 0.5, seed=42)
        assert [x.split for x in s1.samples] == [x.split for x in s2.samples]
        assert all(s.split in ("train", "val") for s in s1.samples)

    def test_empty_dataset_errors(self):
        with pytest.raises(ValidationError, match="empty"):
            split_dataset(DatasetManifest([]), 0.8, seed=0)

    def test_bad_ratio_errors(self, tmp_path):
        manifest = make_manifest(tmp_path, n=2)
        with pytest.raises(ValidationError):
            split_dataset(manifest, 1.0, seed=0)


class TestMerge:
    def test_counts_add_up(self, tmp_path):
        real = make_manifest(tmp_path / "real", n=4, prefix="r")
        fake = make_manifest(tmp_path / "fake", n=2, prefix="FAKE_f", domain="FAKE")
        (tmp_path / "real").mkdir(exist_ok=True)
        merged = merge_with_deepfakes(real, fake)
        assert len(merged) == 6

    def test_identity_on_empty_fakes(self, tmp_path):
        real = make_manifest(tmp_path, n=3)
        merged = merge_with_deepfakes(real, DatasetManifest([]))
        assert merged.ids() == real.ids()

    def test_fakes_never_in_validation(self, tmp_path):
        real = make_manifest(tmp_path / "real", n=6, prefix="r")
        fake = make_manifest(tmp_path / "fake", n=3, prefix="FAKE_f", domain="FAKE")
        real = split_dataset(real, 0.5, seed=0)
        merged = merge_with_deepfakes(real, fake)
        val = merged.subset("val")
        assert all(s.domain != "FAKE" for s in val.samples)
        assert all(s.split == "train" for s in merged.samples if s.domain == "FAKE")

    def test_order_preserved_fakes_appended(self, tmp_path):
        real = make_manifest(tmp_path / "real", n=4, prefix="r")
        fake = make_manifest(tmp_path / "fake", n=2, prefix="FAKE_f", domain="FAKE")
        merged = merge_with_deepfakes(real, fake)
        assert merged.ids()[: len(real)] == real.ids()

    def test_id_collision_rejected(self, tmp_path):
        real = make_manifest(tmp_path / "real", n=2, prefix="r")
        fake = make_manifest(tmp_path / "fake", n=2, prefix="r", domain="FAKE")
        with pytest.raises(ValidationError, match="collides"):
            merge_with_deepfakes(real, fake)
