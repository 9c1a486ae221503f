import numpy as np
import pytest
import torch

from dfseg.data import DatasetManifest, SliceSample, save_manifest, write_image, write_mask

torch.set_num_threads(4)


def make_manifest(tmp_path, n=3, with_masks=True, domain="MR", prefix="s", seed=0):
    """Write n small random slices (+masks) and a manifest; returns the manifest."""
    tmp_path.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n):
        sid = f"{prefix}{i:03d}"
        image_path = tmp_path / f"{sid}.png"
        write_image(image_path, rng.random((32, 32)))
        mask_path = None
        if with_masks:
            mask = np.zeros((32, 32), dtype=np.uint8)
            mask[8:16, 8:16] = 1
            mask_path = tmp_path / f"{sid}_mask.png"
            write_mask(mask_path, mask)
        samples.append(
            SliceSample(
                id=sid, image_path=image_path, mask_path=mask_path,
                domain=domain, source="testset",
            )
        )
    manifest = DatasetManifest(samples)
    save_manifest(manifest, tmp_path / "manifest.json")
    return manifest


@pytest.fixture
def small_manifest(tmp_path):
    return make_manifest(tmp_path)
