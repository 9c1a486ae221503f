"""Bulk slice translation into a deepfake training-set manifest."""

from __future__ import annotations

import csv
import shutil
from pathlib import Path

from .cyclegan import CycleGANBundle, translate
from .data import (
    DatasetManifest,
    SliceSample,
    preprocess_slice,
    save_manifest,
    write_image,
)
from .errors import TrainingError
from .fidelity import fidelity_metrics


def generate_deepfake_set(
    bundle: CycleGANBundle,
    source_manifest: DatasetManifest,
    direction: str,
    out_dir: Path,
    fidelity_floor: float | None = None,
    source_tag: str = "deepfake",
) -> tuple[DatasetManifest, list[str]]:
    """Translate every source slice, score it, and emit a FAKE-domain manifest.

    Masks are inherited unchanged from the source slices (translation is
    geometry-preserving). When ``fidelity_floor`` is set, translations
    whose SSIM to their source falls below it are dropped. Per-sample I/O
    failures are collected and returned, not raised.

    Returns (manifest, failures); a fidelity CSV (id, mse, ssim) is
    written next to the manifest.
    """
    if bundle.trained_epochs == 0:
        raise TrainingError("refusing to generate deepfakes from an untrained bundle")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    size = bundle.config.image_size
    samples: list[SliceSample] = []
    fidelity_rows = []
    failures: list[str] = []
    for src in source_manifest.samples:
        fake_id = f"FAKE_{src.id}"
        try:
            image = preprocess_slice(src.load_image(), size)
            fake = translate(bundle, image, direction)
            scores = fidelity_metrics(image, fake)
            if fidelity_floor is not None and scores["ssim"] < fidelity_floor:
                continue
            image_path = out_dir / f"{fake_id}.png"
            write_image(image_path, fake)
            mask_path = None
            if src.mask_path is not None:
                mask_path = out_dir / f"{fake_id}_mask.png"
                shutil.copyfile(src.mask_path, mask_path)
        except Exception as exc:  # per-sample failure: record and continue
            failures.append(f"{src.id}: {exc}")
            continue
        fidelity_rows.append((fake_id, scores["mse"], scores["ssim"]))
        samples.append(
            SliceSample(
                id=fake_id,
                image_path=image_path,
                mask_path=mask_path,
                domain="FAKE",
                source=source_tag,
                split="train",
            )
        )
    manifest = DatasetManifest(samples)
    save_manifest(manifest, out_dir / "manifest.json")
    with open(out_dir / "fidelity.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "mse", "ssim"])
        writer.writerows(fidelity_rows)
    return manifest, failures
