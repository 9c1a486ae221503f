"""Dataset ingestion: slice samples, JSON manifests, preprocessing, split, merge.

A manifest stores file references (paths relative to the manifest file),
never pixels. Images are single-channel 8/16-bit PNG or PGM; masks are
PNG with values {0, 255}, 255 marking the lesion.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import LoadError, ValidationError

DOMAINS = ("MR", "CT", "FAKE")
SPLITS = ("train", "val")

MANIFEST_VERSION = 1
TARGET_SIZE = 256


@dataclass
class SliceSample:
    """One 2D grayscale slice with optional binary lesion mask."""

    id: str
    image_path: Path
    mask_path: Path | None
    domain: str
    source: str
    split: str | None = None

    def load_image(self) -> np.ndarray:
        return read_image(self.image_path)

    def load_mask(self) -> np.ndarray | None:
        if self.mask_path is None:
            return None
        return read_mask(self.mask_path)


@dataclass
class DatasetManifest:
    samples: list[SliceSample] = field(default_factory=list)
    version: int = MANIFEST_VERSION

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def counts(self) -> dict[str, int]:
        """Per-source tally of samples."""
        tally: dict[str, int] = {}
        for s in self.samples:
            tally[s.source] = tally.get(s.source, 0) + 1
        return tally

    def subset(self, split: str) -> "DatasetManifest":
        return DatasetManifest([s for s in self.samples if s.split == split], self.version)

    def ids(self) -> list[str]:
        return [s.id for s in self.samples]


def read_image(path: Path) -> np.ndarray:
    """Load a single-channel image file as float64 in [0, 1]."""
    path = Path(path)
    if not path.exists():
        raise LoadError(f"image file not found: {path}")
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim == 3:
        arr = arr[:, :, 0]
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    if arr.dtype in (np.uint16, np.int32):
        return arr.astype(np.float64) / 65535.0
    return arr.astype(np.float64)


def write_image(path: Path, image: np.ndarray) -> None:
    """Save intensities in [0, 1] as a 16-bit grayscale PNG."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    Image.fromarray((arr * 65535.0).round().astype(np.uint16)).save(path)


def read_mask(path: Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise LoadError(f"mask file not found: {path}")
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim == 3:
        arr = arr[:, :, 0]
    return (arr >= 128).astype(np.uint8)


def write_mask(path: Path, mask: np.ndarray) -> None:
    arr = (np.asarray(mask) > 0).astype(np.uint8) * 255
    Image.fromarray(arr).save(path)


def _sample_to_record(sample: SliceSample, root: Path) -> dict:
    def rel(p: Path | None):
        if p is None:
            return None
        try:
            return str(Path(p).relative_to(root))
        except ValueError:
            return str(p)

    return {
        "id": sample.id,
        "image_path": rel(sample.image_path),
        "mask_path": rel(sample.mask_path),
        "domain": sample.domain,
        "source": sample.source,
        "split": sample.split,
    }


def _record_to_sample(rec: dict, root: Path, index: int) -> SliceSample:
    for key in ("id", "image_path", "domain", "source"):
        if rec.get(key) is None:
            raise ValidationError(f"samples[{index}].{key}: missing or null")
    if rec["domain"] not in DOMAINS:
        raise ValidationError(f"samples[{index}].domain: {rec['domain']!r} not in {DOMAINS}")
    split = rec.get("split")
    if split is not None and split not in SPLITS:
        raise ValidationError(f"samples[{index}].split: {split!r} not in {SPLITS}")
    mask_path = rec.get("mask_path")
    return SliceSample(
        id=str(rec["id"]),
        image_path=root / rec["image_path"],
        mask_path=root / mask_path if mask_path else None,
        domain=rec["domain"],
        source=str(rec["source"]),
        split=split,
    )


def save_manifest(manifest: DatasetManifest, path: Path) -> None:
    path = Path(path)
    root = path.parent.resolve()
    doc = {
        "version": manifest.version,
        "samples": [_sample_to_record(s, root) for s in manifest.samples],
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")


def load_manifest(path: Path) -> DatasetManifest:
    """Load and validate a manifest; every referenced file must exist."""
    path = Path(path)
    if not path.exists():
        raise LoadError(f"manifest file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"manifest is not valid JSON: {path}: {exc}") from exc
    if not isinstance(doc, dict) or "samples" not in doc:
        raise ValidationError(f"manifest missing 'samples' array: {path}")
    root = path.parent.resolve()
    samples = [_record_to_sample(rec, root, i) for i, rec in enumerate(doc["samples"])]
    seen: set[str] = set()
    for s in samples:
        if s.id in seen:
            raise ValidationError(f"duplicate sample id: {s.id}")
        seen.add(s.id)
        if not Path(s.image_path).exists():
            raise LoadError(f"referenced image missing: {s.image_path}")
        if s.mask_path is not None and not Path(s.mask_path).exists():
            raise LoadError(f"referenced mask missing: {s.mask_path}")
    return DatasetManifest(samples, int(doc.get("version", MANIFEST_VERSION)))


def _resize_bilinear(arr: np.ndarray, size: int) -> np.ndarray:
    im = Image.fromarray(arr.astype(np.float32), mode="F")
    return np.asarray(im.resize((size, size), Image.BILINEAR), dtype=np.float64)


def _resize_nearest(arr: np.ndarray, size: int) -> np.ndarray:
    im = Image.fromarray(arr.astype(np.float32), mode="F")
    return np.asarray(im.resize((size, size), Image.NEAREST), dtype=np.float64)


def preprocess_slice(raw: np.ndarray, size: int | None = TARGET_SIZE) -> np.ndarray:
    """Bilinear-resize to size×size, then min-max normalize to [0, 1].

    ``size=None`` skips resizing (unit mode). A constant-intensity slice
    maps to all zeros.
    """
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim != 2 or arr.size < 1:
        raise ValidationError(f"expected a non-empty 2D slice, got shape {arr.shape}")
    if size is not None:
        arr = _resize_bilinear(arr, size)
    lo, hi = arr.min(), arr.max()
    if hi == lo:
        return np.zeros_like(arr)
    return (arr - lo) / (hi - lo)


def preprocess_mask(raw: np.ndarray, size: int | None = TARGET_SIZE) -> np.ndarray:
    """Nearest-neighbor resize and re-binarize at 0.5; stays in {0, 1}."""
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim != 2 or arr.size < 1:
        raise ValidationError(f"expected a non-empty 2D mask, got shape {arr.shape}")
    if size is not None:
        arr = _resize_nearest(arr, size)
    return (arr >= 0.5).astype(np.uint8)


def split_dataset(manifest: DatasetManifest, ratio: float, seed: int) -> DatasetManifest:
    """Assign train/val labels with a seeded uniform shuffle.

    floor(ratio*N) samples become train, the rest val. Sample order in the
    returned manifest is unchanged; only split labels are (re)assigned.
    """
    if not 0.0 < ratio < 1.0:
        raise ValidationError(f"split ratio must be in (0, 1), got {ratio}")
    n = len(manifest)
    if n == 0:
        raise ValidationError("cannot split an empty dataset")
    n_train = math.floor(ratio * n)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    train_idx = set(order[:n_train].tolist())
    samples = [
        replace(s, split="train" if i in train_idx else "val")
        for i, s in enumerate(manifest.samples)
    ]
    return DatasetManifest(samples, manifest.version)


def merge_with_deepfakes(real: DatasetManifest, fake: DatasetManifest) -> DatasetManifest:
    """Append fake samples to the real manifest, training split only.

    Synthetic samples never enter validation; they are retagged
    domain=FAKE and split=train regardless of incoming labels.
    """
    real_ids = set(real.ids())
    merged = list(real.samples)
    for s in fake.samples:
        if s.id in real_ids:
            raise ValidationError(f"fake sample id collides with real dataset: {s.id}")
        merged.append(replace(s, domain="FAKE", split="train"))
    return DatasetManifest(merged, real.version)


def preprocess_manifest(
    manifest: DatasetManifest, out_dir: Path, size: int = TARGET_SIZE
) -> DatasetManifest:
    """Materialize a preprocessed copy of every sample under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = []
    for s in manifest.samples:
        img = preprocess_slice(s.load_image(), size)
        image_path = out_dir / f"{s.id}.png"
        write_image(image_path, img)
        mask_path = None
        mask = s.load_mask()
        if mask is not None:
            mask_path = out_dir / f"{s.id}_mask.png"
            write_mask(mask_path, preprocess_mask(mask, size))
        samples.append(replace(s, image_path=image_path, mask_path=mask_path))
    return DatasetManifest(samples, manifest.version)


def load_arrays(
    manifest: DatasetManifest, size: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Stack images and masks into (N,H,W) float arrays; missing masks are zero."""
    images, masks = [], []
    for s in manifest.samples:
        img = s.load_image()
        mask = s.load_mask()
        if size is not None and img.shape != (size, size):
            img = preprocess_slice(img, size)
            mask = preprocess_mask(mask, size) if mask is not None else None
        images.append(img)
        masks.append(mask if mask is not None else np.zeros_like(img))
    if not images:
        raise ValidationError("manifest has no samples to load")
    return np.stack(images).astype(np.float32), np.stack(masks).astype(np.float32)
