"""Procedural phantom slices with exact lesion ground truth.

Each scene is a smooth textured background with zero or more bright
elliptical lesions; the mask is the exact rasterized ellipse union used
to paint them. Scene geometry depends only on (seed, index), so rendering
the same seed under modality "A" and "B" yields a paired two-domain
dataset (the modalities differ by a monotone intensity curve and noise),
which is what the translation experiments consume.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .data import DatasetManifest, SliceSample, save_manifest, write_image, write_mask
from .errors import ValidationError

MODALITY_DOMAIN = {"A": "MR", "B": "CT"}


@dataclass
class PhantomParams:
    canvas_size: int = 256
    lesion_count_range: tuple[int, int] = (1, 3)
    lesion_axes_range: tuple[float, float] = (8.0, 28.0)
    background_texture_scale: float = 0.25
    noise_sigma: float = 0.01
    healthy_fraction: float = 0.1
    # Monotone intensity transfer curves (gamma exponents) for domains A/B.
    modality_curves: tuple[float, float] = (0.7, 1.6)

    def validate(self) -> None:
        lo, hi = self.lesion_count_range
        if lo > hi or hi < 1:
            raise ValidationError(f"lesion_count_range is empty: {self.lesion_count_range}")
        alo, ahi = self.lesion_axes_range
        if alo > ahi or alo <= 0:
            raise ValidationError(f"lesion_axes_range is empty: {self.lesion_axes_range}")
        if ahi >= self.canvas_size / 2:
            raise ValidationError("lesion axes must stay below canvas_size/2")
        if not 0.0 <= self.healthy_fraction <= 1.0:
            raise ValidationError("healthy_fraction must lie in [0, 1]")
        ga, gb = self.modality_curves
        if ga <= 0 or gb <= 0:
            raise ValidationError("modality curve exponents must be positive")


def _rasterize_ellipse(size: int, cy, cx, ay, ax, theta) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    dy, dx = yy - cy, xx - cx
    u = dy * np.cos(theta) + dx * np.sin(theta)
    v = -dy * np.sin(theta) + dx * np.cos(theta)
    return (u / ay) ** 2 + (v / ax) ** 2 <= 1.0


def render_scene(
    params: PhantomParams, seed: int, index: int, modality: str = "A"
) -> tuple[np.ndarray, np.ndarray]:
    """Render scene ``index`` of a seeded phantom series: (image, mask).

    Geometry is drawn from a stream keyed by (seed, index) only, so both
    modalities of the same scene share lesions and background structure.
    """
    if modality not in MODALITY_DOMAIN:
        raise ValidationError(f"modality must be 'A' or 'B', got {modality!r}")
    params.validate()
    size = params.canvas_size
    geo = np.random.default_rng([seed, index])

    # Smooth background: skull-ish disc plus low-frequency texture.
    yy, xx = np.mgrid[0:size, 0:size]
    r = np.hypot(yy - size / 2, xx - size / 2) / (size / 2)
    brain = (r < 0.85).astype(np.float64)
    texture = gaussian_filter(geo.standard_normal((size, size)), sigma=size / 16)
    texture = texture / (np.abs(texture).max() + 1e-12)
    image = brain * (0.45 + params.background_texture_scale * texture)

    mask = np.zeros((size, size), dtype=bool)
    healthy = geo.random() < params.healthy_fraction
    if not healthy:
        lo, hi = params.lesion_count_range
        count = int(geo.integers(lo, hi + 1))
        margin = params.lesion_axes_range[1] + 2
        for _ in range(count):
            cy = geo.uniform(margin, size - margin)
            cx = geo.uniform(margin, size - margin)
            ay = geo.uniform(*params.lesion_axes_range)
            ax = geo.uniform(*params.lesion_axes_range)
            theta = geo.uniform(0, np.pi)
            ellipse = _rasterize_ellipse(size, cy, cx, ay, ax, theta)
            offset = geo.uniform(0.3, 0.45)
            image = np.where(ellipse, image + offset, image)
            mask |= ellipse

    gamma = params.modality_curves[0 if modality == "A" else 1]
    image = np.clip(image, 0.0, 1.0) ** gamma
    noise_rng = np.random.default_rng([seed, index, ord(modality)])
    image = image + params.noise_sigma * noise_rng.standard_normal((size, size))
    return np.clip(image, 0.0, 1.0), mask.astype(np.uint8)


def generate_phantom_dataset(
    n: int,
    params: PhantomParams,
    seed: int,
    out_dir: Path,
    modality: str = "A",
    source: str = "phantom",
) -> DatasetManifest:
    """Write n phantom samples plus a manifest under out_dir; deterministic per seed."""
    if n < 0:
        raise ValidationError(f"sample count must be >= 0, got {n}")
    params.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = []
    for i in range(n):
        image, mask = render_scene(params, seed, i, modality)
        sid = f"{source}_{modality}_{i:05d}"
        image_path = out_dir / f"{sid}.png"
        mask_path = out_dir / f"{sid}_mask.png"
        write_image(image_path, image)
        write_mask(mask_path, mask)
        samples.append(
            SliceSample(
                id=sid,
                image_path=image_path,
                mask_path=mask_path,
                domain=MODALITY_DOMAIN[modality],
                source=source,
            )
        )
    manifest = DatasetManifest(samples)
    save_manifest(manifest, out_dir / "manifest.json")
    return manifest
