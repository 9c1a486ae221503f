"""Save/load whole model bundles through the shared checkpoint format."""

from __future__ import annotations

from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .cyclegan import CycleGANBundle, TranslatorConfig, build_cyclegan
from .errors import CheckpointError
from .segmenter import SegModelBundle, UNetConfig, build_unet


def save_cyclegan(bundle: CycleGANBundle, path: Path, seed: int = 0) -> Path:
    return save_checkpoint(
        path,
        bundle.state_dict(),
        bundle.config,
        seed=seed,
        trained_epochs=bundle.trained_epochs,
    )


def load_cyclegan(path: Path) -> CycleGANBundle:
    """Rebuild a translator bundle from a checkpoint and its sidecar config."""
    _, meta = load_checkpoint(path)
    if "config" not in meta:
        raise CheckpointError(f"checkpoint sidecar missing config: {path}")
    config = TranslatorConfig(**meta["config"])
    return build_cyclegan(config, pretrained=str(path))


def save_segmenter(bundle: SegModelBundle, path: Path, seed: int = 0) -> Path:
    return save_checkpoint(
        path,
        {"model": bundle.model.state_dict()},
        bundle.config,
        seed=seed,
        trained_epochs=len(bundle.history),
    )


def load_segmenter(path: Path) -> SegModelBundle:
    state, meta = load_checkpoint(path)
    if "config" not in meta:
        raise CheckpointError(f"checkpoint sidecar missing config: {path}")
    config = UNetConfig(**meta["config"])
    bundle = build_unet(config)
    bundle.model.load_state_dict(state["networks"]["model"])
    return bundle
