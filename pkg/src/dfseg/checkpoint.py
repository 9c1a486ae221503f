"""Checkpoint persistence: torch parameter file + JSON sidecar.

The sidecar records the config, seed, trained epoch count, and a SHA-256
of the parameter file so a run can verify it loaded exactly what it saved.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

import torch

from .errors import LoadError


def _content_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def save_checkpoint(path: Path, networks: dict, config, *, seed: int = 0, trained_epochs: int = 0) -> Path:
    """Write parameters to ``path`` and metadata to ``path + '.json'``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"networks": networks, "trained_epochs": trained_epochs}, path)
    sidecar = {
        "config": dataclasses.asdict(config),
        "seed": seed,
        "trained_epochs": trained_epochs,
        "sha256": _content_hash(path),
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")
    return path


def load_checkpoint(path: Path) -> tuple[dict, dict]:
    """Return (networks state, sidecar metadata); verifies the content hash."""
    path = Path(path)
    if not path.exists():
        raise LoadError(f"checkpoint not found: {path}")
    sidecar_path = Path(str(path) + ".json")
    meta = {}
    if sidecar_path.exists():
        meta = json.loads(sidecar_path.read_text())
        if meta.get("sha256") and meta["sha256"] != _content_hash(path):
            raise LoadError(f"checkpoint content hash mismatch: {path}")
    state = torch.load(path, map_location="cpu", weights_only=True)
    return state, meta
