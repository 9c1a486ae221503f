"""U-Net with a densely connected encoder, Dice-loss training, mask inference.

The encoder stacks dense blocks (BN-ReLU-conv layers whose outputs are
concatenated) separated by halving transitions; the decoder upsamples with
transposed convolutions and concatenates the matching encoder features.
Desk-scale default is a [2,2,2,2] block layout; DENSE169_BLOCKS mirrors
the full 169-layer profile for GPU-scale runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import CheckpointError, TrainingError, ValidationError

DENSE169_BLOCKS = [6, 12, 32, 32]


@dataclass
class UNetConfig:
    blocks: list[int] = field(default_factory=lambda: [2, 2, 2, 2])
    growth_rate: int = 12
    stem_channels: int = 32
    decoder_channels: list[int] = field(default_factory=lambda: [256, 128, 64, 32])
    input_size: int = 256
    out_threshold: float = 0.5
    pretrained_encoder: str | None = None
    freeze_encoder: bool = False

    def validate(self) -> None:
        if len(self.decoder_channels) != len(self.blocks):
            raise ValidationError(
                "decoder_channels must have one entry per encoder stage "
                f"({len(self.decoder_channels)} vs {len(self.blocks)})"
            )
        if self.input_size % (2 ** len(self.blocks)) != 0:
            raise ValidationError(
                f"input_size {self.input_size} not divisible by 2^{len(self.blocks)}"
            )


class _DenseLayer(nn.Module):
    def __init__(self, in_ch: int, growth: int):
        super().__init__()
        self.norm = nn.BatchNorm2d(in_ch)
        self.conv = nn.Conv2d(in_ch, growth, 3, padding=1, bias=False)

    def forward(self, x):
        return torch.cat([x, self.conv(F.relu(self.norm(x)))], dim=1)


class _DenseBlock(nn.Sequential):
    def __init__(self, in_ch: int, n_layers: int, growth: int):
        layers = []
        ch = in_ch
        for _ in range(n_layers):
            layers.append(_DenseLayer(ch, growth))
            ch += growth
        super().__init__(*layers)
        self.out_channels = ch


class _Transition(nn.Module):
    """Halve resolution and compress channels between dense blocks."""

    def __init__(self, in_ch: int):
        super().__init__()
        self.out_channels = in_ch // 2
        self.norm = nn.BatchNorm2d(in_ch)
        self.conv = nn.Conv2d(in_ch, self.out_channels, 1, bias=False)

    def forward(self, x):
        return F.avg_pool2d(self.conv(F.relu(self.norm(x))), 2)


class DenseEncoder(nn.Module):
    def __init__(self, cfg: UNetConfig):
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv2d(1, cfg.stem_channels, 3, padding=1, bias=False),
            nn.BatchNorm2d(cfg.stem_channels),
            nn.ReLU(inplace=True),
        )
        stages = []
        ch = cfg.stem_channels
        self.skip_channels = [cfg.stem_channels]
        for i, n_layers in enumerate(cfg.blocks):
            block = _DenseBlock(ch, n_layers, cfg.growth_rate)
            ch = block.out_channels
            if i < len(cfg.blocks) - 1:
                stages.append(nn.Sequential(nn.MaxPool2d(2), block))
                self.skip_channels.append(ch)
            else:
                stages.append(nn.Sequential(nn.MaxPool2d(2), block))
        self.stages = nn.ModuleList(stages)
        self.out_channels = ch

    def forward(self, x):
        feats = [self.stem(x)]
        for stage in self.stages:
            feats.append(stage(feats[-1]))
        return feats  # [full-res stem, stage1, ..., bottleneck]


class _DecoderStage(nn.Module):
    def __init__(self, in_ch: int, skip_ch: int, out_ch: int):
        super().__init__()
        self.up = nn.ConvTranspose2d(in_ch, out_ch, 2, stride=2)
        self.conv = nn.Sequential(
            nn.Conv2d(out_ch + skip_ch, out_ch, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
        )

    def forward(self, x, skip):
        x = self.up(x)
        return self.conv(torch.cat([x, skip], dim=1))


class DenseUNet(nn.Module):
    def __init__(self, cfg: UNetConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.encoder = DenseEncoder(cfg)
        skips = self.encoder.skip_channels  # low→high resolution order reversed below
        in_ch = self.encoder.out_channels
        stages = []
        for out_ch, skip_ch in zip(cfg.decoder_channels, reversed(skips)):
            stages.append(_DecoderStage(in_ch, skip_ch, out_ch))
            in_ch = out_ch
        self.decoder = nn.ModuleList(stages)
        self.head = nn.Conv2d(in_ch, 1, 1)

    def forward(self, x):
        feats = self.encoder(x)
        y = feats[-1]
        for stage, skip in zip(self.decoder, reversed(feats[:-1])):
            y = stage(y, skip)
        return torch.sigmoid(self.head(y))


@dataclass
class SegModelBundle:
    model: DenseUNet
    config: UNetConfig
    history: list[dict] = field(default_factory=list)
    best_state: dict | None = None
    best_val_dsc: float = -1.0


def _fold_stem_weight(weight: torch.Tensor) -> torch.Tensor:
    """Collapse a 3-channel-input conv kernel to 1 channel by input-axis mean."""
    return weight.mean(dim=1, keepdim=True)


def load_encoder_weights(encoder: DenseEncoder, checkpoint_path: str | Path) -> None:
    """Load pretrained encoder parameters, mean-folding a 3-channel stem."""
    state = torch.load(checkpoint_path, map_location="cpu", weights_only=True)
    if "encoder" in state:
        state = state["encoder"]
    own = encoder.state_dict()
    for name, param in state.items():
        if name not in own:
            raise CheckpointError(f"unexpected encoder parameter: {name}")
        target = own[name]
        if param.shape != target.shape:
            if param.dim() == 4 and param.shape[1] == 3 and target.shape[1] == 1:
                param = _fold_stem_weight(param)
            if param.shape != target.shape:
                raise CheckpointError(
                    f"encoder checkpoint incompatible at {name}: "
                    f"{tuple(param.shape)} vs {tuple(target.shape)}"
                )
        own[name].copy_(param)
    encoder.load_state_dict(own)


def build_unet(config: UNetConfig) -> SegModelBundle:
    config.validate()
    model = DenseUNet(config)
    if config.pretrained_encoder:
        load_encoder_weights(model.encoder, config.pretrained_encoder)
    if config.freeze_encoder:
        for p in model.encoder.parameters():
            p.requires_grad_(False)
    return SegModelBundle(model=model, config=config)


def dice_loss(pred: torch.Tensor, target: torch.Tensor, epsilon: float = 1.0) -> torch.Tensor:
    """Soft Dice loss: 1 − (2·Σpt + ε)/(Σp + Σt + ε), summed over all pixels."""
    if pred.shape != target.shape:
        raise ValidationError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    pred = pred.reshape(-1)
    target = target.reshape(-1)
    inter = (pred * target).sum()
    return 1.0 - (2.0 * inter + epsilon) / (pred.sum() + target.sum() + epsilon)


@dataclass
class TrainConfig:
    epochs: int = 25
    batch: int = 32
    lr: float = 1e-4
    seed: int = 0
    dice_epsilon: float = 1.0

    def validate(self) -> None:
        if self.epochs < 0 or self.batch <= 0 or self.lr <= 0 or self.dice_epsilon <= 0:
            raise ValidationError(f"invalid training config: {self}")


def _to_batches(x: np.ndarray, y: np.ndarray, batch: int, order: np.ndarray):
    for start in range(0, len(order), batch):
        idx = order[start : start + batch]
        xb = torch.from_numpy(x[idx]).float().unsqueeze(1)
        yb = torch.from_numpy(y[idx]).float().unsqueeze(1)
        yield xb, yb


def train_segmenter(
    bundle: SegModelBundle,
    train_set: tuple[np.ndarray, np.ndarray],
    val_set: tuple[np.ndarray, np.ndarray],
    tc: TrainConfig,
) -> tuple[SegModelBundle, list[dict]]:
    """Adam/Dice training loop; history rows carry train_loss, val_loss, val_dsc.

    The parameter state with the best validation DSC is retained on the
    bundle alongside the final state. Deterministic for a fixed seed.
    """
    tc.validate()
    x_train, y_train = train_set
    x_val, y_val = val_set
    if len(x_train) == 0:
        raise TrainingError("training set is empty")
    torch.manual_seed(tc.seed)
    rng = np.random.default_rng(tc.seed)
    model = bundle.model
    opt = torch.optim.Adam((p for p in model.parameters() if p.requires_grad), lr=tc.lr)
    history: list[dict] = []
    for epoch in range(tc.epochs):
        model.train()
        losses = []
        order = rng.permutation(len(x_train))
        for xb, yb in _to_batches(x_train, y_train, tc.batch, order):
            opt.zero_grad()
            loss = dice_loss(model(xb), yb, tc.dice_epsilon)
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite training loss at epoch {epoch + 1}")
            loss.backward()
            opt.step()
            losses.append(loss.item())
        val_loss, val_dsc = _validate(model, x_val, y_val, tc, bundle.config.out_threshold)
        entry = {
            "train_loss": float(np.mean(losses)),
            "val_loss": val_loss,
            "val_dsc": val_dsc,
        }
        history.append(entry)
        if val_dsc > bundle.best_val_dsc:
            bundle.best_val_dsc = val_dsc
            bundle.best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    bundle.history.extend(history)
    return bundle, history


@torch.no_grad()
def _validate(model, x_val, y_val, tc: TrainConfig, threshold: float):
    from .metrics import dsc as dsc_metric

    if len(x_val) == 0:
        return float("nan"), float("nan")
    model.eval()
    losses, scores = [], []
    order = np.arange(len(x_val))
    for xb, yb in _to_batches(x_val, y_val, tc.batch, order):
        pred = model(xb)
        losses.append(float(dice_loss(pred, yb, tc.dice_epsilon)))
        binary = (pred >= threshold).numpy()
        for p, t in zip(binary[:, 0], yb.numpy()[:, 0]):
            scores.append(dsc_metric(p, t > 0.5))
    return float(np.mean(losses)), float(np.mean(scores))


@torch.no_grad()
def predict_mask(bundle: SegModelBundle, image: np.ndarray, threshold: float | None = None) -> np.ndarray:
    """Binary lesion mask for one preprocessed slice; may be entirely empty."""
    threshold = bundle.config.out_threshold if threshold is None else threshold
    arr = np.asarray(image, dtype=np.float32)
    size = bundle.config.input_size
    if arr.shape != (size, size):
        raise ValidationError(f"expected {size}×{size} input, got {arr.shape}")
    bundle.model.eval()
    prob = bundle.model(torch.from_numpy(arr)[None, None])[0, 0]
    return (prob >= threshold).numpy().astype(np.uint8)
