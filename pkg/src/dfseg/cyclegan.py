"""Unpaired image-to-image translation engine (CycleGAN style).

Two residual generators (G: A→B, F: B→A) and two patch discriminators,
trained with a least-squares adversarial objective plus an L1 cycle
consistency term. Images cross the API boundary in [0, 1]; internally the
networks work in [−1, 1].

Generators carry a global skip in tanh space: output = tanh(delta + atanh(x)).
Zero-initializing the delta head therefore yields an exact identity map,
which is used both as a training-friendly initialization and as a
correctness oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F_nn

from .errors import CheckpointError, TrainingError, ValidationError

ADVERSARIAL_VARIANTS = ("least_squares", "cross_entropy")


@dataclass
class TranslatorConfig:
    base_channels: int = 32
    residual_blocks: int = 4  # 9 for full-scale runs
    n_downsample: int = 2
    disc_depth: int = 3
    lambda_cyc: float = 10.0
    lambda_identity: float = 0.0  # identity-mapping loss, off by default
    adversarial_variant: str = "least_squares"
    lr: float = 2e-4
    epochs: int = 5
    batch: int = 4
    image_size: int = 256
    identity_init: bool = False

    def validate(self) -> None:
        if self.lambda_cyc <= 0:
            raise ValidationError(f"lambda_cyc must be > 0, got {self.lambda_cyc}")
        if self.image_size % (2**self.disc_depth) != 0:
            raise ValidationError(
                f"image_size {self.image_size} not divisible by 2^{self.disc_depth}"
            )
        if self.adversarial_variant not in ADVERSARIAL_VARIANTS:
            raise ValidationError(f"unknown adversarial variant {self.adversarial_variant!r}")


class _ResidualBlock(nn.Module):
    def __init__(self, ch: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(ch, ch, 3),
            nn.InstanceNorm2d(ch),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(ch, ch, 3),
            nn.InstanceNorm2d(ch),
        )

    def forward(self, x):
        return x + self.body(x)


_ATANH_CLIP = 1.0 - 1e-6


class ResnetGenerator(nn.Module):
    """Residual encoder-decoder emitting a tanh-space delta over the input."""

    def __init__(self, cfg: TranslatorConfig):
        super().__init__()
        ch = cfg.base_channels
        layers = [nn.ReflectionPad2d(3), nn.Conv2d(1, ch, 7), nn.InstanceNorm2d(ch), nn.ReLU(True)]
        for _ in range(cfg.n_downsample):
            layers += [
                nn.Conv2d(ch, ch * 2, 3, stride=2, padding=1),
                nn.InstanceNorm2d(ch * 2),
                nn.ReLU(True),
            ]
            ch *= 2
        for _ in range(cfg.residual_blocks):
            layers.append(_ResidualBlock(ch))
        for _ in range(cfg.n_downsample):
            layers += [
                nn.ConvTranspose2d(ch, ch // 2, 3, stride=2, padding=1, output_padding=1),
                nn.InstanceNorm2d(ch // 2),
                nn.ReLU(True),
            ]
            ch //= 2
        self.body = nn.Sequential(*layers)
        self.head = nn.Sequential(nn.ReflectionPad2d(3), nn.Conv2d(ch, 1, 7))

    def zero_init_head(self) -> None:
        conv = self.head[-1]
        nn.init.zeros_(conv.weight)
        nn.init.zeros_(conv.bias)

    def forward(self, x):
        # x in [-1, 1]; identity when the head emits zero.
        skip = torch.atanh(x.clamp(-_ATANH_CLIP, _ATANH_CLIP))
        return torch.tanh(self.head(self.body(x)) + skip)


class PatchDiscriminator(nn.Module):
    def __init__(self, cfg: TranslatorConfig):
        super().__init__()
        ch = cfg.base_channels
        layers = [nn.Conv2d(1, ch, 4, stride=2, padding=1), nn.LeakyReLU(0.2, True)]
        for _ in range(cfg.disc_depth - 1):
            layers += [
                nn.Conv2d(ch, ch * 2, 4, stride=2, padding=1),
                nn.InstanceNorm2d(ch * 2),
                nn.LeakyReLU(0.2, True),
            ]
            ch *= 2
        layers.append(nn.Conv2d(ch, 1, 4, padding=1))
        self.body = nn.Sequential(*layers)

    def forward(self, x):
        return self.body(x)


@dataclass
class CycleGANBundle:
    G: ResnetGenerator  # A→B
    F: ResnetGenerator  # B→A
    D_A: PatchDiscriminator
    D_B: PatchDiscriminator
    config: TranslatorConfig
    trained_epochs: int = 0

    def state_dict(self) -> dict:
        return {
            "G": self.G.state_dict(),
            "F": self.F.state_dict(),
            "D_A": self.D_A.state_dict(),
            "D_B": self.D_B.state_dict(),
        }


def _load_folded(module: nn.Module, state: dict, prefix: str) -> None:
    own = module.state_dict()
    for name, target in own.items():
        if name not in state:
            raise CheckpointError(f"checkpoint missing parameter {prefix}{name}")
        param = state[name]
        if param.shape != target.shape:
            # Fold a 3-channel natural-image stem/head to single channel.
            if param.dim() == 4 and param.shape[1] == 3 and target.shape[1] == 1:
                param = param.mean(dim=1, keepdim=True)
            if param.dim() >= 1 and param.shape[0] == 3 and target.shape[0] == 1:
                param = param.mean(dim=0, keepdim=True)
            if param.shape != target.shape:
                raise CheckpointError(
                    f"checkpoint incompatible at {prefix}{name}: "
                    f"{tuple(param.shape)} vs {tuple(target.shape)}"
                )
        own[name].copy_(param)
    module.load_state_dict(own)


def build_cyclegan(config: TranslatorConfig, pretrained: str | None = None) -> CycleGANBundle:
    """Fresh or checkpoint-initialized four-network bundle."""
    config.validate()
    bundle = CycleGANBundle(
        G=ResnetGenerator(config),
        F=ResnetGenerator(config),
        D_A=PatchDiscriminator(config),
        D_B=PatchDiscriminator(config),
        config=config,
    )
    if config.identity_init:
        bundle.G.zero_init_head()
        bundle.F.zero_init_head()
    if pretrained is not None:
        state = torch.load(pretrained, map_location="cpu", weights_only=True)
        nets = state["networks"] if "networks" in state else state
        for key, module in (("G", bundle.G), ("F", bundle.F), ("D_A", bundle.D_A), ("D_B", bundle.D_B)):
            if key in nets:
                _load_folded(module, nets[key], f"{key}.")
        bundle.trained_epochs = int(state.get("trained_epochs", 0))
    return bundle


def adversarial_loss(d_real, d_fake, side: str, variant: str = "least_squares") -> torch.Tensor:
    """GAN objective on discriminator outputs.

    Least-squares: discriminator side mean((d_real−1)²)+mean(d_fake²);
    generator side mean((d_fake−1)²). Cross-entropy uses BCE on logits.
    Pass d_real=None on the generator side.
    """
    if side not in ("discriminator", "generator"):
        raise ValidationError(f"side must be discriminator|generator, got {side!r}")
    if variant not in ADVERSARIAL_VARIANTS:
        raise ValidationError(f"unknown adversarial variant {variant!r}")
    d_fake = torch.as_tensor(d_fake, dtype=torch.float64 if not torch.is_tensor(d_fake) else None)
    if variant == "least_squares":
        if side == "generator":
            return ((d_fake - 1.0) ** 2).mean()
        d_real = torch.as_tensor(d_real, dtype=None if torch.is_tensor(d_real) else torch.float64)
        return ((d_real - 1.0) ** 2).mean() + (d_fake**2).mean()
    if side == "generator":
        return F_nn.binary_cross_entropy_with_logits(d_fake, torch.ones_like(d_fake))
    d_real = torch.as_tensor(d_real, dtype=None if torch.is_tensor(d_real) else torch.float64)
    return F_nn.binary_cross_entropy_with_logits(
        d_real, torch.ones_like(d_real)
    ) + F_nn.binary_cross_entropy_with_logits(d_fake, torch.zeros_like(d_fake))


def cycle_consistency_loss(x, x_rec, y, y_rec) -> torch.Tensor:
    """L1 reconstruction penalty mean|x_rec−x| + mean|y_rec−y| (unweighted)."""
    x = torch.as_tensor(x, dtype=None if torch.is_tensor(x) else torch.float64)
    x_rec = torch.as_tensor(x_rec, dtype=None if torch.is_tensor(x_rec) else torch.float64)
    y = torch.as_tensor(y, dtype=None if torch.is_tensor(y) else torch.float64)
    y_rec = torch.as_tensor(y_rec, dtype=None if torch.is_tensor(y_rec) else torch.float64)
    if x.shape != x_rec.shape or y.shape != y_rec.shape:
        raise ValidationError("cycle loss shape mismatch")
    return (x_rec - x).abs().mean() + (y_rec - y).abs().mean()


def _to_internal(batch: torch.Tensor) -> torch.Tensor:
    return batch * 2.0 - 1.0


def _to_external(batch: torch.Tensor) -> torch.Tensor:
    return ((batch + 1.0) / 2.0).clamp(0.0, 1.0)


def _as_image_stack(samples, image_size: int) -> np.ndarray:
    arr = np.asarray(samples, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1:] != (image_size, image_size):
        raise ValidationError(
            f"expected (N, {image_size}, {image_size}) images, got {arr.shape}"
        )
    return arr


HISTORY_KEYS = ("adv_G", "adv_F", "adv_D_A", "adv_D_B", "cyc")


def train_translator(
    bundle: CycleGANBundle,
    domain_a,
    domain_b,
    config: TranslatorConfig | None = None,
    seed: int = 0,
) -> tuple[CycleGANBundle, list[dict]]:
    """Alternating generator/discriminator updates over unpaired domains.

    History rows record per-epoch means of each loss component. The cycle
    entry is the unweighted L1 term; lambda_cyc scales it only inside the
    generator objective.
    """
    cfg = config or bundle.config
    cfg.validate()
    xs = _as_image_stack(domain_a, cfg.image_size)
    ys = _as_image_stack(domain_b, cfg.image_size)
    if len(xs) == 0 or len(ys) == 0:
        raise TrainingError("both domains must be non-empty")
    if cfg.epochs == 0:
        return bundle, []
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    G, F, D_A, D_B = bundle.G, bundle.F, bundle.D_A, bundle.D_B
    opt_g = torch.optim.Adam(list(G.parameters()) + list(F.parameters()), lr=cfg.lr, betas=(0.5, 0.999))
    opt_d = torch.optim.Adam(list(D_A.parameters()) + list(D_B.parameters()), lr=cfg.lr, betas=(0.5, 0.999))
    n = max(len(xs), len(ys))
    history: list[dict] = []
    for epoch in range(cfg.epochs):
        sums = dict.fromkeys(HISTORY_KEYS, 0.0)
        order_a = rng.permutation(len(xs))
        order_b = rng.permutation(len(ys))
        n_batches = 0
        for start in range(0, n, cfg.batch):
            ia = order_a[[i % len(xs) for i in range(start, min(start + cfg.batch, n))]]
            ib = order_b[[i % len(ys) for i in range(start, min(start + cfg.batch, n))]]
            real_a = _to_internal(torch.from_numpy(xs[ia]).unsqueeze(1))
            real_b = _to_internal(torch.from_numpy(ys[ib]).unsqueeze(1))

            # Generator step.
            opt_g.zero_grad()
            fake_b = G(real_a)
            fake_a = F(real_b)
            rec_a = F(fake_b)
            rec_b = G(fake_a)
            adv_g = adversarial_loss(None, D_B(fake_b), "generator", cfg.adversarial_variant)
            adv_f = adversarial_loss(None, D_A(fake_a), "generator", cfg.adversarial_variant)
            cyc = cycle_consistency_loss(real_a, rec_a, real_b, rec_b)
            loss_g = adv_g + adv_f + cfg.lambda_cyc * cyc
            if cfg.lambda_identity > 0:
                loss_g = loss_g + cfg.lambda_identity * (
                    (G(real_b) - real_b).abs().mean() + (F(real_a) - real_a).abs().mean()
                )
            if not torch.isfinite(loss_g):
                raise TrainingError(f"non-finite generator loss at epoch {epoch + 1}")
            loss_g.backward()
            opt_g.step()

            # Discriminator step.
            opt_d.zero_grad()
            adv_d_a = adversarial_loss(
                D_A(real_a), D_A(fake_a.detach()), "discriminator", cfg.adversarial_variant
            )
            adv_d_b = adversarial_loss(
                D_B(real_b), D_B(fake_b.detach()), "discriminator", cfg.adversarial_variant
            )
            loss_d = 0.5 * (adv_d_a + adv_d_b)
            if not torch.isfinite(loss_d):
                raise TrainingError(f"non-finite discriminator loss at epoch {epoch + 1}")
            loss_d.backward()
            opt_d.step()

            for key, value in zip(
                HISTORY_KEYS, (adv_g, adv_f, adv_d_a, adv_d_b, cyc)
            ):
                sums[key] += value.item()
            n_batches += 1
        history.append({k: v / n_batches for k, v in sums.items()})
        bundle.trained_epochs += 1
    return bundle, history


@torch.no_grad()
def translate(bundle: CycleGANBundle, image, direction: str) -> np.ndarray:
    """Map one slice across domains; 'AB' uses G, 'BA' uses F."""
    if direction not in ("AB", "BA"):
        raise ValidationError(f"direction must be 'AB' or 'BA', got {direction!r}")
    size = bundle.config.image_size
    arr = np.asarray(image, dtype=np.float32)
    if arr.shape != (size, size):
        raise ValidationError(f"expected {size}×{size} input, got {arr.shape}")
    net = bundle.G if direction == "AB" else bundle.F
    net.eval()
    x = _to_internal(torch.from_numpy(arr)[None, None])
    return _to_external(net(x))[0, 0].numpy().astype(np.float64)
