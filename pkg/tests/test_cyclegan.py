import numpy as np
import pytest
import torch

from dfseg.cyclegan import (
    TranslatorConfig,
    _load_folded,
    adversarial_loss,
    build_cyclegan,
    cycle_consistency_loss,
    train_translator,
    translate,
)
from dfseg.deepfakes import generate_deepfake_set
from dfseg.errors import CheckpointError, TrainingError, ValidationError
from dfseg.fidelity import fidelity_metrics, ssim
from dfseg.modelio import load_cyclegan, save_cyclegan
from tests.conftest import make_manifest

TINY = dict(image_size=32, base_channels=8, residual_blocks=1, disc_depth=2, epochs=1, batch=2)


class TestAdversarialLoss:
    def test_perfect_discriminator_is_zero(self):
        loss = adversarial_loss(torch.ones(4), torch.zeros(4), "discriminator")
        assert float(loss) == 0.0

    def test_fully_fooled_generator_is_zero(self):
        assert float(adversarial_loss(None, torch.ones(4), "generator")) == 0.0

    def test_halfway_fixture(self):
        half = torch.full((3,), 0.5)
        loss = adversarial_loss(half, half, "discriminator")
        assert float(loss) == pytest.approx(0.5)

    def test_non_negative(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            d_real = torch.from_numpy(rng.normal(size=8))
            d_fake = torch.from_numpy(rng.normal(size=8))
            assert float(adversarial_loss(d_real, d_fake, "discriminator")) >= 0.0
            assert float(adversarial_loss(None, d_fake, "generator")) >= 0.0

    def test_bad_side_rejected(self):
        with pytest.raises(ValidationError):
            adversarial_loss(torch.ones(2), torch.ones(2), "both")


class TestCycleLoss:
    def test_perfect_reconstruction_zero(self):
        x = torch.rand(2, 4, 4)
        y = torch.rand(2, 4, 4)
        assert float(cycle_consistency_loss(x, x, y, y)) == 0.0

    def test_constant_offset_fixture(self):
        x = torch.rand(3, 3)
        y = torch.rand(3, 3)
        assert float(cycle_consistency_loss(x, x + 0.5, y, y)) == pytest.approx(0.5)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(1)
        x = rng.random(16)
        x_rec = rng.random(16)
        perm = rng.permutation(16)
        a = float(cycle_consistency_loss(x, x_rec, x, x))
        b = float(cycle_consistency_loss(x[perm], x_rec[perm], x, x))
        assert a == pytest.approx(b)

    def test_linearity_in_residual_scale(self):
        rng = np.random.default_rng(2)
        x = rng.random((4, 4))
        r1 = rng.random((4, 4))
        base = float(cycle_consistency_loss(x, x + r1, x, x + r1))
        scaled = float(cycle_consistency_loss(x, x + 3.0 * r1, x, x + 3.0 * r1))
        assert scaled == pytest.approx(3.0 * base)

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            cycle_consistency_loss(torch.zeros(2, 2), torch.zeros(3, 3), torch.zeros(2), torch.zeros(2))


class TestBuildAndTranslate:
    def test_shape_contract(self):
        cfg = TranslatorConfig(image_size=64, base_channels=8, residual_blocks=1, disc_depth=2)
        bundle = build_cyclegan(cfg)
        x = np.random.default_rng(0).random((64, 64))
        y = translate(bundle, x, "AB")
        assert y.shape == (64, 64)
        assert y.min() >= 0.0 and y.max() <= 1.0

    def test_inference_deterministic(self):
        bundle = build_cyclegan(TranslatorConfig(**TINY))
        x = np.random.default_rng(1).random((32, 32))
        np.testing.assert_array_equal(translate(bundle, x, "BA"), translate(bundle, x, "BA"))

    def test_identity_initialization_oracle(self):
        cfg = TranslatorConfig(identity_init=True, **TINY)
        bundle = build_cyclegan(cfg)
        x = np.random.default_rng(2).random((32, 32))
        for direction in ("AB", "BA"):
            y = translate(bundle, x, direction)
            assert np.abs(y - x).max() < 1e-5

    def test_wrong_shape_rejected(self):
        bundle = build_cyclegan(TranslatorConfig(**TINY))
        with pytest.raises(ValidationError):
            translate(bundle, np.zeros((16, 16)), "AB")
        with pytest.raises(ValidationError):
            translate(bundle, np.zeros((32, 32)), "sideways")

    def test_invalid_config(self):
        with pytest.raises(ValidationError):
            TranslatorConfig(lambda_cyc=0.0).validate()
        with pytest.raises(ValidationError):
            TranslatorConfig(image_size=100, disc_depth=3).validate()


class TestCheckpoint:
    def test_round_trip_bit_identical(self, tmp_path):
        torch.manual_seed(0)
        cfg = TranslatorConfig(**TINY)
        bundle = build_cyclegan(cfg)
        x = np.random.default_rng(3).random((32, 32))
        before = translate(bundle, x, "AB")
        path = save_cyclegan(bundle, tmp_path / "gan.pt")
        loaded = load_cyclegan(path)
        after = translate(loaded, x, "AB")
        np.testing.assert_array_equal(before, after)
        for key, net in (("G", loaded.G), ("F", loaded.F)):
            for name, v in getattr(bundle, key).state_dict().items():
                torch.testing.assert_close(net.state_dict()[name], v, rtol=0, atol=0)

    def test_pretrained_equals_saved(self, tmp_path):
        torch.manual_seed(1)
        cfg = TranslatorConfig(**TINY)
        bundle = build_cyclegan(cfg)
        path = save_cyclegan(bundle, tmp_path / "gan.pt")
        rebuilt = build_cyclegan(cfg, pretrained=str(path))
        for name, v in bundle.G.state_dict().items():
            torch.testing.assert_close(rebuilt.G.state_dict()[name], v, rtol=0, atol=0)

    def test_three_channel_stem_folding(self):
        cfg = TranslatorConfig(**TINY)
        gen = build_cyclegan(cfg).G
        state = {k: v.clone() for k, v in gen.state_dict().items()}
        rgb = torch.randn(cfg.base_channels, 3, 7, 7)
        state["body.1.weight"] = rgb
        _load_folded(gen, state, "G.")
        torch.testing.assert_close(gen.state_dict()["body.1.weight"], rgb.mean(dim=1, keepdim=True))

    def test_shape_mismatch_names_parameter(self):
        cfg = TranslatorConfig(**TINY)
        gen = build_cyclegan(cfg).G
        state = {k: v.clone() for k, v in gen.state_dict().items()}
        state["body.1.weight"] = torch.randn(3, 9, 7, 7)
        with pytest.raises(CheckpointError, match="body.1.weight"):
            _load_folded(gen, state, "G.")


class TestTraining:
    def test_zero_epochs_identity(self):
        cfg = TranslatorConfig(**{**TINY, "epochs": 0})
        bundle = build_cyclegan(cfg)
        before = {k: v.clone() for k, v in bundle.G.state_dict().items()}
        x = np.random.default_rng(0).random((4, 32, 32)).astype(np.float32)
        bundle, history = train_translator(bundle, x, x, cfg)
        assert history == []
        for k, v in before.items():
            torch.testing.assert_close(bundle.G.state_dict()[k], v, rtol=0, atol=0)

    def test_history_contract(self):
        cfg = TranslatorConfig(**{**TINY, "epochs": 2})
        bundle = build_cyclegan(cfg)
        rng = np.random.default_rng(1)
        xa = rng.random((4, 32, 32)).astype(np.float32)
        xb = rng.random((4, 32, 32)).astype(np.float32)
        _, history = train_translator(bundle, xa, xb, cfg, seed=0)
        assert len(history) == 2
        for row in history:
            assert set(row) == {"adv_G", "adv_F", "adv_D_A", "adv_D_B", "cyc"}

    def test_empty_domain_errors(self):
        cfg = TranslatorConfig(**TINY)
        bundle = build_cyclegan(cfg)
        x = np.random.default_rng(0).random((4, 32, 32)).astype(np.float32)
        empty = np.empty((0, 32, 32), dtype=np.float32)
        with pytest.raises(TrainingError):
            train_translator(bundle, empty, x, cfg)

    def test_generator_gradient_matches_finite_differences(self):
        # 4×4 toy generator: autograd vs central differences on the full
        # generator objective (adversarial + weighted cycle).
        cfg = TranslatorConfig(
            image_size=4, base_channels=2, residual_blocks=1, n_downsample=1, disc_depth=1
        )
        torch.manual_seed(0)
        bundle = build_cyclegan(cfg)
        for net in (bundle.G, bundle.F, bundle.D_A, bundle.D_B):
            net.double().eval()
        rng = np.random.default_rng(0)
        real_a = torch.from_numpy(rng.uniform(-0.9, 0.9, (1, 1, 4, 4)))
        real_b = torch.from_numpy(rng.uniform(-0.9, 0.9, (1, 1, 4, 4)))

        def objective():
            fake_b = bundle.G(real_a)
            fake_a = bundle.F(real_b)
            cyc = cycle_consistency_loss(real_a, bundle.F(fake_b), real_b, bundle.G(fake_a))
            return (
                adversarial_loss(None, bundle.D_B(fake_b), "generator")
                + adversarial_loss(None, bundle.D_A(fake_a), "generator")
                + cfg.lambda_cyc * cyc
            )

        loss = objective()
        params = list(bundle.G.parameters()) + list(bundle.F.parameters())
        grads = torch.autograd.grad(loss, params)
        h = 1e-5
        checked = 0
        for p, g in zip(params, grads):
            flat = p.data.view(-1)
            for k in range(0, flat.numel(), max(1, flat.numel() // 2)):
                orig = flat[k].item()
                flat[k] = orig + h
                plus = objective().item()
                flat[k] = orig - h
                minus = objective().item()
                flat[k] = orig
                fd = (plus - minus) / (2 * h)
                analytic = g.view(-1)[k].item()
                # relative check, with an absolute floor for zero-gradient
                # parameters where central differences only see roundoff
                denom = max(abs(fd), abs(analytic))
                assert abs(fd - analytic) < 1e-6 or abs(fd - analytic) / denom < 1e-3, (
                    fd,
                    analytic,
                )
                checked += 1
        assert checked > 10


class TestFidelity:
    def test_identical_images(self):
        img = np.random.default_rng(0).random((32, 32))
        out = fidelity_metrics(img, img)
        assert out["mse"] == 0.0
        assert out["ssim"] == pytest.approx(1.0)

    def test_constant_offset_mse(self):
        img = np.random.default_rng(1).uniform(0.2, 0.8, (32, 32))
        out = fidelity_metrics(img, img + 0.1)
        assert out["mse"] == pytest.approx(0.01)

    def test_ssim_symmetric(self):
        rng = np.random.default_rng(2)
        a = rng.random((32, 32))
        b = rng.random((32, 32))
        assert abs(ssim(a, b) - ssim(b, a)) < 1e-9

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            fidelity_metrics(np.zeros((16, 16)), np.zeros((32, 32)))


def trained_tiny_bundle():
    cfg = TranslatorConfig(**TINY)
    torch.manual_seed(0)
    bundle = build_cyclegan(cfg)
    bundle.trained_epochs = 1  # marker; weights are fine for contract tests
    return bundle


class TestGenerateDeepfakes:
    def test_no_floor_keeps_all(self, tmp_path):
        src = make_manifest(tmp_path / "src", n=4)
        bundle = trained_tiny_bundle()
        fakes, failures = generate_deepfake_set(bundle, src, "AB", tmp_path / "out")
        assert len(fakes) == 4
        assert failures == []
        assert all(s.domain == "FAKE" for s in fakes.samples)
        assert all(s.split == "train" for s in fakes.samples)

    def test_impossible_floor_keeps_none(self, tmp_path):
        src = make_manifest(tmp_path / "src", n=3)
        bundle = trained_tiny_bundle()
        fakes, _ = generate_deepfake_set(bundle, src, "AB", tmp_path / "out", fidelity_floor=1.0 + 1e-9)
        assert len(fakes) == 0

    def test_mask_inheritance(self, tmp_path):
        with_masks = make_manifest(tmp_path / "m", n=2, with_masks=True)
        without = make_manifest(tmp_path / "n", n=2, with_masks=False, prefix="u")
        bundle = trained_tiny_bundle()
        f1, _ = generate_deepfake_set(bundle, with_masks, "AB", tmp_path / "o1")
        f2, _ = generate_deepfake_set(bundle, without, "AB", tmp_path / "o2")
        assert all(s.mask_path is not None for s in f1.samples)
        assert all(s.mask_path is None for s in f2.samples)
        for orig, fake in zip(with_masks.samples, f1.samples):
            np.testing.assert_array_equal(orig.load_mask(), fake.load_mask())

    def test_untrained_bundle_rejected(self, tmp_path):
        src = make_manifest(tmp_path / "src", n=1)
        bundle = build_cyclegan(TranslatorConfig(**TINY))
        with pytest.raises(TrainingError):
            generate_deepfake_set(bundle, src, "AB", tmp_path / "out")

    def test_fidelity_csv_written(self, tmp_path):
        src = make_manifest(tmp_path / "src", n=2)
        bundle = trained_tiny_bundle()
        generate_deepfake_set(bundle, src, "AB", tmp_path / "out")
        lines = (tmp_path / "out" / "fidelity.csv").read_text().strip().splitlines()
        assert lines[0] == "id,mse,ssim"
        assert len(lines) == 3
