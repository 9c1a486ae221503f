"""Command-line entry point.

Subcommands: phantom, translate, train, evaluate, compare, report.
Exit codes: 0 success, 1 validation/usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data as dk
from .cyclegan import TranslatorConfig, build_cyclegan, train_translator
from .deepfakes import generate_deepfake_set
from .errors import DfsegError, LoadError, ValidationError
from .harness import ExperimentConfig, ExperimentReport, render_report, run_comparison
from .modelio import load_segmenter, save_cyclegan, save_segmenter
from .phantom import PhantomParams, generate_phantom_dataset
from .segmenter import TrainConfig, UNetConfig, build_unet, train_segmenter


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; the CLI contract reserves 2 for
    # runtime failures, so usage problems exit 1 instead.
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="dfseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("phantom", help="synthesize a phantom dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--modality", choices=["A", "B"], default="A")
    p.add_argument("--healthy-fraction", type=float, default=0.1)

    p = sub.add_parser("translate", help="fine-tune the translator and generate deepfakes")
    p.add_argument("--domain-a", type=Path, required=True, help="manifest for domain A")
    p.add_argument("--domain-b", type=Path, required=True, help="manifest for domain B")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--image-size", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--direction", choices=["AB", "BA"], default="BA")
    p.add_argument("--fidelity-floor", type=float, default=None)
    p.add_argument("--pretrained", type=Path, default=None)

    p = sub.add_parser("train", help="train the segmenter on a manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--epochs", type=int, default=25)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--input-size", type=int, default=256)
    p.add_argument("--split-ratio", type=float, default=0.8)

    p = sub.add_parser("evaluate", help="evaluate a segmenter checkpoint against a manifest")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("compare", help="run the full with/without-deepfakes comparison")
    p.add_argument("--config", type=Path, required=True)

    p = sub.add_parser("report", help="re-render a saved experiment report")
    p.add_argument("--report", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--format", choices=["markdown", "csv"], default="markdown")
    return parser


def _cmd_phantom(args) -> int:
    params = PhantomParams(canvas_size=args.size, healthy_fraction=args.healthy_fraction)
    manifest = generate_phantom_dataset(args.n, params, args.seed, args.out, args.modality)
    print(f"wrote {len(manifest)} phantom samples to {args.out}")
    return 0


def _cmd_translate(args) -> int:
    cfg = TranslatorConfig(epochs=args.epochs, batch=args.batch, image_size=args.image_size)
    a = dk.load_manifest(args.domain_a)
    b = dk.load_manifest(args.domain_b)
    x_a, _ = dk.load_arrays(a, size=cfg.image_size)
    x_b, _ = dk.load_arrays(b, size=cfg.image_size)
    bundle = build_cyclegan(cfg, pretrained=str(args.pretrained) if args.pretrained else None)
    bundle, history = train_translator(bundle, x_a, x_b, cfg, seed=args.seed)
    save_cyclegan(bundle, args.out / "translator.pt", seed=args.seed)
    (args.out / "translator_history.json").write_text(json.dumps(history, indent=2) + "\n")
    source = b if args.direction == "BA" else a
    fakes, failures = generate_deepfake_set(
        bundle, source, args.direction, args.out / "deepfakes", args.fidelity_floor
    )
    print(f"generated {len(fakes)} deepfake slices ({len(failures)} failures)")
    for line in failures:
        print(f"  failed: {line}", file=sys.stderr)
    return 0


def _cmd_train(args) -> int:
    manifest = dk.load_manifest(args.manifest)
    manifest = dk.split_dataset(manifest, args.split_ratio, args.seed)
    ucfg = UNetConfig(input_size=args.input_size)
    tc = TrainConfig(epochs=args.epochs, batch=args.batch, lr=args.lr, seed=args.seed)
    train = dk.load_arrays(manifest.subset("train"), size=args.input_size)
    val = dk.load_arrays(manifest.subset("val"), size=args.input_size)
    bundle = build_unet(ucfg)
    bundle, history = train_segmenter(bundle, train, val, tc)
    args.out.mkdir(parents=True, exist_ok=True)
    save_segmenter(bundle, args.out / "segmenter.pt", seed=args.seed)
    _write_history_csv(args.out / "history.csv", history)
    final = history[-1] if history else {}
    print(f"trained {len(history)} epochs; final: {final}")
    return 0


def _write_history_csv(path: Path, history: list[dict]) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "val_dsc"])
        for i, row in enumerate(history, start=1):
            writer.writerow([i, row["train_loss"], row["val_loss"], row["val_dsc"]])


def _cmd_evaluate(args) -> int:
    from .metrics import aggregate, evaluate_pair
    from .segmenter import predict_mask

    bundle = load_segmenter(args.checkpoint)
    manifest = dk.load_manifest(args.manifest)
    size = bundle.config.input_size
    records = []
    for sample in manifest.samples:
        image = sample.load_image()
        if image.shape != (size, size):
            raise ValidationError(
                f"sample {sample.id} is {image.shape} but checkpoint expects "
                f"({size}, {size}); preprocess the manifest first"
            )
        mask = sample.load_mask()
        if mask is not None:
            gt = mask > 0
        else:  # healthy slice: empty ground truth
            gt = np.zeros(image.shape, dtype=bool)
        records.append(evaluate_pair(sample.id, gt, predict_mask(bundle, image)))
    args.out.mkdir(parents=True, exist_ok=True)
    import csv

    with open(args.out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "dsc", "jsc", "mad_px", "hd_px", "mad_norm", "hd_norm", "flag"])
        for r in records:
            writer.writerow([r.sample_id, r.dsc, r.jsc, r.mad_px, r.hd_px, r.mad_norm, r.hd_norm, r.flag])
    for row in aggregate(records):
        mean = "n/a" if row.mean is None else f"{row.mean:.4f}"
        std = "n/a" if row.std is None else f"{row.std:.4f}"
        print(f"{row.metric}: {mean} ± {std} (n={row.n}, excluded={row.excluded})")
    return 0


def _cmd_compare(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    report = run_comparison(cfg)
    print(f"comparison complete; report under {cfg.output_dir}")
    for label, block in report.runs.items():
        dsc_row = next(a for a in block.aggregates if a.metric == "dsc")
        print(f"  {label}: mean DSC {dsc_row.mean:.4f} over {dsc_row.n} validation slices")
    return 0


def _cmd_report(args) -> int:
    report = ExperimentReport.from_json(Path(args.report).read_text())
    path = render_report(report, args.format, args.out)
    print(f"wrote {path}")
    return 0


_COMMANDS = {
    "phantom": _cmd_phantom,
    "translate": _cmd_translate,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "compare": _cmd_compare,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ValidationError, LoadError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DfsegError as exc:
        cause = exc.__cause__
        if isinstance(cause, (ValidationError, LoadError)):
            print(f"error: {exc}", file=sys.stderr)
            return 1
        print(f"failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
