"""Experiment orchestration: the with/without-deepfakes comparison.

A single JSON config describes one reproducible experiment. The harness
trains the segmenter twice on the same seeds and validation subset, once
on real slices only (run "T") and once with deepfake slices appended to
the training split (run "T_DF"), then evaluates and aggregates both runs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch
from PIL import Image

from . import data as dk
from .cyclegan import TranslatorConfig, build_cyclegan, train_translator
from .deepfakes import generate_deepfake_set
from .errors import DfsegError, ValidationError
from .metrics import AggregateRow, aggregate, evaluate_pair, overlay
from .modelio import save_cyclegan, save_segmenter
from .phantom import PhantomParams, generate_phantom_dataset
from .segmenter import TrainConfig, UNetConfig, build_unet, predict_mask, train_segmenter

# Published Table-II reference values (mean, std) rendered in reports as a
# labeled reference block, never asserted as expected outputs.
PUBLISHED_REFERENCE = {
    "T": {"dsc": (0.53, 0.28), "jsc": (0.41, 0.26), "mad": (0.084, 0.088), "hd": (0.27, 0.08)},
    "T_DF": {"dsc": (0.59, 0.26), "jsc": (0.46, 0.25), "mad": (0.061, 0.056), "hd": (0.25, 0.05)},
}


@dataclass
class ExperimentConfig:
    output_dir: str
    seed: int = 0
    split_ratio: float = 0.8
    real_manifest: str | None = None
    fake_manifest: str | None = None
    phantom_n: int = 0
    phantom: PhantomParams | None = None
    translator: TranslatorConfig | None = None
    fidelity_floor: float | None = None
    unet: UNetConfig = field(default_factory=UNetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    overlay_count: int = 4

    @classmethod
    def from_json(cls, path: Path) -> "ExperimentConfig":
        doc = json.loads(Path(path).read_text())
        return cls.from_dict(doc)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if "output_dir" not in doc:
            raise ValidationError("experiment config requires output_dir")
        kwargs = dict(doc)
        if kwargs.get("phantom"):
            kwargs["phantom"] = PhantomParams(**_tupled(kwargs["phantom"]))
        if kwargs.get("translator"):
            kwargs["translator"] = TranslatorConfig(**kwargs["translator"])
        kwargs["unet"] = UNetConfig(**kwargs.get("unet") or {})
        kwargs["train"] = TrainConfig(**kwargs.get("train") or {})
        unknown = set(kwargs) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**kwargs)


def _tupled(params: dict) -> dict:
    out = dict(params)
    for key in ("lesion_count_range", "lesion_axes_range", "modality_curves"):
        if key in out and isinstance(out[key], list):
            out[key] = tuple(out[key])
    return out


@dataclass
class RunBlock:
    label: str
    tallies: dict
    n_train: int
    n_val: int
    history: list
    aggregates: list
    val_ids: list
    metrics_csv: str
    overlay_dir: str
    checkpoint: str
    config_hash: str


@dataclass
class ExperimentReport:
    seed: int
    config_hash: str
    runs: dict  # label -> RunBlock (T always present, T_DF optional)

    def to_json(self) -> str:
        doc = {
            "seed": self.seed,
            "config_hash": self.config_hash,
            "runs": {
                k: {**asdict(v), "aggregates": [asdict(a) for a in v.aggregates]}
                for k, v in self.runs.items()
            },
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        doc = json.loads(text)
        runs = {}
        for label, block in doc["runs"].items():
            block = dict(block)
            block["aggregates"] = [AggregateRow(**a) for a in block["aggregates"]]
            runs[label] = RunBlock(**block)
        return cls(seed=doc["seed"], config_hash=doc["config_hash"], runs=runs)


def _hash_dict(doc: dict) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest()[:16]


class _RunLock:
    """Single-writer lock on the experiment output directory."""

    def __init__(self, out_dir: Path):
        self.path = Path(out_dir) / ".lock"

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ValidationError(
                f"output directory is locked by another run: {self.path}"
            ) from None
        os.close(fd)
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)


def _stage(name: str):
    """Re-raise stage failures with the stage name attached."""

    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and isinstance(exc, Exception):
                kind = type(exc) if isinstance(exc, DfsegError) else DfsegError
                raise kind(f"stage '{name}' failed: {exc}") from exc
            return False

    return _Ctx()


def _evaluate_run(label, bundle, val_manifest, cfg, out_dir) -> RunBlock:
    size = cfg.unet.input_size
    x_val, y_val = dk.load_arrays(val_manifest, size=size)
    records = []
    overlay_dir = out_dir / "overlays" / label
    overlay_dir.mkdir(parents=True, exist_ok=True)
    for i, sample in enumerate(val_manifest.samples):
        pred = predict_mask(bundle, x_val[i])
        gt = y_val[i] > 0.5
        records.append(evaluate_pair(sample.id, gt, pred))
        if i < cfg.overlay_count:
            rgb = overlay(gt, pred, x_val[i])
            Image.fromarray(rgb).save(overlay_dir / f"{sample.id}.png")
    metrics_csv = out_dir / f"metrics_{label}.csv"
    with open(metrics_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "dsc", "jsc", "mad_px", "hd_px", "mad_norm", "hd_norm", "flag"])
        for r in records:
            writer.writerow(
                [r.sample_id, r.dsc, r.jsc, r.mad_px, r.hd_px, r.mad_norm, r.hd_norm, r.flag]
            )
    return records, metrics_csv


def _train_arm(label, cfg, train_manifest, val_manifest, out_dir) -> RunBlock:
    size = cfg.unet.input_size
    x_train, y_train = dk.load_arrays(train_manifest, size=size)
    x_val, y_val = dk.load_arrays(val_manifest, size=size)
    torch.manual_seed(cfg.train.seed)  # weight init must not depend on process history
    bundle = build_unet(cfg.unet)
    bundle, history = train_segmenter(bundle, (x_train, y_train), (x_val, y_val), cfg.train)
    ckpt = out_dir / "checkpoints" / f"segmenter_{label}.pt"
    save_segmenter(bundle, ckpt, seed=cfg.train.seed)
    records, metrics_csv = _evaluate_run(label, bundle, val_manifest, cfg, out_dir)
    arm_hash = _hash_dict({"unet": asdict(cfg.unet), "train": asdict(cfg.train), "seed": cfg.seed})
    return RunBlock(
        label=label,
        tallies=train_manifest.counts,
        n_train=len(train_manifest),
        n_val=len(val_manifest),
        history=history,
        aggregates=aggregate(records),
        val_ids=val_manifest.ids(),
        metrics_csv=str(metrics_csv),
        overlay_dir=str(out_dir / "overlays" / label),
        checkpoint=str(ckpt),
        config_hash=arm_hash,
    )


def run_comparison(cfg: ExperimentConfig) -> ExperimentReport:
    """Full pipeline: data → (optional translation) → two training arms → report."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with _RunLock(out_dir):
        with _stage("ingest"):
            if cfg.real_manifest:
                real = dk.load_manifest(cfg.real_manifest)
            elif cfg.phantom is not None and cfg.phantom_n > 0:
                real = generate_phantom_dataset(
                    cfg.phantom_n, cfg.phantom, cfg.seed, out_dir / "phantom_a", modality="A"
                )
            else:
                raise ValidationError("config needs real_manifest or phantom settings")

        with _stage("split"):
            real = dk.split_dataset(real, cfg.split_ratio, cfg.seed)
            dk.save_manifest(real, out_dir / "real_split.json")
            train_real = real.subset("train")
            val = real.subset("val")

        fake = None
        if cfg.fake_manifest:
            with _stage("load-fakes"):
                fake = dk.load_manifest(cfg.fake_manifest)
        elif cfg.translator is not None:
            with _stage("translate"):
                fake = _synthesize_fakes(cfg, train_real, out_dir)

        with _stage("train-T"):
            block_t = _train_arm("T", cfg, train_real, val, out_dir)

        runs = {"T": block_t}
        if fake is not None and len(fake) > 0:
            with _stage("train-T_DF"):
                merged = dk.merge_with_deepfakes(real, fake)
                dk.save_manifest(merged, out_dir / "merged_split.json")
                runs["T_DF"] = _train_arm("T_DF", cfg, merged.subset("train"), val, out_dir)

        report = ExperimentReport(
            seed=cfg.seed,
            config_hash=_hash_dict(asdict(cfg)),
            runs=runs,
        )
        (out_dir / "report.json").write_text(report.to_json() + "\n")
        render_report(report, "markdown", out_dir)
        render_report(report, "csv", out_dir)
    return report


def _synthesize_fakes(cfg: ExperimentConfig, train_real, out_dir: Path):
    """Fine-tune the translator on the two phantom modalities, then translate B→A."""
    if cfg.phantom is None:
        raise ValidationError("translator arm without fake_manifest requires phantom settings")
    tcfg = cfg.translator
    params = cfg.phantom
    if params.canvas_size != tcfg.image_size:
        raise ValidationError(
            f"phantom canvas {params.canvas_size} != translator image_size {tcfg.image_size}"
        )
    domain_b = generate_phantom_dataset(
        cfg.phantom_n, params, cfg.seed, out_dir / "phantom_b", modality="B"
    )
    x_a, _ = dk.load_arrays(train_real, size=tcfg.image_size)
    x_b, _ = dk.load_arrays(domain_b, size=tcfg.image_size)
    torch.manual_seed(cfg.seed)  # weight init must not depend on process history
    bundle = build_cyclegan(tcfg)
    bundle, history = train_translator(bundle, x_a, x_b, tcfg, seed=cfg.seed)
    save_cyclegan(bundle, out_dir / "checkpoints" / "translator.pt", seed=cfg.seed)
    (out_dir / "translator_history.json").write_text(json.dumps(history, indent=2) + "\n")
    fake, failures = generate_deepfake_set(
        bundle, domain_b, "BA", out_dir / "deepfakes", fidelity_floor=cfg.fidelity_floor
    )
    if failures:
        (out_dir / "deepfake_failures.txt").write_text("\n".join(failures) + "\n")
    return fake


def _fmt(value: float) -> str:
    return f"{value:.2g}"


def format_row(label: str, cells: list[tuple[float | None, float | None]]) -> str:
    rendered = []
    for mean, std in cells:
        rendered.append("n/a" if mean is None else f"{_fmt(mean)} ± {_fmt(std)}")
    return "| " + " | ".join([label] + rendered) + " |"


_TABLE_METRICS = ("dsc", "jsc", "mad_norm", "hd_norm")


def _table_cells(block: RunBlock) -> list[tuple[float | None, float | None]]:
    by_name = {a.metric: a for a in block.aggregates}
    return [(by_name[m].mean, by_name[m].std) for m in _TABLE_METRICS]


def render_report(report: ExperimentReport, fmt: str, out_dir: Path) -> Path:
    """Write report.md or report.csv with one mean±std row per run."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "markdown":
        lines = [
            "# Deepfake-augmentation comparison",
            "",
            f"seed: {report.seed}  config: `{report.config_hash}`",
            "",
            "| run | DSC | JSC | MAD | HD |",
            "| --- | --- | --- | --- | --- |",
        ]
        for label, block in report.runs.items():
            lines.append(format_row(label, _table_cells(block)))
        lines += [
            "",
            "MAD/HD are diagonal-normalized; per-sample values live in the metrics CSVs.",
            "",
            "## Published reference values (not expected outputs)",
            "",
            "| run | DSC | JSC | MAD | HD |",
            "| --- | --- | --- | --- | --- |",
        ]
        for label, row in PUBLISHED_REFERENCE.items():
            lines.append(
                format_row(label, [row["dsc"], row["jsc"], row["mad"], row["hd"]])
            )
        lines.append("")
        lines.append("## Artifacts")
        lines.append("")
        for label, block in report.runs.items():
            lines.append(f"- {label}: metrics `{block.metrics_csv}`, overlays `{block.overlay_dir}`, checkpoint `{block.checkpoint}`")
        path = out_dir / "report.md"
        path.write_text("\n".join(lines) + "\n")
        return path
    if fmt == "csv":
        path = out_dir / "report.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["run", "metric", "mean", "std", "n", "excluded"])
            for label, block in report.runs.items():
                for agg in block.aggregates:
                    writer.writerow(
                        [label, agg.metric, _none(agg.mean), _none(agg.std), agg.n, agg.excluded]
                    )
        return path
    raise ValidationError(f"unknown report format {fmt!r}")


def _none(v):
    return "" if v is None else repr(v)
