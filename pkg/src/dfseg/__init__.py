"""Deepfake-augmented lesion segmentation pipeline.

Subsystems:
  data       manifests, preprocessing, split/merge
  phantom    procedural test data with exact ground truth
  cyclegan   unpaired image-to-image translation
  deepfakes  bulk translation into training manifests
  segmenter  dense-encoder U-Net + Dice training
  metrics    mask overlap/surface metrics, overlays, aggregation
  harness    T vs T_DF comparison experiments and reports
"""

from .cyclegan import (
    CycleGANBundle,
    TranslatorConfig,
    adversarial_loss,
    build_cyclegan,
    cycle_consistency_loss,
    train_translator,
    translate,
)
from .data import (
    DatasetManifest,
    SliceSample,
    load_manifest,
    merge_with_deepfakes,
    preprocess_mask,
    preprocess_slice,
    save_manifest,
    split_dataset,
)
from .deepfakes import generate_deepfake_set
from .errors import CheckpointError, DfsegError, LoadError, TrainingError, ValidationError
from .fidelity import fidelity_metrics
from .harness import ExperimentConfig, ExperimentReport, render_report, run_comparison
from .metrics import (
    AggregateRow,
    MetricRecord,
    aggregate,
    dsc,
    evaluate_pair,
    hausdorff,
    jsc,
    mad,
    overlay,
    surface_points,
)
from .phantom import PhantomParams, generate_phantom_dataset
from .segmenter import (
    SegModelBundle,
    TrainConfig,
    UNetConfig,
    build_unet,
    dice_loss,
    predict_mask,
    train_segmenter,
)

__version__ = "0.1.0"
