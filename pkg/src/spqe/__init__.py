"""Quality scoring for super-resolved images.

Fuses a referenced structure score and a no-reference perception score with
an adaptively regressed weight, alongside classical metric baselines, a
synthetic benchmark, and a training/evaluation harness.
"""

from .backbone import BackboneConfig, FeaturePyramid, extract_pyramid, tiny, vgg16_like
from .correlations import plcc, srcc
from .data import (DatasetManifest, SampleRecord, ScoreBundle, SplitSpec,
                   load_manifest, normalize_mos, save_manifest, split_dataset)
from .evaluation import (EvalReport, EvalRow, ablation_suite, correlation_study,
                         cross_dataset, run_benchmark)
from .metrics import (blur_measure, gmsd, jpeg_blockiness, ms_ssim, psnr, ssim)
from .model import SpqeModel, fuse_scores, l1_loss
from .saliency import compute_saliency, spectral_residual
from .synth import DegradationSpec, build_synthetic_manifest, degrade, gen_hr, pseudo_mos
from .training import Adam, PlateauSchedule, TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Adam", "BackboneConfig", "DatasetManifest", "DegradationSpec", "EvalReport",
    "EvalRow", "FeaturePyramid", "PlateauSchedule", "SampleRecord", "ScoreBundle",
    "SplitSpec", "SpqeModel", "TrainConfig", "ablation_suite", "blur_measure",
    "build_synthetic_manifest", "compute_saliency", "correlation_study",
    "cross_dataset", "degrade", "extract_pyramid", "fuse_scores", "gen_hr",
    "gmsd", "jpeg_blockiness", "l1_loss", "load_manifest", "ms_ssim",
    "normalize_mos", "plcc", "pseudo_mos", "psnr", "run_benchmark",
    "save_manifest", "spectral_residual", "split_dataset", "srcc", "ssim",
    "tiny", "train", "vgg16_like",
]
