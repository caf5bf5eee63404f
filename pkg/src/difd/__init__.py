"""Dual-input fusion semantic segmentation of aerial tiles and multiband
satellite crops: model, data pipeline, loss/metric machinery, and an
experiment harness."""

from .blocks import REFERENCE_PLAN, SpatialPlan
from .dataset import NUM_CLASSES, TilePair
from .errors import ConfigurationError, DataError, DifdError, NumericError
from .losses import ClassStats, class_weights, dice_ce, dice_ce_from_logits, dice_loss, weighted_ce
from .metrics import CLASS_NAMES, ConfusionMatrix, accumulate_confusion
from .model import DifdConfig, DifdModel, build_model, count_parameters, load_checkpoint, save_checkpoint
from .raster import Raster, read_rstx, write_rstx
from .synthetic import SynthSpec, synth_generate
from .train import EarlyStopping, RunConfig, RunRecord, evaluate, make_run_config, train

__version__ = "0.1.0"

__all__ = [
    "CLASS_NAMES",
    "ClassStats",
    "ConfigurationError",
    "ConfusionMatrix",
    "DataError",
    "DifdConfig",
    "DifdError",
    "DifdModel",
    "EarlyStopping",
    "NUM_CLASSES",
    "NumericError",
    "Raster",
    "REFERENCE_PLAN",
    "RunConfig",
    "RunRecord",
    "SpatialPlan",
    "SynthSpec",
    "TilePair",
    "accumulate_confusion",
    "build_model",
    "class_weights",
    "count_parameters",
    "dice_ce",
    "dice_ce_from_logits",
    "dice_loss",
    "evaluate",
    "load_checkpoint",
    "make_run_config",
    "read_rstx",
    "save_checkpoint",
    "synth_generate",
    "train",
    "weighted_ce",
    "write_rstx",
]
