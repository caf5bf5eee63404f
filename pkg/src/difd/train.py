"""Training loop, evaluation, and early stopping for segmentation runs."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .blocks import init_parameters
from .dataset import NUM_CLASSES, SplitTensors, load_split_tensors
from .bands import selection_indices
from .errors import ConfigurationError, DataError, NumericError
from .losses import class_weights, dice_ce_from_logits
from .metrics import CLASS_NAMES, ConfusionMatrix, macro_mean
from .model import DifdConfig, DifdModel, load_checkpoint, save_checkpoint

METRIC_COLUMNS = (
    ["run_id", "epoch", "split"]
    + [f"iou_{n}" for n in CLASS_NAMES]
    + [f"f1_{n}" for n in CLASS_NAMES]
    + ["miou", "mf1", "loss"]
)


@dataclass
class RunConfig:
    """One experiment: a model build plus data, optimizer, and stop rules."""

    model: DifdConfig = field(default_factory=DifdConfig)
    bands: str = "7B"
    data_dir: str = ""
    out_dir: str = ""
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    batch_size: int = 4
    max_epochs: int = 100
    patience: int = 15
    seed: int = 3407
    workers: int = 1
    max_steps: int | None = None
    run_id: str = "run"

    def __post_init__(self):
        if self.patience < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ConfigurationError("patience and batch size must be >= 1, lr > 0")
        if self.max_epochs < 1:
            raise ConfigurationError("max epochs must be >= 1")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["model"] = self.model.to_dict()
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d) -> "RunConfig":
        d = dict(d)
        d["model"] = DifdConfig.from_dict(d["model"])
        if "betas" in d:
            d["betas"] = tuple(d["betas"])
        return cls(**d)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except FileNotFoundError:
            raise DataError(f"run config {path} not found") from None
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise ConfigurationError(f"malformed run config {path}: {e}") from None


def make_run_config(profile="toy", variant="UpConvT", bands="7B",
                    second_source="satellite", **overrides) -> RunConfig:
    """Build a RunConfig for the named profile. The toy profile (64 px tiles,
    batch 4) is the default; the paper-scale profile (512 px tiles, batch 26)
    is selectable but far heavier."""
    c2 = 3 if second_source == "downsampled-aerial" else len(selection_indices(bands))
    if profile == "toy":
        model = DifdConfig.toy(variant=variant, sat_channels=c2,
                               second_source=second_source)
        defaults = dict(batch_size=4)
    elif profile == "paper":
        model = DifdConfig(variant=variant, sat_channels=c2,
                           second_source=second_source)
        defaults = dict(batch_size=26)
    else:
        raise ConfigurationError(f"unknown profile {profile!r}")
    defaults.update(overrides)
    return RunConfig(model=model, bands=bands, **defaults)


class EarlyStopping:
    """Stops after `patience` consecutive epochs without a strictly better
    value; ties consume patience."""

    def __init__(self, patience):
        if patience < 1:
            raise ConfigurationError("patience must be >= 1")
        self.patience = patience
        self.best = None
        self.best_epoch = 0
        self.epochs = 0
        self.bad_epochs = 0

    def update(self, value) -> bool:
        self.epochs += 1
        improved = self.best is None or value > self.best
        if improved:
            self.best = value
            self.best_epoch = self.epochs
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return improved

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


@dataclass
class RunRecord:
    run_id: str
    fingerprint: str
    rows: list
    best_checkpoint: str | None
    best_miou: float
    best_epoch: int
    stop_reason: str
    wall_time: float
    config: dict

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def metrics_row(run_id, epoch, split, cm: ConfusionMatrix, loss) -> dict:
    iou = cm.iou_per_class()
    f1 = cm.f1_per_class()
    row = {"run_id": run_id, "epoch": int(epoch), "split": split}
    for name, v in zip(CLASS_NAMES, iou):
        row[f"iou_{name}"] = float(v)
    for name, v in zip(CLASS_NAMES, f1):
        row[f"f1_{name}"] = float(v)
    row["miou"] = cm.mean_iou()
    row["mf1"] = cm.mean_f1()
    row["loss"] = float(loss)
    return row


def write_metrics_csv(path, rows):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=METRIC_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k)) for k in METRIC_COLUMNS})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        rows = []
        for raw in csv.DictReader(f):
            row = dict(raw)
            row["epoch"] = int(row["epoch"])
            for k in METRIC_COLUMNS[3:]:
                row[k] = float(row[k])
            rows.append(row)
        return rows


def model_inputs(cfg: DifdConfig, aerial, satellite):
    """Choose the forward arguments for a variant; the downsampled-aerial
    source lets the model derive its own second input."""
    input1 = aerial if cfg.uses_aerial else None
    input2 = None
    if cfg.uses_second and cfg.second_source == "satellite":
        input2 = satellite
    return input1, input2


def stats_from_labels(labels: torch.Tensor, num_classes=NUM_CLASSES):
    counts = np.bincount(labels.numpy().astype(np.int64).ravel(),
                         minlength=num_classes)
    return class_weights(counts)


def _batches(n, batch_size, order=None):
    order = np.arange(n) if order is None else order
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def evaluate_model(model: DifdModel, data: SplitTensors, weights,
                   batch_size=8) -> tuple[ConfusionMatrix, float]:
    """Eval-mode pass over a split: confusion matrix plus mean loss."""
    model.eval()
    cm = ConfusionMatrix(model.cfg.num_classes)
    losses = []
    with torch.no_grad():
        for idx in _batches(len(data), batch_size):
            aerial = data.aerial[idx]
            sat = data.satellite[idx]
            labels = data.labels[idx]
            input1, input2 = model_inputs(model.cfg, aerial, sat)
            logits = model(input1, input2)
            losses.append(float(dice_ce_from_logits(logits, labels, weights)))
            cm.update(logits.argmax(dim=1).numpy(), labels.numpy())
    return cm, float(np.mean(losses))


def train(cfg: RunConfig, data: tuple[SplitTensors, SplitTensors] | None = None,
          quiet=True) -> RunRecord:
    """Train one configuration and return its record.

    `data` overrides loading (train, val) tensors from cfg.data_dir. The
    model is Kaiming-initialized from cfg.seed, optimized with AdamW on the
    class-weighted DiceCE loss, and early-stopped on validation mIoU.
    """
    start = time.perf_counter()
    torch.manual_seed(cfg.seed)
    if data is None:
        if not cfg.data_dir:
            raise DataError("no dataset directory configured")
        train_data = load_split_tensors(cfg.data_dir, "train", cfg.bands)
        val_data = load_split_tensors(cfg.data_dir, "val", cfg.bands)
    else:
        train_data, val_data = data

    model = init_parameters(DifdModel(cfg.model), seed=cfg.seed)
    stats = stats_from_labels(train_data.labels, cfg.model.num_classes)
    weights = torch.as_tensor(stats.weights, dtype=torch.float32)
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate,
                            betas=cfg.betas, weight_decay=cfg.weight_decay)
    stopper = EarlyStopping(cfg.patience)
    rng = np.random.default_rng(cfg.seed)
    out_dir = Path(cfg.out_dir) if cfg.out_dir else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    best_path = None
    best_state = None
    rows = []
    step = 0
    stop_reason = "max-epoch"
    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        train_cm = ConfusionMatrix(cfg.model.num_classes)
        step_losses = []
        for idx in _batches(len(train_data), cfg.batch_size, rng.permutation(len(train_data))):
            aerial = train_data.aerial[idx]
            sat = train_data.satellite[idx]
            labels = train_data.labels[idx]
            input1, input2 = model_inputs(cfg.model, aerial, sat)
            opt.zero_grad()
            logits = model(input1, input2)
            loss = dice_ce_from_logits(logits, labels, weights)
            if not torch.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at optimization step {step} (epoch {epoch})")
            loss.backward()
            opt.step()
            step += 1
            step_losses.append(loss.detach().item())
            with torch.no_grad():
                train_cm.update(logits.argmax(dim=1).numpy(), labels.numpy())
            if cfg.max_steps is not None and step >= cfg.max_steps:
                break
        rows.append(metrics_row(cfg.run_id, epoch, "train", train_cm,
                                float(np.mean(step_losses))))
        val_cm, val_loss = evaluate_model(model, val_data, weights,
                                          batch_size=cfg.batch_size)
        rows.append(metrics_row(cfg.run_id, epoch, "val", val_cm, val_loss))
        if not quiet:
            print(f"[{cfg.run_id}] epoch {epoch}: "
                  f"train loss {np.mean(step_losses):.4f} "
                  f"val mIoU {val_cm.mean_iou():.4f}")
        if stopper.update(val_cm.mean_iou()):
            if out_dir is not None:
                best_path = out_dir / "best.difdck"
                save_checkpoint(best_path, model, seed=cfg.seed,
                                extra={"bands": cfg.bands, "run_id": cfg.run_id,
                                       "epoch": epoch,
                                       "batch_size": cfg.batch_size,
                                       "class_weights": [float(w) for w in stats.weights]})
            else:
                best_state = {k: v.detach().clone()
                              for k, v in model.state_dict().items()}
        if stopper.should_stop:
            stop_reason = "early-stop"
            break
        if cfg.max_steps is not None and step >= cfg.max_steps:
            stop_reason = "max-steps"
            break

    record = RunRecord(
        run_id=cfg.run_id,
        fingerprint=cfg.model.fingerprint(),
        rows=rows,
        best_checkpoint=str(best_path) if best_path else None,
        best_miou=float(stopper.best) if stopper.best is not None else float("nan"),
        best_epoch=stopper.best_epoch,
        stop_reason=stop_reason,
        wall_time=time.perf_counter() - start,
        config=cfg.to_dict(),
    )
    if out_dir is not None:
        write_metrics_csv(out_dir / "metrics.csv", rows)
        (out_dir / "run.json").write_text(
            json.dumps(record.to_dict(), indent=2, sort_keys=True, allow_nan=True))
    record._best_state = best_state  # in-memory fallback when out_dir is unset
    return record


def evaluate(checkpoint_path, data_dir, split="val", bands=None,
             expected: DifdConfig | None = None, run_id=None) -> dict:
    """Load a checkpoint and score one split; deterministic given the files.

    The loss column uses the class weights and eval batch size stored with
    the checkpoint, so re-evaluating the saved run's validation split
    reproduces its recorded metrics exactly.
    """
    model, header = load_checkpoint(checkpoint_path, expected=expected)
    extra = header.get("extra", {})
    bands = bands or extra.get("bands")
    if bands is None:
        raise ConfigurationError("band selection unknown; pass bands explicitly")
    data = load_split_tensors(data_dir, split, bands)
    if extra.get("class_weights"):
        weights = torch.as_tensor(extra["class_weights"], dtype=torch.float32)
    else:
        stats = stats_from_labels(data.labels, model.cfg.num_classes)
        weights = torch.as_tensor(stats.weights, dtype=torch.float32)
    cm, loss = evaluate_model(model, data, weights,
                              batch_size=int(extra.get("batch_size", 8)))
    row = metrics_row(run_id or extra.get("run_id", "eval"),
                      extra.get("epoch", 0), split, cm, loss)
    row["miou_foreground"] = macro_mean(cm.iou_per_class(), exclude=(0,))
    return row
