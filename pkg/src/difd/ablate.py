"""Ablation-matrix runner: trains a list of configurations on the same data
and emits comparison tables shaped like the published design study."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .dataset import load_pairs, pairs_to_tensors
from .errors import DifdError
from .metrics import CLASS_NAMES
from .train import RunConfig, make_run_config, train

# Reference scores from the original full-scale experiments (mF1, mIoU in
# percent). Not reproducible at desk scale; carried as a citation column.
PUBLISHED_FULL_SCALE = {
    ("AerialOnly", "satellite", "RGB"): (90.12, 82.74),
    ("SatOnly", "satellite", "10B"): (14.54, 11.43),
    ("UpConvT", "downsampled-aerial", "RGB+RGB"): (90.8, 83.84),
    ("UpConvT", "satellite", "RGB+4B"): (90.75, 83.7),
    ("UpConvT", "satellite", "RGB+10B"): (90.94, 84.07),
    ("UpConvT", "satellite", "RGB+7B"): (91.5, 84.91),
    ("UpBilinear", "satellite", "RGB+7B"): (91.32, 84.63),
    ("UpNearest", "satellite", "RGB+7B"): (91.3, 84.56),
    ("UpPS", "satellite", "RGB+7B"): (91.28, 84.53),
}

ABLATION_COLUMNS = ("run_id", "variant", "inputs", "status", "mf1", "miou",
                    "published_mf1", "published_miou")


def inputs_label(cfg: RunConfig) -> str:
    model = cfg.model
    if model.variant == "AerialOnly":
        return "RGB"
    if model.variant == "SatOnly":
        return cfg.bands
    if model.second_source == "downsampled-aerial":
        return "RGB+RGB"
    return f"RGB+{cfg.bands}"


@dataclass
class AblationRow:
    run_id: str
    variant: str
    inputs: str
    status: str
    mf1: float | None
    miou: float | None
    per_class_iou: dict | None
    published: tuple | None

    def as_table_row(self) -> dict:
        pub = self.published or (None, None)
        return {
            "run_id": self.run_id,
            "variant": self.variant,
            "inputs": self.inputs,
            "status": self.status,
            "mf1": None if self.mf1 is None else round(self.mf1 * 100, 2),
            "miou": None if self.miou is None else round(self.miou * 100, 2),
            "published_mf1": pub[0],
            "published_miou": pub[1],
        }


def default_matrix(data_dir="", out_dir="", bands="7B", **overrides) -> list[RunConfig]:
    """Toy-scale matrix mirroring the published ablation structure."""
    rows = [
        ("aerial_only", dict(variant="AerialOnly", bands=bands)),
        ("sat_only", dict(variant="SatOnly", bands=bands)),
        ("dual_rgb_rgb", dict(variant="UpConvT", bands=bands,
                              second_source="downsampled-aerial")),
        ("upconvt", dict(variant="UpConvT", bands=bands)),
        ("upnearest", dict(variant="UpNearest", bands=bands)),
        ("upbilinear", dict(variant="UpBilinear", bands=bands)),
        ("upps", dict(variant="UpPS", bands=bands)),
    ]
    configs = []
    for run_id, kw in rows:
        cfg = make_run_config(profile="toy", run_id=run_id,
                              data_dir=data_dir, **kw, **overrides)
        if out_dir:
            cfg.out_dir = str(Path(out_dir) / run_id)
        configs.append(cfg)
    return configs


def ablate(configs: list[RunConfig], data_dir=None, quiet=True) -> list[AblationRow]:
    """Train and score every configuration on the same data with its own
    seed; failures are recorded and do not stop the matrix."""
    if not configs:
        raise DifdError("empty ablation matrix")
    data_dir = data_dir or configs[0].data_dir
    pairs_train = load_pairs(data_dir, "train")
    pairs_val = load_pairs(data_dir, "val")
    tensor_cache = {}

    def tensors_for(cfg):
        key = (cfg.bands, cfg.model.second_source)
        if key not in tensor_cache:
            tensor_cache[key] = (pairs_to_tensors(pairs_train, cfg.bands),
                                 pairs_to_tensors(pairs_val, cfg.bands))
        return tensor_cache[key]

    rows = []
    for cfg in configs:
        label = inputs_label(cfg)
        published = PUBLISHED_FULL_SCALE.get(
            (cfg.model.variant, cfg.model.second_source, label))
        try:
            record = train(cfg, data=tensors_for(cfg), quiet=quiet)
            best = _best_val_row(record)
            rows.append(AblationRow(
                run_id=cfg.run_id, variant=cfg.model.variant, inputs=label,
                status="ok", mf1=best["mf1"], miou=best["miou"],
                per_class_iou={n: best[f"iou_{n}"] for n in CLASS_NAMES},
                published=published))
        except (DifdError, RuntimeError) as e:
            rows.append(AblationRow(
                run_id=cfg.run_id, variant=cfg.model.variant, inputs=label,
                status=f"failed: {e}", mf1=None, miou=None,
                per_class_iou=None, published=published))
    return rows


def _best_val_row(record) -> dict:
    val_rows = [r for r in record.rows if r["split"] == "val"]
    return max(val_rows, key=lambda r: (r["miou"], -r["epoch"]))


def write_ablation_tables(rows: list[AblationRow], out_dir) -> list[Path]:
    """Emit the comparison table and the per-class IoU table as CSV + a
    small markdown summary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    table_path = out_dir / "ablation.csv"
    with open(table_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=ABLATION_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row.as_table_row())
    written.append(table_path)

    per_class_path = out_dir / "per_class_iou.csv"
    with open(per_class_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["run_id", "inputs", *CLASS_NAMES])
        writer.writeheader()
        for row in rows:
            out = {"run_id": row.run_id, "inputs": row.inputs}
            if row.per_class_iou:
                out.update({n: round(v * 100, 2) if v == v else ""
                            for n, v in row.per_class_iou.items()})
            writer.writerow(out)
    written.append(per_class_path)

    md_path = out_dir / "ablation.md"
    lines = ["# Ablation results", "",
             "| run | variant | inputs | status | mF1 % | mIoU % | published mF1 % | published mIoU % |",
             "|---|---|---|---|---|---|---|---|"]
    for row in rows:
        t = row.as_table_row()
        lines.append("| " + " | ".join(
            "" if t[c] is None else str(t[c]) for c in ABLATION_COLUMNS) + " |")
    lines += ["", "Published columns cite the original full-scale study; "
                  "desk-scale scores are not comparable to them."]
    md_path.write_text("\n".join(lines) + "\n")
    written.append(md_path)
    return written
