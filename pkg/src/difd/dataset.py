"""Paired-tile dataset: the on-disk layout, normalization, statistics, and
tensor loading for training.

Directory layout:

    <root>/manifest.json
    <root>/pairs/<split>/<parent>_<row>_<col>.aerial.rstx
    <root>/pairs/<split>/<parent>_<row>_<col>.sat.rstx
    <root>/pairs/<split>/<parent>_<row>_<col>.label.rstx
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch

from .bands import CATALOG_SIZE, CHANNEL_NAMES, normalize_band, select_bands, selection_names
from .errors import ConfigurationError, DataError
from .losses import ClassStats, class_weights
from .raster import Raster, read_rstx, write_rstx

NUM_CLASSES = 5
MANIFEST_NAME = "manifest.json"


@dataclass
class TilePair:
    """Co-registered (aerial tile, satellite crop, label tile) sample."""

    aerial: Raster
    satellite: Raster
    label: Raster
    parent: str
    row: int
    col: int
    band_names: tuple[str, ...]
    normalized: bool = False

    def __post_init__(self):
        if self.aerial.data.shape[1:] != self.label.data.shape[1:]:
            raise DataError("aerial and label tiles differ in size")
        if self.aerial.transform != self.label.transform or self.aerial.crs != self.label.crs:
            raise DataError("aerial and label tiles are not co-registered")
        if self.label.bands != 1:
            raise DataError("label tile must be single-band")
        if len(self.band_names) != self.satellite.bands:
            raise DataError(
                f"{len(self.band_names)} band names for {self.satellite.bands} bands")
        sxmin, symin, sxmax, symax = self.satellite.bounds()
        axmin, aymin, axmax, aymax = self.aerial.bounds()
        tol_x = abs(self.satellite.transform[2])
        tol_y = abs(self.satellite.transform[3])
        if (sxmin > axmin + tol_x or sxmax < axmax - tol_x
                or symin > aymin + tol_y or symax < aymax - tol_y):
            raise DataError("satellite crop does not cover the aerial tile")

    @property
    def key(self) -> str:
        return f"{self.parent}_{self.row}_{self.col}"

    def bounds(self):
        return self.aerial.bounds()


def normalize_pair(pair: TilePair) -> TilePair:
    """Scale a raw pair to training ranges; idempotent.

    The aerial tile maps from [0, 255] bytes to [0, 1] floats; each satellite
    band follows its catalog rule (indices clip to [-1, 1], SCL scales by
    1/11, cloud probability by 1/100, reflectances clip to [0, 1]).
    """
    if pair.normalized:
        return pair
    aerial = pair.aerial.data
    if aerial.dtype == np.uint8:
        aerial = aerial.astype(np.float32) / 255.0
    aerial = np.clip(aerial, 0.0, 1.0).astype(np.float32)
    sat = np.stack([
        normalize_band(name, band)
        for name, band in zip(pair.band_names, pair.satellite.data)
    ])
    return replace(
        pair,
        aerial=replace(pair.aerial, data=aerial),
        satellite=replace(pair.satellite, data=sat),
        normalized=True,
    )


def select_pair_bands(pair: TilePair, selection: str) -> TilePair:
    """Reduce a full-catalog pair to a named band selection."""
    if pair.satellite.bands != CATALOG_SIZE:
        raise DataError("band selection needs full-catalog satellite tiles")
    return replace(pair, satellite=select_bands(pair.satellite, selection),
                   band_names=selection_names(selection))


def class_stats(labels, num_classes=NUM_CLASSES) -> ClassStats:
    """Pixel counts over a set of label rasters, reduced to frequencies and
    inverse-frequency weights."""
    labels = list(labels)
    if not labels:
        raise DataError("no label rasters given")
    counts = np.zeros(num_classes, dtype=np.int64)
    for raster in labels:
        data = raster.data if isinstance(raster, Raster) else np.asarray(raster)
        if data.size and (data.min() < 0 or data.max() >= num_classes):
            raise DataError(f"label value outside [0, {num_classes})")
        counts += np.bincount(data.astype(np.int64).ravel(), minlength=num_classes)
    return class_weights(counts)


def save_pairs(root, split, pairs, band_selection="all17", generation=None):
    """Write pairs under root/pairs/<split>/ and refresh the manifest."""
    root = Path(root)
    pair_dir = root / "pairs" / split
    pair_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for p in pairs:
        write_rstx(pair_dir / f"{p.key}.aerial.rstx", p.aerial)
        write_rstx(pair_dir / f"{p.key}.sat.rstx", p.satellite)
        write_rstx(pair_dir / f"{p.key}.label.rstx", p.label)
        entries.append({"parent": p.parent, "row": p.row, "col": p.col})
    manifest_path = root / MANIFEST_NAME
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
    else:
        manifest = {"format": 1, "band_selection": band_selection,
                    "num_classes": NUM_CLASSES, "generation": generation or {},
                    "splits": {}}
    manifest["band_selection"] = band_selection
    if generation is not None:
        manifest["generation"] = generation
    manifest.setdefault("splits", {})[split] = entries
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_manifest(root) -> dict:
    path = Path(root) / MANIFEST_NAME
    if not path.exists():
        raise DataError(f"no {MANIFEST_NAME} under {root}")
    return json.loads(path.read_text())


def load_pairs(root, split) -> list[TilePair]:
    manifest = load_manifest(root)
    if split not in manifest.get("splits", {}):
        raise DataError(f"split {split!r} not present in the manifest")
    selection = manifest.get("band_selection", "all17")
    names = tuple(CHANNEL_NAMES) if selection == "all17" else selection_names(selection)
    pair_dir = Path(root) / "pairs" / split
    pairs = []
    for entry in manifest["splits"][split]:
        key = f"{entry['parent']}_{entry['row']}_{entry['col']}"
        try:
            pairs.append(TilePair(
                aerial=read_rstx(pair_dir / f"{key}.aerial.rstx"),
                satellite=read_rstx(pair_dir / f"{key}.sat.rstx"),
                label=read_rstx(pair_dir / f"{key}.label.rstx"),
                parent=entry["parent"], row=entry["row"], col=entry["col"],
                band_names=names,
            ))
        except FileNotFoundError as e:
            raise DataError(f"missing pair file: {e.filename}") from None
    return pairs


@dataclass
class SplitTensors:
    """A whole split stacked into tensors ready for batching."""

    aerial: torch.Tensor
    satellite: torch.Tensor
    labels: torch.Tensor

    def __len__(self):
        return self.labels.shape[0]


def pairs_to_tensors(pairs, selection=None) -> SplitTensors:
    """Normalize pairs (selecting bands first if a full catalog is stored)
    and stack them into float32 inputs and int64 labels."""
    if not pairs:
        raise DataError("empty pair list")
    prepared = []
    for p in pairs:
        if selection is not None and p.satellite.bands == CATALOG_SIZE:
            p = select_pair_bands(p, selection)
        elif selection is not None and p.band_names != selection_names(selection):
            raise ConfigurationError(
                f"stored bands {p.band_names} do not match selection {selection!r}")
        prepared.append(normalize_pair(p))
    aerial = torch.from_numpy(np.stack([p.aerial.data for p in prepared]))
    sat = torch.from_numpy(np.stack([p.satellite.data for p in prepared]))
    labels = torch.from_numpy(
        np.stack([p.label.data[0].astype(np.int64) for p in prepared]))
    return SplitTensors(aerial=aerial, satellite=sat, labels=labels)


def load_split_tensors(root, split, selection=None) -> SplitTensors:
    return pairs_to_tensors(load_pairs(root, split), selection=selection)
