"""Class statistics and the class-weighted Dice + cross-entropy loss."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ConfigurationError, DataError

# 1e-7 keeps the smoothed Dice within 1e-6 of its unsmoothed value on
# single-pixel cases while still sending absent classes to a zero term
DICE_EPS = 1e-7
LOG_EPS = 1e-12


@dataclass(frozen=True)
class ClassStats:
    """Per-class pixel counts with derived frequencies and loss weights."""

    counts: np.ndarray
    frequencies: np.ndarray
    weights: np.ndarray


def class_weights(counts) -> ClassStats:
    """Inverse-frequency class weights, normalized to sum to one.

    weight_i = (1 / frequency_i) / sum_j (1 / frequency_j)
    """
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 1 or counts.size == 0:
        raise ConfigurationError("class counts must be a non-empty vector")
    if (counts < 0).any():
        raise DataError("class counts must be non-negative")
    total = counts.sum()
    if total <= 0:
        raise DataError("degenerate class statistics: no labelled pixels")
    zero = np.flatnonzero(counts == 0)
    if zero.size:
        raise DataError(
            f"degenerate class statistics: class(es) {zero.tolist()} have zero pixels")
    freq = counts / total
    inv = 1.0 / freq
    return ClassStats(counts=counts, frequencies=freq, weights=inv / inv.sum())


def _check_pair(probs, onehot):
    if probs.shape != onehot.shape:
        raise ConfigurationError(
            f"probability and one-hot shapes differ: {tuple(probs.shape)} "
            f"vs {tuple(onehot.shape)}")
    if probs.dim() != 4:
        raise ConfigurationError("expected (batch, class, row, col) tensors")


def dice_loss(probs, onehot, eps=DICE_EPS):
    """Soft Dice loss: per class 1 - (2*overlap + eps)/(mass sum + eps),
    averaged unweighted over classes."""
    _check_pair(probs, onehot)
    inter = (probs * onehot).sum(dim=(0, 2, 3))
    denom = probs.sum(dim=(0, 2, 3)) + onehot.sum(dim=(0, 2, 3))
    return (1.0 - (2.0 * inter + eps) / (denom + eps)).mean()


def weighted_ce(probs, onehot, weights, eps=LOG_EPS):
    """Cross entropy with per-class weights, mean over pixels:
    -sum_c w_c * y_c * log(p_c + eps)."""
    _check_pair(probs, onehot)
    w = torch.as_tensor(weights, dtype=probs.dtype, device=probs.device)
    if w.numel() != probs.shape[1]:
        raise ConfigurationError(
            f"{w.numel()} weights for {probs.shape[1]} classes")
    per_pixel = -(w.view(1, -1, 1, 1) * onehot * torch.log(probs + eps)).sum(dim=1)
    return per_pixel.mean()


def dice_ce(probs, onehot, weights):
    """Sum of the Dice and weighted cross-entropy losses."""
    return dice_loss(probs, onehot) + weighted_ce(probs, onehot, weights)


def one_hot(labels, num_classes, dtype=torch.float32):
    if labels.dim() != 3:
        raise ConfigurationError("labels must be (batch, row, col)")
    return F.one_hot(labels.long(), num_classes).permute(0, 3, 1, 2).to(dtype)


def dice_ce_from_logits(logits, labels, weights):
    """Training-path loss: softmax over classes, one-hot targets, DiceCE."""
    probs = torch.softmax(logits, dim=1)
    return dice_ce(probs, one_hot(labels, logits.shape[1], dtype=logits.dtype), weights)
