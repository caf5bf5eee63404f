"""Differentiable building blocks for the dual-input fusion network.

All feature maps are (batch, channels, rows, cols) tensors. Blocks are pure
functions of (input, parameters) except for batch-norm running statistics,
which follow the usual single-writer update during training.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigurationError, NumericError


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        a, b = v
        return int(a), int(b)
    return int(v), int(v)


def same_padding(kernel, dilation=1) -> tuple[int, int, int, int]:
    """Per-side padding (left, right, top, bottom) that preserves spatial size
    at stride 1. Even kernels take the extra pad on the right/bottom."""
    kh, kw = _pair(kernel)
    dh, dw = _pair(dilation)
    th = dh * (kh - 1)
    tw = dw * (kw - 1)
    return (tw // 2, tw - tw // 2, th // 2, th - th // 2)


def _check_input(x, what="input"):
    if x.dim() != 4:
        raise ConfigurationError(
            f"{what} must be 4-D (batch, channel, row, col), got {tuple(x.shape)}"
        )
    if not torch.isfinite(x).all():
        raise NumericError(f"non-finite values in {what}")


def conv2d(x, weight, bias=None, stride=1, padding=0, dilation=1, depthwise=False):
    """Cross-correlation with explicit padding control.

    `padding` may be an int, an (h, w) pair, a 4-tuple (left, right, top,
    bottom), or "same" (size-preserving at stride 1; right/bottom-heavy for
    even kernels). Output spatial size follows
    floor((in + padTotal - effectiveKernel) / stride) + 1.
    """
    _check_input(x)
    if weight.dim() != 4:
        raise ConfigurationError("conv weight must be 4-D")
    groups = x.shape[1] if depthwise else 1
    if groups < 1 or weight.shape[1] * groups != x.shape[1]:
        raise ConfigurationError(
            f"channel mismatch: input has {x.shape[1]} channels, "
            f"weight expects {weight.shape[1] * max(groups, 1)}"
        )
    if isinstance(padding, str):
        if padding != "same":
            raise ConfigurationError(f"unknown padding spec {padding!r}")
        pads = same_padding(weight.shape[2:], dilation)
    elif isinstance(padding, (tuple, list)) and len(padding) == 4:
        pads = tuple(int(p) for p in padding)
    else:
        ph, pw = _pair(padding)
        pads = (pw, pw, ph, ph)
    if min(pads) < 0:
        raise ConfigurationError("padding must be non-negative")
    dh, dw = _pair(dilation)
    eff_h = dh * (weight.shape[2] - 1) + 1
    eff_w = dw * (weight.shape[3] - 1) + 1
    if x.shape[2] + pads[2] + pads[3] < eff_h or x.shape[3] + pads[0] + pads[1] < eff_w:
        raise ConfigurationError("effective kernel larger than padded input")
    x = F.pad(x, pads)
    return F.conv2d(x, weight, bias, stride=_pair(stride), dilation=(dh, dw), groups=groups)


def conv_transpose2d(x, weight, bias=None, stride=2):
    """Stride-2 transposed convolution with a 2x2 kernel: each input pixel is
    scattered into a disjoint 2x2 output window, exactly doubling the spatial
    size (the adjoint of the matching strided convolution)."""
    _check_input(x)
    if weight.dim() != 4 or tuple(weight.shape[2:]) != (2, 2):
        raise ConfigurationError("transposed-conv kernel must be 2x2")
    if stride != 2:
        raise ConfigurationError("transposed-conv stride must be 2")
    if weight.shape[0] != x.shape[1]:
        raise ConfigurationError(
            f"channel mismatch: input has {x.shape[1]} channels, "
            f"weight expects {weight.shape[0]}"
        )
    return F.conv_transpose2d(x, weight, bias, stride=2)


def batch_norm(x, running_mean, running_var, weight=None, bias=None,
               training=False, momentum=0.1, eps=1e-5):
    """Per-channel normalization: batch statistics in training mode (updating
    the running estimates in place), running statistics in eval mode. A
    constant channel is handled by eps, never a division by zero."""
    _check_input(x)
    if eps <= 0:
        raise ConfigurationError("batch-norm eps must be positive")
    if bool((running_var < 0).any()):
        raise ConfigurationError("batch-norm running variance must be non-negative")
    return F.batch_norm(x, running_mean, running_var, weight, bias,
                        training=training, momentum=momentum, eps=eps)


def elu(x, alpha=1.0):
    """x for x > 0, alpha * (exp(x) - 1) otherwise."""
    return F.elu(x, alpha=alpha)


def nearest_resize(x, size):
    # floor index mapping, valid in both directions; used inside the
    # upsampler blocks where the plan may shrink before the doubling stages
    return F.interpolate(x, size=_pair(size), mode="nearest")


def _check_target(x, size, what):
    th, tw = _pair(size)
    if th < 1 or tw < 1:
        raise ConfigurationError(f"{what} target size must be positive")
    if th < x.shape[2] or tw < x.shape[3]:
        raise ConfigurationError(f"{what} target smaller than input")
    return th, tw


def nearest_upsample(x, size):
    """Nearest-neighbour upsampling: output pixel (i, j) copies source pixel
    (floor(i*in/out), floor(j*in/out)), so no new values are introduced."""
    _check_input(x)
    th, tw = _check_target(x, size, "nearest_upsample")
    return F.interpolate(x, size=(th, tw), mode="nearest")


def bilinear_upsample(x, size):
    """Bilinear upsampling with half-pixel centres (no corner alignment);
    every output value lies within the per-channel input min/max."""
    _check_input(x)
    th, tw = _check_target(x, size, "bilinear_upsample")
    return F.interpolate(x, size=(th, tw), mode="bilinear", align_corners=False)


def pixel_shuffle(x, r):
    """Depth-to-space reordering, (c*r^2, h, w) -> (c, h*r, w*r) with
    out[b, c, h*r + i, w*r + j] = in[b, c*r^2 + i*r + j, h, w]."""
    _check_input(x)
    r = int(r)
    if r < 1:
        raise ConfigurationError("shuffle factor must be >= 1")
    if x.shape[1] % (r * r) != 0:
        raise ConfigurationError(f"channels {x.shape[1]} not divisible by r^2 = {r * r}")
    return F.pixel_shuffle(x, r)


def pixel_unshuffle(x, r):
    """Inverse of pixel_shuffle."""
    _check_input(x)
    r = int(r)
    if r < 1 or x.shape[2] % r or x.shape[3] % r:
        raise ConfigurationError("spatial size not divisible by the shuffle factor")
    return F.pixel_unshuffle(x, r)


@dataclass(frozen=True)
class SpatialPlan:
    """Spatial bookkeeping for the satellite branch: entry at sat_size, a
    nearest resize to pre_size, then n_stages exact doublings to target_size."""

    sat_size: int
    pre_size: int
    n_stages: int
    target_size: int

    def __post_init__(self):
        if min(self.sat_size, self.pre_size, self.target_size) < 1 or self.n_stages < 0:
            raise ConfigurationError("spatial plan entries must be positive")
        if self.pre_size * 2 ** self.n_stages != self.target_size:
            raise ConfigurationError(
                f"invalid spatial plan: {self.pre_size} * 2^{self.n_stages} "
                f"!= {self.target_size}"
            )

    @property
    def shuffle_factor(self) -> int:
        return self.target_size // self.pre_size


REFERENCE_PLAN = SpatialPlan(sat_size=26, pre_size=16, n_stages=3, target_size=128)


class PadConv2d(nn.Module):
    """Conv2d preceded by size-preserving padding for any kernel
    (right/bottom-heavy when the kernel is even)."""

    def __init__(self, in_ch, out_ch, kernel, stride=1, dilation=1, groups=1, bias=True):
        super().__init__()
        self.pads = same_padding(kernel, dilation)
        self.conv = nn.Conv2d(in_ch, out_ch, kernel, stride=stride,
                              dilation=dilation, groups=groups, bias=bias)

    def forward(self, x):
        return self.conv(F.pad(x, self.pads))


class UpConvTStage(nn.Module):
    """ConvTranspose(2x2, stride 2) -> Conv -> BN -> ELU; doubles the spatial
    size exactly. The follow-up conv is 1x1 in the aerial decoder flavour and
    2x2 size-preserving in the satellite branch flavour."""

    def __init__(self, in_ch, out_ch, conv_kernel=1):
        super().__init__()
        if conv_kernel not in (1, 2):
            raise ConfigurationError("stage conv kernel must be 1 or 2")
        self.up = nn.ConvTranspose2d(in_ch, in_ch, 2, stride=2)
        self.conv = PadConv2d(in_ch, out_ch, conv_kernel)
        self.bn = nn.BatchNorm2d(out_ch)

    def forward(self, x):
        return F.elu(self.bn(self.conv(self.up(x))))


def stage_channels(entry_ch, out_ch, n_stages) -> list[int]:
    """Geometric channel ramp from the entry depth to the output depth."""
    if n_stages <= 0:
        return []
    ratio = (out_ch / entry_ch) ** (1.0 / n_stages)
    chans = [max(1, round(entry_ch * ratio ** i)) for i in range(1, n_stages)]
    return chans + [int(out_ch)]


class TclUpsampler(nn.Module):
    """Satellite upsampling block: a depth-augmenting entry sub-block
    (depthwise 3x3 -> 2x2 conv -> BN), a nearest resize to the plan's
    pre-doubling size, then one doubling stage per plan entry."""

    def __init__(self, in_ch, plan: SpatialPlan, out_ch=48, depth_multiplier=4):
        super().__init__()
        self.plan = plan
        self.in_channels = in_ch
        entry_ch = depth_multiplier * in_ch
        self.entry = nn.Sequential(
            PadConv2d(in_ch, in_ch, 3, groups=in_ch),
            PadConv2d(in_ch, entry_ch, 2),
            nn.BatchNorm2d(entry_ch),
        )
        stages = []
        prev = entry_ch
        for ch in stage_channels(entry_ch, out_ch, plan.n_stages):
            stages.append(UpConvTStage(prev, ch, conv_kernel=2))
            prev = ch
        self.stages = nn.Sequential(*stages)
        self.out_channels = prev

    def forward(self, x):
        _check_branch_input(x, self.in_channels, self.plan)
        x = self.entry(x)
        x = nearest_resize(x, self.plan.pre_size)
        return self.stages(x)


class PsUpsampler(nn.Module):
    """Satellite upsampling via sub-pixel shuffle: ConvTranspose(2x2, s2), a
    nearest resize to the pre-shuffle size, two size-preserving 3x3 convs
    expanding depth to out_ch * r^2, then a pixel shuffle by r = target/pre."""

    def __init__(self, in_ch, plan: SpatialPlan, out_ch=48):
        super().__init__()
        self.plan = plan
        self.in_channels = in_ch
        r = plan.shuffle_factor
        self.factor = r
        self.up = nn.ConvTranspose2d(in_ch, in_ch, 2, stride=2)
        self.conv1 = PadConv2d(in_ch, out_ch * r, 3)
        self.conv2 = PadConv2d(out_ch * r, out_ch * r * r, 3)
        self.pre_shuffle_channels = out_ch * r * r
        self.out_channels = out_ch

    def forward(self, x):
        _check_branch_input(x, self.in_channels, self.plan)
        x = self.up(x)
        x = nearest_resize(x, self.plan.pre_size)
        x = self.conv2(self.conv1(x))
        return pixel_shuffle(x, self.factor)


def _check_branch_input(x, in_ch, plan):
    _check_input(x)
    if x.shape[1] != in_ch:
        raise ConfigurationError(
            f"second input has {x.shape[1]} channels, block expects {in_ch}")
    if x.shape[2] != plan.sat_size or x.shape[3] != plan.sat_size:
        raise ConfigurationError(
            f"second input is {tuple(x.shape[2:])}, plan expects "
            f"({plan.sat_size}, {plan.sat_size})")


# Branch dilation rates and wiring of the dense-prediction-cell head; -1
# reads from the head input, other entries index an earlier branch output.
DPC_RATES = ((1, 6), (18, 15), (6, 21), (1, 1), (6, 3))
DPC_PARENTS = (-1, 0, 0, 0, 1)


class _SepBranch(nn.Module):
    def __init__(self, in_ch, out_ch, rate):
        super().__init__()
        rh, rw = _pair(rate)
        self.dw = nn.Conv2d(in_ch, in_ch, 3, padding=(rh, rw), dilation=(rh, rw),
                            groups=in_ch)
        self.pw = nn.Conv2d(in_ch, out_ch, 1)
        self.bn = nn.BatchNorm2d(out_ch)

    def forward(self, x):
        return F.elu(self.bn(self.pw(self.dw(x))))


class DpcHead(nn.Module):
    """Dense-prediction-cell refinement: a small tree of dilated separable 3x3
    branches whose outputs are concatenated and projected by a 1x1 conv."""

    def __init__(self, in_ch, out_ch=256, rates=DPC_RATES, parents=None, branch_ch=None):
        super().__init__()
        rates = tuple(tuple(_pair(r)) for r in rates)
        if not rates:
            raise ConfigurationError("at least one branch rate is required")
        if parents is None:
            parents = DPC_PARENTS if rates == DPC_RATES else tuple(-1 for _ in rates)
        parents = tuple(int(p) for p in parents)
        if len(parents) != len(rates):
            raise ConfigurationError("one parent entry per branch rate is required")
        branch_ch = branch_ch or out_ch
        branches = []
        for i, (rate, parent) in enumerate(zip(rates, parents)):
            if not -1 <= parent < i:
                raise ConfigurationError("a branch parent must precede the branch")
            src_ch = in_ch if parent == -1 else branch_ch
            branches.append(_SepBranch(src_ch, branch_ch, rate))
        self.parents = parents
        self.branches = nn.ModuleList(branches)
        self.project = nn.Conv2d(branch_ch * len(branches), out_ch, 1)
        self.out_channels = out_ch

    def forward(self, x):
        outs = []
        for branch, parent in zip(self.branches, self.parents):
            outs.append(branch(x if parent == -1 else outs[parent]))
        return self.project(torch.cat(outs, dim=1))


def init_parameters(module: nn.Module, seed=None) -> nn.Module:
    """Kaiming fan-in initialization for conv weights, zeros for biases, unit
    scale / zero shift / fresh running stats for batch norm."""
    if seed is not None:
        torch.manual_seed(seed)
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)
            m.running_mean.zero_()
            m.running_var.fill_(1.0)
            m.num_batches_tracked.zero_()
    return module
