"""Configuration and assembly of the dual-input fusion segmentation network.

The aerial image runs through a compact separable-conv residual backbone with
stride-4 and stride-16 checkpoints; the stride-16 features are refined by a
dense-prediction-cell head, decoded back to the stride-4 grid, and fused with
an upsampled view of the low-resolution second input before the final decoder
produces per-class logits at full resolution.

Checkpoint container (``.difdck``): magic ``DIFDCK1\\n``, little-endian uint32
header length, UTF-8 JSON header {format, fingerprint, seed, config, extra,
tensors: [{name, shape}, ...]}, then one little-endian float32 payload per
tensor in header order.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, replace

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import (
    DPC_RATES,
    REFERENCE_PLAN,
    DpcHead,
    PadConv2d,
    PsUpsampler,
    SpatialPlan,
    TclUpsampler,
    UpConvTStage,
    _check_input,
    bilinear_upsample,
    init_parameters,
    nearest_resize,
    nearest_upsample,
)
from .errors import ConfigurationError, DataError

VARIANTS = ("UpConvT", "UpNearest", "UpBilinear", "UpPS", "AerialOnly", "SatOnly")
SECOND_SOURCES = ("satellite", "downsampled-aerial")

CHECKPOINT_MAGIC = b"DIFDCK1\n"


@dataclass(frozen=True)
class DifdConfig:
    """Full description of a model build: variant, band count, spatial plan,
    and channel widths of every sub-module."""

    variant: str = "UpConvT"
    num_classes: int = 5
    aerial_size: int = 512
    sat_plan: SpatialPlan = REFERENCE_PLAN
    aerial_channels: int = 3
    sat_channels: int = 7
    backbone_widths: tuple[int, int, int, int] = (32, 128, 256, 384)
    llf1_channels: int = 48
    hlf_channels: int = 256
    llf2_channels: int = 48
    decoder_channels: tuple[int, int, int, int, int] = (256, 256, 256, 128, 64)
    dpc_rates: tuple = DPC_RATES
    second_source: str = "satellite"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}")
        if self.second_source not in SECOND_SOURCES:
            raise ConfigurationError(f"unknown second-input source {self.second_source!r}")
        if self.aerial_size % 16:
            raise ConfigurationError("aerial size must be divisible by 16")
        if self.sat_plan.target_size * 4 != self.aerial_size:
            raise ConfigurationError(
                f"plan target {self.sat_plan.target_size} must equal "
                f"aerial_size/4 = {self.aerial_size // 4}")
        if self.num_classes < 2:
            raise ConfigurationError("at least two classes are required")
        if len(self.backbone_widths) != 4 or len(self.decoder_channels) != 5:
            raise ConfigurationError("backbone needs 4 widths, decoder needs 5 channels")
        if self.second_source == "downsampled-aerial":
            if not (self.uses_aerial and self.uses_second):
                raise ConfigurationError(
                    "the downsampled-aerial source needs a dual-input variant")
            if self.sat_channels != self.aerial_channels:
                raise ConfigurationError(
                    "the downsampled-aerial source reuses the aerial channels")

    @property
    def uses_aerial(self) -> bool:
        return self.variant != "SatOnly"

    @property
    def uses_second(self) -> bool:
        return self.variant != "AerialOnly"

    @property
    def second_channels(self) -> int:
        return self.aerial_channels if self.second_source == "downsampled-aerial" \
            else self.sat_channels

    @property
    def fused_channels(self) -> int:
        c = 0
        if self.uses_aerial:
            c += self.llf1_channels + self.hlf_channels
        if self.variant in ("UpConvT", "UpPS", "SatOnly"):
            c += self.llf2_channels
        elif self.variant in ("UpNearest", "UpBilinear"):
            c += self.second_channels
        return c

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["sat_plan"] = [self.sat_plan.sat_size, self.sat_plan.pre_size,
                         self.sat_plan.n_stages, self.sat_plan.target_size]
        d["backbone_widths"] = list(self.backbone_widths)
        d["decoder_channels"] = list(self.decoder_channels)
        d["dpc_rates"] = [list(r) if isinstance(r, (tuple, list)) else [r, r]
                          for r in self.dpc_rates]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DifdConfig":
        d = dict(d)
        d["sat_plan"] = SpatialPlan(*d["sat_plan"])
        d["backbone_widths"] = tuple(d["backbone_widths"])
        d["decoder_channels"] = tuple(d["decoder_channels"])
        d["dpc_rates"] = tuple(tuple(r) for r in d["dpc_rates"])
        return cls(**d)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def with_variant(self, variant, **overrides) -> "DifdConfig":
        return replace(self, variant=variant, **overrides)

    @classmethod
    def toy(cls, variant="UpConvT", aerial_size=64, sat_channels=7, **overrides) -> "DifdConfig":
        """Desk-scale profile: 64 px tiles with a 4 px second input."""
        plan = overrides.pop("sat_plan", None)
        if plan is None:
            plan = SpatialPlan(4, 4, 2, aerial_size // 4)
        base = dict(
            variant=variant,
            aerial_size=aerial_size,
            sat_plan=plan,
            sat_channels=sat_channels,
            backbone_widths=(16, 32, 64, 96),
            llf1_channels=24,
            hlf_channels=96,
            llf2_channels=24,
            decoder_channels=(96, 96, 96, 48, 24),
        )
        base.update(overrides)
        return cls(**base)


class _SepConvBN(nn.Sequential):
    """Depthwise 3x3 + pointwise 1x1 + BN."""

    def __init__(self, in_ch, out_ch, stride=1):
        super().__init__(
            PadConv2d(in_ch, in_ch, 3, stride=stride, groups=in_ch, bias=False),
            nn.Conv2d(in_ch, out_ch, 1, bias=False),
            nn.BatchNorm2d(out_ch),
        )


class _ResidualStage(nn.Module):
    def __init__(self, in_ch, out_ch, stride=1):
        super().__init__()
        self.conv1 = _SepConvBN(in_ch, out_ch, stride=stride)
        self.conv2 = _SepConvBN(out_ch, out_ch)
        if stride != 1 or in_ch != out_ch:
            self.skip = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_ch),
            )
        else:
            self.skip = nn.Identity()

    def forward(self, x):
        out = self.conv2(F.elu(self.conv1(x)))
        return F.elu(out + self.skip(x))


class Backbone(nn.Module):
    """Compact separable-conv residual feature extractor exposing stride-4
    and stride-16 checkpoints."""

    def __init__(self, in_ch, widths):
        super().__init__()
        w0, w1, w2, w3 = widths
        self.stem = nn.Sequential(
            PadConv2d(in_ch, w0, 3, stride=2, bias=False),
            nn.BatchNorm2d(w0),
            nn.ELU(),
            PadConv2d(w0, w0, 3, bias=False),
            nn.BatchNorm2d(w0),
            nn.ELU(),
        )
        self.stage4 = _ResidualStage(w0, w1, stride=2)
        self.stage8 = _ResidualStage(w1, w2, stride=2)
        self.stage16 = _ResidualStage(w2, w3, stride=2)
        self.tail = _ResidualStage(w3, w3)
        self.low_channels = w1
        self.high_channels = w3

    def forward(self, x):
        x = self.stem(x)
        low = self.stage4(x)
        high = self.tail(self.stage16(self.stage8(low)))
        return low, high


class DifdModel(nn.Module):
    """Dual-input fusion segmentation network.

    ``forward(input1, input2)`` returns raw logits of shape
    (batch, num_classes, aerial_size, aerial_size); softmax lives in the loss.
    """

    def __init__(self, cfg: DifdConfig):
        super().__init__()
        self.cfg = cfg
        if cfg.uses_aerial:
            self.backbone = Backbone(cfg.aerial_channels, cfg.backbone_widths)
            self.dpc = DpcHead(self.backbone.high_channels, cfg.hlf_channels,
                               rates=cfg.dpc_rates)
            self.llf1_conv = nn.Conv2d(self.backbone.low_channels, cfg.llf1_channels, 1)
            self.hlf_up = nn.Sequential(
                UpConvTStage(cfg.hlf_channels, cfg.hlf_channels, conv_kernel=1),
                UpConvTStage(cfg.hlf_channels, cfg.hlf_channels, conv_kernel=1),
            )
        if cfg.uses_second:
            if cfg.variant in ("UpConvT", "SatOnly"):
                self.second = TclUpsampler(cfg.second_channels, cfg.sat_plan,
                                           cfg.llf2_channels)
            elif cfg.variant == "UpPS":
                self.second = PsUpsampler(cfg.second_channels, cfg.sat_plan,
                                          cfg.llf2_channels)
            else:
                self.second = None  # raw resize variants carry no parameters
        d0, d1, d2, d3, d4 = cfg.decoder_channels
        self.fuse_conv1 = PadConv2d(cfg.fused_channels, d0, 3)
        self.fuse_conv2 = PadConv2d(d0, d1, 3)
        self.fuse_proj = nn.Conv2d(d1, d2, 1)
        self.fuse_up1 = UpConvTStage(d2, d3, conv_kernel=1)
        self.fuse_up2 = UpConvTStage(d3, d4, conv_kernel=1)
        self.classifier = PadConv2d(d4, cfg.num_classes, 3)

    def encode(self, input1):
        """Aerial input -> (stride-4 low-level features, refined stride-16
        high-level features)."""
        cfg = self.cfg
        if not cfg.uses_aerial:
            raise ConfigurationError(f"variant {cfg.variant} has no aerial branch")
        _check_input(input1, "aerial input")
        if input1.shape[1] != cfg.aerial_channels:
            raise ConfigurationError(
                f"aerial input has {input1.shape[1]} channels, "
                f"expected {cfg.aerial_channels}")
        if input1.shape[2] % 16 or input1.shape[3] % 16:
            raise ConfigurationError("aerial size must be divisible by 16")
        low, high = self.backbone(input1)
        return low, self.dpc(high)

    def decode(self, llf, hlf):
        """Project low-level features and upsample high-level features onto
        the shared stride-4 grid."""
        return F.elu(self.llf1_conv(llf)), self.hlf_up(hlf)

    def second_branch(self, input2):
        """Lift the second input to the stride-4 grid via the variant's
        upsampler; raw resize variants keep the input channel count."""
        cfg = self.cfg
        if not cfg.uses_second:
            raise ConfigurationError(f"variant {cfg.variant} has no second branch")
        if self.second is not None:
            return self.second(input2)
        _check_input(input2, "second input")
        if input2.shape[1] != cfg.second_channels:
            raise ConfigurationError(
                f"second input has {input2.shape[1]} channels, "
                f"expected {cfg.second_channels}")
        if cfg.variant == "UpNearest":
            return nearest_upsample(input2, cfg.sat_plan.target_size)
        return bilinear_upsample(input2, cfg.sat_plan.target_size)

    def fuse_and_decode(self, llf1=None, hlf=None, llf2=None):
        """Concatenate the available feature stacks and decode to logits."""
        feats = [f for f in (llf1, hlf, llf2) if f is not None]
        if not feats:
            raise ConfigurationError("no features to fuse")
        sizes = {tuple(f.shape[2:]) for f in feats}
        if len(sizes) != 1:
            raise ConfigurationError(f"fused features disagree on spatial size: {sizes}")
        x = torch.cat(feats, dim=1)
        if x.shape[1] != self.cfg.fused_channels:
            raise ConfigurationError(
                f"fused stack has {x.shape[1]} channels, "
                f"configuration expects {self.cfg.fused_channels}")
        x = F.elu(self.fuse_conv1(x))
        x = F.elu(self.fuse_conv2(x))
        x = self.fuse_proj(x)
        x = self.fuse_up2(self.fuse_up1(x))
        return self.classifier(x)

    def forward(self, input1=None, input2=None):
        cfg = self.cfg
        llf1 = hlf = llf2 = None
        if cfg.uses_aerial:
            if input1 is None:
                raise ConfigurationError(f"variant {cfg.variant} requires the aerial input")
            llf1, hlf = self.decode(*self.encode(input1))
        if cfg.uses_second:
            if input2 is None and cfg.second_source == "downsampled-aerial":
                input2 = nearest_resize(input1, cfg.sat_plan.sat_size)
            if input2 is None:
                raise ConfigurationError(f"variant {cfg.variant} requires the second input")
            llf2 = self.second_branch(input2)
        return self.fuse_and_decode(llf1, hlf, llf2)


def build_model(cfg: DifdConfig, seed=None) -> DifdModel:
    """Construct and initialize a model; with a seed the parameters are
    reproducible."""
    return init_parameters(DifdModel(cfg), seed=seed)


def count_parameters(module: nn.Module) -> int:
    """Total trainable scalar parameter count (running statistics excluded)."""
    return sum(p.numel() for p in module.parameters())


def save_checkpoint(path, model: DifdModel, seed=0, extra=None):
    """Write the versioned checkpoint container described in the module
    docstring. All payloads are float32; integer step counters are dropped."""
    names, tensors = [], []
    for name, t in model.state_dict().items():
        if not t.is_floating_point():
            continue
        names.append({"name": name, "shape": list(t.shape)})
        tensors.append(t.detach().to(torch.float32).contiguous())
    header = {
        "format": 1,
        "fingerprint": model.cfg.fingerprint(),
        "seed": int(seed),
        "config": model.cfg.to_dict(),
        "extra": dict(extra or {}),
        "tensors": names,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for t in tensors:
            f.write(t.numpy().astype("<f4", copy=False).tobytes())


def read_checkpoint_header(path) -> dict:
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise DataError(f"{path} is not a checkpoint container")
        (length,) = struct.unpack("<I", f.read(4))
        return json.loads(f.read(length).decode("utf-8"))


def load_checkpoint(path, expected: DifdConfig | None = None):
    """Rebuild a model from a checkpoint; returns (model, header).

    If `expected` is given its fingerprint must match the stored one.
    """
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise DataError(f"{path} is not a checkpoint container")
        (length,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(length).decode("utf-8"))
        if header.get("format") != 1:
            raise DataError(f"unsupported checkpoint format {header.get('format')!r}")
        cfg = DifdConfig.from_dict(header["config"])
        if expected is not None and expected.fingerprint() != header["fingerprint"]:
            raise ConfigurationError(
                "checkpoint fingerprint does not match the run configuration")
        model = DifdModel(cfg)
        state = model.state_dict()
        for entry in header["tensors"]:
            name, shape = entry["name"], tuple(entry["shape"])
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            raw = f.read(4 * count)
            if len(raw) != 4 * count:
                raise DataError("truncated checkpoint payload")
            if name not in state:
                raise DataError(f"checkpoint tensor {name!r} not present in the model")
            if tuple(state[name].shape) != shape:
                raise DataError(f"checkpoint tensor {name!r} has shape {shape}, "
                                f"model expects {tuple(state[name].shape)}")
            arr = np.frombuffer(raw, dtype="<f4").reshape(shape)
            state[name].copy_(torch.from_numpy(arr.copy()))
    return model, header
