"""Atrous-pyramid segmentation model at overall output stride 32.

The head runs entirely on the deepest backbone map and upsamples logits
straight back to input resolution. The slim variant narrows the
post-pyramid projection width until the head is lighter than the
reference head by a configured amount (0.6M parameters by default).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from ..augment import IMAGENET_MEAN, IMAGENET_STD
from ..encoder.backbone import ResNetBackbone, init_module
from ..errors import ConfigError
from ..seeding import derive_rng

OUTPUT_STRIDE = 32
SLIM_REDUCTION = 600_000
SLIM_TOLERANCE = 50_000


@dataclass(frozen=True)
class SegHeadSpec:
    num_classes: int = 7
    aspp_rates: tuple[int, ...] = (3, 6, 9)
    aspp_channels: int = 256
    classifier_channels: int = 256
    slim: bool = False
    slim_reduction: int = SLIM_REDUCTION
    slim_tolerance: int = SLIM_TOLERANCE

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError("num_classes: must be >= 2")
        rates = list(self.aspp_rates)
        if any(r <= 0 for r in rates) or len(set(rates)) != len(rates):
            raise ConfigError("aspp_rates: must be positive and distinct")
        if self.aspp_channels <= 0 or self.classifier_channels <= 0:
            raise ConfigError("head channel counts must be > 0")


def head_param_count(in_channels: int, spec: SegHeadSpec, width: int) -> int:
    """Analytic learnable-parameter count of the head at a given width.

    Mirrors the module layout below: pyramid branches at aspp_channels,
    then a 1x1 projection to `width`, a 3x3 conv at `width`, and the
    final per-class 1x1 conv. Batch norms add weight+bias pairs.
    """
    a = spec.aspp_channels
    branches = (in_channels * a + 2 * a)             # 1x1 branch
    branches += 3 * (9 * in_channels * a + 2 * a)    # three dilated 3x3
    branches += in_channels * a + 2 * a              # pooled-context branch
    project = 5 * a * width + 2 * width
    classify = 9 * width * width + 2 * width
    final = width * spec.num_classes + spec.num_classes
    return branches + project + classify + final


def resolve_classifier_width(in_channels: int, spec: SegHeadSpec) -> int:
    """Width of the post-pyramid projection; solved for slim heads.

    Slim heads pick the width whose parameter count sits slim_reduction
    below the reference head, erroring if no width lands within
    slim_tolerance of that target.
    """
    if not spec.slim:
        return spec.classifier_channels
    reference = head_param_count(in_channels, spec, spec.classifier_channels)
    target = reference - spec.slim_reduction
    best_width, best_err = None, None
    for width in range(8, spec.classifier_channels):
        err = abs(head_param_count(in_channels, spec, width) - target)
        if best_err is None or err < best_err:
            best_width, best_err = width, err
    if best_width is None or best_err > spec.slim_tolerance:
        raise ConfigError(
            f"slim head cannot shed {spec.slim_reduction} parameters within "
            f"{spec.slim_tolerance} (closest miss: {best_err})")
    return best_width


class ASPP(nn.Module):
    """Parallel 1x1, dilated 3x3 and pooled-context branches, concatenated."""

    def __init__(self, in_channels: int, rates, channels: int):
        super().__init__()
        self.branch0 = _conv_bn(in_channels, channels, 1)
        for i, rate in enumerate(rates, start=1):
            setattr(self, f"branch{i}",
                    _conv_bn(in_channels, channels, 3, dilation=rate))
        self.n_rates = len(rates)
        self.pool = _conv_bn(in_channels, channels, 1)

    def forward(self, x):
        outs = [self.branch0(x)]
        outs += [getattr(self, f"branch{i}")(x) for i in range(1, self.n_rates + 1)]
        pooled = self.pool(x.mean(dim=(2, 3), keepdim=True))
        outs.append(pooled.expand(-1, -1, x.shape[2], x.shape[3]))
        return torch.cat(outs, dim=1)


def _conv_bn(in_ch, out_ch, kernel, dilation=1):
    padding = dilation if kernel == 3 else 0
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel, padding=padding, dilation=dilation, bias=False),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(inplace=True),
    )


class SegHead(nn.Module):
    def __init__(self, in_channels: int, spec: SegHeadSpec):
        super().__init__()
        width = resolve_classifier_width(in_channels, spec)
        self.width = width
        self.aspp = ASPP(in_channels, spec.aspp_rates, spec.aspp_channels)
        self.project = _conv_bn(spec.aspp_channels * (len(spec.aspp_rates) + 2),
                                width, 1)
        self.classify = _conv_bn(width, width, 3)
        self.out = nn.Conv2d(width, spec.num_classes, 1)

    def forward(self, c5):
        x = self.project(self.aspp(c5))
        return self.out(self.classify(x))


class SegmentationModel(nn.Module):
    """Backbone + head; logits are upsampled to input resolution."""

    def __init__(self, backbone: ResNetBackbone, head: SegHead, num_classes: int):
        super().__init__()
        self.backbone = backbone
        self.head = head
        self.num_classes = num_classes
        self.normalization = (IMAGENET_MEAN, IMAGENET_STD)

    @property
    def head_parameter_count(self) -> int:
        return sum(p.numel() for p in self.head.parameters())

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feats = self.backbone(x)
        logits = self.head(feats["c5"])
        return F.interpolate(logits, size=x.shape[-2:], mode="bilinear",
                             align_corners=False)


def build_segmentation_model(backbone: ResNetBackbone, head: SegHeadSpec,
                             output_stride: int = OUTPUT_STRIDE,
                             seed: int = 0) -> SegmentationModel:
    """Assemble the model; only the /32 output stride is supported."""
    if output_stride != OUTPUT_STRIDE:
        raise ConfigError(
            f"output stride {output_stride} unsupported; this model family "
            f"runs at {OUTPUT_STRIDE}")
    if backbone.spec.stage_strides[-1] != OUTPUT_STRIDE:
        raise ConfigError("backbone does not emit a /32 feature map")
    head_module = SegHead(backbone.feature_channels[-1], head)
    init_module(head_module, derive_rng(seed, "seg-head-init"))
    return SegmentationModel(backbone, head_module, head.num_classes)
