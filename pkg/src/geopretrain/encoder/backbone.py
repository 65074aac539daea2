"""Bottleneck ResNet backbone emitting the C2..C5 feature pyramid.

The "resnet50" variant matches the standard 50-layer layout; the "tiny"
variant keeps the same topology at 1/16 width with one block per stage so
the full pipeline runs on CPU in test time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from ..errors import ConfigError
from ..seeding import derive_rng

STRIDE_LADDER = (4, 8, 16, 32)


@dataclass(frozen=True)
class BackboneSpec:
    variant: str = "resnet50"
    stage_channels: tuple[int, int, int, int] = (256, 512, 1024, 2048)
    stage_blocks: tuple[int, int, int, int] = (3, 4, 6, 3)
    stage_strides: tuple[int, int, int, int] = STRIDE_LADDER

    def __post_init__(self):
        if not (len(self.stage_channels) == len(self.stage_strides)
                == len(self.stage_blocks) == 4):
            raise ConfigError("backbone spec needs exactly four stages")
        if list(self.stage_strides) != sorted(set(self.stage_strides)):
            raise ConfigError("stage strides must be strictly increasing")
        if any(c % 4 for c in self.stage_channels):
            raise ConfigError("stage channels must be divisible by 4 (bottleneck)")

    @property
    def stem_channels(self) -> int:
        return self.stage_channels[0] // 4


_VARIANTS = {
    "resnet50": BackboneSpec(),
    "tiny": BackboneSpec(variant="tiny", stage_channels=(16, 32, 64, 128),
                         stage_blocks=(1, 1, 1, 1)),
}


def backbone_spec(variant: str) -> BackboneSpec:
    if variant not in _VARIANTS:
        raise ConfigError(f"unknown backbone variant {variant!r}; "
                          f"choose from {sorted(_VARIANTS)}")
    return _VARIANTS[variant]


class Bottleneck(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, stride: int):
        super().__init__()
        width = out_ch // 4
        self.conv1 = nn.Conv2d(in_ch, width, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(width)
        self.conv2 = nn.Conv2d(width, width, 3, stride=stride, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(width)
        self.conv3 = nn.Conv2d(width, out_ch, 1, bias=False)
        self.bn3 = nn.BatchNorm2d(out_ch)
        if stride != 1 or in_ch != out_ch:
            self.downsample = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_ch),
            )
        else:
            self.downsample = None

    def forward(self, x):
        identity = x if self.downsample is None else self.downsample(x)
        out = F.relu(self.bn1(self.conv1(x)))
        out = F.relu(self.bn2(self.conv2(out)))
        out = self.bn3(self.conv3(out))
        return F.relu(out + identity)


class Stem(nn.Module):
    def __init__(self, out_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(3, out_ch, 7, stride=2, padding=3, bias=False)
        self.bn = nn.BatchNorm2d(out_ch)

    def forward(self, x):
        x = F.relu(self.bn(self.conv(x)))
        return F.max_pool2d(x, 3, stride=2, padding=1)


class ResNetBackbone(nn.Module):
    """Forward yields {"c2": H/4, "c3": H/8, "c4": H/16, "c5": H/32} maps."""

    def __init__(self, spec: BackboneSpec):
        super().__init__()
        self.spec = spec
        self.stem = Stem(spec.stem_channels)
        in_ch = spec.stem_channels
        for i, (out_ch, blocks) in enumerate(zip(spec.stage_channels, spec.stage_blocks)):
            stride = 1 if i == 0 else 2
            layers = [Bottleneck(in_ch, out_ch, stride)]
            layers += [Bottleneck(out_ch, out_ch, 1) for _ in range(blocks - 1)]
            setattr(self, f"stage{i + 1}", nn.Sequential(*layers))
            in_ch = out_ch

    @property
    def feature_channels(self) -> tuple[int, int, int, int]:
        return self.spec.stage_channels

    def forward(self, x: torch.Tensor) -> dict[str, torch.Tensor]:
        check_input_size(x.shape[-2], x.shape[-1])
        x = self.stem(x)
        feats = {}
        for i in range(4):
            x = getattr(self, f"stage{i + 1}")(x)
            feats[f"c{i + 2}"] = x
        return feats


def check_input_size(h: int, w: int) -> None:
    if h % 32 or w % 32:
        pad_h = (h + 31) // 32 * 32
        pad_w = (w + 31) // 32 * 32
        raise ConfigError(
            f"input {h}x{w} is not a multiple of 32; pad to {pad_h}x{pad_w}"
        )


def build_backbone(spec: BackboneSpec, seed: int = 0) -> ResNetBackbone:
    """Construct a backbone with deterministic, seed-derived initialization."""
    model = ResNetBackbone(spec)
    init_module(model, derive_rng(seed, "backbone-init", spec.variant))
    return model


def init_module(module: nn.Module, rng: np.random.Generator) -> None:
    """Kaiming-normal convs / unit-affine norms, drawn from a numpy stream.

    Initializing from our own stream (not torch's global RNG) keeps builds
    byte-reproducible across torch versions and thread counts.
    """
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, nn.Conv2d):
                fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
                std = float(np.sqrt(2.0 / fan_in))
                m.weight.copy_(torch.from_numpy(
                    rng.normal(0.0, std, size=tuple(m.weight.shape)).astype(np.float32)))
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, nn.Linear):
                fan_in = m.in_features
                bound = float(1.0 / np.sqrt(fan_in))
                m.weight.copy_(torch.from_numpy(
                    rng.uniform(-bound, bound, size=tuple(m.weight.shape)).astype(np.float32)))
                if m.bias is not None:
                    m.bias.copy_(torch.from_numpy(
                        rng.uniform(-bound, bound, size=tuple(m.bias.shape)).astype(np.float32)))
            elif isinstance(m, (nn.BatchNorm2d, nn.BatchNorm1d, nn.GroupNorm)):
                m.weight.fill_(1.0)
                m.bias.zero_()
                if isinstance(m, (nn.BatchNorm2d, nn.BatchNorm1d)):
                    m.running_mean.zero_()
                    m.running_var.fill_(1.0)


def spec_from_arrays(arrays: dict, namespace: str = "backbone.") -> BackboneSpec:
    """Recover the backbone spec from checkpoint array names and shapes."""
    channels = []
    blocks = []
    for i in range(1, 5):
        key = f"{namespace}stage{i}.0.conv3.weight"
        if key not in arrays:
            raise ConfigError(f"cannot infer backbone spec: missing {key}")
        channels.append(arrays[key].shape[0])
        n = 0
        while f"{namespace}stage{i}.{n}.conv1.weight" in arrays:
            n += 1
        blocks.append(n)
    for preset in _VARIANTS.values():
        if (tuple(channels) == preset.stage_channels
                and tuple(blocks) == preset.stage_blocks):
            return preset
    return BackboneSpec(variant="custom", stage_channels=tuple(channels),
                        stage_blocks=tuple(blocks))
