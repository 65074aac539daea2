"""Feature pyramid adapter: C2..C5 backbone maps into uniform P2..P6."""

from __future__ import annotations

from collections import OrderedDict

import torch
from torch import nn
from torch.nn import functional as F

from ..encoder.backbone import ResNetBackbone, init_module
from ..seeding import derive_rng

LATERAL_CHANNELS = 256
P_LEVELS = ("p2", "p3", "p4", "p5", "p6")


class FPNHead(nn.Module):
    """Lateral 1x1 projections plus top-down fusion and 3x3 smoothing."""

    def __init__(self, in_channels, lateral_channels: int = LATERAL_CHANNELS):
        super().__init__()
        self.lateral = nn.ModuleList(
            [nn.Conv2d(c, lateral_channels, 1) for c in in_channels])
        self.output = nn.ModuleList(
            [nn.Conv2d(lateral_channels, lateral_channels, 3, padding=1)
             for _ in in_channels])
        self.lateral_channels = lateral_channels

    def forward(self, feats: list[torch.Tensor]) -> list[torch.Tensor]:
        laterals = [conv(f) for conv, f in zip(self.lateral, feats)]
        for i in range(len(laterals) - 2, -1, -1):
            laterals[i] = laterals[i] + F.interpolate(
                laterals[i + 1], size=laterals[i].shape[-2:], mode="nearest")
        outs = [conv(l) for conv, l in zip(self.output, laterals)]
        outs.append(F.max_pool2d(outs[-1], 1, stride=2))
        return outs


class FPNAdapter(nn.Module):
    """Backbone + pyramid head exposing the torchvision backbone contract:
    forward returns an ordered {p2..p6} dict and out_channels is set."""

    def __init__(self, backbone: ResNetBackbone,
                 lateral_channels: int = LATERAL_CHANNELS, seed: int = 0):
        super().__init__()
        self.body = backbone
        self.fpn = FPNHead(backbone.feature_channels, lateral_channels)
        init_module(self.fpn, derive_rng(seed, "fpn-init"))
        self.out_channels = lateral_channels

    def forward(self, x: torch.Tensor) -> "OrderedDict[str, torch.Tensor]":
        feats = self.body(x)
        outs = self.fpn([feats["c2"], feats["c3"], feats["c4"], feats["c5"]])
        return OrderedDict(zip(P_LEVELS, outs))
