"""Stop-gradient Siamese pre-training.

Two augmented views of each image pass through backbone + projector to
give representations z1, z2 and through the predictor to give p1, p2.
The symmetrized loss pulls p1 toward a detached z2 and p2 toward a
detached z1; the stop-gradient asymmetry is what prevents the trivial
collapsed solution, which we additionally watch via the per-dimension
spread of normalized embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .. import augment as aug
from ..data.classification import ClassificationDataset
from ..encoder.backbone import ResNetBackbone, init_module, spec_from_arrays
from ..encoder.checkpoint import (
    Checkpoint,
    CheckpointMeta,
    arrays_from_module,
    load_arrays_into_module,
)
from ..errors import ConfigError, GeopretrainError, TrainingDiverged
from ..history import History
from ..seeding import derive_rng, derive_seed
from .schedules import multistep_lr

# Reference batch size for linear learning-rate scaling.
LR_SCALE_REFERENCE = 256
COLLAPSE_PATIENCE = 5


@dataclass
class SimSiamConfig:
    batch_size: int = 128
    base_lr: float = 0.05
    weight_decay: float = 1e-5
    momentum: float = 0.9
    epochs: int = 400
    milestones: tuple[int, ...] | None = None  # default: 65% and 85% of epochs
    gamma: float = 0.1
    lr_scaling: bool = True
    proj_hidden: int = 2048
    proj_dim: int = 2048
    pred_hidden: int = 512
    view_size: int = 224
    seed: int = 0
    augment: aug.AugmentSpec | None = None

    def __post_init__(self):
        for name in ("batch_size", "base_lr", "weight_decay", "momentum",
                     "gamma", "proj_hidden", "proj_dim", "pred_hidden", "view_size"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name}: must be > 0")
        if self.epochs < 0:
            raise ConfigError("epochs: must be >= 0")
        if self.milestones is not None:
            ms = list(self.milestones)
            if ms != sorted(set(ms)) or (ms and ms[-1] >= self.epochs):
                raise ConfigError("milestones: must be strictly increasing and < epochs")

    @property
    def effective_lr(self) -> float:
        if self.lr_scaling:
            return self.base_lr * self.batch_size / LR_SCALE_REFERENCE
        return self.base_lr

    def resolved_milestones(self) -> list[int]:
        if self.milestones is not None:
            return list(self.milestones)
        return sorted({int(round(0.65 * self.epochs)), int(round(0.85 * self.epochs))})


class ProjectionMLP(nn.Module):
    """Three linear layers, each followed by batch norm; no final activation."""

    def __init__(self, in_dim: int, hidden_dim: int, out_dim: int):
        super().__init__()
        self.fc1 = nn.Linear(in_dim, hidden_dim, bias=False)
        self.bn1 = nn.BatchNorm1d(hidden_dim)
        self.fc2 = nn.Linear(hidden_dim, hidden_dim, bias=False)
        self.bn2 = nn.BatchNorm1d(hidden_dim)
        self.fc3 = nn.Linear(hidden_dim, out_dim, bias=False)
        self.bn3 = nn.BatchNorm1d(out_dim)

    def forward(self, x):
        x = F.relu(self.bn1(self.fc1(x)))
        x = F.relu(self.bn2(self.fc2(x)))
        return self.bn3(self.fc3(x))


class PredictionMLP(nn.Module):
    """Two-layer bottleneck head."""

    def __init__(self, dim: int, hidden_dim: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden_dim, bias=False)
        self.bn1 = nn.BatchNorm1d(hidden_dim)
        self.fc2 = nn.Linear(hidden_dim, dim)

    def forward(self, x):
        return self.fc2(F.relu(self.bn1(self.fc1(x))))


class SimSiamModel(nn.Module):
    def __init__(self, backbone: ResNetBackbone, proj_hidden: int = 2048,
                 proj_dim: int = 2048, pred_hidden: int = 512):
        super().__init__()
        self.backbone = backbone
        self.projector = ProjectionMLP(backbone.feature_channels[-1], proj_hidden, proj_dim)
        self.predictor = PredictionMLP(proj_dim, pred_hidden)

    def represent(self, x: torch.Tensor) -> torch.Tensor:
        return self.projector(self.backbone(x)["c5"].mean(dim=(2, 3)))

    def forward(self, x1: torch.Tensor, x2: torch.Tensor):
        z1, z2 = self.represent(x1), self.represent(x2)
        p1, p2 = self.predictor(z1), self.predictor(z2)
        return p1, p2, z1, z2


def negcos(p: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
    """Negative cosine similarity; z is treated as a constant.

    Accepts single vectors or batches (mean over rows). A zero-norm input
    signals a dead head and raises.
    """
    if p.dim() == 1:
        p = p.unsqueeze(0)
    if z.dim() == 1:
        z = z.unsqueeze(0)
    z = z.detach()
    p_norm = p.norm(dim=1)
    z_norm = z.norm(dim=1)
    if (p_norm == 0).any() or (z_norm == 0).any():
        raise GeopretrainError("zero-norm embedding passed to negcos")
    cos = (p / p_norm.unsqueeze(1) * (z / z_norm.unsqueeze(1))).sum(dim=1)
    return -cos.mean()


def simsiam_loss(p1, p2, z1, z2) -> torch.Tensor:
    """Symmetrized stop-gradient loss, in [-1, 1]."""
    return 0.5 * negcos(p1, z2) + 0.5 * negcos(p2, z1)


def collapse_metric(embeddings) -> float:
    """Mean per-dimension standard deviation of row-normalized embeddings.

    Near zero means the representations have collapsed to a point; healthy
    training sits around 1/sqrt(D).
    """
    emb = torch.as_tensor(np.asarray(embeddings, dtype=np.float64))
    if emb.dim() != 2 or emb.shape[0] < 2:
        raise GeopretrainError("collapse metric needs an NxD batch with N >= 2")
    emb = F.normalize(emb, dim=1)
    return float(emb.std(dim=0, unbiased=True).mean())


def collapse_threshold(dim: int) -> float:
    return 0.1 / np.sqrt(dim)


def optimizer_param_groups(model: nn.Module, weight_decay: float) -> list[dict]:
    """Two groups: weights with decay, norm/bias parameters without."""
    decay, no_decay, decay_names, no_decay_names = [], [], [], []
    for module in model.modules():
        for name, param in module.named_parameters(recurse=False):
            is_norm = isinstance(module, (nn.BatchNorm1d, nn.BatchNorm2d, nn.GroupNorm,
                                          nn.LayerNorm))
            if is_norm or name.endswith("bias"):
                no_decay.append(param)
                no_decay_names.append(name)
            else:
                decay.append(param)
                decay_names.append(name)
    return [
        {"params": decay, "weight_decay": weight_decay, "group": "decay",
         "names": decay_names},
        {"params": no_decay, "weight_decay": 0.0, "group": "no_decay",
         "names": no_decay_names},
    ]


def _image_list(images):
    if isinstance(images, ClassificationDataset):
        return [lambda i=i, d=images: d.load_image(i) for i in range(len(images))]
    out = []
    for item in images:
        if isinstance(item, np.ndarray):
            out.append(lambda a=item: a)
        else:
            raise ConfigError("train_simsiam expects a ClassificationDataset "
                              "or a sequence of HxWx3 uint8 arrays")
    return out


def train_simsiam(images, generalist: Checkpoint,
                  cfg: SimSiamConfig) -> tuple[Checkpoint, History]:
    """Pre-train backbone representations on unlabeled images.

    Per-epoch history records mean loss, learning rate and the collapse
    metric of that epoch's first-view representations; five consecutive
    epochs under the collapse threshold add a warning (training continues).
    """
    loaders = _image_list(images)
    if not loaders:
        raise ConfigError("image set is empty")

    spec = spec_from_arrays(generalist.arrays)
    backbone = ResNetBackbone(spec)
    load_arrays_into_module(backbone, generalist.arrays, "backbone.")
    model = SimSiamModel(backbone, cfg.proj_hidden, cfg.proj_dim, cfg.pred_hidden)
    init_module(model.projector, derive_rng(cfg.seed, "projector-init"))
    init_module(model.predictor, derive_rng(cfg.seed, "predictor-init"))
    torch.manual_seed(derive_seed(cfg.seed, "torch"))

    view_spec = cfg.augment or aug.ssl_default_spec(cfg.view_size, seed=cfg.seed)
    normalization = generalist.meta.normalization
    optimizer = torch.optim.SGD(optimizer_param_groups(model, cfg.weight_decay),
                                lr=cfg.effective_lr, momentum=cfg.momentum)
    milestones = cfg.resolved_milestones()
    threshold = collapse_threshold(cfg.proj_dim)

    history = History(columns=["epoch", "loss", "lr", "collapse_metric"])
    below = 0
    model.train()
    for epoch in range(cfg.epochs):
        lr = multistep_lr(epoch, cfg.effective_lr, milestones, cfg.gamma)
        for group in optimizer.param_groups:
            group["lr"] = lr
        order = derive_rng(cfg.seed, "sim-order", epoch).permutation(len(loaders))
        losses = []
        embeddings: list[np.ndarray] = []
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            if len(batch) < 2:
                continue  # BN requires more than one sample
            v1s, v2s = [], []
            for idx in batch:
                img = loaders[idx]()
                v1, v2 = aug.two_views(view_spec, img,
                                       call_index=epoch * len(loaders) + int(idx))
                v1s.append(aug.to_model_input(v1, normalization))
                v2s.append(aug.to_model_input(v2, normalization))
            x1 = torch.from_numpy(np.stack(v1s))
            x2 = torch.from_numpy(np.stack(v2s))
            p1, p2, z1, z2 = model(x1, x2)
            loss = simsiam_loss(p1, p2, z1, z2)
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}",
                    checkpoint=_to_checkpoint(model, generalist, images, epoch),
                    history=history)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
            if sum(len(e) for e in embeddings) < 1024:
                embeddings.append(z1.detach().numpy())
        metric = collapse_metric(np.concatenate(embeddings)) if embeddings else 0.0
        history.append(epoch, float(np.mean(losses)) if losses else 0.0, lr, metric)
        below = below + 1 if metric < threshold else 0
        if below >= COLLAPSE_PATIENCE:
            history.warnings.append(
                f"epoch {epoch}: collapse metric {metric:.6f} below "
                f"{threshold:.6f} for {below} consecutive epochs")

    return _to_checkpoint(model, generalist, images, cfg.epochs), history


def _to_checkpoint(model, generalist, images, epochs) -> Checkpoint:
    dataset = images.root.name if isinstance(images, ClassificationDataset) else "in-memory"
    arrays = {**arrays_from_module(model.backbone, "backbone."),
              **arrays_from_module(model.projector, "projector."),
              **arrays_from_module(model.predictor, "predictor.")}
    return Checkpoint(
        arrays=arrays,
        meta=CheckpointMeta(
            method="simsiam",
            dataset=dataset,
            epochs=epochs,
            normalization=generalist.meta.normalization,
            parent_checksum=generalist.source_checksum or generalist.meta.parent_checksum,
        ),
    )
