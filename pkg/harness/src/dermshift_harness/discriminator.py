"""Domain discriminator: train a classifier to tell two datasets apart.

Protocol: sample n images per domain with replacement, hold out a quarter as
the test split, balance training batches with a weighted random sampler, train
for a fixed number of epochs, and report the held-out AUROC plus a predictions
CSV (score = probability the image came from the target domain). AUROC near
0.5 means the domains are indistinguishable to the classifier.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .errors import ConfigError, DataError, TrainingDiverged
from .extract import load_image_batch
from .io import write_predictions_csv
from .runtime import training_slot
from .stats import auroc

__all__ = ["DiscriminatorConfig", "DiscriminatorResult", "train_domain_discriminator"]


@dataclass(frozen=True)
class DiscriminatorConfig:
    """Training protocol constants; the backbone is swappable, the protocol is not."""

    backbone: str = "resnet50"
    input_size: int = 224
    pretrained: bool = True
    sample_n: int = 100
    test_size: float = 0.25
    epochs: int = 20
    batch_size: int = 16
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.backbone not in ("resnet50", "small"):
            raise ConfigError(f"unknown backbone '{self.backbone}' (have: resnet50, small)")
        if not 0.0 < self.test_size < 1.0:
            raise ConfigError("test_size must be in (0, 1)")
        if self.sample_n < 4:
            raise ConfigError("sample_n must be at least 4")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")


@dataclass(frozen=True)
class DiscriminatorResult:
    auroc: float
    predictions_csv: str
    report: dict


class _SmallCnn(torch.nn.Module):
    """Two-conv trunk with global pooling; enough to spot dataset-level shifts."""

    def __init__(self):
        super().__init__()
        self.features = torch.nn.Sequential(
            torch.nn.Conv2d(3, 8, kernel_size=3, stride=2, padding=1),
            torch.nn.ReLU(),
            torch.nn.Conv2d(8, 16, kernel_size=3, stride=2, padding=1),
            torch.nn.ReLU(),
            torch.nn.AdaptiveAvgPool2d(1),
            torch.nn.Flatten(1),
        )
        self.head = torch.nn.Linear(16, 1)

    def forward(self, x):
        return self.head(self.features(x)).squeeze(1)


class _ResNetBinary(torch.nn.Module):
    def __init__(self, net):
        super().__init__()
        self.net = net

    def forward(self, x):
        return self.net(x).squeeze(1)


def _build_model(config: DiscriminatorConfig) -> tuple[torch.nn.Module, bool]:
    torch.manual_seed(config.seed)
    if config.backbone == "small":
        return _SmallCnn(), False
    from torchvision import models

    net = None
    loaded = False
    if config.pretrained:
        try:
            net = models.resnet50(weights=models.ResNet50_Weights.IMAGENET1K_V1)
            loaded = True
        except Exception:
            net = None
    if net is None:
        net = models.resnet50(weights=None)
    net.fc = torch.nn.Linear(net.fc.in_features, 1)
    return _ResNetBinary(net), loaded


def _stratified_split(labels: np.ndarray, test_size: float, rng: np.random.Generator):
    train_idx, test_idx = [], []
    for value in (0, 1):
        pool = np.flatnonzero(labels == value)
        pool = rng.permutation(pool)
        n_test = max(1, round(test_size * pool.shape[0]))
        if n_test >= pool.shape[0]:
            raise DataError("not enough samples per domain to hold out a test split")
        test_idx.extend(pool[:n_test])
        train_idx.extend(pool[n_test:])
    return np.sort(np.asarray(train_idx)), np.sort(np.asarray(test_idx))


def train_domain_discriminator(
    source_ids: Sequence[str],
    target_ids: Sequence[str],
    image_dir: Path | str,
    config: DiscriminatorConfig | None = None,
) -> DiscriminatorResult:
    """Sample, split, train, and score how separable the two domains are."""
    config = config or DiscriminatorConfig()
    source_ids = list(source_ids)
    target_ids = list(target_ids)
    if not source_ids or not target_ids:
        raise DataError("both domains need at least one image id")

    rng = np.random.default_rng([config.seed])
    sampled = [source_ids[i] for i in rng.integers(0, len(source_ids), size=config.sample_n)]
    sampled += [target_ids[i] for i in rng.integers(0, len(target_ids), size=config.sample_n)]
    labels = np.repeat([0, 1], config.sample_n)

    train_idx, test_idx = _stratified_split(labels, config.test_size, rng)
    images = load_image_batch(image_dir, sampled, config.input_size)
    targets = torch.from_numpy(labels.astype(np.float32))

    with training_slot("domain-discriminator"):
        model, pretrained_loaded = _build_model(config)
        optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
        loss_fn = torch.nn.BCEWithLogitsLoss()

        train_labels = labels[train_idx]
        class_sizes = np.bincount(train_labels, minlength=2)
        weights = torch.from_numpy((1.0 / class_sizes[train_labels]).astype(np.float64))
        generator = torch.Generator().manual_seed(config.seed)
        sampler = torch.utils.data.WeightedRandomSampler(
            weights, num_samples=train_idx.shape[0], replacement=True, generator=generator
        )

        epoch_losses = []
        model.train()
        for epoch in range(config.epochs):
            order = train_idx[list(sampler)]
            batch_losses = []
            for start in range(0, order.shape[0], config.batch_size):
                batch = order[start : start + config.batch_size]
                optimizer.zero_grad()
                logits = model(images[batch])
                loss = loss_fn(logits, targets[batch])
                loss_value = float(loss.detach())
                if not math.isfinite(loss_value):
                    raise TrainingDiverged(
                        {
                            "epoch": epoch,
                            "batch": start // config.batch_size,
                            "loss": loss_value,
                            "epoch_losses": epoch_losses,
                            "config": asdict(config),
                        }
                    )
                loss.backward()
                optimizer.step()
                batch_losses.append(loss_value)
            epoch_losses.append(float(np.mean(batch_losses)))

        model.eval()
        with torch.no_grad():
            scores = torch.sigmoid(model(images[test_idx])).numpy().astype(np.float64)

    test_labels = labels[test_idx]
    value = auroc(scores, test_labels)
    predictions_csv = write_predictions_csv([sampled[i] for i in test_idx], scores, test_labels)
    report = {
        "auroc": value,
        "backbone": config.backbone,
        "pretrained": pretrained_loaded,
        "n_train": int(train_idx.shape[0]),
        "n_test": int(test_idx.shape[0]),
        "epoch_losses": epoch_losses,
        "config": asdict(config),
    }
    return DiscriminatorResult(auroc=value, predictions_csv=predictions_csv, report=report)
