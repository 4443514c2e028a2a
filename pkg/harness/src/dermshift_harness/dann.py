"""Source-only vs DANN comparison: one task-AUROC row per (dataset, seed, method).

Both methods share the same feature trunk and label head and start from the
same seeded initialization; DANN adds a domain head behind a gradient-reversal
layer so the trunk is pushed toward domain-invariant features. Aggregation of
the emitted rows is left downstream — this module only trains and scores.

Hyperparameters are the common DANN defaults (SGD with momentum, coefficient
ramp 2/(1+exp(-10p))-1 over training progress p) and are recorded verbatim in
the run manifest.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .errors import ConfigError, DataError, LeakageDetected, MissingLabel, TrainingDiverged
from .extract import load_image_batch
from .io import write_comparison_csv, write_predictions_csv
from .manifest import GroupEntry, load_group_manifest, select_group
from .runtime import training_slot
from .stats import auroc

__all__ = [
    "grad_reverse",
    "grl_lambda",
    "DannConfig",
    "AdaptationRunSpec",
    "DannRunResult",
    "compare_methods",
    "run_dann_comparison",
    "read_labels_csv",
]

METHODS = ("source_only", "dann")


class GradientReversal(torch.autograd.Function):
    """Identity on the forward pass; scales gradients by -lambda on the way back."""

    @staticmethod
    def forward(ctx, x, lam: float):
        ctx.lam = float(lam)
        return x.view_as(x)

    @staticmethod
    def backward(ctx, grad_output):
        return grad_output.neg() * ctx.lam, None


def grad_reverse(x: torch.Tensor, lam: float = 1.0) -> torch.Tensor:
    return GradientReversal.apply(x, lam)


def grl_lambda(progress: float, gamma: float = 10.0) -> float:
    """Coefficient ramp over training progress p in [0, 1]."""
    return 2.0 / (1.0 + math.exp(-gamma * float(progress))) - 1.0


@dataclass(frozen=True)
class DannConfig:
    """Shared training hyperparameters, recorded verbatim in the run manifest."""

    epochs: int = 20
    batch_size: int = 32
    lr: float = 0.01
    momentum: float = 0.9
    hidden_dim: int = 64
    grl_gamma: float = 10.0
    grl_lambda: float | None = None  # constant override; None uses the ramp
    input_size: int = 16

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.hidden_dim < 1:
            raise ConfigError("epochs, batch_size and hidden_dim must be positive")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")

    def lambda_at(self, progress: float) -> float:
        if self.grl_lambda is not None:
            return float(self.grl_lambda)
        return grl_lambda(progress, self.grl_gamma)


@dataclass(frozen=True)
class AdaptationRunSpec:
    """What to train on: manifests, labels, image root, seeds and hyperparameters."""

    source_manifest: str | Path
    target_manifests: tuple[str | Path, ...]
    labels_csv: str | Path
    image_dir: str | Path
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    source_abbrev: str | None = None
    target_abbrevs: tuple[str | None, ...] | None = None
    config: DannConfig = field(default_factory=DannConfig)

    def __post_init__(self):
        if not self.target_manifests:
            raise ConfigError("at least one target manifest is required")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.target_abbrevs is not None and len(self.target_abbrevs) != len(self.target_manifests):
            raise ConfigError("target_abbrevs must align with target_manifests")


@dataclass(frozen=True)
class DannRunResult:
    rows: tuple[tuple[str, int, str, float], ...]
    comparison_csv: str
    run_manifest: dict
    predictions: dict[tuple[str, int, str], str]


class _FeatureNet(torch.nn.Module):
    def __init__(self, in_dim: int, hidden_dim: int):
        super().__init__()
        self.net = torch.nn.Sequential(
            torch.nn.Linear(in_dim, hidden_dim),
            torch.nn.ReLU(),
            torch.nn.Linear(hidden_dim, hidden_dim),
            torch.nn.ReLU(),
        )

    def forward(self, x):
        return self.net(x)


def _domain_head(hidden_dim: int) -> torch.nn.Module:
    return torch.nn.Sequential(
        torch.nn.Linear(hidden_dim, hidden_dim // 2),
        torch.nn.ReLU(),
        torch.nn.Linear(hidden_dim // 2, 1),
    )


def _train_once(
    source_x: torch.Tensor,
    source_y: torch.Tensor,
    target_x: torch.Tensor,
    method: str,
    seed: int,
    config: DannConfig,
) -> np.ndarray:
    """Train one method from a seeded init; returns sigmoid scores on the target set."""
    torch.manual_seed(seed)
    features = _FeatureNet(source_x.shape[1], config.hidden_dim)
    label_head = torch.nn.Linear(config.hidden_dim, 1)
    modules = [features, label_head]
    domain_head = None
    if method == "dann":
        domain_head = _domain_head(config.hidden_dim)
        modules.append(domain_head)
    params = [p for m in modules for p in m.parameters()]
    optimizer = torch.optim.SGD(params, lr=config.lr, momentum=config.momentum)
    loss_fn = torch.nn.BCEWithLogitsLoss()
    generator = torch.Generator().manual_seed(seed)

    n_source = source_x.shape[0]
    n_target = target_x.shape[0]
    steps_per_epoch = math.ceil(n_source / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    step = 0
    for epoch in range(config.epochs):
        order = torch.randperm(n_source, generator=generator)
        for start in range(0, n_source, config.batch_size):
            batch = order[start : start + config.batch_size]
            optimizer.zero_grad()
            hidden = features(source_x[batch])
            logits = label_head(hidden).squeeze(1)
            loss = loss_fn(logits, source_y[batch])
            if method == "dann":
                target_batch = torch.randint(0, n_target, (batch.shape[0],), generator=generator)
                target_hidden = features(target_x[target_batch])
                domain_in = torch.cat([hidden, target_hidden], dim=0)
                domain_labels = torch.cat(
                    [torch.zeros(hidden.shape[0]), torch.ones(target_hidden.shape[0])]
                )
                lam = config.lambda_at(step / max(1, total_steps - 1))
                domain_logits = domain_head(grad_reverse(domain_in, lam)).squeeze(1)
                loss = loss + loss_fn(domain_logits, domain_labels)
            loss_value = float(loss.detach())
            if not math.isfinite(loss_value):
                raise TrainingDiverged(
                    {
                        "epoch": epoch,
                        "batch": start // config.batch_size,
                        "loss": loss_value,
                        "method": method,
                        "seed": seed,
                        "config": asdict(config),
                    }
                )
            loss.backward()
            optimizer.step()
            step += 1

    features.eval()
    label_head.eval()
    with torch.no_grad():
        scores = torch.sigmoid(label_head(features(target_x)).squeeze(1))
    return scores.numpy().astype(np.float64)


def compare_methods(
    source_x,
    source_y,
    target_x,
    target_y,
    seed: int,
    config: DannConfig | None = None,
) -> dict[str, tuple[float, np.ndarray]]:
    """Train source-only and DANN from the same init; returns method -> (auroc, scores)."""
    config = config or DannConfig()
    source_x = torch.as_tensor(np.asarray(source_x, dtype=np.float32))
    target_x = torch.as_tensor(np.asarray(target_x, dtype=np.float32))
    source_y = torch.as_tensor(np.asarray(source_y, dtype=np.float32))
    target_labels = np.asarray(target_y, dtype=np.int64)
    out = {}
    for method in METHODS:
        scores = _train_once(source_x, source_y, target_x, method, seed, config)
        out[method] = (auroc(scores, target_labels), scores)
    return out


def read_labels_csv(text: str) -> dict[str, int]:
    """image_id,score,label rows; the score column rides along unused."""
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise DataError("empty labels CSV")
    labels = {}
    try:
        for row in rows:
            labels[row["image_id"]] = int(row["label"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"bad labels CSV: {exc}") from None
    if not all(v in (0, 1) for v in labels.values()):
        raise DataError("labels must be 0 or 1")
    return labels


def _labels_for(group: GroupEntry, labels: dict[str, int]) -> np.ndarray:
    missing = [i for i in group.member_ids if i not in labels]
    if missing:
        shown = ", ".join(missing[:5]) + ("..." if len(missing) > 5 else "")
        raise MissingLabel(f"group '{group.abbrev}' has {len(missing)} unlabeled image(s): {shown}")
    return np.asarray([labels[i] for i in group.member_ids], dtype=np.int64)


def _flat_features(image_dir, group: GroupEntry, input_size: int) -> torch.Tensor:
    images = load_image_batch(image_dir, group.member_ids, input_size)
    return images.reshape(images.shape[0], -1)


def run_dann_comparison(spec: AdaptationRunSpec) -> DannRunResult:
    """Every (target, seed, method) combination, one AUROC row each."""
    source = select_group(load_group_manifest(spec.source_manifest), spec.source_abbrev)
    target_abbrevs = spec.target_abbrevs or (None,) * len(spec.target_manifests)
    targets = [
        select_group(load_group_manifest(path), abbrev)
        for path, abbrev in zip(spec.target_manifests, target_abbrevs)
    ]

    source_members = set(source.member_ids)
    for target in targets:
        overlap = source_members.intersection(target.member_ids)
        if overlap:
            raise LeakageDetected(target.abbrev, overlap)

    labels_path = Path(spec.labels_csv)
    if not labels_path.is_file():
        raise DataError(f"labels CSV not found: {labels_path}")
    labels = read_labels_csv(labels_path.read_text())

    config = spec.config
    source_x = _flat_features(spec.image_dir, source, config.input_size)
    source_y = torch.as_tensor(_labels_for(source, labels).astype(np.float32))

    rows = []
    predictions = {}
    with training_slot("dann-comparison"):
        for target in targets:
            target_x = _flat_features(spec.image_dir, target, config.input_size)
            target_y = _labels_for(target, labels)
            for seed in spec.seeds:
                for method in METHODS:
                    scores = _train_once(source_x, source_y, target_x, method, seed, config)
                    rows.append((target.abbrev, int(seed), method, auroc(scores, target_y)))
                    predictions[(target.abbrev, int(seed), method)] = write_predictions_csv(
                        target.member_ids, scores, target_y
                    )

    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    run_manifest = {
        "source": {"abbrev": source.abbrev, "n": source.n},
        "targets": [{"abbrev": t.abbrev, "n": t.n} for t in targets],
        "seeds": list(spec.seeds),
        "methods": list(METHODS),
        "hyperparameters": asdict(config),
        "lambda_schedule": (
            f"constant {config.grl_lambda}"
            if config.grl_lambda is not None
            else f"2/(1+exp(-{config.grl_gamma}*p))-1 over training progress p"
        ),
        "optimizer": f"SGD(lr={config.lr}, momentum={config.momentum})",
        "torch_version": torch.__version__,
    }
    return DannRunResult(
        rows=tuple(rows),
        comparison_csv=write_comparison_csv(rows),
        run_manifest=run_manifest,
        predictions=predictions,
    )
