"""Exception hierarchy for the training harness.

Mirrors the toolkit's taxonomy so the CLI maps errors the same way:
configuration problems exit 1, data/runtime problems exit 2.
"""

from __future__ import annotations


class HarnessError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(HarnessError):
    """Bad run configuration or CLI usage (exit code 1)."""


class DataError(HarnessError):
    """Invalid input data (exit code 2)."""


class MissingImage(DataError):
    def __init__(self, image_id: str, tried):
        super().__init__(f"no image file for {image_id} (tried: {', '.join(tried)})")
        self.image_id = image_id
        self.tried = tuple(tried)


class DecodeError(DataError):
    pass


class MissingLabel(DataError):
    pass


class LeakageDetected(DataError):
    def __init__(self, dataset: str, image_ids):
        ids = sorted(image_ids)
        shown = ", ".join(ids[:5]) + ("..." if len(ids) > 5 else "")
        super().__init__(f"source and target '{dataset}' share {len(ids)} image(s): {shown}")
        self.dataset = dataset
        self.image_ids = tuple(ids)


class TrainingDiverged(HarnessError):
    """Loss became non-finite; carries a report of where training stopped."""

    def __init__(self, report: dict):
        super().__init__(
            f"loss became non-finite at epoch {report.get('epoch')}, "
            f"batch {report.get('batch')} (loss={report.get('loss')})"
        )
        self.report = dict(report)


class ConcurrentTraining(HarnessError):
    """A second training job was started in a process that already runs one."""
