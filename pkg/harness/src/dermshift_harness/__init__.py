"""Training harness companion to the dermshift toolkit.

Exchanges files with the toolkit instead of importing it: group manifests
come in, embedding and prediction CSVs go out. Three jobs live here —
embedding extraction, domain-discriminator training, and the source-only
vs DANN comparison.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConcurrentTraining,
    ConfigError,
    DataError,
    DecodeError,
    HarnessError,
    LeakageDetected,
    MissingImage,
    MissingLabel,
    TrainingDiverged,
)
