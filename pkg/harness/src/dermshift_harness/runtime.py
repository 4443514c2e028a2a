"""Process-level training slot: one training job per process, enforced."""

from __future__ import annotations

import threading
from contextlib import contextmanager

from .errors import ConcurrentTraining

_TRAIN_LOCK = threading.Lock()


@contextmanager
def training_slot(job: str):
    """Claim the process's single training slot for the duration of a job."""
    if not _TRAIN_LOCK.acquire(blocking=False):
        raise ConcurrentTraining(f"cannot start '{job}': a training job is already running in this process")
    try:
        yield
    finally:
        _TRAIN_LOCK.release()
