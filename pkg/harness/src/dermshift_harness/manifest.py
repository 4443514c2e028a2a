"""Group-manifest JSON reader: the dataset-membership contract shared with dermshift.

The harness never imports the toolkit; it reads the manifest file format
directly and only needs the fields that define membership.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError

__all__ = ["GroupEntry", "read_group_manifest", "load_group_manifest", "select_group"]


@dataclass(frozen=True)
class GroupEntry:
    """One grouped dataset: its name, source archive and member images."""

    abbrev: str
    origin: str
    member_ids: tuple[str, ...]
    class_counts: dict[str, int]

    @property
    def n(self) -> int:
        return len(self.member_ids)


def read_group_manifest(text: str) -> list[GroupEntry]:
    try:
        payload = json.loads(text)
        return [
            GroupEntry(
                abbrev=str(item["abbrev"]),
                origin=str(item["origin"]),
                member_ids=tuple(str(i) for i in item["member_ids"]),
                class_counts={str(k): int(v) for k, v in item["class_counts"].items()},
            )
            for item in payload["groups"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"bad group manifest: {exc}") from None


def load_group_manifest(path: Path | str) -> list[GroupEntry]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"group manifest not found: {path}")
    return read_group_manifest(path.read_text())


def select_group(entries: list[GroupEntry], abbrev: str | None = None) -> GroupEntry:
    """Pick one group: by abbrev, or the only one when the manifest has a single group."""
    if abbrev is None:
        if len(entries) != 1:
            names = ", ".join(e.abbrev for e in entries)
            raise DataError(f"manifest holds {len(entries)} groups ({names}); pick one by abbrev")
        return entries[0]
    for entry in entries:
        if entry.abbrev == abbrev:
            return entry
    raise DataError(f"no group '{abbrev}' in manifest")
