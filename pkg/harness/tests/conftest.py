"""Shared fixtures: tiny synthetic image pools and group-manifest files."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image


def make_images(image_dir: Path, prefix: str, n: int, base: float, seed: int, size: int = 32):
    """Write n noisy RGB images around a base gray level; returns their ids."""
    image_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    ids = []
    for i in range(n):
        pixels = np.clip(rng.normal(base, 0.12, size=(size, size, 3)), 0.0, 1.0)
        image_id = f"{prefix}_{i:04d}"
        Image.fromarray((pixels * 255).astype(np.uint8), mode="RGB").save(
            image_dir / f"{image_id}.png"
        )
        ids.append(image_id)
    return ids


def write_group_manifest(path: Path, groups: list[dict]) -> Path:
    """Write a minimal group manifest in the shared JSON layout."""
    payload = {"groups": []}
    for group in groups:
        payload["groups"].append(
            {
                "abbrev": group["abbrev"],
                "origin": group.get("origin", "SYN"),
                "rule": {"age_cond": "gt30", "bucket": None, "suffix": ""},
                "flags": {"biological_shift": False, "technical_shift": False},
                "class_counts": group.get("class_counts", {}),
                "member_ids": list(group["member_ids"]),
            }
        )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def color_blobs(n: int, seed: int, angle_deg: float = 0.0, brightness: float = 0.0,
                noise: float = 0.04, sep: float = 0.15):
    """Two-class blobs in mean-color space; the class axis rotates R->G by angle."""
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n)
    theta = np.deg2rad(angle_deg)
    axis = np.array([np.cos(theta), np.sin(theta), 0.0])
    base = np.array([0.5, 0.5, 0.5]) + brightness
    x = base + np.outer(np.where(y == 1, sep, -sep), axis)
    x = x + rng.normal(0.0, noise, size=(n, 3))
    return x.astype(np.float32), y


@pytest.fixture(scope="session")
def small_pools(tmp_path_factory):
    """Three 60-image pools: two at the same gray level, one strongly brightened."""
    root = tmp_path_factory.mktemp("pools")
    return {
        "dir": root,
        "a": make_images(root, "a", 60, 0.45, seed=1),
        "b": make_images(root, "b", 60, 0.45, seed=2),
        "bright": make_images(root, "bright", 60, 0.75, seed=3),
    }
