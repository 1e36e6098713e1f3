"""Procedural toy image modality for desk-scale runs.

Two separable classes: "nodule" images carry bright warm blobs on a dark
background, "plain" images are smooth cool gradients. Class signal lives in
both color statistics and local structure, so a small from-scratch
generative model can reproduce it well enough to train a classifier on.
Also home to the quality heuristic the auto-curation oracle scores
candidates with (brightness, contrast, foreground area).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .images import save_image
from .manifest import ClassLabel, CurationStatus, ImageRecord, Provenance, Split

_ADJECTIVES = ["small", "large", "tight", "loose", "faint", "vivid"]
_POSITIONS = ["near the center", "toward the edge", "across the middle", "in one corner"]


def _background(rng: np.random.Generator, size: int, base: float,
                tint: tuple[float, float, float], noise: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32) / max(size - 1, 1)
    angle = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(angle) * xx + np.sin(angle) * yy) * rng.uniform(0.05, 0.2)
    img = np.zeros((size, size, 3), dtype=np.float32)
    for ch in range(3):
        img[:, :, ch] = base + tint[ch] + ramp
    img += rng.normal(0.0, noise, size=img.shape).astype(np.float32)
    return img


def toy_positive(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """Dark warm background with 1-3 bright warm nodules, in [-1, 1]."""
    base = rng.uniform(-0.65, -0.45)
    img = _background(rng, size, base, (0.10, -0.02, -0.12), noise=0.03)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    for _ in range(rng.integers(1, 4)):
        cy, cx = rng.uniform(0.25, 0.75, size=2) * size
        radius = size * rng.uniform(0.12, 0.26)
        amp = rng.uniform(0.8, 1.2)
        bump = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * radius ** 2)).astype(np.float32)
        img[:, :, 0] += amp * bump
        img[:, :, 1] += 0.5 * amp * bump
        img[:, :, 2] += 0.15 * amp * bump
    return np.clip(img, -1.0, 1.0)


def toy_negative(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """Smooth cool gradient with no structure, in [-1, 1]."""
    base = rng.uniform(-0.45, -0.25)
    img = _background(rng, size, base, (-0.15, 0.05, 0.20), noise=0.03)
    return np.clip(img, -1.0, 1.0)


def quality_score(image: np.ndarray) -> float:
    """Candidate quality in [0, 1] from brightness, contrast, and the
    warm-bright foreground fraction. Higher is more nodule-like."""
    arr = np.asarray(image, dtype=np.float32)
    r, b = arr[:, :, 0], arr[:, :, 2]
    foreground = float(((r > -0.1) & ((r - b) > 0.25)).mean())
    contrast = float(r.std())
    brightness = float(r.mean())

    def band(x, lo0, lo1, hi1, hi0):
        if x <= lo0 or x >= hi0:
            return 0.0
        if x < lo1:
            return (x - lo0) / (lo1 - lo0)
        if x > hi1:
            return (hi0 - x) / (hi0 - hi1)
        return 1.0

    return (
        band(foreground, 0.005, 0.03, 0.35, 0.65)
        + band(contrast, 0.04, 0.12, 0.60, 0.90)
        + band(brightness, -0.95, -0.75, 0.05, 0.40)
    ) / 3.0


def toy_prompt(rng: np.random.Generator, identifier_token: str) -> str:
    k = rng.integers(1, 4)
    adj = _ADJECTIVES[rng.integers(0, len(_ADJECTIVES))]
    pos = _POSITIONS[rng.integers(0, len(_POSITIONS))]
    return f"a {adj} cluster of {k} bright nodules {pos} of a {identifier_token} patch"


def guide_prompt(index: int, identifier_token: str) -> str:
    """Deterministic prompt for guide image `index`, cycling through the full
    adjective/position/count vocabulary so every word gets trained."""
    k = index % 3 + 1
    adj = _ADJECTIVES[index % len(_ADJECTIVES)]
    pos = _POSITIONS[index % len(_POSITIONS)]
    return f"a {adj} cluster of {k} bright nodules {pos} of a {identifier_token} patch"


def write_guide_set(directory: str | Path, n: int, size: int, seed: int,
                    identifier_token: str) -> Path:
    """Write n guide images with same-stem .txt prompt files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(n):
        image = toy_positive(rng, size)
        save_image(image, directory / f"guide_{i:03d}.png")
        (directory / f"guide_{i:03d}.txt").write_text(
            guide_prompt(i, identifier_token) + "\n", encoding="utf-8")
    return directory


def write_real_pool(data_root: str | Path, n_pos: int, n_neg: int, size: int,
                    seed: int, subdir: str = "real") -> list[ImageRecord]:
    """Write the 'real' image pool and return its manifest records."""
    data_root = Path(data_root)
    rng = np.random.default_rng(seed)
    records: list[ImageRecord] = []
    for label, maker, count, stem in (
        (ClassLabel.POSITIVE, toy_positive, n_pos, "pos"),
        (ClassLabel.NEGATIVE, toy_negative, n_neg, "neg"),
    ):
        for i in range(count):
            rel = f"{subdir}/{stem}_{i:04d}.png"
            save_image(maker(rng, size), data_root / rel)
            records.append(ImageRecord(
                id=f"real-{stem}-{i:04d}",
                path=rel,
                class_label=label,
                split=Split.UNASSIGNED,
                provenance=Provenance.REAL,
                curation_status=CurationStatus.NOT_APPLICABLE,
            ))
    return records
