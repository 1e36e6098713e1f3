import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from synthvision.diffusion import Denoiser, DenoiserConfig, make_schedule
from synthvision.manifest import (
    ClassLabel, CurationStatus, ImageRecord, Manifest, Provenance, Split,
)
from synthvision.text_encoder import TextEncoder, build_vocab


TINY_DENOISER = DenoiserConfig(channels=1, image_size=8, hidden=(4,), emb_dim=4, cond_dim=3)


@pytest.fixture
def tiny_denoiser():
    torch.manual_seed(0)
    return Denoiser(TINY_DENOISER)


@pytest.fixture
def tiny_schedule():
    return make_schedule("linear", 10)


@pytest.fixture
def tiny_text_encoder():
    vocab = build_vocab(["a sks patch with nodules", "plain patch"], "sks")
    return TextEncoder(vocab, token_dim=4, cond_dim=3, seed=0)


def real_record(i: int, label=ClassLabel.NEGATIVE, split=Split.UNASSIGNED) -> ImageRecord:
    return ImageRecord(
        id=f"real-{label.value}-{i}",
        path=f"real/{label.value}_{i}.png",
        class_label=label,
        split=split,
        provenance=Provenance.REAL,
        curation_status=CurationStatus.NOT_APPLICABLE,
        created_at="2024-01-01T00:00:00+00:00",
    )


def synth_record(i: int, status=CurationStatus.PENDING, prompt="p0",
                 label=ClassLabel.POSITIVE) -> ImageRecord:
    return ImageRecord(
        id=f"synth-{prompt}-{i}",
        path=f"synthetic/{prompt}_{i}.png",
        class_label=label,
        split=Split.UNASSIGNED,
        provenance=Provenance.SYNTHETIC,
        prompt_id=prompt,
        seed=i,
        curation_status=status,
        created_at="2024-01-01T00:00:00+00:00",
    )


def paper_scale_manifest() -> Manifest:
    """Matches the reference dataset: 500 accepted synthetics + real pools."""
    records = [synth_record(i, CurationStatus.ACCEPTED) for i in range(500)]
    records += [synth_record(500 + i, CurationStatus.REJECTED) for i in range(130)]
    records += [real_record(i, ClassLabel.NEGATIVE) for i in range(500 + 50 + 70)]
    records += [real_record(i, ClassLabel.POSITIVE) for i in range(50 + 70)]
    return Manifest(records=records)
