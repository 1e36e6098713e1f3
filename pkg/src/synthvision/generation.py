"""Prompt campaigns: seeded, provenance-tagged synthetic candidates.

Each template yields n_variants images sampled one per derived seed
(base_seed + variant index), so any image can be regenerated bit-exactly
from its (prompt_id, seed) pair. New records enter the manifest as
unassigned and pending review.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .diffusion import Denoiser, NoiseSchedule, images_to_tensor, sample, tensor_to_images
from .images import save_image
from .manifest import ClassLabel, CurationStatus, ImageRecord, Provenance, Split
from .superres import PairedUpsampler
from .text_encoder import TextEncoder


class CampaignError(Exception):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    prompt_id: str
    text: str
    n_variants: int

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"template {self.prompt_id!r} has empty text")
        if self.n_variants < 1:
            raise ValueError(f"template {self.prompt_id!r} must request >= 1 variants")


@dataclass
class GenerationCampaign:
    templates: list[PromptTemplate]
    base_seed: int
    output_dir: str = "synthetic"

    def validate(self, min_variants: int = 1, max_variants: int = 50) -> None:
        seen = set()
        for t in self.templates:
            if t.prompt_id in seen:
                raise CampaignError(f"duplicate prompt_id {t.prompt_id!r}")
            seen.add(t.prompt_id)
            if not (min_variants <= t.n_variants <= max_variants):
                raise CampaignError(
                    f"template {t.prompt_id!r} requests {t.n_variants} variants, "
                    f"outside [{min_variants}, {max_variants}]"
                )

    @classmethod
    def from_file(cls, path: str | Path) -> "GenerationCampaign":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        templates = [PromptTemplate(t["prompt_id"], t["text"], int(t["n_variants"]))
                     for t in payload["templates"]]
        return cls(templates=templates, base_seed=int(payload["base_seed"]),
                   output_dir=payload.get("output_dir", "synthetic"))

    def to_file(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "templates": [
                {"prompt_id": t.prompt_id, "text": t.text, "n_variants": t.n_variants}
                for t in self.templates
            ],
            "base_seed": self.base_seed,
            "output_dir": self.output_dir,
        }
        path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
        return path


@dataclass
class CampaignResult:
    records: list[ImageRecord]
    per_prompt: dict[str, int]
    failures: list[dict]
    wall_time_s: float

    def report(self) -> dict:
        return {
            "total": len(self.records),
            "per_prompt": self.per_prompt,
            "failures": self.failures,
            "wall_time_s": round(self.wall_time_s, 3),
        }


def run_job(
    denoiser: Denoiser,
    text_encoder: TextEncoder,
    schedule: NoiseSchedule,
    template: PromptTemplate,
    base_seed: int,
    data_root: str | Path,
    output_dir: str = "synthetic",
    upsampler: PairedUpsampler | None = None,
) -> list[ImageRecord]:
    """Generate template.n_variants images and register them as pending.

    Variant i uses seed base_seed + i; sampling (and the optional
    upsampling pass) is deterministic, so rerunning a job writes
    byte-identical files.
    """
    data_root = Path(data_root)
    cond = text_encoder(template.text).detach()
    records: list[ImageRecord] = []
    for i in range(template.n_variants):
        seed = base_seed + i
        batch = sample(denoiser, schedule, cond, seed, n=1)
        image = tensor_to_images(batch)
        if upsampler is not None:
            image = upsampler.transform(image)
        rel_path = f"{output_dir}/{template.prompt_id}_{seed}.png"
        save_image(image[0], data_root / rel_path)
        records.append(ImageRecord(
            id=f"{template.prompt_id}-{seed}",
            path=rel_path,
            class_label=ClassLabel.POSITIVE,
            split=Split.UNASSIGNED,
            provenance=Provenance.SYNTHETIC,
            prompt_id=template.prompt_id,
            seed=seed,
            curation_status=CurationStatus.PENDING,
        ))
    return records


def run_campaign(
    denoiser: Denoiser,
    text_encoder: TextEncoder,
    schedule: NoiseSchedule,
    campaign: GenerationCampaign,
    data_root: str | Path,
    upsampler: PairedUpsampler | None = None,
    min_variants: int = 1,
    max_variants: int = 50,
    report_path: str | Path | None = None,
) -> CampaignResult:
    """Run every template; keep successful jobs and report failures."""
    campaign.validate(min_variants, max_variants)
    start = time.monotonic()
    records: list[ImageRecord] = []
    per_prompt: dict[str, int] = {}
    failures: list[dict] = []
    for template in campaign.templates:
        try:
            job_records = run_job(
                denoiser, text_encoder, schedule, template,
                campaign.base_seed, data_root, campaign.output_dir, upsampler,
            )
        except Exception as e:  # keep completed jobs, report the rest
            failures.append({"prompt_id": template.prompt_id, "error": str(e)})
            continue
        records.extend(job_records)
        per_prompt[template.prompt_id] = len(job_records)
    result = CampaignResult(
        records=records,
        per_prompt=per_prompt,
        failures=failures,
        wall_time_s=time.monotonic() - start,
    )
    if report_path is not None:
        report_path = Path(report_path)
        report_path.parent.mkdir(parents=True, exist_ok=True)
        report_path.write_text(json.dumps(result.report(), indent=2), encoding="utf-8")
    return result
