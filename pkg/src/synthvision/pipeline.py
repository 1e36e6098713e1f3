"""Stage orchestration: seed-data, finetune, generate, curate, build-dataset,
train, evaluate.

Each stage reads the resolved config, writes its artifacts under run_dir,
and records completion in state.json so an interrupted pipeline resumes
from the last finished stage. One command holds the run_dir lock at a time.
"""

from __future__ import annotations

import json
import os
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .config import ConfigError
from .curation import CurationService, ReviewDecision
from .diffusion import Denoiser, DenoiserConfig, make_schedule
from .dreambooth import (
    FineTuneConfig, finetune, build_prior_set, load_diffusion_checkpoint,
    load_instance_dir,
)
from .generation import GenerationCampaign, PromptTemplate, run_campaign
from .images import load_image, save_image
from .manifest import (
    Manifest, SplitSpec, Split, build_training_set, load_manifest, save_manifest, stats,
)
from .superres import PairedUpsampler, degraded_pairs, load_upsampler, save_upsampler
from .text_encoder import TextEncoder, build_vocab
from .toydata import quality_score, write_guide_set, write_real_pool
from .vit import (
    TrainConfig, ViTConfig, load_classifier, predict_manifest, save_classifier,
    train_classifier,
)

STAGES = ("seed-data", "finetune", "generate", "curate", "build-dataset",
          "train", "evaluate")

STATE_FILENAME = "state.json"
LOCK_FILENAME = ".lock"
MANIFEST_FILENAME = "manifest.jsonl"


class StageError(Exception):
    pass


class StageAlreadyDone(StageError):
    def __init__(self, stage: str):
        super().__init__(
            f"stage {stage!r} already completed in this run_dir; "
            "pass --overwrite to redo it"
        )


def _state_path(run_dir: Path) -> Path:
    return run_dir / STATE_FILENAME


def read_state(run_dir: str | Path) -> dict:
    path = _state_path(Path(run_dir))
    if not path.is_file():
        return {"completed": {}}
    return json.loads(path.read_text(encoding="utf-8"))


def mark_completed(run_dir: str | Path, stage: str) -> None:
    from .manifest import utc_now_iso

    run_dir = Path(run_dir)
    state = read_state(run_dir)
    state["completed"][stage] = utc_now_iso()
    _state_path(run_dir).write_text(json.dumps(state, indent=2), encoding="utf-8")


def clear_completed(run_dir: str | Path, stage: str) -> None:
    run_dir = Path(run_dir)
    state = read_state(run_dir)
    state["completed"].pop(stage, None)
    _state_path(run_dir).write_text(json.dumps(state, indent=2), encoding="utf-8")


def is_completed(run_dir: str | Path, stage: str) -> bool:
    return stage in read_state(run_dir)["completed"]


@contextmanager
def run_lock(run_dir: str | Path):
    """Exclusive per-run_dir lock; concurrent commands fail fast."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    lock = run_dir / LOCK_FILENAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise StageError(
            f"run_dir is locked by another command ({lock}); remove the file if stale"
        ) from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _guard(config: dict, stage: str, overwrite: bool) -> None:
    run_dir = Path(config["run_dir"])
    if is_completed(run_dir, stage):
        if not overwrite:
            raise StageAlreadyDone(stage)
        clear_completed(run_dir, stage)


def _manifest_path(config: dict) -> Path:
    return Path(config["run_dir"]) / MANIFEST_FILENAME


def _denoiser_config(config: dict) -> DenoiserConfig:
    d = config["diffusion"]
    return DenoiserConfig(
        channels=d["channels"], image_size=d["image_size"],
        hidden=tuple(d["hidden"]), emb_dim=d["emb_dim"], cond_dim=d["cond_dim"],
    )


def _campaign(config: dict) -> GenerationCampaign:
    c = config["campaign"]
    templates = [PromptTemplate(t["prompt_id"], t["text"], int(t["n_variants"]))
                 for t in c["templates"]]
    return GenerationCampaign(templates=templates, base_seed=int(c["base_seed"]),
                              output_dir=c["output_dir"])


def _finetune_config(config: dict) -> FineTuneConfig:
    f = dict(config["finetune"])
    f.setdefault("seed", config["seed"])
    return FineTuneConfig(**f)


def stage_seed_data(config: dict, overwrite: bool = False) -> Path:
    """Write the toy guide set, the real pool, and the initial manifest.

    With toy generation disabled this validates that the operator supplied
    an instance directory and an initial manifest instead.
    """
    _guard(config, "seed-data", overwrite)
    run_dir = Path(config["run_dir"])
    data_root = Path(config["data_root"])
    toy = config["toy"]
    manifest_path = _manifest_path(config)
    if toy["enabled"]:
        write_guide_set(
            data_root / config["instance_dir"], toy["guide_count"],
            toy["guide_size"], config["seed"], config["identifier_token"],
        )
        records = write_real_pool(
            data_root, toy["real_pos"], toy["real_neg"], toy["real_size"],
            config["seed"] + 1,
        )
        save_manifest(Manifest(records=records), manifest_path)
    else:
        instance_dir = data_root / config["instance_dir"]
        if not instance_dir.is_dir():
            raise ConfigError(f"instance directory not found: {instance_dir}")
        initial = config.get("initial_manifest")
        if not initial or not Path(initial).is_file():
            raise ConfigError(
                "toy data generation is disabled; set initial_manifest to an "
                "existing manifest of real records"
            )
        save_manifest(load_manifest(initial), manifest_path)
    mark_completed(run_dir, "seed-data")
    return manifest_path


def _all_prompt_texts(config: dict, instance_prompts: list[str]) -> list[str]:
    texts = list(instance_prompts)
    texts.append(config["class_prompt"])
    texts.extend(t["text"] for t in config["campaign"]["templates"])
    return texts


def stage_finetune(config: dict, overwrite: bool = False) -> Path:
    """Fine-tune the diffusion model (and the upsampler when enabled)."""
    _guard(config, "finetune", overwrite)
    run_dir = Path(config["run_dir"])
    data_root = Path(config["data_root"])
    out_dir = run_dir / "finetune"
    ft = _finetune_config(config)
    dcfg = _denoiser_config(config)

    instance_dir = data_root / config["instance_dir"]
    if not instance_dir.is_dir():
        raise ConfigError(f"instance directory not found: {instance_dir}")
    instance_set = load_instance_dir(
        instance_dir, dcfg.image_size, config["identifier_token"], dcfg.channels,
    )

    vocab = build_vocab(_all_prompt_texts(config, instance_set.prompts),
                        config["identifier_token"])
    import torch
    torch.manual_seed(config["seed"])
    denoiser = Denoiser(dcfg)
    text_encoder = TextEncoder(vocab, token_dim=dcfg.cond_dim, cond_dim=dcfg.cond_dim,
                               seed=config["seed"])
    schedule = make_schedule(config["diffusion"]["kind"], config["diffusion"]["T"])

    prior_set = None
    if ft.prior_weight > 0 and ft.prior_set_size > 0:
        prior_set = build_prior_set(
            denoiser, text_encoder, schedule, config["class_prompt"],
            ft.prior_set_size, config["seed"] + 101,
        )
        prior_dir = data_root / "prior"
        for i, image in enumerate(prior_set.images):
            save_image(image, prior_dir / f"prior_{i:04d}.png")

    result = finetune(ft, instance_set, prior_set, denoiser, text_encoder,
                      schedule, out_dir)

    if config["superres"]["enabled"]:
        sr = config["superres"]
        high = np.stack([
            load_image(p, size=dcfg.image_size * sr["scale"], channels=dcfg.channels)
            for p in sorted(instance_dir.glob("*.png"))
        ])
        low, high = degraded_pairs(high, sr["scale"],
                                   noise_sigmas=tuple(sr.get("noise_sigmas", (0.0, 0.1, 0.2, 0.3))),
                                   seed=config["seed"] + 7)
        upsampler = PairedUpsampler(hidden=sr["hidden"], steps=sr["steps"],
                                    lr=sr["lr"], seed=config["seed"])
        upsampler.fit(low, high)
        save_upsampler(upsampler, out_dir / "superres.bin")

    mark_completed(run_dir, "finetune")
    return result.final_checkpoint


def _load_models(config: dict):
    run_dir = Path(config["run_dir"])
    ckpt = run_dir / "finetune" / "ckpt_final.bin"
    if not ckpt.is_file():
        raise ConfigError(f"no final checkpoint at {ckpt}; run finetune first")
    denoiser, text_encoder, schedule = load_diffusion_checkpoint(ckpt)
    upsampler = None
    sr_path = run_dir / "finetune" / "superres.bin"
    if config["superres"]["enabled"] and sr_path.is_file():
        upsampler = load_upsampler(sr_path)
    return denoiser, text_encoder, schedule, upsampler


def stage_generate(config: dict, overwrite: bool = False) -> Path:
    """Run the prompt campaign and merge new pending records into the manifest."""
    _guard(config, "generate", overwrite)
    run_dir = Path(config["run_dir"])
    denoiser, text_encoder, schedule, upsampler = _load_models(config)
    campaign = _campaign(config)
    manifest_path = _manifest_path(config)
    manifest = load_manifest(manifest_path) if manifest_path.is_file() else Manifest()

    result = run_campaign(
        denoiser, text_encoder, schedule, campaign, config["data_root"],
        upsampler=upsampler,
        min_variants=config["campaign"]["min_variants"],
        max_variants=config["campaign"]["max_variants"],
        report_path=run_dir / "campaign_report.json",
    )
    if result.failures:
        raise StageError(
            f"{len(result.failures)} generation jobs failed; see campaign_report.json"
        )
    fresh = [r for r in result.records if r.id not in manifest.ids()]
    manifest.extend(fresh)
    save_manifest(manifest, manifest_path)
    mark_completed(run_dir, "generate")
    return manifest_path


def curation_service(config: dict) -> CurationService:
    manifest_path = _manifest_path(config)
    if not manifest_path.is_file():
        raise ConfigError(f"no manifest at {manifest_path}; run seed-data and generate first")
    manifest = load_manifest(manifest_path)
    return CurationService(manifest, Path(config["run_dir"]) / "curate")


def auto_curate(config: dict, service: CurationService) -> dict:
    """Scripted review oracle: scores every pending candidate and rejects the
    configured worst fraction (echoing the hand-review reject rate)."""
    data_root = Path(config["data_root"])
    fraction = float(config["curation"]["auto"]["reject_fraction"])
    # score the whole queue up front, then decide; next_pending ordering is
    # irrelevant here because every pending image gets a decision
    pending = []
    for record_id in service.pending_ids():
        record = service.manifest.by_id(record_id)
        image = load_image(data_root / record.path)
        pending.append((record_id, quality_score(image)))
    n_reject = int(round(fraction * len(pending)))
    ranked = sorted(pending, key=lambda item: (item[1], item[0]))
    reject_ids = {record_id for record_id, _ in ranked[:n_reject]}
    for record_id, score in sorted(pending):
        service.record_decision(ReviewDecision(
            image_id=record_id,
            decision="reject" if record_id in reject_ids else "accept",
            reviewer="auto-oracle",
            note=f"quality={score:.4f}",
        ))
    state = service.state()
    return {"rejected": state.rejected, "accepted": state.accepted, "total": state.total}


def stage_curate_auto(config: dict, overwrite: bool = False) -> dict:
    _guard(config, "curate", overwrite)
    run_dir = Path(config["run_dir"])
    service = curation_service(config)
    summary = auto_curate(config, service)
    curated = service.finalize(config["curation"]["target_accepted"])
    save_manifest(curated, run_dir / "curate" / "curated_manifest.jsonl")
    mark_completed(run_dir, "curate")
    return summary


def effective_manifest(config: dict) -> Manifest:
    """Initial manifest with the audit log's statuses folded in."""
    return curation_service(config).effective_manifest()


def stage_build_dataset(config: dict, overwrite: bool = False) -> Path:
    _guard(config, "build-dataset", overwrite)
    run_dir = Path(config["run_dir"])
    manifest = effective_manifest(config)
    spec = SplitSpec.from_dict(config["split"])
    built = build_training_set(manifest, spec, seed=config["seed"] + 3)
    out = save_manifest(built, run_dir / "dataset" / "built_manifest.jsonl")
    summary = stats(built).to_dict()
    (run_dir / "dataset" / "stats.json").write_text(
        json.dumps(summary, indent=2), encoding="utf-8")
    mark_completed(run_dir, "build-dataset")
    return out


def stage_train(config: dict, overwrite: bool = False) -> Path:
    _guard(config, "train", overwrite)
    run_dir = Path(config["run_dir"])
    built_path = run_dir / "dataset" / "built_manifest.jsonl"
    if not built_path.is_file():
        raise ConfigError(f"no built dataset at {built_path}; run build-dataset first")
    manifest = load_manifest(built_path)
    vit_config = ViTConfig(**config["vit"])
    train_config = TrainConfig(**{**config["train"], "seed": config["seed"] + 4})
    clf = train_classifier(manifest, config["data_root"], vit_config, train_config)
    out_dir = run_dir / "train"
    out_dir.mkdir(parents=True, exist_ok=True)
    model_path = save_classifier(clf, out_dir / "model.bin")
    with (out_dir / "history.csv").open("w", encoding="utf-8") as f:
        f.write("epoch,train_loss,val_accuracy\n")
        for row in clf.history_:
            f.write(f"{row['epoch']},{row['train_loss']:.6f},"
                    f"{row.get('val_accuracy', '')}\n")
    mark_completed(run_dir, "train")
    return model_path


def stage_evaluate(config: dict, overwrite: bool = False) -> dict:
    from .metrics import evaluate_predictions

    _guard(config, "evaluate", overwrite)
    run_dir = Path(config["run_dir"])
    model_path = run_dir / "train" / "model.bin"
    built_path = run_dir / "dataset" / "built_manifest.jsonl"
    if not model_path.is_file():
        raise ConfigError(f"no trained model at {model_path}; run train first")
    clf = load_classifier(model_path)
    manifest = load_manifest(built_path)
    preds = predict_manifest(clf, manifest, Split.TEST, config["data_root"])
    out_dir = run_dir / config["evaluation"]["output_dir"]
    preds.save_csv(out_dir / "predictions.csv")
    names = config["class_names"]
    cm, report, roc, ap, _ = evaluate_predictions(
        preds, out_dir, (names["positive"], names["negative"]))
    mark_completed(run_dir, "evaluate")
    return {
        "accuracy": report.accuracy,
        "auc": roc.auc,
        "average_precision": ap,
        "confusion_matrix": cm.to_dict(),
    }


def pipeline_stages(config: dict) -> list[str]:
    return list(STAGES)


def run_pipeline(config: dict, overwrite: bool = False) -> dict:
    """Run every stage in order, resuming past completed ones.

    Stops at curation when no auto-curation rule is configured and review
    work remains, telling the operator to run the curate command.
    """
    run_dir = Path(config["run_dir"])
    results: dict = {"stages_run": []}
    for stage in pipeline_stages(config):
        if is_completed(run_dir, stage) and not overwrite:
            continue
        if stage == "seed-data":
            stage_seed_data(config, overwrite)
        elif stage == "finetune":
            stage_finetune(config, overwrite)
        elif stage == "generate":
            stage_generate(config, overwrite)
        elif stage == "curate":
            if config["curation"]["auto"]["enabled"]:
                results["curation"] = stage_curate_auto(config, overwrite)
            else:
                results["paused_at"] = "curate"
                results["message"] = (
                    "pipeline paused for human review: run `synthvision curate` "
                    "against this run_dir, finish the queue, then rerun the pipeline"
                )
                return results
        elif stage == "build-dataset":
            stage_build_dataset(config, overwrite)
        elif stage == "train":
            stage_train(config, overwrite)
        elif stage == "evaluate":
            results["evaluation"] = stage_evaluate(config, overwrite)
        results["stages_run"].append(stage)
    return results
