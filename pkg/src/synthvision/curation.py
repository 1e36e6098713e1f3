"""Human-in-the-loop review backend over an append-only audit log.

Synthetic candidates start pending; every accept/reject (or correction via
``supersedes``) is appended to ``decisions.jsonl`` and never rewritten. The
effective status of an image is a pure fold over the log, so replaying it
from the initial manifest reproduces the exact service state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .manifest import (
    CurationStatus, ImageRecord, Manifest, Provenance, utc_now_iso,
)

DECISIONS_FILENAME = "decisions.jsonl"


class CurationError(Exception):
    pass


class UnknownImageError(CurationError):
    def __init__(self, image_id: str):
        super().__init__(f"unknown image id {image_id!r}")


class NotSyntheticError(CurationError):
    def __init__(self, image_id: str):
        super().__init__(f"image {image_id!r} is not synthetic; real images are not reviewed")


class SupersedesError(CurationError):
    pass


class PendingRemainingError(CurationError):
    def __init__(self, pending: int):
        self.pending = pending
        super().__init__(f"{pending} images still pending review")


class ShortfallError(CurationError):
    def __init__(self, accepted: int, target: int):
        self.accepted = accepted
        self.target = target
        self.shortfall = target - accepted
        super().__init__(
            f"only {accepted} accepted images, target {target} (shortfall {self.shortfall})"
        )


@dataclass(frozen=True)
class ReviewDecision:
    image_id: str
    decision: str  # "accept" | "reject"
    reviewer: str
    note: str | None = None
    decided_at: str = field(default_factory=utc_now_iso)
    supersedes: str | None = None
    id: str | None = None

    def __post_init__(self):
        if self.decision not in ("accept", "reject"):
            raise ValueError(f"decision must be accept or reject, got {self.decision!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ReviewDecision":
        return cls(
            image_id=d["image_id"],
            decision=d["decision"],
            reviewer=d.get("reviewer", ""),
            note=d.get("note"),
            decided_at=d.get("decided_at", utc_now_iso()),
            supersedes=d.get("supersedes"),
            id=d.get("id"),
        )


@dataclass(frozen=True)
class ReviewQueueState:
    pending: int
    accepted: int
    rejected: int
    total: int

    def to_dict(self) -> dict:
        return asdict(self)


class CurationService:
    """Serves the review queue and owns the append-only decision log.

    One service instance is the single writer for a review session. An
    existing ``decisions.jsonl`` in the run directory is replayed on
    startup, so restarts resume exactly where the log left off.
    """

    def __init__(self, manifest: Manifest, run_dir: str | Path):
        manifest.validate()
        self.manifest = manifest
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.run_dir / DECISIONS_FILENAME
        self._records = {r.id: r for r in manifest.records}
        self._status: dict[str, CurationStatus] = {}
        self._effective_decision: dict[str, str] = {}
        self.decisions: list[ReviewDecision] = []
        for r in manifest.records:
            if r.provenance is Provenance.SYNTHETIC:
                self._status[r.id] = r.curation_status
        if self.log_path.exists():
            for line in self.log_path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    self._apply(ReviewDecision.from_dict(json.loads(line)), validate=True)

    # -- queue -----------------------------------------------------------

    def pending_ids(self, prompt_id: str | None = None) -> list[str]:
        pending = []
        for image_id, status in self._status.items():
            if status is not CurationStatus.PENDING:
                continue
            record = self._records[image_id]
            if prompt_id is not None and record.prompt_id != prompt_id:
                continue
            pending.append(image_id)
        pending.sort(key=lambda i: (self._records[i].prompt_id or "", self._records[i].seed or 0))
        return pending

    def next_pending(self, prompt_id: str | None = None) -> ImageRecord | None:
        """First pending synthetic record by (prompt_id, seed), or None."""
        ids = self.pending_ids(prompt_id)
        return self._records[ids[0]] if ids else None

    # -- decisions ---------------------------------------------------------

    def _validate(self, d: ReviewDecision) -> None:
        if d.image_id not in self._records:
            raise UnknownImageError(d.image_id)
        if self._records[d.image_id].provenance is not Provenance.SYNTHETIC:
            raise NotSyntheticError(d.image_id)
        current = self._effective_decision.get(d.image_id)
        if current is None:
            if d.supersedes is not None:
                raise SupersedesError(
                    f"image {d.image_id!r} has no prior decision to supersede"
                )
        elif d.supersedes != current:
            raise SupersedesError(
                f"decision must supersede the effective decision {current!r} "
                f"for image {d.image_id!r}, got {d.supersedes!r}"
            )

    def _apply(self, d: ReviewDecision, validate: bool) -> ReviewDecision:
        if validate:
            self._validate(d)
        if d.id is None:
            d = ReviewDecision(**{**d.to_dict(), "id": f"d{len(self.decisions) + 1:06d}"})
        self.decisions.append(d)
        self._status[d.image_id] = (
            CurationStatus.ACCEPTED if d.decision == "accept" else CurationStatus.REJECTED
        )
        self._effective_decision[d.image_id] = d.id
        return d

    def record_decision(self, d: ReviewDecision) -> ReviewQueueState:
        """Validate, append to the audit log, and return fresh counts."""
        self._validate(d)
        applied = self._apply(d, validate=False)
        with self.log_path.open("a", encoding="utf-8") as f:
            f.write(json.dumps(applied.to_dict(), ensure_ascii=False))
            f.write("\n")
        return self.state()

    # -- state -------------------------------------------------------------

    def state(self) -> ReviewQueueState:
        counts = {CurationStatus.PENDING: 0, CurationStatus.ACCEPTED: 0,
                  CurationStatus.REJECTED: 0}
        for status in self._status.values():
            counts[status] += 1
        return ReviewQueueState(
            pending=counts[CurationStatus.PENDING],
            accepted=counts[CurationStatus.ACCEPTED],
            rejected=counts[CurationStatus.REJECTED],
            total=len(self._status),
        )

    def per_prompt_breakdown(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for image_id, status in self._status.items():
            prompt_id = self._records[image_id].prompt_id or ""
            cell = out.setdefault(prompt_id, {"pending": 0, "accepted": 0, "rejected": 0})
            cell[status.value] += 1
        return out

    def effective_status(self, image_id: str) -> CurationStatus:
        if image_id not in self._status:
            raise UnknownImageError(image_id)
        return self._status[image_id]

    def effective_manifest(self) -> Manifest:
        """The initial manifest with every synthetic record's status folded in."""
        from dataclasses import replace

        records = []
        for r in self.manifest.records:
            if r.id in self._status:
                records.append(replace(r, curation_status=self._status[r.id],
                                       extra=dict(r.extra)))
            else:
                records.append(replace(r, extra=dict(r.extra)))
        return Manifest(records=records)

    def finalize(self, target_accepted: int) -> Manifest:
        """Manifest of accepted synthetics once nothing is pending.

        Raises PendingRemainingError while the queue is non-empty and
        ShortfallError when fewer than target_accepted images were accepted.
        """
        state = self.state()
        if state.pending > 0:
            raise PendingRemainingError(state.pending)
        if state.accepted < target_accepted:
            raise ShortfallError(state.accepted, target_accepted)
        accepted = [r for r in self.effective_manifest().records
                    if r.provenance is Provenance.SYNTHETIC
                    and r.curation_status is CurationStatus.ACCEPTED]
        return Manifest(records=accepted)


def replay_decisions(manifest: Manifest, decisions: list[ReviewDecision],
                     run_dir: str | Path) -> CurationService:
    """Rebuild a service by replaying a decision list from the initial manifest."""
    service = CurationService(manifest, run_dir)
    for d in decisions:
        service.record_decision(d)
    return service
