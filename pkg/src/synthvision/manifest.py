"""Dataset data model: image records, JSON Lines manifests, and split assembly.

A manifest is a UTF-8 JSON Lines file, one record per line. Unknown fields
are preserved on round-trip. The split builder is the gate that decides
which records may enter training: synthetic records must be accepted by
curation, and val/test splits only ever hold real images.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

SCHEMA_VERSION = 1

# Field names that belong to the record schema; everything else rides along
# in ImageRecord.extra so round-trips never drop data.
_KNOWN_FIELDS = {
    "id", "path", "class_label", "split", "provenance",
    "prompt_id", "seed", "curation_status", "created_at",
}


class ClassLabel(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


class Split(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"
    UNASSIGNED = "unassigned"


class Provenance(str, Enum):
    REAL = "real"
    SYNTHETIC = "synthetic"


class CurationStatus(str, Enum):
    NOT_APPLICABLE = "not_applicable"
    PENDING = "pending"
    ACCEPTED = "accepted"
    REJECTED = "rejected"


class ManifestError(Exception):
    """Base class for manifest failures."""


class ManifestParseError(ManifestError):
    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class DuplicateIdError(ManifestError):
    def __init__(self, record_id: str):
        super().__init__(f"duplicate record id {record_id!r}")
        self.record_id = record_id


class InvariantViolation(ManifestError):
    def __init__(self, record_id: str, message: str):
        super().__init__(f"record {record_id!r}: {message}")
        self.record_id = record_id


class InsufficientRecordsError(ManifestError):
    def __init__(self, pool: str, needed: int, available: int):
        self.pool = pool
        self.needed = needed
        self.available = available
        self.shortfall = needed - available
        super().__init__(
            f"insufficient {pool}: need {needed}, have {available} "
            f"(shortfall {self.shortfall})"
        )


class CrossSplitLeakError(ManifestError):
    def __init__(self, record_id: str):
        super().__init__(f"record {record_id!r} appears in more than one split")
        self.record_id = record_id


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class ImageRecord:
    """One image: label, split, provenance, generation lineage, curation state."""

    id: str
    path: str
    class_label: ClassLabel
    split: Split = Split.UNASSIGNED
    provenance: Provenance = Provenance.REAL
    prompt_id: str | None = None
    seed: int | None = None
    curation_status: CurationStatus = CurationStatus.NOT_APPLICABLE
    created_at: str = field(default_factory=utc_now_iso)
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        if not self.id:
            raise InvariantViolation(self.id, "id must be non-empty")
        if self.provenance is Provenance.REAL:
            if self.curation_status is not CurationStatus.NOT_APPLICABLE:
                raise InvariantViolation(
                    self.id,
                    "provenance=real requires curation_status=not_applicable, "
                    f"got {self.curation_status.value}",
                )
        else:
            if self.curation_status not in (
                CurationStatus.PENDING, CurationStatus.ACCEPTED, CurationStatus.REJECTED
            ):
                raise InvariantViolation(
                    self.id,
                    "provenance=synthetic requires curation_status in "
                    f"{{pending, accepted, rejected}}, got {self.curation_status.value}",
                )
            if self.prompt_id is None or self.seed is None:
                raise InvariantViolation(
                    self.id, "provenance=synthetic requires prompt_id and seed"
                )
        if self.seed is not None and self.seed < 0:
            raise InvariantViolation(self.id, "seed must be non-negative")

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "path": self.path,
            "class_label": self.class_label.value,
            "split": self.split.value,
            "provenance": self.provenance.value,
            "prompt_id": self.prompt_id,
            "seed": self.seed,
            "curation_status": self.curation_status.value,
            "created_at": self.created_at,
        }
        d.update(self.extra)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ImageRecord":
        extra = {k: v for k, v in d.items() if k not in _KNOWN_FIELDS}
        try:
            record = cls(
                id=d["id"],
                path=d["path"],
                class_label=ClassLabel(d["class_label"]),
                split=Split(d.get("split", "unassigned")),
                provenance=Provenance(d.get("provenance", "real")),
                prompt_id=d.get("prompt_id"),
                seed=d.get("seed"),
                curation_status=CurationStatus(d.get("curation_status", "not_applicable")),
                created_at=d.get("created_at", utc_now_iso()),
                extra=extra,
            )
        except KeyError as e:
            raise ManifestError(f"missing required field {e.args[0]!r}") from None
        except ValueError as e:
            raise ManifestError(str(e)) from None
        record.validate()
        return record


@dataclass
class Manifest:
    """An ordered collection of image records plus the schema version."""

    records: list[ImageRecord] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ImageRecord]:
        return iter(self.records)

    def by_id(self, record_id: str) -> ImageRecord:
        for r in self.records:
            if r.id == record_id:
                return r
        raise KeyError(record_id)

    def ids(self) -> set[str]:
        return {r.id for r in self.records}

    def validate(self) -> None:
        seen: set[str] = set()
        for r in self.records:
            r.validate()
            if r.id in seen:
                raise DuplicateIdError(r.id)
            seen.add(r.id)

    def select(self, **conditions) -> list[ImageRecord]:
        """Records whose attributes equal every given condition."""
        out = []
        for r in self.records:
            if all(getattr(r, k) == v for k, v in conditions.items()):
                out.append(r)
        return out

    def extend(self, records: Iterable[ImageRecord]) -> None:
        for r in records:
            r.validate()
            if r.id in self.ids():
                raise DuplicateIdError(r.id)
            self.records.append(r)


@dataclass(frozen=True)
class SplitSpec:
    """Requested per-split, per-class counts for a built dataset."""

    train_pos: int
    train_neg: int
    val_pos: int
    val_neg: int
    test_pos: int
    test_neg: int

    def __post_init__(self):
        for name in ("train_pos", "train_neg", "val_pos", "val_neg", "test_pos", "test_neg"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSpec":
        return cls(**{k: int(d[k]) for k in
                      ("train_pos", "train_neg", "val_pos", "val_neg", "test_pos", "test_neg")})


@dataclass
class DatasetStats:
    """Exhaustive counts per (split, class, provenance, curation_status) cell."""

    cells: dict[tuple[str, str, str, str], int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.cells.values())

    def count(self, split=None, class_label=None, provenance=None, curation_status=None) -> int:
        """Sum of all cells matching the given (string-valued) filters."""
        filters = (split, class_label, provenance, curation_status)
        total = 0
        for key, n in self.cells.items():
            if all(f is None or k == (f.value if isinstance(f, Enum) else f)
                   for f, k in zip(filters, key)):
                total += n
        return total

    def to_dict(self) -> dict:
        return {"|".join(k): v for k, v in sorted(self.cells.items())}


def load_manifest(path: str | Path) -> Manifest:
    """Parse a JSON Lines manifest, validating every record.

    Raises ManifestParseError with the offending line number on malformed
    JSON, DuplicateIdError on repeated ids, and InvariantViolation when a
    record breaks the field-level invariants.
    """
    records: list[ImageRecord] = []
    seen: set[str] = set()
    with Path(path).open("r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestParseError(line_number, f"invalid JSON: {e.msg}") from None
            if not isinstance(payload, dict):
                raise ManifestParseError(line_number, "expected a JSON object")
            try:
                record = ImageRecord.from_dict(payload)
            except ManifestError as e:
                if isinstance(e, InvariantViolation):
                    raise
                raise ManifestParseError(line_number, str(e)) from None
            if record.id in seen:
                raise DuplicateIdError(record.id)
            seen.add(record.id)
            records.append(record)
    return Manifest(records=records)


def save_manifest(manifest: Manifest, path: str | Path) -> Path:
    """Write a manifest as JSON Lines (one record per line)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for r in manifest.records:
            f.write(json.dumps(r.to_dict(), ensure_ascii=False))
            f.write("\n")
    return path


def validate_paths(manifest: Manifest, data_root: str | Path) -> None:
    """Check that every record's path resolves to an existing file."""
    root = Path(data_root)
    for r in manifest.records:
        if not (root / r.path).is_file():
            raise InvariantViolation(r.id, f"path {r.path!r} not found under {root}")


def build_training_set(manifest: Manifest, spec: SplitSpec, seed: int = 0) -> Manifest:
    """Assemble a train/val/test manifest under the admission rules.

    Train positives are exactly spec.train_pos accepted synthetic records;
    train negatives are real. Val and test splits hold only real records.
    Selection among surplus eligible records is a deterministic seeded
    shuffle so builds are reproducible. No record lands in two splits.
    """
    import random

    manifest.validate()

    def eligible(class_label, provenance, accepted_only=False):
        out = []
        for r in manifest.records:
            if r.class_label is not class_label or r.provenance is not provenance:
                continue
            if accepted_only and r.curation_status is not CurationStatus.ACCEPTED:
                continue
            out.append(r)
        return out

    rng = random.Random(seed)

    def take(pool: list[ImageRecord], n: int, pool_name: str, used: set[str]):
        available = [r for r in pool if r.id not in used]
        # stable order first, then seeded shuffle, so results do not depend
        # on the manifest's on-disk ordering
        available.sort(key=lambda r: r.id)
        rng.shuffle(available)
        if len(available) < n:
            raise InsufficientRecordsError(pool_name, n, len(available))
        chosen = available[:n]
        used.update(r.id for r in chosen)
        return chosen

    used: set[str] = set()
    train = take(eligible(ClassLabel.POSITIVE, Provenance.SYNTHETIC, accepted_only=True),
                 spec.train_pos, "accepted synthetic positives", used)
    train += take(eligible(ClassLabel.NEGATIVE, Provenance.REAL),
                  spec.train_neg, "real negatives", used)
    val = take(eligible(ClassLabel.POSITIVE, Provenance.REAL),
               spec.val_pos, "real positives", used)
    val += take(eligible(ClassLabel.NEGATIVE, Provenance.REAL),
                spec.val_neg, "real negatives", used)
    test = take(eligible(ClassLabel.POSITIVE, Provenance.REAL),
                spec.test_pos, "real positives", used)
    test += take(eligible(ClassLabel.NEGATIVE, Provenance.REAL),
                 spec.test_neg, "real negatives", used)

    built: list[ImageRecord] = []
    for split, records in ((Split.TRAIN, train), (Split.VAL, val), (Split.TEST, test)):
        for r in records:
            built.append(replace(r, split=split, extra=dict(r.extra)))

    seen: set[str] = set()
    for r in built:
        if r.id in seen:
            raise CrossSplitLeakError(r.id)
        seen.add(r.id)

    result = Manifest(records=built)
    result.validate()
    return result


def stats(manifest: Manifest) -> DatasetStats:
    """Count records per (split, class, provenance, curation_status)."""
    cells: dict[tuple[str, str, str, str], int] = {}
    for r in manifest.records:
        key = (r.split.value, r.class_label.value, r.provenance.value, r.curation_status.value)
        cells[key] = cells.get(key, 0) + 1
    return DatasetStats(cells=cells)
