import json

import pytest
from hypothesis import given, settings, strategies as st

from synthvision.manifest import (
    ClassLabel, CrossSplitLeakError, CurationStatus, DuplicateIdError, ImageRecord,
    InsufficientRecordsError, InvariantViolation, Manifest, ManifestParseError,
    Provenance, Split, SplitSpec, build_training_set, load_manifest, save_manifest,
    stats,
)

from conftest import paper_scale_manifest, real_record, synth_record


def test_load_empty_file(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text("")
    assert len(load_manifest(path)) == 0


def test_load_single_synthetic_record(tmp_path):
    path = tmp_path / "m.jsonl"
    record = synth_record(0)
    path.write_text(json.dumps(record.to_dict()) + "\n")
    manifest = load_manifest(path)
    assert len(manifest) == 1
    assert manifest.records[0].curation_status is CurationStatus.PENDING


def test_real_record_with_pending_status_rejected(tmp_path):
    path = tmp_path / "m.jsonl"
    payload = real_record(0).to_dict()
    payload["curation_status"] = "pending"
    path.write_text(json.dumps(payload) + "\n")
    with pytest.raises(InvariantViolation, match="not_applicable"):
        load_manifest(path)


def test_synthetic_requires_prompt_and_seed():
    with pytest.raises(InvariantViolation, match="prompt_id and seed"):
        ImageRecord(
            id="x", path="x.png", class_label=ClassLabel.POSITIVE,
            provenance=Provenance.SYNTHETIC, curation_status=CurationStatus.PENDING,
        ).validate()


def test_parse_error_reports_line_number(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text(json.dumps(synth_record(0).to_dict()) + "\n{nope\n")
    with pytest.raises(ManifestParseError, match="line 2"):
        load_manifest(path)


def test_duplicate_id_rejected(tmp_path):
    path = tmp_path / "m.jsonl"
    line = json.dumps(synth_record(0).to_dict())
    path.write_text(line + "\n" + line + "\n")
    with pytest.raises(DuplicateIdError):
        load_manifest(path)


def test_round_trip_preserves_unknown_fields(tmp_path):
    record = synth_record(3)
    record.extra["annotator_note"] = {"stars": 5}
    manifest = Manifest(records=[record, real_record(1)])
    path = save_manifest(manifest, tmp_path / "m.jsonl")
    loaded = load_manifest(path)
    assert [r.to_dict() for r in loaded.records] == [r.to_dict() for r in manifest.records]
    path2 = save_manifest(loaded, tmp_path / "m2.jsonl")
    assert path.read_text() == path2.read_text()


def test_build_training_set_paper_scale():
    manifest = paper_scale_manifest()
    spec = SplitSpec(500, 500, 50, 50, 70, 70)
    built = build_training_set(manifest, spec, seed=0)
    train = built.select(split=Split.TRAIN)
    assert len(train) == 1000
    pos = [r for r in train if r.class_label is ClassLabel.POSITIVE]
    assert len(pos) == 500
    assert all(r.provenance is Provenance.SYNTHETIC for r in pos)
    assert all(r.curation_status is CurationStatus.ACCEPTED for r in pos)
    for split, n in ((Split.VAL, 100), (Split.TEST, 140)):
        records = built.select(split=split)
        assert len(records) == n
        assert all(r.provenance is Provenance.REAL for r in records)


def test_build_training_set_zero_spec():
    built = build_training_set(paper_scale_manifest(), SplitSpec(0, 0, 0, 0, 0, 0))
    assert len(built) == 0


def test_build_training_set_shortfall():
    records = [synth_record(i, CurationStatus.ACCEPTED) for i in range(499)]
    records += [real_record(i) for i in range(500)]
    with pytest.raises(InsufficientRecordsError) as err:
        build_training_set(Manifest(records=records), SplitSpec(500, 500, 0, 0, 0, 0))
    assert err.value.shortfall == 1
    assert "synthetic" in str(err.value)


def test_build_training_set_insufficient_real():
    records = [synth_record(i, CurationStatus.ACCEPTED) for i in range(5)]
    records += [real_record(i) for i in range(3)]
    with pytest.raises(InsufficientRecordsError, match="real"):
        build_training_set(Manifest(records=records), SplitSpec(5, 4, 0, 0, 0, 0))


def test_build_training_set_reproducible():
    manifest = paper_scale_manifest()
    spec = SplitSpec(100, 100, 10, 10, 20, 20)
    a = build_training_set(manifest, spec, seed=42)
    b = build_training_set(manifest, spec, seed=42)
    assert [r.id for r in a.records] == [r.id for r in b.records]
    c = build_training_set(manifest, spec, seed=43)
    assert [r.id for r in a.records] != [r.id for r in c.records]


def test_stats_paper_scale():
    built = build_training_set(paper_scale_manifest(), SplitSpec(500, 500, 50, 50, 70, 70))
    s = stats(built)
    assert s.count(split="train", provenance="synthetic", curation_status="accepted") == 500
    assert s.count(split="train", provenance="real") == 500
    assert s.count(split="val") == 100
    assert s.count(split="test", class_label="positive") == 70
    assert s.total == len(built)


def test_stats_empty():
    s = stats(Manifest())
    assert s.total == 0
    assert s.count() == 0


def test_stats_rejected_cells():
    manifest = Manifest(records=(
        [synth_record(i, CurationStatus.ACCEPTED) for i in range(500)]
        + [synth_record(500 + i, CurationStatus.REJECTED) for i in range(130)]
    ))
    s = stats(manifest)
    assert s.count(provenance="synthetic", curation_status="rejected") == 130
    assert s.count(provenance="synthetic", curation_status="accepted") == 500


@st.composite
def manifests(draw):
    n_acc = draw(st.integers(0, 12))
    n_rej = draw(st.integers(0, 6))
    n_pend = draw(st.integers(0, 6))
    n_real_neg = draw(st.integers(0, 12))
    n_real_pos = draw(st.integers(0, 12))
    records = [synth_record(i, CurationStatus.ACCEPTED) for i in range(n_acc)]
    records += [synth_record(100 + i, CurationStatus.REJECTED) for i in range(n_rej)]
    records += [synth_record(200 + i, CurationStatus.PENDING) for i in range(n_pend)]
    records += [real_record(i, ClassLabel.NEGATIVE) for i in range(n_real_neg)]
    records += [real_record(i, ClassLabel.POSITIVE) for i in range(n_real_pos)]
    return Manifest(records=records)


@given(manifests())
@settings(max_examples=100, deadline=None)
def test_stats_cells_sum_to_record_count(manifest):
    assert stats(manifest).total == len(manifest)


@given(manifests(), st.integers(0, 5), st.integers(0, 5), st.integers(0, 3),
       st.integers(0, 3), st.randoms())
@settings(max_examples=150, deadline=None)
def test_dataset_gate_properties(manifest, train_pos, train_neg, val_each, test_each, rnd):
    spec = SplitSpec(train_pos, train_neg, val_each, val_each, test_each, test_each)
    try:
        built = build_training_set(manifest, spec, seed=rnd.randint(0, 1000))
    except InsufficientRecordsError:
        return
    seen = set()
    for r in built.records:
        assert r.id not in seen, "record in two splits"
        seen.add(r.id)
        if r.provenance is Provenance.SYNTHETIC:
            assert r.curation_status is CurationStatus.ACCEPTED
            assert r.split is Split.TRAIN
        if r.split in (Split.VAL, Split.TEST):
            assert r.provenance is Provenance.REAL
