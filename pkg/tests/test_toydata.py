import numpy as np

from synthvision.images import load_image, resize_image, save_image
from synthvision.manifest import ClassLabel, Manifest, Provenance
from synthvision.toydata import (
    guide_prompt, quality_score, toy_negative, toy_positive, write_guide_set,
    write_real_pool,
)


def test_classes_are_separable_by_quality_score():
    rng = np.random.default_rng(0)
    pos = [quality_score(toy_positive(rng, 32)) for _ in range(30)]
    neg = [quality_score(toy_negative(rng, 32)) for _ in range(30)]
    assert min(pos) > max(neg)


def test_images_in_range():
    rng = np.random.default_rng(1)
    for maker in (toy_positive, toy_negative):
        image = maker(rng, 32)
        assert image.shape == (32, 32, 3)
        assert image.min() >= -1.0 and image.max() <= 1.0


def test_guide_prompts_cover_vocabulary():
    prompts = [guide_prompt(i, "sks") for i in range(10)]
    words = set(" ".join(prompts).split())
    for needed in ("small", "large", "tight", "loose", "faint", "vivid",
                   "center", "edge", "middle", "corner", "sks"):
        assert needed in words
    for prompt in prompts:
        assert prompt.split().count("sks") == 1


def test_write_guide_set(tmp_path):
    write_guide_set(tmp_path, n=4, size=16, seed=0, identifier_token="sks")
    pngs = sorted(tmp_path.glob("*.png"))
    txts = sorted(tmp_path.glob("*.txt"))
    assert len(pngs) == len(txts) == 4
    for png, txt in zip(pngs, txts):
        assert png.stem == txt.stem
        assert "sks" in txt.read_text()


def test_write_real_pool_records(tmp_path):
    records = write_real_pool(tmp_path, n_pos=3, n_neg=2, size=16, seed=0)
    manifest = Manifest(records=records)
    manifest.validate()
    assert len(manifest.select(class_label=ClassLabel.POSITIVE)) == 3
    assert len(manifest.select(class_label=ClassLabel.NEGATIVE)) == 2
    assert all(r.provenance is Provenance.REAL for r in manifest)
    for r in records:
        assert (tmp_path / r.path).is_file()


def test_image_io_round_trip_is_lossless_at_8bit(tmp_path):
    rng = np.random.default_rng(2)
    image = toy_positive(rng, 16)
    path = save_image(image, tmp_path / "img.png")
    loaded = load_image(path)
    # 8-bit quantization bounds the round-trip error
    assert np.abs(loaded - image).max() <= 1.0 / 127.5


def test_resize_identity_when_size_matches():
    rng = np.random.default_rng(3)
    image = toy_positive(rng, 16)
    assert np.array_equal(resize_image(image, 16), image)
