import numpy as np
import pytest
import torch

from synthvision.superres import (
    PairedUpsampler, degraded_pairs, load_upsampler, save_upsampler, superres_finetune,
)


def nearest_up(x: np.ndarray, k: int) -> np.ndarray:
    return np.repeat(np.repeat(x, k, axis=0), k, axis=1)


def test_learns_nearest_neighbor_target():
    rng = np.random.default_rng(0)
    lows = rng.uniform(-1, 1, (5, 8, 8, 1)).astype(np.float32)
    highs = np.stack([nearest_up(x, 2) for x in lows])
    up = PairedUpsampler(hidden=16, steps=2000, lr=2e-3, seed=0).fit(lows, highs)
    assert up.history_[-1] < 1e-3


def test_empty_pairs_error():
    with pytest.raises(ValueError, match="non-empty"):
        superres_finetune([])


def test_deterministic_given_seed():
    rng = np.random.default_rng(1)
    lows = rng.uniform(-1, 1, (3, 4, 4, 1)).astype(np.float32)
    highs = np.stack([nearest_up(x, 2) for x in lows])
    a = PairedUpsampler(hidden=8, steps=50, seed=3).fit(lows, highs)
    b = PairedUpsampler(hidden=8, steps=50, seed=3).fit(lows, highs)
    for pa, pb in zip(a.net_.parameters(), b.net_.parameters()):
        assert torch.equal(pa, pb)


def test_shape_validation():
    lows = np.zeros((2, 8, 8, 1), dtype=np.float32)
    with pytest.raises(ValueError, match="multiple"):
        PairedUpsampler().fit(lows, np.zeros((2, 12, 12, 1), dtype=np.float32))
    with pytest.raises(ValueError, match="equal length"):
        PairedUpsampler().fit(lows, np.zeros((3, 16, 16, 1), dtype=np.float32))


def test_transform_shape_and_range():
    rng = np.random.default_rng(2)
    lows = rng.uniform(-1, 1, (4, 8, 8, 3)).astype(np.float32)
    highs = np.stack([nearest_up(x, 2) for x in lows])
    up = PairedUpsampler(hidden=8, steps=30, seed=0).fit(lows, highs)
    out = up.transform(lows)
    assert out.shape == (4, 16, 16, 3)
    assert out.min() >= -1.0 and out.max() <= 1.0


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    lows = rng.uniform(-1, 1, (3, 8, 8, 3)).astype(np.float32)
    highs = np.stack([nearest_up(x, 2) for x in lows])
    up = PairedUpsampler(hidden=8, steps=20, seed=0).fit(lows, highs)
    save_upsampler(up, tmp_path / "sr.bin")
    loaded = load_upsampler(tmp_path / "sr.bin")
    assert np.array_equal(loaded.transform(lows), up.transform(lows))


def test_degraded_pairs_shapes_and_determinism():
    rng = np.random.default_rng(4)
    highs = rng.uniform(-1, 1, (2, 16, 16, 3)).astype(np.float32)
    lows_a, highs_a = degraded_pairs(highs, 2, noise_sigmas=(0.0, 0.2), seed=5)
    lows_b, _ = degraded_pairs(highs, 2, noise_sigmas=(0.0, 0.2), seed=5)
    assert lows_a.shape == (4, 8, 8, 3)
    assert highs_a.shape == (4, 16, 16, 3)
    assert np.array_equal(lows_a, lows_b)
    # sigma 0 rows are exact downsamples, noisy rows are not equal to them
    assert not np.array_equal(lows_a[0], lows_a[1])
