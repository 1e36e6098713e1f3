import numpy as np
import pytest

from synthvision.checkpoint import (
    CheckpointError, load_checkpoint, save_checkpoint,
)


def test_round_trip(tmp_path):
    configs = {"version": "0.1.0", "arch": {"hidden": [4, 8]}}
    arrays = {
        "w1": np.arange(12, dtype=np.float32).reshape(3, 4),
        "b1": np.array([1.5, -2.5], dtype=np.float64),
        "ids": np.array([[1, 2], [3, 4]], dtype=np.int64),
    }
    path = save_checkpoint(tmp_path / "ckpt.bin", configs, arrays)
    loaded_configs, loaded_arrays = load_checkpoint(path)
    assert loaded_configs == configs
    assert set(loaded_arrays) == set(arrays)
    for name in arrays:
        assert np.array_equal(loaded_arrays[name], arrays[name])
        assert loaded_arrays[name].dtype == arrays[name].dtype


def test_empty_arrays(tmp_path):
    path = save_checkpoint(tmp_path / "ckpt.bin", {"note": "empty"}, {})
    configs, arrays = load_checkpoint(path)
    assert configs == {"note": "empty"}
    assert arrays == {}


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 16)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_no_temp_files_left_behind(tmp_path):
    save_checkpoint(tmp_path / "ckpt.bin", {}, {"w": np.zeros(3)})
    leftovers = [p for p in tmp_path.iterdir() if p.suffix == ".tmp"]
    assert leftovers == []
