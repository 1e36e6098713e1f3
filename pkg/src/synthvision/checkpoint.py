"""Single-file checkpoint format: JSON header plus flat little-endian arrays.

Layout: 6-byte magic ``SVCK1\\n``, a 4-byte little-endian header length, the
UTF-8 JSON header, then the raw array bytes back to back. The header carries
a format version, arbitrary config payload, and per-array name/shape/dtype/
offset entries. Writes go to a temp file and are renamed into place.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"SVCK1\n"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


def save_checkpoint(path: str | Path, configs: dict, arrays: dict[str, np.ndarray]) -> Path:
    """Atomically write configs and named arrays to a checkpoint file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    blobs = []
    offset = 0
    for name, array in arrays.items():
        arr = np.ascontiguousarray(array)
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        blob = arr.tobytes()
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": arr.dtype.str,
            "offset": offset,
            "nbytes": len(blob),
        })
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({
        "format_version": FORMAT_VERSION,
        "configs": configs,
        "arrays": entries,
    }).encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC)
            f.write(len(header).to_bytes(4, "little"))
            f.write(header)
            for blob in blobs:
                f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read back (configs, arrays) from a checkpoint file."""
    path = Path(path)
    with path.open("rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint file (bad magic)")
        header_len = int.from_bytes(f.read(4), "little")
        header = json.loads(f.read(header_len).decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint format version {header.get('format_version')}"
            )
        payload = f.read()
    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        start = entry["offset"]
        blob = payload[start:start + entry["nbytes"]]
        arrays[entry["name"]] = np.frombuffer(blob, dtype=np.dtype(entry["dtype"])).reshape(
            entry["shape"]
        ).copy()
    return header["configs"], arrays


def module_arrays(module, prefix: str = "") -> dict[str, np.ndarray]:
    """Flatten a torch module's state dict into named numpy arrays."""
    out = {}
    for name, tensor in module.state_dict().items():
        out[f"{prefix}{name}"] = tensor.detach().cpu().numpy()
    return out


def load_module_arrays(module, arrays: dict[str, np.ndarray], prefix: str = "") -> None:
    """Load named numpy arrays back into a torch module (strict)."""
    import torch

    state = {}
    for name in module.state_dict():
        key = f"{prefix}{name}"
        if key not in arrays:
            raise CheckpointError(f"checkpoint missing array {key!r}")
        state[name] = torch.from_numpy(np.array(arrays[key]))
    module.load_state_dict(state)
