"""Single-file checkpoint container.

Layout: an 8-byte little-endian unsigned header length, a UTF-8 JSON
header, then each parameter's float64 values little-endian row-major,
in header order. Reading back is bit-exact.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def write_checkpoint(
    path: str | Path,
    params: dict[str, np.ndarray],
    architecture: str,
    hyperparams: dict,
    seed: int,
    extra: dict | None = None,
) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "architecture": architecture,
        "hyperparams": hyperparams,
        "seed": int(seed),
        "dtype": "<f8",
        "params": [{"name": k, "shape": list(v.shape)} for k, v in params.items()],
    }
    if extra:
        header.update(extra)
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for v in params.values():
            f.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Returns (header, params). Raises CheckpointError on any mismatch."""
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise CheckpointError(f"{path}: truncated header length")
    (hlen,) = struct.unpack("<Q", raw[:8])
    if len(raw) < 8 + hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: bad header: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format_version {header.get('format_version')}")
    if header.get("dtype") != "<f8":
        raise CheckpointError(f"{path}: unsupported dtype {header.get('dtype')}")
    body = raw[8 + hlen :]
    params: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = n * 8
        if offset + nbytes > len(body):
            raise CheckpointError(f"{path}: payload short for parameter {entry['name']}")
        arr = np.frombuffer(body, dtype="<f8", count=n, offset=offset).reshape(shape)
        params[entry["name"]] = arr.copy()
        offset += nbytes
    if offset != len(body):
        raise CheckpointError(f"{path}: {len(body) - offset} trailing bytes after parameters")
    return header, params
