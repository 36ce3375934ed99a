"""Versioned binary checkpoints for tracker models.

Layout (little-endian), self-describing enough to audit in a hex dump:

    magic  "DNT1"
    u32    version = 1
    u32    blocks (L), u32 channels (C), u32 hidden (H)
    u64    final step count
    u16    fingerprint length, then that many bytes (sha256 hex of the
           run-config JSON; empty when unknown)
    u32    parameter count
    per parameter, in the model's stable enumeration order:
        u16 name length, UTF-8 name
        u8  ndim, u32 per dimension
        f64 data, row-major

Round-trips are bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .autodiff import Tensor
from .tracker import TrackerModel
from .world import FormatError

CKPT_MAGIC = b"DNT1"
CKPT_VERSION = 1


def config_fingerprint(config_doc: dict) -> str:
    return hashlib.sha256(json.dumps(config_doc, sort_keys=True).encode()).hexdigest()


def save_checkpoint(model: TrackerModel, path, steps: int = 0, fingerprint: str = "") -> None:
    fp = fingerprint.encode()
    parts = [
        CKPT_MAGIC,
        struct.pack("<4I", CKPT_VERSION, model.blocks, model.channels, model.hidden),
        struct.pack("<Q", steps),
        struct.pack("<H", len(fp)),
        fp,
    ]
    named = model.named_parameters()
    parts.append(struct.pack("<I", len(named)))
    for name, tensor in named:
        nb = name.encode()
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        arr = np.ascontiguousarray(tensor.data, dtype="<f8")
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def _take(buf: bytes, offset: int, size: int, what: str) -> tuple[bytes, int]:
    if offset + size > len(buf):
        raise FormatError(f"truncated checkpoint: {what} at offset {offset}")
    return buf[offset : offset + size], offset + size


def load_checkpoint(path) -> tuple[TrackerModel, dict]:
    with open(path, "rb") as fh:
        buf = fh.read()
    chunk, off = _take(buf, 0, 4, "magic")
    if chunk != CKPT_MAGIC:
        raise FormatError(f"bad magic {chunk!r} at offset 0 (expected {CKPT_MAGIC!r})")
    chunk, off = _take(buf, off, 16, "header")
    version, blocks, channels, hidden = struct.unpack("<4I", chunk)
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version} at offset 4")
    chunk, off = _take(buf, off, 8, "step count")
    (steps,) = struct.unpack("<Q", chunk)
    chunk, off = _take(buf, off, 2, "fingerprint length")
    (fp_len,) = struct.unpack("<H", chunk)
    chunk, off = _take(buf, off, fp_len, "fingerprint")
    fingerprint = chunk.decode()
    chunk, off = _take(buf, off, 4, "parameter count")
    (count,) = struct.unpack("<I", chunk)
    params: dict[str, Tensor] = {}
    for i in range(count):
        chunk, off = _take(buf, off, 2, f"parameter {i} name length")
        (name_len,) = struct.unpack("<H", chunk)
        chunk, off = _take(buf, off, name_len, f"parameter {i} name")
        name = chunk.decode()
        chunk, off = _take(buf, off, 1, f"parameter {name} ndim")
        (ndim,) = struct.unpack("<B", chunk)
        chunk, off = _take(buf, off, 4 * ndim, f"parameter {name} dims")
        dims = struct.unpack(f"<{ndim}I", chunk)
        size = int(np.prod(dims)) if dims else 1
        chunk, off = _take(buf, off, 8 * size, f"parameter {name} data")
        data = np.frombuffer(chunk, dtype="<f8").reshape(dims).copy()
        params[name] = Tensor(data, requires_grad=True)
    if off != len(buf):
        raise FormatError(f"trailing bytes at offset {off}")
    model = TrackerModel(blocks=blocks, channels=channels, hidden=hidden, params=params)
    return model, {"steps": int(steps), "fingerprint": fingerprint}
