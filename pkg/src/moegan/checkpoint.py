"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"MOEG" | version u32 | entry count u32
    per entry: name length u16 | UTF-8 name | rank u8 | dims u32 * rank | payload

Payloads are f32, except for entries whose name starts with ``rng.`` or
``meta.``, which carry u64 words (RNG states, counters, encoded text).
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"MOEG"
VERSION = 1
U64_PREFIXES = ("rng.", "meta.")


class CheckpointError(ValueError):
    pass


def is_u64(name: str) -> bool:
    return name.startswith(U64_PREFIXES)


def to_bytes(entries: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(entries))]
    for name, array in entries.items():
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise CheckpointError(f"entry name too long: {name[:40]}...")
        dtype = "<u8" if is_u64(name) else "<f4"
        arr = np.asarray(array, dtype=dtype, order="C")
        if arr.ndim > 255:
            raise CheckpointError(f"rank {arr.ndim} too large for {name}")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def from_bytes(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:4] != MAGIC:
        raise CheckpointError("bad magic: not a MOEG checkpoint")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    offset = 12
    out: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset:offset + n].decode("utf-8")
            offset += n
            (rank,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            dims = struct.unpack_from(f"<{rank}I", blob, offset)
            offset += 4 * rank
            dtype = np.dtype("<u8" if is_u64(name) else "<f4")
            size = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
            if offset + size > len(blob):
                raise CheckpointError(f"truncated payload for {name}")
            out[name] = np.frombuffer(blob, dtype=dtype, count=size // dtype.itemsize, offset=offset) \
                .reshape(dims).copy()
            offset += size
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from None
    return out


def save(path, entries: dict[str, np.ndarray]) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(to_bytes(entries))
    tmp.replace(path)


def load(path) -> dict[str, np.ndarray]:
    return from_bytes(Path(path).read_bytes())


def encode_text(text: str) -> np.ndarray:
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.uint64)


def decode_text(words: np.ndarray) -> str:
    return np.asarray(words, dtype=np.uint64).astype(np.uint8).tobytes().decode("utf-8")


def encode_json(obj) -> np.ndarray:
    return encode_text(json.dumps(obj, sort_keys=True))


def decode_json(words: np.ndarray):
    return json.loads(decode_text(words))


def encode_floats(values) -> np.ndarray:
    """Float64 bit patterns as u64 words (exact)."""
    return np.ascontiguousarray(np.asarray(values, dtype="<f8")).view("<u8")


def decode_floats(words: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(words, dtype="<u8")).view("<f8")
