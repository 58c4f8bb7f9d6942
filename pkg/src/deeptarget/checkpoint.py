"""Binary model checkpoints.

Layout (all integers little-endian):

    8 bytes   magic "DPTGT001"
    u16       format version (currently 1)
    u32       length of the JSON header block
    ...       JSON header: architecture fields plus a "training" sub-object
    u32       number of parameter entries
    per entry:
        u16   name length, then UTF-8 name
        u8    rank, then rank x u32 extents
        ...   row-major float64 data
    u32       CRC32 of every preceding byte

Loading verifies magic, version, checksum, and that the parameter names and
shapes exactly match a freshly built model of the stored architecture, so a
truncated or tampered file never yields a partial model.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model import ArchitectureSpec, DeepTargetModel

MAGIC = b"DPTGT001"
VERSION = 1


def save_checkpoint(model: DeepTargetModel, path: str | Path) -> None:
    """Write the model's architecture, metadata, and every parameter."""
    header = model.spec.to_dict()
    header["training"] = dict(model.meta)
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    parts = [MAGIC, struct.pack("<H", VERSION),
             struct.pack("<I", len(header_bytes)), header_bytes]
    names = model.store.names()
    parts.append(struct.pack("<I", len(names)))
    for name in names:
        value = model.store[name].value
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", value.ndim))
        parts.append(struct.pack(f"<{value.ndim}I", *value.shape))
        parts.append(np.ascontiguousarray(value, dtype="<f8").tobytes())
    payload = b"".join(parts)
    blob = payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    Path(path).write_bytes(blob)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint file is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path: str | Path,
                    expected_spec: ArchitectureSpec | None = None) -> DeepTargetModel:
    """Rebuild a model bit-for-bit from a checkpoint file.

    When ``expected_spec`` is given, a checkpoint carrying any other
    architecture is refused.
    """
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 4:
        raise CheckpointError("checkpoint file is truncated")
    stored_crc = struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CheckpointError("checkpoint checksum mismatch")
    r = _Reader(data[:-4])
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("bad magic bytes: not a model checkpoint")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (header_len,) = r.unpack("<I")
    try:
        header = json.loads(r.take(header_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from None
    meta = header.pop("training", {})
    spec = ArchitectureSpec.from_dict(header)
    if expected_spec is not None and spec != expected_spec:
        raise CheckpointError(
            f"checkpoint architecture {spec.render()} does not match the "
            f"requested {expected_spec.render()}")

    # Seed value 0 here is irrelevant: every parameter is overwritten below.
    model = DeepTargetModel.initialize(spec, np.random.default_rng(0))
    model.meta.update(meta)
    (count,) = r.unpack("<I")
    seen = set()
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        raw = r.take(8 * size)
        if name not in model.store:
            raise CheckpointError(f"unknown parameter {name!r} in checkpoint")
        param = model.store[name]
        if tuple(param.value.shape) != tuple(shape):
            raise CheckpointError(
                f"parameter {name!r} has shape {tuple(shape)}, "
                f"model expects {param.value.shape}")
        param.value[:] = np.frombuffer(raw, dtype="<f8").reshape(shape)
        seen.add(name)
    if r.pos != len(r.data):
        raise CheckpointError("trailing bytes after parameter table")
    missing = set(model.store.names()) - seen
    if missing:
        raise CheckpointError(f"checkpoint is missing parameters {sorted(missing)}")
    return model
