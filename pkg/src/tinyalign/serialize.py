"""Model file format.

Little-endian binary:
    magic   4 bytes  b"TALN"
    version u32      (currently 1)
    config  u32 length + canonical key-sorted JSON (utf-8)
    manifest u32 count, then per entry:
        u16 name length + name bytes (utf-8)
        u8 ndim + u32 per dimension
    payload raw float32 arrays concatenated in manifest order
    crc32   u32 of the payload bytes

load() validates magic, version, the manifest against the config, and the
payload checksum; save/load round-trips are bit-exact.
"""

from __future__ import annotations

import io
import struct
import zlib

import numpy as np

from .model import ModelConfig, ModelWeights, parameter_manifest

MAGIC = b"TALN"
VERSION = 1


class ModelFormatError(ValueError):
    """Bad magic, version, structure, or manifest mismatch."""


class ChecksumError(ModelFormatError):
    """Payload bytes do not match the stored CRC-32."""


def serialize(config: ModelConfig, weights: ModelWeights) -> bytes:
    weights.validate_against(config)
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    cfg = config.to_json().encode("utf-8")
    buf.write(struct.pack("<I", len(cfg)))
    buf.write(cfg)
    buf.write(struct.pack("<I", len(weights.entries)))
    for name, arr in weights.entries:
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            buf.write(struct.pack("<I", dim))
    payload = b"".join(np.ascontiguousarray(arr, dtype="<f4").tobytes()
                       for _, arr in weights.entries)
    buf.write(payload)
    buf.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))
    return buf.getvalue()


def _read(buf: io.BytesIO, count: int) -> bytes:
    data = buf.read(count)
    if len(data) != count:
        raise ModelFormatError("truncated model file")
    return data


def deserialize(blob: bytes) -> tuple[ModelConfig, ModelWeights]:
    buf = io.BytesIO(blob)
    if _read(buf, 4) != MAGIC:
        raise ModelFormatError("bad magic")
    (version,) = struct.unpack("<I", _read(buf, 4))
    if version != VERSION:
        raise ModelFormatError(f"unsupported version {version}")
    (cfg_len,) = struct.unpack("<I", _read(buf, 4))
    try:
        config = ModelConfig.from_json(_read(buf, cfg_len).decode("utf-8"))
    except (ValueError, KeyError, TypeError) as err:
        raise ModelFormatError(f"bad config block: {err}") from None
    (count,) = struct.unpack("<I", _read(buf, 4))
    entries_meta = []
    for _ in range(count):
        (name_len,) = struct.unpack("<H", _read(buf, 2))
        name = _read(buf, name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", _read(buf, 1))
        shape = tuple(struct.unpack("<I", _read(buf, 4))[0] for _ in range(ndim))
        entries_meta.append((name, shape))
    expected = parameter_manifest(config)
    if entries_meta != [(n, tuple(s)) for n, s in expected]:
        raise ModelFormatError("manifest does not match config")
    payload_len = sum(4 * int(np.prod(shape, dtype=np.int64)) for _, shape in entries_meta)
    payload = _read(buf, payload_len)
    (crc,) = struct.unpack("<I", _read(buf, 4))
    if buf.read(1):
        raise ModelFormatError("trailing bytes after checksum")
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise ChecksumError("payload checksum mismatch")
    entries = []
    offset = 0
    for name, shape in entries_meta:
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(payload, dtype="<f4", count=nbytes // 4,
                            offset=offset).reshape(shape)
        entries.append((name, arr.copy()))
        offset += nbytes
    return config, ModelWeights(entries)


def save(config: ModelConfig, weights: ModelWeights, path) -> int:
    blob = serialize(config, weights)
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


def load(path) -> tuple[ModelConfig, ModelWeights]:
    with open(path, "rb") as fh:
        return deserialize(fh.read())


def serialized_size(config: ModelConfig, weights: ModelWeights) -> int:
    return len(serialize(config, weights))
