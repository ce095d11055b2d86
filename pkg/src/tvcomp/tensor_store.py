"""Self-describing binary container for dense task vectors.

Layout of a ``.tvc`` container:

    b"TVC1\\n"
    u32  manifest byte length
    u32  tensor count
    per tensor:
        u32  name length, then name bytes (UTF-8)
        u32  rank, then rank * u32 shape entries
        u8   dtype code (0 = f32, 1 = f16, 2 = bf16)
        u64  offset into payload (bytes)
        u64  element count
    raw little-endian payload

All integers are little-endian.  Loaded arrays are upcast to float32;
arithmetic elsewhere in the package never runs below 32-bit precision.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DtypeUnsupported,
    IoFailure,
    ManifestCorrupt,
    PayloadNonFinite,
    PayloadTruncated,
)

MAGIC = b"TVC1\n"

_DTYPE_CODES = {"f32": 0, "f16": 1, "bf16": 2}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}
_ITEMSIZE = {"f32": 4, "f16": 2, "bf16": 2}


@dataclass(frozen=True)
class TensorMeta:
    name: str
    shape: tuple[int, ...]
    dtype: str
    offset_bytes: int
    length_elems: int


@dataclass
class TaskVector:
    """Ordered collection of named dense parameter groups."""

    groups: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def total_dim(self) -> int:
        return sum(int(a.size) for a in self.groups.values())

    def names(self) -> list[str]:
        return list(self.groups.keys())

    def copy(self) -> "TaskVector":
        return TaskVector({k: v.copy() for k, v in self.groups.items()})


def f32_to_bf16_bytes(a: np.ndarray) -> bytes:
    """Round float32 to bfloat16 (round-to-nearest-even), packed as u16 LE."""
    u = np.ascontiguousarray(a, dtype=np.float32).view(np.uint32)
    rounded = (u + 0x7FFF + ((u >> 16) & 1)) >> 16
    return rounded.astype("<u2").tobytes()


def bf16_bytes_to_f32(raw: bytes, n: int) -> np.ndarray:
    u16 = np.frombuffer(raw, dtype="<u2", count=n)
    return (u16.astype(np.uint32) << 16).view(np.float32).copy()


def save_container(tv: TaskVector, path, dtype: str = "f32") -> None:
    if dtype not in _DTYPE_CODES:
        raise DtypeUnsupported(f"unknown dtype {dtype!r}")
    records = []
    payload = bytearray()
    for name, arr in tv.groups.items():
        arr = np.asarray(arr)
        offset = len(payload)
        if dtype == "f32":
            payload += np.ascontiguousarray(arr, dtype="<f4").tobytes()
        elif dtype == "f16":
            payload += np.ascontiguousarray(arr, dtype="<f2").tobytes()
        else:
            payload += f32_to_bf16_bytes(arr.astype(np.float32))
        records.append((name, arr.shape, offset, arr.size))

    manifest = bytearray()
    manifest += struct.pack("<I", len(records))
    for name, shape, offset, size in records:
        nb = name.encode("utf-8")
        manifest += struct.pack("<I", len(nb)) + nb
        manifest += struct.pack("<I", len(shape))
        manifest += struct.pack(f"<{len(shape)}I", *shape)
        manifest += struct.pack("<B", _DTYPE_CODES[dtype])
        manifest += struct.pack("<QQ", offset, size)

    try:
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<I", len(manifest)))
            f.write(manifest)
            f.write(payload)
    except OSError as e:
        raise IoFailure(str(e)) from e


def read_manifest(path) -> list[TensorMeta]:
    try:
        with open(path, "rb") as f:
            head = f.read(len(MAGIC))
            if head != MAGIC:
                raise ManifestCorrupt("bad magic")
            raw_len = f.read(4)
            if len(raw_len) != 4:
                raise ManifestCorrupt("truncated manifest length")
            (mlen,) = struct.unpack("<I", raw_len)
            manifest = f.read(mlen)
    except OSError as e:
        raise IoFailure(str(e)) from e
    if len(manifest) != mlen:
        raise ManifestCorrupt("manifest shorter than declared")
    return _parse_manifest(manifest)


def _parse_manifest(manifest: bytes) -> list[TensorMeta]:
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(manifest):
            raise ManifestCorrupt("manifest record overruns buffer")
        chunk = manifest[pos : pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    if count == 0:
        raise ManifestCorrupt("container declares zero tensors")
    metas = []
    prev_end = 0
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        (code,) = struct.unpack("<B", take(1))
        if code not in _CODE_DTYPES:
            raise DtypeUnsupported(f"dtype code {code}")
        offset, size = struct.unpack("<QQ", take(16))
        expect = 1
        for s in shape:
            expect *= s
        if expect != size:
            raise ManifestCorrupt(f"{name}: shape/size disagree")
        if offset < prev_end:
            raise ManifestCorrupt(f"{name}: overlapping or out-of-order offset")
        prev_end = offset + size * _ITEMSIZE[_CODE_DTYPES[code]]
        metas.append(TensorMeta(name, shape, _CODE_DTYPES[code], offset, size))
    names = [m.name for m in metas]
    if len(set(names)) != len(names):
        raise ManifestCorrupt("duplicate tensor names")
    return metas


def load_container(path) -> TaskVector:
    metas = read_manifest(path)
    try:
        with open(path, "rb") as f:
            f.seek(len(MAGIC))
            (mlen,) = struct.unpack("<I", f.read(4))
            f.seek(len(MAGIC) + 4 + mlen)
            payload = f.read()
    except OSError as e:
        raise IoFailure(str(e)) from e

    need = max(m.offset_bytes + m.length_elems * _ITEMSIZE[m.dtype] for m in metas)
    if len(payload) < need:
        raise PayloadTruncated(f"payload {len(payload)}B, manifest needs {need}B")

    groups: dict[str, np.ndarray] = {}
    for m in metas:
        raw = payload[m.offset_bytes : m.offset_bytes + m.length_elems * _ITEMSIZE[m.dtype]]
        if m.dtype == "f32":
            arr = np.frombuffer(raw, dtype="<f4", count=m.length_elems).copy()
        elif m.dtype == "f16":
            arr = np.frombuffer(raw, dtype="<f2", count=m.length_elems).astype(np.float32)
        else:
            arr = bf16_bytes_to_f32(raw, m.length_elems)
        if not np.isfinite(arr).all():
            raise PayloadNonFinite(f"{m.name}: non-finite values in payload")
        groups[m.name] = arr.reshape(m.shape)
    return TaskVector(groups)
