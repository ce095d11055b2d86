"""Bit-exact serialization of ternary tensors.

Two wire formats, both framed by a "CPT1" header:

* golomb  — per nonzero, a Rice code of the zero-run gap to the previous
  nonzero followed by one sign bit (1 = +1).  Rice parameter is derived
  from the tensor's density.
* bitmask — a positive mask then a negative mask, d bits each, each
  padded to a byte boundary.

Bitstreams are MSB-first within each byte and padded to a byte boundary
per tensor.  Entropy accounting follows the ternary source model: a
fraction k of entries is nonzero with uniform random sign, plus one
16-bit scalar per tensor.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .core import CompressedArtifact, TernaryTensor
from .errors import BitstreamCorrupt, DomainError, HeaderMismatch, MaskOverlap

GOLDEN_RATIO = (math.sqrt(5.0) + 1.0) / 2.0

BLOB_MAGIC = b"CPT1"
ARTIFACT_MAGIC = b"CPA1"
VERSION = 1

FORMAT_GOLOMB = "golomb"
FORMAT_BITMASK = "bitmask"
_FORMAT_CODES = {FORMAT_GOLOMB: 0, FORMAT_BITMASK: 1}
_CODE_FORMATS = {v: k for k, v in _FORMAT_CODES.items()}

# accounting constant for the per-tensor scale scalar
SCALE_BITS = 16


def entropy_bits(k: float, d: int) -> float:
    """Shannon bound in bits for a d-long ternary vector at density k.

    H = -((1-k) log2(1-k) + k log2(k/2)) * d + 16.  The (1-k) term is 0
    by continuity at k = 1.
    """
    if not (0 < k <= 1):
        raise DomainError(f"density must be in (0, 1], got {k}")
    if d <= 0:
        raise DomainError(f"d must be positive, got {d}")
    zero_term = 0.0 if k == 1 else (1 - k) * math.log2(1 - k)
    return -(zero_term + k * math.log2(k / 2)) * d + SCALE_BITS


def entropy_bits_per_param(k: float) -> float:
    """The per-parameter part of entropy_bits, without the 16-bit scalar."""
    if not (0 < k <= 1):
        raise DomainError(f"density must be in (0, 1], got {k}")
    zero_term = 0.0 if k == 1 else (1 - k) * math.log2(1 - k)
    return -(zero_term + k * math.log2(k / 2))


@dataclass(frozen=True)
class GolombParams:
    p: float
    b_star: int
    avg_bits_per_pos: float


def golomb_params(p: float) -> GolombParams:
    """Rice parameter b* and expected bits per position for density p.

    b* = 1 + floor(log2(log(phi - 1) / log(1 - p))), clamped to >= 1: the
    formula goes non-positive for p above ~0.38 but the code must stay
    valid at any density.
    """
    if not (0 < p < 1):
        raise DomainError(f"p must be in (0, 1), got {p}")
    raw = 1 + math.floor(math.log2(math.log(GOLDEN_RATIO - 1) / math.log(1 - p)))
    b_star = max(1, raw)
    avg = b_star + 1.0 / (1.0 - (1.0 - p) ** (2**b_star))
    return GolombParams(p, b_star, avg)


def rice_parameter(p: float) -> int:
    """Rice parameter actually used on the wire; total in (0, 1] densities."""
    if p >= 1.0:
        return 1  # every gap is zero; unary part is a single 0-bit
    return golomb_params(p).b_star


@dataclass
class TensorHeader:
    name: str
    dim: int
    nnz: int
    scale: float
    b: int  # rice parameter; 0 for bitmask format
    payload_bits: int


@dataclass
class EncodedBlob:
    format: str
    headers: list[TensorHeader]
    payloads: list[bytes]

    @property
    def total_dim(self) -> int:
        return sum(h.dim for h in self.headers)


def measured_size_bits(blob: EncodedBlob) -> int:
    """Payload bits before byte padding, excluding header framing."""
    return sum(h.payload_bits for h in blob.headers)


def accounted_size_bits(blob: EncodedBlob) -> int:
    """Payload bits plus the 16-bit scalar per tensor."""
    return measured_size_bits(blob) + SCALE_BITS * len(blob.headers)


# ---------------------------------------------------------------------------
# golomb payload


def _rice_encode_payload(t: TernaryTensor, b: int) -> tuple[bytes, int]:
    if t.nnz == 0:
        return b"", 0
    idx = np.asarray(t.indices, dtype=np.int64)
    gaps = np.diff(idx, prepend=-1) - 1
    q = gaps >> b
    r = gaps & ((1 << b) - 1)
    lens = q + b + 2  # unary(q) + terminator + b remainder bits + sign bit
    starts = np.cumsum(lens) - lens
    total = int(lens.sum())
    bits = np.zeros(total, dtype=np.uint8)
    qsum = int(q.sum())
    if qsum:
        base = np.repeat(starts, q)
        ramp = np.arange(qsum) - np.repeat(np.cumsum(q) - q, q)
        bits[base + ramp] = 1
    rem_start = starts + q + 1
    for j in range(b):
        bits[rem_start + j] = (r >> (b - 1 - j)) & 1
    bits[rem_start + b] = (np.asarray(t.signs) > 0).astype(np.uint8)
    return np.packbits(bits).tobytes(), total


def _rice_decode_payload(
    payload: bytes, payload_bits: int, nnz: int, dim: int, b: int
) -> tuple[np.ndarray, np.ndarray]:
    if nnz == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int8)
    avail = len(payload) * 8
    if payload_bits > avail:
        raise BitstreamCorrupt("declared bit count exceeds payload")
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8)).tolist()
    indices = np.empty(nnz, dtype=np.int64)
    signs = np.empty(nnz, dtype=np.int8)
    pos = 0
    prev = -1
    for i in range(nnz):
        q = 0
        while pos < payload_bits and bits[pos]:
            q += 1
            pos += 1
        if pos + b + 2 > payload_bits:  # terminator + b remainder bits + sign
            raise BitstreamCorrupt("payload exhausted mid-symbol")
        pos += 1  # unary terminator
        r = 0
        for _ in range(b):
            r = (r << 1) | bits[pos]
            pos += 1
        gap = (q << b) | r
        idx = prev + 1 + gap
        if idx >= dim:
            raise BitstreamCorrupt(f"index {idx} overruns dim {dim}")
        indices[i] = idx
        prev = idx
        signs[i] = 1 if bits[pos] else -1
        pos += 1
    return indices, signs


def encode_golomb(t: TernaryTensor) -> EncodedBlob:
    b = rice_parameter(t.nnz / t.dim) if t.nnz else 1
    payload, nbits = _rice_encode_payload(t, b)
    header = TensorHeader(t.name, t.dim, t.nnz, t.scale, b, nbits)
    return EncodedBlob(FORMAT_GOLOMB, [header], [payload])


def decode_golomb(blob: EncodedBlob) -> TernaryTensor:
    if blob.format != FORMAT_GOLOMB:
        raise HeaderMismatch(f"expected golomb blob, got {blob.format}")
    tensors = decode_tensors(blob)
    if len(tensors) != 1:
        raise HeaderMismatch(f"expected a single tensor, blob has {len(tensors)}")
    return tensors[0]


# ---------------------------------------------------------------------------
# bitmask payload


def _mask_bytes(dim: int, idx: np.ndarray) -> bytes:
    bits = np.zeros(dim, dtype=np.uint8)
    bits[idx] = 1
    return np.packbits(bits).tobytes()


def _bitmask_encode_payload(t: TernaryTensor) -> tuple[bytes, int]:
    idx = np.asarray(t.indices)
    pos = idx[np.asarray(t.signs) > 0]
    neg = idx[np.asarray(t.signs) < 0]
    return _mask_bytes(t.dim, pos) + _mask_bytes(t.dim, neg), 2 * t.dim


def _bitmask_decode_payload(
    payload: bytes, dim: int
) -> tuple[np.ndarray, np.ndarray]:
    mask_bytes = (dim + 7) // 8
    if len(payload) < 2 * mask_bytes:
        raise BitstreamCorrupt("bitmask payload shorter than 2*ceil(d/8) bytes")
    pos = np.unpackbits(np.frombuffer(payload[:mask_bytes], dtype=np.uint8), count=dim)
    neg = np.unpackbits(
        np.frombuffer(payload[mask_bytes : 2 * mask_bytes], dtype=np.uint8), count=dim
    )
    if np.any(pos & neg):
        raise MaskOverlap("positive and negative masks overlap")
    ternary = pos.astype(np.int8) - neg.astype(np.int8)
    idx = np.flatnonzero(ternary).astype(np.int64)
    return idx, ternary[idx]


def encode_bitmask(t: TernaryTensor) -> EncodedBlob:
    payload, nbits = _bitmask_encode_payload(t)
    header = TensorHeader(t.name, t.dim, t.nnz, t.scale, 0, nbits)
    return EncodedBlob(FORMAT_BITMASK, [header], [payload])


def decode_bitmask(blob: EncodedBlob) -> TernaryTensor:
    if blob.format != FORMAT_BITMASK:
        raise HeaderMismatch(f"expected bitmask blob, got {blob.format}")
    tensors = decode_tensors(blob)
    if len(tensors) != 1:
        raise HeaderMismatch(f"expected a single tensor, blob has {len(tensors)}")
    return tensors[0]


# ---------------------------------------------------------------------------
# multi-tensor blobs and file framing


def encode_artifact(ca: CompressedArtifact, fmt: str) -> EncodedBlob:
    if fmt not in _FORMAT_CODES:
        raise HeaderMismatch(f"unknown format {fmt!r}")
    headers = []
    payloads = []
    for t in ca.tensors:
        single = encode_golomb(t) if fmt == FORMAT_GOLOMB else encode_bitmask(t)
        headers.append(single.headers[0])
        payloads.append(single.payloads[0])
    return EncodedBlob(fmt, headers, payloads)


def decode_tensors(blob: EncodedBlob) -> list[TernaryTensor]:
    tensors = []
    for h, payload in zip(blob.headers, blob.payloads):
        if h.nnz > h.dim:
            raise BitstreamCorrupt(f"{h.name}: nnz {h.nnz} > dim {h.dim}")
        if blob.format == FORMAT_GOLOMB:
            idx, sgn = _rice_decode_payload(payload, h.payload_bits, h.nnz, h.dim, h.b)
        else:
            idx, sgn = _bitmask_decode_payload(payload, h.dim)
            if idx.size != h.nnz:
                raise BitstreamCorrupt(
                    f"{h.name}: header says {h.nnz} nonzeros, masks hold {idx.size}"
                )
        tensors.append(TernaryTensor(h.name, h.dim, idx, sgn, h.scale))
    return tensors


def write_blob(blob: EncodedBlob, path) -> None:
    with open(path, "wb") as f:
        f.write(BLOB_MAGIC)
        f.write(struct.pack("<BB", VERSION, _FORMAT_CODES[blob.format]))
        f.write(struct.pack("<I", len(blob.headers)))
        for h in blob.headers:
            nb = h.name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)) + nb)
            f.write(struct.pack("<QQf", h.dim, h.nnz, h.scale))
            if blob.format == FORMAT_GOLOMB:
                f.write(struct.pack("<B", h.b))
            f.write(struct.pack("<Q", h.payload_bits))
        for payload in blob.payloads:
            f.write(payload)


def read_blob(path) -> EncodedBlob:
    with open(path, "rb") as f:
        data = f.read()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise BitstreamCorrupt("blob file truncated")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    if take(4) != BLOB_MAGIC:
        raise HeaderMismatch("bad blob magic")
    version, fmt_code = struct.unpack("<BB", take(2))
    if version != VERSION or fmt_code not in _CODE_FORMATS:
        raise HeaderMismatch(f"unsupported version/format {version}/{fmt_code}")
    fmt = _CODE_FORMATS[fmt_code]
    (count,) = struct.unpack("<I", take(4))
    headers = []
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode("utf-8")
        dim, nnz, scale = struct.unpack("<QQf", take(20))
        b = struct.unpack("<B", take(1))[0] if fmt == FORMAT_GOLOMB else 0
        (nbits,) = struct.unpack("<Q", take(8))
        headers.append(TensorHeader(name, dim, nnz, scale, b, nbits))
    payloads = []
    for h in headers:
        if fmt == FORMAT_GOLOMB:
            nbytes = (h.payload_bits + 7) // 8
        else:
            nbytes = 2 * ((h.dim + 7) // 8)
        payloads.append(take(nbytes))
    return EncodedBlob(fmt, headers, payloads)


# ---------------------------------------------------------------------------
# artifact files: golomb-coded tensors plus compression metadata


def save_artifact(ca: CompressedArtifact, path) -> None:
    with open(path, "wb") as f:
        f.write(ARTIFACT_MAGIC)
        f.write(struct.pack("<B", VERSION))
        f.write(struct.pack("<ddQB", ca.k_percent, ca.alpha, ca.source_fingerprint, int(ca.pooled_sigma)))
        f.write(struct.pack("<I", len(ca.tensors)))
        payloads = []
        for t in ca.tensors:
            b = rice_parameter(t.nnz / t.dim) if t.nnz else 1
            payload, nbits = _rice_encode_payload(t, b)
            payloads.append(payload)
            nb = t.name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)) + nb)
            shape = t.shape if t.shape is not None else (t.dim,)
            f.write(struct.pack("<I", len(shape)))
            f.write(struct.pack(f"<{len(shape)}Q", *shape))
            f.write(struct.pack("<QQdBQ", t.dim, t.nnz, t.scale, b, nbits))
        for payload in payloads:
            f.write(payload)


def load_artifact(path) -> CompressedArtifact:
    with open(path, "rb") as f:
        data = f.read()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise BitstreamCorrupt("artifact file truncated")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    if take(4) != ARTIFACT_MAGIC:
        raise HeaderMismatch("bad artifact magic")
    (version,) = struct.unpack("<B", take(1))
    if version != VERSION:
        raise HeaderMismatch(f"unsupported artifact version {version}")
    k_percent, alpha, fp, pooled = struct.unpack("<ddQB", take(25))
    (count,) = struct.unpack("<I", take(4))
    metas = []
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}Q", take(8 * rank))
        dim, nnz, scale, b, nbits = struct.unpack("<QQdBQ", take(33))
        metas.append((name, shape, dim, nnz, scale, b, nbits))
    tensors = []
    for name, shape, dim, nnz, scale, b, nbits in metas:
        payload = take((nbits + 7) // 8)
        idx, sgn = _rice_decode_payload(payload, nbits, nnz, dim, b)
        tensors.append(TernaryTensor(name, dim, idx, sgn, scale, tuple(int(s) for s in shape)))
    return CompressedArtifact(tensors, k_percent, alpha, fp, bool(pooled))
