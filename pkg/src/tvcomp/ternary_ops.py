"""Bitwise kernels on the dual-bitmask representation.

Masks are packed into 64-bit words, little-endian word order, LSB holding
the lowest index within a word; tail bits past dim are zero.  One popcount
per word gives the AND/XOR reductions the formulas below need.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import TernaryTensor
from .errors import DimMismatch


@dataclass
class BitmaskPair:
    dim: int
    pos: np.ndarray  # uint64 words
    neg: np.ndarray  # uint64 words
    scale: float

    @property
    def nnz(self) -> int:
        return int(np.bitwise_count(self.pos).sum() + np.bitwise_count(self.neg).sum())

    def negated(self) -> "BitmaskPair":
        return BitmaskPair(self.dim, self.neg.copy(), self.pos.copy(), self.scale)


def _pack_words(dim: int, idx: np.ndarray) -> np.ndarray:
    bits = np.zeros(dim, dtype=np.uint8)
    bits[idx] = 1
    packed = np.packbits(bits, bitorder="little")
    nwords = (dim + 63) // 64
    padded = np.zeros(nwords * 8, dtype=np.uint8)
    padded[: packed.size] = packed
    return padded.view("<u8")


def from_ternary(t: TernaryTensor) -> BitmaskPair:
    idx = np.asarray(t.indices)
    sgn = np.asarray(t.signs)
    return BitmaskPair(t.dim, _pack_words(t.dim, idx[sgn > 0]), _pack_words(t.dim, idx[sgn < 0]), t.scale)


def to_dense(bp: BitmaskPair) -> np.ndarray:
    pos = np.unpackbits(bp.pos.view(np.uint8), bitorder="little", count=bp.dim)
    neg = np.unpackbits(bp.neg.view(np.uint8), bitorder="little", count=bp.dim)
    return bp.scale * (pos.astype(np.float64) - neg.astype(np.float64))


def _check_dims(a: BitmaskPair, b: BitmaskPair) -> None:
    if a.dim != b.dim:
        raise DimMismatch(f"{a.dim} vs {b.dim}")


def _popcnt_and(x: np.ndarray, y: np.ndarray) -> int:
    return int(np.bitwise_count(x & y).sum())


def dot(a: BitmaskPair, b: BitmaskPair) -> float:
    """Dense dot product of the two reconstructions, via four AND+POPCNT passes."""
    _check_dims(a, b)
    agree = _popcnt_and(a.pos, b.pos) + _popcnt_and(a.neg, b.neg)
    disagree = _popcnt_and(a.pos, b.neg) + _popcnt_and(a.neg, b.pos)
    return a.scale * b.scale * (agree - disagree)


def sign_distance(a: BitmaskPair, b: BitmaskPair) -> int:
    """Hamming distance over the two masks (a +1 vs -1 clash counts as 2)."""
    _check_dims(a, b)
    return int(
        np.bitwise_count(a.pos ^ b.pos).sum() + np.bitwise_count(a.neg ^ b.neg).sum()
    )


def scaled_l2_distance(a: BitmaskPair, b: BitmaskPair) -> float:
    """Euclidean distance of the reconstructions, from popcounts alone."""
    _check_dims(a, b)
    sq_a = a.scale * a.scale * a.nnz
    sq_b = b.scale * b.scale * b.nnz
    return float(np.sqrt(max(0.0, sq_a + sq_b - 2.0 * dot(a, b))))


def accumulate(vs: list[BitmaskPair]) -> np.ndarray:
    """Elementwise sum of reconstructions as a dense float64 vector."""
    if not vs:
        raise DimMismatch("accumulate needs at least one input")
    dim = vs[0].dim
    out = np.zeros(dim, dtype=np.float64)
    for v in vs:
        if v.dim != dim:
            raise DimMismatch(f"{v.dim} vs {dim}")
        pos = np.unpackbits(v.pos.view(np.uint8), bitorder="little", count=dim)
        neg = np.unpackbits(v.neg.view(np.uint8), bitorder="little", count=dim)
        out += v.scale * (pos.astype(np.int8) - neg.astype(np.int8))
    return out
