"""Sparse ternary compression of task vectors.

A task vector is compressed in two steps: keep the signs of the top-k%
largest-magnitude entries per group (everything else becomes zero), then
replace all kept magnitudes by one scalar per group, alpha * sigma of the
original dense group.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .decompose import SignMagnitude, group_sigmas, sign_magnitude
from .errors import InvalidDensity, NonFiniteScale, ShapeMismatch
from .tensor_store import TaskVector


@dataclass
class TernaryTensor:
    """One group's sparse ternary form: +-scale at the listed indices."""

    name: str
    dim: int
    indices: np.ndarray  # int64, strictly increasing, < dim
    signs: np.ndarray    # int8, entries in {-1, +1}
    scale: float
    shape: tuple[int, ...] | None = None  # original group shape, if known

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    @property
    def density(self) -> float:
        return self.nnz / self.dim

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim, dtype=np.float32)
        out[self.indices] = self.signs.astype(np.float32) * np.float32(self.scale)
        if self.shape is not None:
            return out.reshape(self.shape)
        return out


@dataclass
class CompressedArtifact:
    tensors: list[TernaryTensor]
    k_percent: float
    alpha: float
    source_fingerprint: int = 0
    pooled_sigma: bool = False

    @property
    def total_dim(self) -> int:
        return sum(t.dim for t in self.tensors)

    @property
    def total_nnz(self) -> int:
        return sum(t.nnz for t in self.tensors)

    def __iter__(self):
        return iter(self.tensors)


def fingerprint(tv: TaskVector) -> int:
    """64-bit hash over group names, shapes, and float32 payload."""
    h = hashlib.blake2b(digest_size=8)
    for name, arr in tv.groups.items():
        h.update(name.encode("utf-8"))
        h.update(np.asarray(arr.shape, dtype="<i8").tobytes())
        h.update(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return int.from_bytes(h.digest(), "little")


def n_keep_for(n: int, k_percent: float) -> int:
    """Number of entries kept in a group of length n: round half up, min 1."""
    return min(n, max(1, math.floor(n * k_percent / 100.0 + 0.5)))


def _topk_support(mag: np.ndarray, n_keep: int) -> np.ndarray:
    """Indices of the n_keep largest magnitudes, ties resolved to lower index.

    Zero magnitudes are never selected; if fewer than n_keep entries are
    nonzero, all nonzero positions are returned.  Result is sorted ascending.
    Partial selection keeps this O(n) for large groups; the stable tie rule
    is enforced by a post-pass on the boundary value.
    """
    mag = mag.ravel()
    nz = np.flatnonzero(mag)
    if nz.size <= n_keep:
        return nz.astype(np.int64)
    vals = mag[nz]
    part = np.argpartition(-vals, n_keep - 1)[:n_keep]
    thr = vals[part].min()
    definite = nz[vals > thr]
    slots = n_keep - definite.size
    at_thr = nz[vals == thr][:slots]  # flatnonzero is ascending: lowest indices win
    return np.sort(np.concatenate([definite, at_thr])).astype(np.int64)


def sparsify_topk(sm: SignMagnitude, k_percent: float) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Per group, (indices, signs) of the kept top-k% magnitude positions."""
    if not (0 < k_percent <= 100):
        raise InvalidDensity(f"k_percent must be in (0, 100], got {k_percent}")
    out = {}
    for name, mag in sm.magnitudes.items():
        n = mag.size
        idx = _topk_support(np.asarray(mag), n_keep_for(n, k_percent))
        out[name] = (idx, sm.signs[name].ravel()[idx])
    return out


def quantize(
    sparse_signs: dict[str, tuple[np.ndarray, np.ndarray]],
    sigmas: dict[str, float],
    alpha: float,
    shapes: dict[str, tuple[int, ...]] | None = None,
    dims: dict[str, int] | None = None,
) -> list[TernaryTensor]:
    """Attach the scalar alpha * sigma to each group's sign pattern."""
    if alpha <= 0:
        raise InvalidDensity(f"alpha must be positive, got {alpha}")
    tensors = []
    for name, (idx, sgn) in sparse_signs.items():
        scale = alpha * sigmas[name]
        if not math.isfinite(scale):
            raise NonFiniteScale(f"{name}: scale {scale}")
        if scale == 0.0:
            warnings.warn(f"{name}: sigma is zero, reconstruction will be all zeros")
        shape = shapes.get(name) if shapes else None
        dim = dims[name] if dims else (int(np.prod(shape)) if shape else int(idx.max()) + 1)
        tensors.append(TernaryTensor(name, dim, idx, sgn.astype(np.int8), float(scale), shape))
    return tensors


def compress(
    tau: TaskVector, k_percent: float, alpha: float, pooled_sigma: bool = False
) -> CompressedArtifact:
    """Full pipeline: decompose, sparsify to top-k%, quantize to one scalar."""
    sm = sign_magnitude(tau)
    sparse = sparsify_topk(sm, k_percent)
    sigmas = group_sigmas(tau, pooled=pooled_sigma)
    shapes = {name: arr.shape for name, arr in tau.groups.items()}
    dims = {name: arr.size for name, arr in tau.groups.items()}
    tensors = quantize(sparse, sigmas, alpha, shapes=shapes, dims=dims)
    return CompressedArtifact(
        tensors, k_percent, alpha, source_fingerprint=fingerprint(tau), pooled_sigma=pooled_sigma
    )


def reconstruct(ca: CompressedArtifact) -> TaskVector:
    """Dense task vector with +-scale at kept positions, zero elsewhere."""
    return TaskVector({t.name: t.to_dense() for t in ca.tensors})


def apply(theta_init: TaskVector, ca: CompressedArtifact) -> TaskVector:
    """theta_init + reconstruct(ca), elementwise."""
    rec = reconstruct(ca)
    if theta_init.names() != rec.names():
        raise ShapeMismatch("artifact groups do not match checkpoint groups")
    out = {}
    for name in theta_init.groups:
        base = theta_init.groups[name]
        upd = rec.groups[name]
        if base.size != upd.size:
            raise ShapeMismatch(f"{name}: {base.shape} vs {upd.shape}")
        out[name] = base + upd.reshape(base.shape)
    return TaskVector(out)
