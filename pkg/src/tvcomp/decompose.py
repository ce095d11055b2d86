"""Task-vector formation, sign/magnitude decomposition, and statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyVector, NameMismatch, ShapeMismatch
from .tensor_store import TaskVector


@dataclass
class SignMagnitude:
    """Elementwise split tau = signs * magnitudes (exact for float32)."""

    signs: dict[str, np.ndarray]       # int8, entries in {-1, 0, +1}
    magnitudes: dict[str, np.ndarray]  # float32, entries >= 0


@dataclass(frozen=True)
class VectorStats:
    mean: float
    std: float
    max: float
    min: float
    n: int


def _check_aligned(a: TaskVector, b: TaskVector) -> None:
    if a.names() != b.names():
        raise NameMismatch(f"group names differ: {a.names()} vs {b.names()}")
    for name in a.groups:
        if a.groups[name].shape != b.groups[name].shape:
            raise ShapeMismatch(f"{name}: {a.groups[name].shape} vs {b.groups[name].shape}")


def task_vector(theta_ft: TaskVector, theta_init: TaskVector) -> TaskVector:
    """Difference of two checkpoints, fine-tuned minus initial."""
    _check_aligned(theta_ft, theta_init)
    return TaskVector(
        {name: theta_ft.groups[name] - theta_init.groups[name] for name in theta_ft.groups}
    )


def sign_magnitude(tau: TaskVector) -> SignMagnitude:
    """Split into direction (sign, with sign(+-0.0) = 0) and magnitude."""
    signs = {}
    mags = {}
    for name, arr in tau.groups.items():
        arr = np.asarray(arr, dtype=np.float32)
        signs[name] = np.sign(arr).astype(np.int8)  # np.sign(-0.0) == 0
        mags[name] = np.abs(arr)
    return SignMagnitude(signs, mags)


def _stats_of(arr: np.ndarray) -> VectorStats:
    a = np.asarray(arr, dtype=np.float64).ravel()
    return VectorStats(
        mean=float(a.mean()),
        std=float(a.std()),  # population (ddof=0)
        max=float(a.max()),
        min=float(a.min()),
        n=int(a.size),
    )


def stats(tau: TaskVector) -> tuple[dict[str, VectorStats], VectorStats]:
    """Per-group and pooled mean/std/max/min (population std, float64)."""
    if tau.total_dim < 1:
        raise EmptyVector("task vector has no elements")
    per_group = {name: _stats_of(arr) for name, arr in tau.groups.items()}
    pooled = _stats_of(np.concatenate([a.ravel() for a in tau.groups.values()]))
    return per_group, pooled


def group_sigmas(tau: TaskVector, pooled: bool = False) -> dict[str, float]:
    """Population standard deviation per group, or the pooled value for all."""
    per_group, pooled_stats = stats(tau)
    if pooled:
        return {name: pooled_stats.std for name in tau.groups}
    return {name: s.std for name, s in per_group.items()}
