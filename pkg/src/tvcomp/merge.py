"""Combine several task vectors into one multitask vector.

Three methods: elementwise averaging, task arithmetic (scaled sum), and a
trim/elect/merge scheme that keeps each input's top-magnitude entries,
elects a per-coordinate majority sign, and averages only the values that
agree with it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CompressedArtifact, n_keep_for, reconstruct, _topk_support
from .errors import EmptyList, InvalidDensity, ShapeMismatch
from .tensor_store import TaskVector

METHODS = ("average", "task_arithmetic", "ties")


@dataclass
class MergeSpec:
    method: str
    lam: float = 1.0
    trim_density: float = 20.0  # percent, ties only

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidDensity(f"unknown merge method {self.method!r}")
        if self.method == "ties" and not (0 < self.trim_density <= 100):
            raise InvalidDensity(f"trim_density must be in (0, 100], got {self.trim_density}")


def _check_inputs(taus: list[TaskVector]) -> None:
    if not taus:
        raise EmptyList("no task vectors to merge")
    ref = taus[0]
    for tv in taus[1:]:
        if tv.names() != ref.names():
            raise ShapeMismatch("group names differ across inputs")
        for name in ref.groups:
            if tv.groups[name].shape != ref.groups[name].shape:
                raise ShapeMismatch(f"{name}: shapes differ across inputs")


def merge_average(taus: list[TaskVector]) -> TaskVector:
    _check_inputs(taus)
    out = {}
    for name in taus[0].groups:
        stacked = np.stack([tv.groups[name] for tv in taus]).astype(np.float64)
        out[name] = stacked.mean(axis=0).astype(np.float32)
    return TaskVector(out)


def merge_task_arithmetic(taus: list[TaskVector], lam: float) -> TaskVector:
    _check_inputs(taus)
    out = {}
    for name in taus[0].groups:
        stacked = np.stack([tv.groups[name] for tv in taus]).astype(np.float64)
        out[name] = (lam * stacked.sum(axis=0)).astype(np.float32)
    return TaskVector(out)


def _trim(arr: np.ndarray, trim_density: float) -> np.ndarray:
    """Zero all but the top trim_density% magnitudes (values kept, not signs)."""
    flat = arr.ravel()
    keep = _topk_support(np.abs(flat), n_keep_for(flat.size, trim_density))
    out = np.zeros_like(flat)
    out[keep] = flat[keep]
    return out.reshape(arr.shape)


def merge_ties(taus: list[TaskVector], lam: float, trim_density: float) -> TaskVector:
    _check_inputs(taus)
    if not (0 < trim_density <= 100):
        raise InvalidDensity(f"trim_density must be in (0, 100], got {trim_density}")
    out = {}
    for name in taus[0].groups:
        trimmed = np.stack([_trim(tv.groups[name], trim_density) for tv in taus]).astype(np.float64)
        elected = np.sign(trimmed.sum(axis=0))  # 0 on exact ties
        match = (np.sign(trimmed) == elected) & (elected != 0)
        counts = match.sum(axis=0)
        total = np.where(match, trimmed, 0.0).sum(axis=0)
        merged = np.divide(total, counts, out=np.zeros_like(total), where=counts > 0)
        out[name] = (lam * merged).astype(np.float32)
    return TaskVector(out)


def merge_dense(taus: list[TaskVector], spec: MergeSpec) -> TaskVector:
    if spec.method == "average":
        return merge_average(taus)
    if spec.method == "task_arithmetic":
        return merge_task_arithmetic(taus, spec.lam)
    return merge_ties(taus, spec.lam, spec.trim_density)


def merge_compressed(artifacts: list[CompressedArtifact], spec: MergeSpec) -> TaskVector:
    """Reconstruct densely, then merge; identical to the dense path."""
    if not artifacts:
        raise EmptyList("no artifacts to merge")
    return merge_dense([reconstruct(ca) for ca in artifacts], spec)
