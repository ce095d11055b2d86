"""Grid search over (density, scale multiplier) with a pluggable scorer."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .codec import FORMAT_GOLOMB, accounted_size_bits, encode_artifact
from .core import CompressedArtifact, compress
from .errors import InvalidDensity, SweepRequired
from .tensor_store import TaskVector

DEFAULT_K_VALUES = (5.0, 10.0, 20.0, 30.0, 50.0)
DEFAULT_ALPHA_VALUES = (0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0)

# regime in which alpha = 1 works without tuning
LARGE_MODEL_PARAMS = 13_000_000_000
LOW_DENSITY_PERCENT = 20.0


@dataclass
class SweepGrid:
    k_values: tuple[float, ...] = DEFAULT_K_VALUES
    alpha_values: tuple[float, ...] = DEFAULT_ALPHA_VALUES

    def __post_init__(self):
        if not self.k_values or not self.alpha_values:
            raise InvalidDensity("grid must be non-empty")
        for k in self.k_values:
            if not (0 < k <= 100):
                raise InvalidDensity(f"k={k} outside (0, 100]")
        for a in self.alpha_values:
            if a <= 0:
                raise InvalidDensity(f"alpha={a} must be positive")

    def cells(self):
        for k in self.k_values:
            for a in self.alpha_values:
                yield k, a


@dataclass
class SweepRow:
    k: float
    alpha: float
    score: float
    size_bits_golomb: int
    error: str | None = None


@dataclass
class SweepResult:
    rows: list[SweepRow] = field(default_factory=list)

    @property
    def best(self) -> SweepRow:
        # max score, ties to smaller size, then smaller alpha
        return min(self.rows, key=lambda r: (-r.score, r.size_bits_golomb, r.alpha))


def run_sweep(tau: TaskVector, grid: SweepGrid, scorer) -> SweepResult:
    """Evaluate scorer(artifact) on every grid cell; failures score -inf."""
    result = SweepResult()
    for k, alpha in grid.cells():
        ca = compress(tau, k, alpha)
        size = accounted_size_bits(encode_artifact(ca, FORMAT_GOLOMB))
        try:
            score = float(scorer(ca))
        except Exception as e:  # record and keep sweeping
            result.rows.append(SweepRow(k, alpha, -math.inf, size, error=repr(e)))
            continue
        result.rows.append(SweepRow(k, alpha, score, size))
    return result


def reconstruction_error_scorer(tau: TaskVector):
    """Scorer: negative L2 error between reconstruction and the original."""
    from .core import reconstruct

    def score(ca: CompressedArtifact) -> float:
        err2 = 0.0
        rec = reconstruct(ca)
        for name, arr in tau.groups.items():
            diff = arr.astype(np.float64).ravel() - rec.groups[name].astype(np.float64).ravel()
            err2 += float(diff @ diff)
        return -math.sqrt(err2)

    return score


def recommend_alpha(model_params: int, k: float) -> float:
    """Scale multiplier needing no tuning, when the regime supports one.

    Returns 1.0 for models of at least 13B parameters at density k <= 20%.
    Outside that regime raises SweepRequired: run the grid instead.
    """
    if model_params <= 0:
        raise InvalidDensity(f"model_params must be positive, got {model_params}")
    if not (0 < k <= 100):
        raise InvalidDensity(f"k={k} outside (0, 100]")
    if model_params >= LARGE_MODEL_PARAMS and k <= LOW_DENSITY_PERCENT:
        return 1.0
    raise SweepRequired(
        f"no default scale for {model_params} params at k={k}%; run a grid sweep"
    )
