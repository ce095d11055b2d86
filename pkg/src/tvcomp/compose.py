"""Weighted composition of low-rank expert modules.

Given modules {(A_i, B_i)} and weights w, the composed module is
(sum w_i A_i, sum w_i B_i); the effective update is their product, which
is quadratic in w.  Weights are found by a bounded Nelder-Mead search
against a caller-supplied black-box loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import CompressedArtifact, reconstruct
from .errors import LossNonFinite, RankMismatch, ShapeMismatch
from .tensor_store import TaskVector

A_SUFFIX = ".A"
B_SUFFIX = ".B"

DEFAULT_BOUNDS = (-1.5, 1.5)
DEFAULT_N_MODULES = 20


@dataclass
class LowRankModule:
    """Per-layer (A: r x in, B: out x r) factor pairs sharing one rank."""

    layers: dict[str, tuple[np.ndarray, np.ndarray]]
    rank: int


@dataclass
class ComposeWeights:
    w: np.ndarray
    bounds: tuple[float, float] = DEFAULT_BOUNDS

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)

    def clamped(self) -> np.ndarray:
        lo, hi = self.bounds
        return np.clip(self.w, lo, hi)


def _check_modules(mods: list[LowRankModule]) -> None:
    if not mods:
        raise ShapeMismatch("no modules to compose")
    ref = mods[0]
    for m in mods[1:]:
        if m.rank != ref.rank:
            raise RankMismatch(f"ranks differ: {m.rank} vs {ref.rank}")
        if set(m.layers) != set(ref.layers):
            raise ShapeMismatch("layer keys differ across modules")
        for key, (a, b) in ref.layers.items():
            a2, b2 = m.layers[key]
            if a2.shape != a.shape or b2.shape != b.shape:
                raise ShapeMismatch(f"{key}: factor shapes differ across modules")


def compose_modules(mods: list[LowRankModule], weights: ComposeWeights) -> LowRankModule:
    """Per layer, weighted sums of the A and B factors separately."""
    _check_modules(mods)
    w = np.asarray(weights.w, dtype=np.float64)
    if w.size != len(mods):
        raise ShapeMismatch(f"{len(mods)} modules but {w.size} weights")
    layers = {}
    for key in mods[0].layers:
        a_sum = sum(w[i] * mods[i].layers[key][0].astype(np.float64) for i in range(len(mods)))
        b_sum = sum(w[i] * mods[i].layers[key][1].astype(np.float64) for i in range(len(mods)))
        layers[key] = (a_sum, b_sum)
    return LowRankModule(layers, mods[0].rank)


def module_from_task_vector(tv: TaskVector) -> LowRankModule:
    """Interpret groups named '<layer>.A' / '<layer>.B' as factor pairs."""
    layers: dict[str, list] = {}
    for name, arr in tv.groups.items():
        if name.endswith(A_SUFFIX):
            layers.setdefault(name[: -len(A_SUFFIX)], [None, None])[0] = arr
        elif name.endswith(B_SUFFIX):
            layers.setdefault(name[: -len(B_SUFFIX)], [None, None])[1] = arr
        else:
            raise ShapeMismatch(f"group {name!r} is not a .A/.B factor")
    rank = None
    out = {}
    for key, (a, b) in layers.items():
        if a is None or b is None:
            raise ShapeMismatch(f"layer {key!r} is missing one factor")
        if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[1]:
            raise RankMismatch(f"layer {key!r}: A {a.shape} and B {b.shape} do not pair")
        if rank is None:
            rank = a.shape[0]
        elif a.shape[0] != rank:
            raise RankMismatch(f"layer {key!r}: rank {a.shape[0]} != {rank}")
        out[key] = (a, b)
    return LowRankModule(out, int(rank))


def compose_compressed(
    artifacts: list[CompressedArtifact], weights: ComposeWeights
) -> LowRankModule:
    """Reconstruct each artifact densely and compose; equals the dense path."""
    mods = [module_from_task_vector(reconstruct(ca)) for ca in artifacts]
    return compose_modules(mods, weights)


# ---------------------------------------------------------------------------
# derivative-free weight search


@dataclass
class _Tracker:
    loss: callable
    bounds: tuple[float, float]
    budget: int
    evals: int = 0
    best_x: np.ndarray | None = None
    best_f: float = math.inf
    history: list = field(default_factory=list)

    def __call__(self, x: np.ndarray) -> float:
        if self.evals >= self.budget:
            raise _BudgetExhausted
        x = np.clip(x, *self.bounds)
        f = float(self.loss(ComposeWeights(x.copy(), self.bounds)))
        self.evals += 1
        if not math.isfinite(f):
            raise LossNonFinite(f"loss returned {f} at {x}")
        if f < self.best_f:
            self.best_f = f
            self.best_x = x.copy()
        return f


class _BudgetExhausted(Exception):
    pass


def optimize_weights(
    n: int,
    loss,
    budget: int,
    seed: int = 0,
    bounds: tuple[float, float] = DEFAULT_BOUNDS,
    init: np.ndarray | None = None,
) -> ComposeWeights:
    """Bounded Nelder-Mead over n weights within a fixed evaluation budget.

    Starts from zero weights, clamps every candidate into the box, and
    restarts with a seeded jitter around the incumbent when the simplex
    collapses before the budget runs out.  Deterministic for a fixed seed;
    the returned weights are the best point seen, never worse than the
    start.
    """
    if budget < n + 2:
        raise ValueError(f"budget {budget} too small for {n} dimensions")
    lo, hi = bounds
    x0 = np.zeros(n) if init is None else np.clip(np.asarray(init, dtype=np.float64), lo, hi)
    rng = np.random.default_rng(seed)
    tracker = _Tracker(loss, bounds, budget)
    step = 0.1 * (hi - lo)
    try:
        start = x0
        while tracker.evals < budget:
            _nelder_mead(tracker, start, step, lo, hi)
            # simplex converged with budget to spare: restart near the best
            start = np.clip(tracker.best_x + rng.normal(0, 0.05 * (hi - lo), n), lo, hi)
            step = 0.05 * (hi - lo)
    except _BudgetExhausted:
        pass
    return ComposeWeights(tracker.best_x, bounds)


def _nelder_mead(f, x0, step, lo, hi, xtol=1e-10, ftol=1e-12):
    n = x0.size
    simplex = [np.clip(x0, lo, hi)]
    for i in range(n):
        v = x0.copy()
        v[i] = np.clip(v[i] + step, lo, hi)
        if v[i] == x0[i]:  # stuck on the bound, step inward
            v[i] = np.clip(x0[i] - step, lo, hi)
        simplex.append(v)
    fvals = [f(v) for v in simplex]

    while True:
        order = np.argsort(fvals, kind="stable")
        simplex = [simplex[i] for i in order]
        fvals = [fvals[i] for i in order]
        if (
            max(np.max(np.abs(v - simplex[0])) for v in simplex[1:]) < xtol
            and abs(fvals[-1] - fvals[0]) < ftol
        ):
            return  # collapsed
        centroid = np.mean(simplex[:-1], axis=0)
        worst = simplex[-1]

        refl = np.clip(centroid + (centroid - worst), lo, hi)
        f_refl = f(refl)
        if f_refl < fvals[0]:
            exp = np.clip(centroid + 2.0 * (centroid - worst), lo, hi)
            f_exp = f(exp)
            if f_exp < f_refl:
                simplex[-1], fvals[-1] = exp, f_exp
            else:
                simplex[-1], fvals[-1] = refl, f_refl
        elif f_refl < fvals[-2]:
            simplex[-1], fvals[-1] = refl, f_refl
        else:
            contr = np.clip(centroid + 0.5 * (worst - centroid), lo, hi)
            f_contr = f(contr)
            if f_contr < fvals[-1]:
                simplex[-1], fvals[-1] = contr, f_contr
            else:  # shrink toward the best vertex
                for i in range(1, n + 1):
                    simplex[i] = np.clip(simplex[0] + 0.5 * (simplex[i] - simplex[0]), lo, hi)
                    fvals[i] = f(simplex[i])
