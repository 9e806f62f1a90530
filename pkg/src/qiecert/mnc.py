"""Finite-resolution estimates of the measure of non-compactness

    sigma(A) = w0(A) + alpha(A)

on ensembles of grid functions.

For a finite set of continuous functions the true ``w0`` is zero, so the
estimate is a surrogate: ``w0_hat`` is the ensemble modulus at the largest
truncation length and smallest resolution in :class:`ModulusParams` (by
default ``eps = 2h``), and ``alpha_hat`` replaces the ``limsup`` of the
pointwise diameter by its maximum over ``[tail_start, t_max]``.  The full
``(L, eps)`` table is kept so the trend towards ``eps -> 0`` stays visible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .funcspace import Grid, GridFunction, ModulusParams, modulus_rows
from .operator import ProblemSpec, apply_T_rows

__all__ = [
    "Ensemble",
    "MncEstimate",
    "SetIterationRecord",
    "RATIO_FLOOR",
    "random_ensemble",
    "diam_at",
    "diam_series",
    "sigma_estimate",
    "hull_sample",
    "minkowski_combination",
    "set_iterate",
    "monotonicity_check",
    "convexity_check",
    "axiom_check",
    "default_tail_start",
]

RATIO_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class Ensemble:
    """A finite set of grid functions stored as an ``(m, n)`` value array."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, ndmin=2)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] != self.grid.n:
            raise ValueError(f"expected shape (m >= 1, {self.grid.n}), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("ensemble values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def members(self) -> list:
        return [GridFunction(self.grid, row) for row in self.values]

    @classmethod
    def from_members(cls, members: Sequence[GridFunction]) -> "Ensemble":
        if not members:
            raise ValueError("an ensemble needs at least one member")
        grid = members[0].grid
        if any(f.grid != grid for f in members):
            raise ValueError("ensemble members live on different grids")
        return cls(grid, np.stack([f.values for f in members]))

    def union(self, other: "Ensemble") -> "Ensemble":
        if other.grid != self.grid:
            raise ValueError("ensembles live on different grids")
        return Ensemble(self.grid, np.vstack([self.values, other.values]))

    def subset(self, idx) -> "Ensemble":
        return Ensemble(self.grid, self.values[np.asarray(idx)])

    def image(self, p: ProblemSpec) -> "Ensemble":
        """``TA``, member-wise."""
        return Ensemble(self.grid, apply_T_rows(p, self.grid, self.values))


def random_ensemble(grid: Grid, size: int, seed: int, offset: float = 2.0,
                    amplitude: float = 1.0, max_freq: float = 4.0, modes: int = 3) -> Ensemble:
    """Seeded bounded smooth members ``c + sum_j a_j sin(w_j t + p_j)``.

    Members are drawn as parameters first, so the same seed reproduces the
    same functions on any grid.
    """
    rng = np.random.default_rng(seed)
    c = rng.uniform(-offset, offset, size)
    a = rng.uniform(0.0, amplitude, (size, modes))
    w = rng.uniform(0.5, max_freq, (size, modes))
    ph = rng.uniform(0.0, 2 * np.pi, (size, modes))
    t = grid.nodes
    vals = c[:, None] + np.einsum("mj,mjn->mn", a, np.sin(w[:, :, None] * t + ph[:, :, None]))
    return Ensemble(grid, vals)


def default_tail_start(grid: Grid) -> float:
    return 0.75 * grid.t_max


def diam_series(A: Ensemble) -> np.ndarray:
    return A.values.max(axis=0) - A.values.min(axis=0)


def diam_at(A: Ensemble, t: float) -> float:
    """``diam A(t)`` at a grid node ``t``."""
    k = A.grid.node_index(t)
    col = A.values[:, k]
    return float(col.max() - col.min())


@dataclass
class MncEstimate:
    L_list: tuple
    eps_list: tuple
    w_table: np.ndarray  # [i, j] -> w^{L_i}(A; eps_j)
    w0_hat: float
    diam_series: np.ndarray
    alpha_hat: float
    sigma_hat: float
    tail_start: float

    def as_dict(self) -> dict:
        return {
            "L_list": list(self.L_list),
            "eps_list": list(self.eps_list),
            "w_table": self.w_table.tolist(),
            "w0_hat": self.w0_hat,
            "alpha_hat": self.alpha_hat,
            "sigma_hat": self.sigma_hat,
            "tail_start": self.tail_start,
        }


def _tail_index(grid: Grid, tail_start: float) -> int:
    if not (0 <= tail_start < grid.t_max):
        raise ValueError(f"tail_start must lie in [0, t_max={grid.t_max}), got {tail_start!r}")
    return int(math.ceil(tail_start / grid.h - 1e-9))


def sigma_estimate(A: Ensemble, mp: ModulusParams | None = None,
                   tail_start: float | None = None) -> MncEstimate:
    """Surrogate ``sigma_hat = w0_hat + alpha_hat`` with its ``(L, eps)`` table."""
    grid = A.grid
    mp = mp or ModulusParams.default(grid)
    tail_start = default_tail_start(grid) if tail_start is None else float(tail_start)
    mp.check(grid)
    k0 = _tail_index(grid, tail_start)
    table = np.array([[float(modulus_rows(A.values, grid, L, e).max()) for e in mp.eps_list]
                      for L in mp.L_list])
    diam = diam_series(A)
    w0 = float(table[-1, -1])
    alpha = float(diam[k0:].max())
    return MncEstimate(mp.L_list, mp.eps_list, table, w0, diam, alpha, w0 + alpha, tail_start)


def _as_rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def hull_sample(A: Ensemble, m: int, seed) -> Ensemble:
    """``A`` plus ``m`` random convex combinations of its members.

    Weights are positive uniforms normalized to sum one.  Combinations are
    clipped to the pointwise member range, which they occupy in exact
    arithmetic anyway; this keeps ``diam A(t)`` bit-identical.
    """
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m!r}")
    if m == 0:
        return A
    rng = _as_rng(seed)
    w = rng.random((m, len(A)))
    w /= w.sum(axis=1, keepdims=True)
    combos = w @ A.values
    np.clip(combos, A.values.min(axis=0), A.values.max(axis=0), out=combos)
    return Ensemble(A.grid, np.vstack([A.values, combos]))


@dataclass
class SetIterationRecord:
    sizes: list
    w0_series: list
    alpha_series: list
    sigma_series: list
    ratios: list  # ratios[k] = sigma(A_{k+1}) / sigma(A_k), None below RATIO_FLOOR
    final: Ensemble | None = field(default=None, repr=False)

    def rows(self) -> list:
        """CSV rows ``(step, w0_hat, alpha_hat, sigma_hat, ratio)``; ratio is into the step."""
        out = []
        for k, (w, a, s) in enumerate(zip(self.w0_series, self.alpha_series, self.sigma_series)):
            r = self.ratios[k - 1] if k else None
            out.append((k, w, a, s, r))
        return out


def set_iterate(p: ProblemSpec, A0: Ensemble, steps: int, m: int,
                mp: ModulusParams | None = None, tail_start: float | None = None,
                seed: int = 0) -> SetIterationRecord:
    """Finite surrogate of ``A_{k+1} = conv(T A_k)``.

    The images of the ``|A0|`` base members are carried forward and ``m``
    fresh convex combinations of the whole of ``T A_k`` are drawn each step,
    so every ``A_{k+1}`` lies in ``conv(T A_k)`` and has ``|A0| + m`` members.
    Each step draws from its own child seed.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps!r}")
    step_seeds = np.random.SeedSequence(seed).spawn(steps)
    n_base = len(A0)
    A = A0
    est = sigma_estimate(A, mp, tail_start)
    rec = SetIterationRecord([len(A)], [est.w0_hat], [est.alpha_hat], [est.sigma_hat], [])
    for k in range(steps):
        TA = A.image(p)
        fresh = hull_sample(TA, m, step_seeds[k]).values[len(TA):]
        A = Ensemble(A.grid, np.vstack([TA.values[:n_base], fresh]))
        est = sigma_estimate(A, mp, tail_start)
        prev = rec.sigma_series[-1]
        rec.ratios.append(est.sigma_hat / prev if prev > RATIO_FLOOR else None)
        rec.sizes.append(len(A))
        rec.w0_series.append(est.w0_hat)
        rec.alpha_series.append(est.alpha_hat)
        rec.sigma_series.append(est.sigma_hat)
    rec.final = A
    return rec


def minkowski_combination(A: Ensemble, B: Ensemble, lam: float) -> Ensemble:
    """``lam A + (1 - lam) B`` over all member pairs."""
    if A.grid != B.grid:
        raise ValueError("ensembles live on different grids")
    vals = lam * A.values[:, None, :] + (1.0 - lam) * B.values[None, :, :]
    return Ensemble(A.grid, vals.reshape(-1, A.grid.n))


def _is_subset(A: Ensemble, B: Ensemble) -> bool:
    rows = {r.tobytes() for r in B.values}
    return all(r.tobytes() in rows for r in A.values)


def monotonicity_check(A: Ensemble, B: Ensemble, mp=None, tail_start=None) -> dict:
    """``A subset B  =>  sigma_hat(A) <= sigma_hat(B)``; no tolerance."""
    if A.grid != B.grid or not _is_subset(A, B):
        raise ValueError("monotonicity check needs A's members to be members of B")
    sa = sigma_estimate(A, mp, tail_start).sigma_hat
    sb = sigma_estimate(B, mp, tail_start).sigma_hat
    return {"sigma_A": sa, "sigma_B": sb, "slack": sb - sa, "holds": sa <= sb}


def convexity_check(A: Ensemble, B: Ensemble, lam: float, mp=None, tail_start=None) -> dict:
    """``sigma_hat(lam A + (1-lam) B) <= lam sigma_hat(A) + (1-lam) sigma_hat(B)``.

    ``slack_ulps`` is the slack in units of the spacing at the larger side.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lam must lie in [0, 1], got {lam!r}")
    sa = sigma_estimate(A, mp, tail_start).sigma_hat
    sb = sigma_estimate(B, mp, tail_start).sigma_hat
    lhs = sigma_estimate(minkowski_combination(A, B, lam), mp, tail_start).sigma_hat
    rhs = lam * sa + (1.0 - lam) * sb
    slack = rhs - lhs
    ulp = float(np.spacing(max(abs(lhs), abs(rhs), np.finfo(float).tiny)))
    return {"lhs": lhs, "rhs": rhs, "slack": slack, "slack_ulps": slack / ulp,
            "holds": lhs <= rhs}


def axiom_check(A: Ensemble, B: Ensemble, lam: float, mp=None, tail_start=None) -> dict:
    """Axioms (ii) monotonicity and (v) convexity on a nested pair ``A subset B``."""
    return {
        "monotonicity": monotonicity_check(A, B, mp, tail_start),
        "convexity": convexity_check(A, B, lam, mp, tail_start),
    }
