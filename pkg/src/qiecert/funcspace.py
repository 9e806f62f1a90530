"""Discretized bounded continuous functions on a truncated half-line.

A :class:`Grid` truncates ``(0, inf)`` to ``[0, t_max]`` with uniform spacing.
Functions live on the grid as node values (:class:`GridFunction`) and are
extended piecewise-linearly between nodes.

The cumulative kernel integral

    I(t_k) = int_0^{t_k} mu(t_k, s) zeta(s, x(s)) ds

is the hot loop of the package (O(n^2) kernel values per call).  Trapezoid
weights are folded into row blocks of the ``mu`` matrix; those blocks depend
only on ``(mu, grid)`` and are cached, so repeated applications on one grid
pay only for the weighted row sums.
"""

from __future__ import annotations

import math
import os
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .expr import Ast, ExpressionDomainError, evaluate, evaluate_on

__all__ = [
    "Grid",
    "GridFunction",
    "ModulusParams",
    "make_grid",
    "eval_interp",
    "sup_dist",
    "modulus",
    "ensemble_modulus",
    "modulus_rows",
    "cumulative_kernel_integral",
    "kernel_integral_rows",
    "clear_kernel_cache",
]

ROW_BLOCK = 256
# float64 entries kept across all cached kernels (~1.1 GB)
CACHE_BUDGET = int(os.environ.get("QIECERT_KERNEL_CACHE", 2**27))
# pairs/lags closer than this fraction of h are treated as on-node
_SNAP = 1e-9


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``0 = t_0 < ... < t_{n-1} = t_max``."""

    t_max: float
    n: int
    nodes: np.ndarray = field(compare=False, repr=False)

    @property
    def h(self) -> float:
        return self.t_max / (self.n - 1)

    def index_at_or_below(self, t: float) -> int:
        """Largest node index with ``t_i <= t`` (snapping values within rounding of a node)."""
        return min(self.n - 1, int(math.floor(t / self.h + _SNAP)))

    def node_index(self, t: float) -> int:
        """Index of node ``t``; raises if ``t`` is not a grid node."""
        k = int(round(t / self.h))
        if not 0 <= k < self.n or abs(self.nodes[k] - t) > _SNAP * self.h + 1e-15 * abs(t):
            raise ValueError(f"t={t!r} is not a node of {self!r}")
        return k

    def max_lag(self, eps: float) -> int:
        return int(math.floor(eps / self.h + _SNAP))


def make_grid(t_max: float, n: int) -> Grid:
    if not (isinstance(t_max, (int, float)) and math.isfinite(t_max) and t_max > 0):
        raise ValueError(f"t_max must be a positive finite number, got {t_max!r}")
    if int(n) != n or n < 3:
        raise ValueError(f"n must be an integer >= 3, got {n!r}")
    n = int(n)
    nodes = np.linspace(0.0, float(t_max), n)
    nodes.setflags(write=False)
    return Grid(float(t_max), n, nodes)


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_expression(cls, grid: Grid, node: Ast, var: str = "t") -> "GridFunction":
        return cls(grid, evaluate_on(node, (grid.n,), {var: grid.nodes}))

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "GridFunction":
        return cls(grid, np.full(grid.n, float(c)))


@dataclass(frozen=True)
class ModulusParams:
    """Truncation lengths ``L`` (increasing) and resolutions ``eps`` (decreasing)."""

    L_list: tuple
    eps_list: tuple

    def __post_init__(self):
        L = tuple(float(v) for v in self.L_list)
        e = tuple(float(v) for v in self.eps_list)
        if not L or not e:
            raise ValueError("L_list and eps_list must be non-empty")
        if any(b <= a for a, b in zip(L, L[1:])):
            raise ValueError(f"L_list must be strictly increasing, got {L}")
        if any(b >= a for a, b in zip(e, e[1:])):
            raise ValueError(f"eps_list must be strictly decreasing, got {e}")
        object.__setattr__(self, "L_list", L)
        object.__setattr__(self, "eps_list", e)

    @property
    def L_max(self) -> float:
        return self.L_list[-1]

    @property
    def eps_min(self) -> float:
        return self.eps_list[-1]

    @classmethod
    def default(cls, grid: Grid) -> "ModulusParams":
        h = grid.h
        return cls((grid.t_max / 4, grid.t_max / 2, grid.t_max), (8 * h, 4 * h, 2 * h))

    def check(self, grid: Grid) -> None:
        for L in self.L_list:
            _check_L(grid, L)
        for eps in self.eps_list:
            _check_eps(grid, eps)


def _check_L(grid: Grid, L: float) -> None:
    if not (0 < L <= grid.t_max * (1 + 1e-12)):
        raise ValueError(f"L must lie in (0, t_max={grid.t_max}], got {L!r}")
    if grid.index_at_or_below(L) < 1:
        raise ValueError(f"L={L!r} is shorter than one grid step")


def _check_eps(grid: Grid, eps: float) -> None:
    if not eps >= 2 * grid.h * (1 - _SNAP):
        raise ValueError(f"eps must be >= 2h = {2 * grid.h!r}, got {eps!r}")


def eval_interp(f: GridFunction, t: float) -> float:
    """Piecewise-linear value of ``f`` at ``t``; exact at nodes."""
    g = f.grid
    if not 0.0 <= t <= g.t_max:
        raise ValueError(f"t={t!r} outside [0, {g.t_max}]")
    return float(np.interp(t, g.nodes, f.values))


def sup_dist(f: GridFunction, g: GridFunction) -> float:
    if f.grid != g.grid:
        raise ValueError("grid functions live on different grids")
    return float(np.max(np.abs(f.values - g.values)))


def modulus_rows(values: np.ndarray, grid: Grid, L: float, eps: float) -> np.ndarray:
    """Per-row modulus of continuity for a ``(m, n)`` array of node values."""
    _check_L(grid, L)
    _check_eps(grid, eps)
    values = np.atleast_2d(values)
    iL = grid.index_at_or_below(L)
    K = min(grid.max_lag(eps), iL)
    v = values[:, : iL + 1]
    out = np.zeros(values.shape[0])
    for k in range(1, K + 1):
        np.maximum(out, np.max(np.abs(v[:, k:] - v[:, :-k]), axis=1), out=out)
    return out


def modulus(f: GridFunction, L: float, eps: float) -> float:
    """``w^L(f, eps)``: max ``|f(t_i) - f(t_j)|`` over nodes ``t_i, t_j <= L``, ``|t_i - t_j| <= eps``."""
    return float(modulus_rows(f.values, f.grid, L, eps)[0])


def ensemble_modulus(A, L: float, eps: float) -> float:
    """``w^L(A; eps)``, the largest member modulus."""
    return float(np.max(modulus_rows(A.values, A.grid, L, eps)))


class _KernelBlocks:
    """Trapezoid-weighted row blocks of ``mu(t_k, s_j)``, ``j <= k``."""

    def __init__(self, mu: Ast, grid: Grid):
        self.mu = mu
        self.grid = grid
        self.size = sum(
            (min(grid.n, r0 + ROW_BLOCK) - r0) * min(grid.n, r0 + ROW_BLOCK)
            for r0 in range(0, grid.n, ROW_BLOCK)
        )
        self._blocks: list | None = None

    def block(self, r0: int) -> np.ndarray:
        g = self.grid
        r1 = min(g.n, r0 + ROW_BLOCK)
        t = g.nodes[r0:r1, None]
        # s > t is outside the integration range; evaluate at s = t there
        s = np.minimum(g.nodes[None, :r1], t)
        try:
            M = np.array(evaluate_on(self.mu, (r1 - r0, r1), {"t": t, "s": s}))
        except ExpressionDomainError as err:
            raise ExpressionDomainError(f"mu: {err.subexpression}", err.bindings, err.value) from None
        rows = np.arange(r0, r1)[:, None]
        cols = np.arange(r1)[None, :]
        w = np.where(cols < rows, g.h, 0.0)
        w[(cols == rows) | ((cols == 0) & (rows > 0))] = 0.5 * g.h
        w[rows[:, 0] == 0, :] = 0.0
        M *= w
        return M

    def blocks(self):
        if self._blocks is not None:
            yield from self._blocks
            return
        for r0 in range(0, self.grid.n, ROW_BLOCK):
            yield self.block(r0)

    def materialize(self) -> None:
        self._blocks = [self.block(r0) for r0 in range(0, self.grid.n, ROW_BLOCK)]


_cache: "OrderedDict[tuple, _KernelBlocks]" = OrderedDict()


def clear_kernel_cache() -> None:
    _cache.clear()


def _kernel(mu: Ast, grid: Grid) -> _KernelBlocks:
    key = (mu, grid.t_max, grid.n)
    kb = _cache.get(key)
    if kb is not None:
        _cache.move_to_end(key)
        return kb
    kb = _KernelBlocks(mu, grid)
    if kb.size <= CACHE_BUDGET:
        while _cache and sum(k.size for k in _cache.values()) + kb.size > CACHE_BUDGET:
            _cache.popitem(last=False)
        kb.materialize()
        _cache[key] = kb
    return kb


def _zeta_rows(zeta: Ast, grid: Grid, X: np.ndarray) -> np.ndarray:
    try:
        return np.array(evaluate_on(zeta, X.shape, {"s": grid.nodes[None, :], "x": X}))
    except ExpressionDomainError as err:
        raise ExpressionDomainError(f"zeta: {err.subexpression}", err.bindings, err.value) from None


def kernel_integral_rows(mu: Ast, zeta: Ast, grid: Grid, X: np.ndarray) -> np.ndarray:
    """Cumulative kernel integral for every row of a ``(m, n)`` value array.

    Row ``k`` of each weighted block is summed with numpy's pairwise
    reduction over a fixed column range, so every member's result is
    independent of how many members are processed together.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Z = _zeta_rows(zeta, grid, X)
    out = np.empty_like(Z)
    kb = _kernel(mu, grid)
    for b, W in enumerate(kb.blocks()):
        r0 = b * ROW_BLOCK
        r1 = r0 + W.shape[0]
        for i in range(Z.shape[0]):
            out[i, r0:r1] = (W * Z[i, :r1]).sum(axis=1)
    return out


def cumulative_kernel_integral(mu: Ast, zeta: Ast, x: GridFunction) -> GridFunction:
    """``I(t_k) = int_0^{t_k} mu(t_k, s) zeta(s, x(s)) ds`` by the composite trapezoid rule.

    Domain errors report the offending ``t`` (row) and ``s`` (column) node.
    """
    return GridFunction(x.grid, kernel_integral_rows(mu, zeta, x.grid, x.values)[0])
