"""Quadratic integral operator and Picard iteration.

    (Tx)(t) = g(t, x(t)) + lam * I1[x](t) * I2[x](t),
    Ii[x](t) = int_0^t mu_i(t, s) zeta_i(s, x(s)) ds
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .expr import Ast, ExpressionDomainError, evaluate_on, parse, to_source, variables
from .funcspace import Grid, GridFunction, kernel_integral_rows, sup_dist

__all__ = ["ProblemSpec", "SolveReport", "apply_T", "apply_T_rows", "residual", "picard_solve"]

SLOT_VARS = {
    "g": ("t", "x"),
    "mu1": ("t", "s"),
    "mu2": ("t", "s"),
    "zeta1": ("s", "x"),
    "zeta2": ("s", "x"),
}


@dataclass(frozen=True)
class ProblemSpec:
    """Coefficients of ``x = g(t, x) + lam * I1[x] * I2[x]``."""

    g: Ast
    mu1: Ast
    mu2: Ast
    zeta1: Ast
    zeta2: Ast
    lam: float

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lambda must be positive, got {self.lam!r}")
        for slot, allowed in SLOT_VARS.items():
            extra = variables(getattr(self, slot)) - set(allowed)
            if extra:
                raise ValueError(f"{slot} may only use {allowed}, found {sorted(extra)}")

    @classmethod
    def from_strings(cls, g: str, mu1: str, mu2: str, zeta1: str, zeta2: str,
                     lam: float) -> "ProblemSpec":
        src = dict(g=g, mu1=mu1, mu2=mu2, zeta1=zeta1, zeta2=zeta2)
        asts = {k: parse(v, SLOT_VARS[k]) for k, v in src.items()}
        return cls(lam=float(lam), **asts)

    def sources(self) -> Mapping[str, str]:
        return {k: to_source(getattr(self, k)) for k in SLOT_VARS}

    def with_lambda(self, lam: float) -> "ProblemSpec":
        return ProblemSpec(self.g, self.mu1, self.mu2, self.zeta1, self.zeta2, lam)


@dataclass
class SolveReport:
    iterations: int
    residuals: list
    converged: bool
    solution: GridFunction
    wall_time: float = field(default=0.0)


def _g_rows(p: ProblemSpec, grid: Grid, X: np.ndarray) -> np.ndarray:
    try:
        return np.array(evaluate_on(p.g, X.shape, {"t": grid.nodes[None, :], "x": X}))
    except ExpressionDomainError as err:
        raise ExpressionDomainError(f"g: {err.subexpression}", err.bindings, err.value) from None


def apply_T_rows(p: ProblemSpec, grid: Grid, X: np.ndarray) -> np.ndarray:
    """Apply ``T`` to every row of a ``(m, n)`` array of node values."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    I1 = kernel_integral_rows(p.mu1, p.zeta1, grid, X)
    I2 = kernel_integral_rows(p.mu2, p.zeta2, grid, X)
    return _g_rows(p, grid, X) + p.lam * I1 * I2


def apply_T(p: ProblemSpec, x: GridFunction) -> GridFunction:
    return GridFunction(x.grid, apply_T_rows(p, x.grid, x.values)[0])


def residual(p: ProblemSpec, x: GridFunction) -> float:
    """Fixed-point defect ``||Tx - x||_inf``."""
    return sup_dist(apply_T(p, x), x)


def picard_solve(p: ProblemSpec, x0: GridFunction, tol: float = 1e-10,
                 max_iter: int = 100) -> SolveReport:
    """Successive approximation ``x_{k+1} = T x_k``.

    Stops once ``||x_{k+1} - x_k||_inf <= tol`` and returns ``x_{k+1}``.
    Running out of iterations is reported through ``converged=False``.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol!r}")
    if int(max_iter) != max_iter or max_iter < 1:
        raise ValueError(f"max_iter must be a positive integer, got {max_iter!r}")
    start = time.perf_counter()
    x = x0
    residuals = []
    converged = False
    for _ in range(int(max_iter)):
        tx = apply_T(p, x)
        residuals.append(sup_dist(tx, x))
        x = tx
        if residuals[-1] <= tol:
            converged = True
            break
    return SolveReport(len(residuals), residuals, converged, x, time.perf_counter() - start)
