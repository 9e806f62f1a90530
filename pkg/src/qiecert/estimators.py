"""scikit-learn style wrappers over the functional API.

Arrays follow the estimator convention: rows are samples (ensemble
members), columns are grid nodes on ``[0, t_max]``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .expr import parse
from .funcspace import GridFunction, ModulusParams, make_grid
from .mnc import Ensemble, hull_sample, sigma_estimate
from .operator import ProblemSpec, apply_T_rows, picard_solve

__all__ = ["QuadraticVolterraSolver", "SigmaEstimator", "HullSampler"]


def _grid_rows(X, t_max: float):
    X = check_array(X, ensure_2d=True, dtype=np.float64)
    if X.shape[1] < 3:
        raise ValueError(f"need at least 3 grid nodes per row, got {X.shape[1]}")
    return X, make_grid(t_max, X.shape[1])


class QuadraticVolterraSolver(TransformerMixin, BaseEstimator):
    """Picard solver for ``x = g(t, x) + lam * I1[x] * I2[x]``.

    Parameters
    ----------
    g, mu1, mu2, zeta1, zeta2 : str
        Coefficient expressions; ``g`` in ``(t, x)``, ``mu_i`` in ``(t, s)``,
        ``zeta_i`` in ``(s, x)``.
    lam : float, default=1.0
    t_max : float, default=30.0
    n : int, default=4001
        Grid nodes.
    tol : float, default=1e-10
    max_iter : int, default=100
    x0 : str, default="0"
        Starting guess as an expression in ``t``.

    Attributes
    ----------
    solution_ : ndarray of shape (n,)
    grid_ : Grid
    n_iter_ : int
    residuals_ : list of float
    converged_ : bool
    """

    def __init__(self, g="x/3 + 1", mu1="exp(-(t - s))", mu2="exp(-(t - s))",
                 zeta1="exp(-s) * x / (1 + x^2)", zeta2="exp(-s) / (1 + x^2)",
                 lam=1.0, t_max=30.0, n=4001, tol=1e-10, max_iter=100, x0="0"):
        self.g = g
        self.mu1 = mu1
        self.mu2 = mu2
        self.zeta1 = zeta1
        self.zeta2 = zeta2
        self.lam = lam
        self.t_max = t_max
        self.n = n
        self.tol = tol
        self.max_iter = max_iter
        self.x0 = x0

    def _problem(self) -> ProblemSpec:
        return ProblemSpec.from_strings(self.g, self.mu1, self.mu2, self.zeta1, self.zeta2, self.lam)

    def fit(self, X=None, y=None):
        """Solve on the configured grid.  ``X`` and ``y`` are ignored."""
        p = self._problem()
        grid = make_grid(self.t_max, self.n)
        x0 = GridFunction.from_expression(grid, parse(self.x0, ("t",)))
        rep = picard_solve(p, x0, self.tol, self.max_iter)
        self.problem_ = p
        self.grid_ = grid
        self.solution_ = rep.solution.values
        self.n_iter_ = rep.iterations
        self.residuals_ = rep.residuals
        self.converged_ = rep.converged
        return self

    def predict(self, t):
        """Piecewise-linear solution values at times ``t`` in ``[0, t_max]``."""
        check_is_fitted(self, "solution_")
        t = np.asarray(t, dtype=np.float64)
        if np.any((t < 0) | (t > self.grid_.t_max)) or not np.all(np.isfinite(t)):
            raise ValueError(f"t must lie in [0, {self.grid_.t_max}]")
        return np.interp(t, self.grid_.nodes, self.solution_)

    def transform(self, X):
        """Apply ``T`` to each row of ``X`` (node values on the fitted grid)."""
        check_is_fitted(self, "solution_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.grid_.n:
            raise ValueError(f"X has {X.shape[1]} columns, expected {self.grid_.n}")
        return apply_T_rows(self.problem_, self.grid_, X)


class SigmaEstimator(BaseEstimator):
    """Surrogate ``sigma_hat = w0_hat + alpha_hat`` of the ensemble in ``X``.

    Parameters
    ----------
    t_max : float, default=30.0
    L_list, eps_list : sequence of float, optional
        Default to ``(t_max/4, t_max/2, t_max)`` and ``(8h, 4h, 2h)``.
    tail_start : float, optional
        Defaults to ``0.75 * t_max``.
    """

    def __init__(self, t_max=30.0, L_list=None, eps_list=None, tail_start=None):
        self.t_max = t_max
        self.L_list = L_list
        self.eps_list = eps_list
        self.tail_start = tail_start

    def fit(self, X, y=None):
        X, grid = _grid_rows(X, self.t_max)
        mp = None
        if self.L_list is not None or self.eps_list is not None:
            d = ModulusParams.default(grid)
            mp = ModulusParams(self.L_list if self.L_list is not None else d.L_list,
                               self.eps_list if self.eps_list is not None else d.eps_list)
        est = sigma_estimate(Ensemble(grid, X), mp, self.tail_start)
        self.estimate_ = est
        self.w_table_ = est.w_table
        self.w0_hat_ = est.w0_hat
        self.alpha_hat_ = est.alpha_hat
        self.sigma_hat_ = est.sigma_hat
        self.n_features_in_ = X.shape[1]
        return self

    def score(self, X, y=None) -> float:
        """Negative ``sigma_hat`` of ``X``, so larger is more compact."""
        check_is_fitted(self, "sigma_hat_")
        return -SigmaEstimator(**self.get_params()).fit(X).sigma_hat_


class HullSampler(TransformerMixin, BaseEstimator):
    """Append ``n_samples`` random convex combinations of the rows of ``X``.

    Parameters
    ----------
    n_samples : int, default=8
    t_max : float, default=30.0
    random_state : int, default=0
    """

    def __init__(self, n_samples=8, t_max=30.0, random_state=0):
        self.n_samples = n_samples
        self.t_max = t_max
        self.random_state = random_state

    def fit(self, X, y=None):
        X, grid = _grid_rows(X, self.t_max)
        self.grid_ = grid
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "grid_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns, expected {self.n_features_in_}")
        return hull_sample(Ensemble(self.grid_, X), self.n_samples, self.random_state).values
