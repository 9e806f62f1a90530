import numpy as np
import pytest
from hypothesis import given, strategies as st

from qiecert.expr import ExpressionDomainError
from qiecert.funcspace import GridFunction, make_grid
from qiecert.mnc import random_ensemble
from qiecert.operator import ProblemSpec, apply_T, picard_solve, residual

from conftest import b1_spec

SQUARE = dict(g="0", mu1="1", mu2="1", zeta1="1", zeta2="1", lam=1.0)


def spec(**kw):
    return ProblemSpec.from_strings(**kw)


def test_problem_validation():
    with pytest.raises(ValueError):
        spec(**{**SQUARE, "lam": 0.0})
    with pytest.raises(ValueError):
        spec(**{**SQUARE, "g": "s"})  # s is not a variable of g
    p = spec(**SQUARE)
    assert p.with_lambda(2.0).lam == 2.0
    assert set(p.sources()) == {"g", "mu1", "mu2", "zeta1", "zeta2"}


def test_annihilated_quadratic_term():
    g = make_grid(5.0, 51)
    p = spec(g="0", mu1="exp(t)", mu2="1", zeta1="0", zeta2="x", lam=3.0)
    for m in random_ensemble(g, 3, 0).members:
        assert np.all(apply_T(p, m).values == 0.0)


@given(st.integers(0, 1000))
def test_zeta1_zero_gives_g_exactly(seed):
    g = make_grid(5.0, 51)
    p = spec(g="sin(x) + t", mu1="1", mu2="exp(-(t-s))", zeta1="0", zeta2="x", lam=2.0)
    x = random_ensemble(g, 1, seed).members[0]
    assert np.array_equal(apply_T(p, x).values, np.sin(x.values) + g.nodes)


def test_constant_kernels_give_t_squared():
    g = make_grid(3.0, 31)
    Tx = apply_T(spec(**SQUARE), random_ensemble(g, 1, 4).members[0])
    np.testing.assert_allclose(Tx.values, g.nodes ** 2, rtol=1e-13, atol=1e-13)


def test_residual_examples():
    g = make_grid(3.0, 31)
    p = spec(**SQUARE)
    sq = GridFunction(g, g.nodes ** 2)
    assert residual(p, sq) == pytest.approx(0.0, abs=1e-12)
    assert residual(p, GridFunction.constant(g, 0.0)) == pytest.approx(9.0, rel=1e-13)


def test_b1_at_zero():
    g = make_grid(30.0, 401)
    zero = GridFunction.constant(g, 0.0)
    assert np.all(apply_T(b1_spec(), zero).values == 1.0)
    assert residual(b1_spec(), zero) == 1.0


def test_picard_halving():
    g = make_grid(5.0, 51)
    p = spec(g="x/2", mu1="1", mu2="1", zeta1="0", zeta2="1", lam=1.0)
    rep = picard_solve(p, GridFunction.constant(g, 8.0), tol=1e-9, max_iter=100)
    assert rep.converged and rep.iterations <= 34
    r = np.array(rep.residuals)
    np.testing.assert_allclose(r[1:] / r[:-1], 0.5, rtol=1e-14)
    assert len(rep.residuals) == rep.iterations and rep.residuals[-1] <= 1e-9


def test_constant_map_converges_in_two():
    g = make_grid(5.0, 51)
    p = spec(g="2", mu1="exp(-(t-s))", mu2="1", zeta1="exp(-s)", zeta2="1", lam=1.0)
    rep = picard_solve(p, GridFunction.constant(g, 0.0), tol=1e-12, max_iter=10)
    assert rep.iterations == 2 and rep.residuals[1] == 0.0


def test_nonconvergence_is_reported():
    g = make_grid(5.0, 51)
    p = spec(g="x + 1", mu1="1", mu2="1", zeta1="0", zeta2="1", lam=1.0)
    rep = picard_solve(p, GridFunction.constant(g, 0.0), tol=1e-9, max_iter=5)
    assert not rep.converged and rep.iterations == 5


def test_bad_solver_args():
    g = make_grid(5.0, 11)
    x0 = GridFunction.constant(g, 0.0)
    with pytest.raises(ValueError):
        picard_solve(b1_spec(), x0, tol=0.0)
    with pytest.raises(ValueError):
        picard_solve(b1_spec(), x0, max_iter=0)


def test_domain_error_propagates():
    g = make_grid(5.0, 11)
    p = spec(g="ln(x)", mu1="1", mu2="1", zeta1="1", zeta2="1", lam=1.0)
    with pytest.raises(ExpressionDomainError) as ei:
        apply_T(p, GridFunction.constant(g, 0.0))
    assert ei.value.subexpression.startswith("g:")


def test_b1_residuals_contract():
    g = make_grid(30.0, 1001)
    rep = picard_solve(b1_spec(), GridFunction.constant(g, 0.0), tol=1e-10, max_iter=60)
    r = np.array(rep.residuals)
    assert rep.converged
    assert np.all(np.diff(r[1:]) <= 0)
    assert np.all(r[2:] / r[1:-1] <= 1 / 3 + 0.05)


def test_refinement_changes_T_by_h_squared():
    p = b1_spec()
    diffs = []
    for n in (501, 1001, 2001):
        coarse, fine = make_grid(30.0, n), make_grid(30.0, 2 * n - 1)
        f = random_ensemble(coarse, 1, 2).members[0]
        ff = random_ensemble(fine, 1, 2).members[0]
        diffs.append(np.abs(apply_T(p, ff).values[::2] - apply_T(p, f).values).max())
    assert 3.0 <= diffs[0] / diffs[1] <= 5.0
    assert 3.0 <= diffs[1] / diffs[2] <= 5.0
