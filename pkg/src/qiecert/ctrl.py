"""Control-function classes and the contraction inequalities built on them.

Membership checks are sampled semi-decisions: ``pass`` means no violation
was found on the sample grid, ``fail`` always carries a witness that can be
re-evaluated, and ``inconclusive`` marks clauses a finite sample cannot
settle.

Operators ``O(xi; t)`` come from a small registry of named forms applied to
a user function ``xi``:

* ``identity``:   ``O(xi; t) = xi(t)``
* ``log_damped``: ``O(xi; t) = xi(t) / (1 + ln(1 + xi(t)))``
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .expr import Ast, evaluate, parse, to_source

__all__ = [
    "O_FORMS",
    "O_apply",
    "Verdict",
    "MembershipReport",
    "ControlBundle",
    "default_sample_grid",
    "default_lattice",
    "DEFAULT_DELTAS",
    "DEFAULT_A_VALUES",
    "check_theta",
    "check_geraghty",
    "check_psi",
    "check_omega",
    "check_F",
    "check_mt",
    "check_dominates",
    "theta_contraction_sides",
    "mt_contraction_sides",
]

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"

MAX_WITNESSES = 5000
DEFAULT_DELTAS = (0.5, 0.2, 0.1, 0.05, 0.01)
DEFAULT_A_VALUES = (0.5, 0.1, 0.25, 0.75, 0.9)
CONT_TOL = 1e-6
ANCHORS = (0.5, 1.0, 2.0, 3.0)


def default_sample_grid() -> np.ndarray:
    """200 log-spaced points on ``[1e-6, 1e3]`` plus a few unit-scale anchors."""
    return np.unique(np.concatenate([np.logspace(-6, 3, 200), ANCHORS]))


def default_lattice() -> np.ndarray:
    """Axis values for the pair lattice used by the ``F`` checks."""
    return np.unique(np.concatenate([[0.0], np.logspace(-3, 3, 36), ANCHORS]))


def _log_damped(v):
    return v / (1.0 + np.log1p(v))


O_FORMS: Mapping[str, Callable] = {
    "identity": lambda v: v,
    "log_damped": _log_damped,
}


def _form(name: str) -> Callable:
    try:
        return O_FORMS[name]
    except KeyError:
        raise ValueError(f"unknown O form {name!r}; choose from {sorted(O_FORMS)}") from None


def O_apply(O_form: str, xi: Ast, t: float, scale: float = 1.0) -> float:
    """``O(scale * xi; t)``."""
    if t < 0:
        raise ValueError(f"O(xi; t) needs t >= 0, got {t!r}")
    v = scale * evaluate(xi, {"t": t})
    if v < 0:
        raise ValueError(f"xi({t!r}) = {v!r} is negative")
    return float(_form(O_form)(v))


@dataclass
class Verdict:
    status: str
    witness: dict | None = None
    witnesses: list = field(default_factory=list)
    detail: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"status": self.status, "witness": self.witness,
                "n_witnesses": len(self.witnesses), "detail": self.detail}


class _Collector:
    def __init__(self):
        self.found = []

    def add(self, **w):
        if len(self.found) < MAX_WITNESSES:
            self.found.append(w)

    def verdict(self, ok_status=PASS, **detail) -> Verdict:
        if self.found:
            return Verdict(FAIL, self.found[0], self.found, detail)
        return Verdict(ok_status, None, [], detail)


@dataclass
class MembershipReport:
    family: str
    checks: dict
    samples: str

    @property
    def status(self) -> str:
        states = [v.status for v in self.checks.values()]
        if FAIL in states:
            return FAIL
        if INCONCLUSIVE in states:
            return INCONCLUSIVE
        return PASS

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def as_dict(self) -> dict:
        return {"family": self.family, "status": self.status, "samples": self.samples,
                "checks": {k: v.as_dict() for k, v in self.checks.items()}}


def _grid(sample_grid) -> np.ndarray:
    g = default_sample_grid() if sample_grid is None else np.asarray(sample_grid, dtype=float)
    g = np.unique(g)
    if g.size == 0 or np.any(g <= 0):
        raise ValueError("sample grid must be non-empty and positive")
    return g


def _describe(g: np.ndarray) -> str:
    return f"{g.size} points in [{g[0]:.3g}, {g[-1]:.3g}]"


def _f(node: Ast, var: str = "t") -> Callable[[float], float]:
    return lambda v: evaluate(node, {var: v})


# -- generic sampled properties --------------------------------------------

def _monotone(f, g) -> Verdict:
    c = _Collector()
    vals = [f(t) for t in g]
    for (t, a), (s, b) in zip(zip(g, vals), zip(g[1:], vals[1:])):
        if b < a:
            c.add(t=float(t), s=float(s), f_t=a, f_s=b)
    return c.verdict()


def _continuity(f, g, steps: int = 8) -> Verdict:
    """Refining-sequence proxy: ``|f(t +- h_j) - f(t)|`` at ``h_j = t 10^-j``."""
    c = _Collector()
    worst = 0.0
    for t in g:
        ft = f(t)
        jumps = []
        for j in range(1, steps + 1):
            h = t * 10.0 ** -j
            jumps.append(max(abs(f(t + h) - ft), abs(f(t - h) - ft)))
        worst = max(worst, jumps[-1] / (1 + abs(ft)))
        if jumps[-1] > CONT_TOL * (1 + abs(ft)):
            c.add(t=float(t), h=float(t * 10.0 ** -steps), f_t=ft, jump=jumps[-1])
    return c.verdict(worst_relative_jump=worst)


# -- Theta ------------------------------------------------------------------

def check_theta(O_form: str, xi: Ast, sample_grid=None,
                a_values: Sequence[float] = DEFAULT_A_VALUES) -> MembershipReport:
    """Operator axioms (i)-(iv) plus ``O(a xi; t) <= a O(xi; t)`` for sampled ``a``."""
    form = _form(O_form)
    g = _grid(sample_grid)
    xi_f = _f(xi)

    def O(t, scale=1.0):
        return float(form(scale * xi_f(t)))

    checks = {}

    c = _Collector()
    x0 = xi_f(0.0)
    if x0 < 0:
        c.add(t=0.0, xi_t=x0)
    elif O(0.0) != 0.0:
        c.add(t=0.0, O_t=O(0.0))
    for t in g:
        x = xi_f(t)
        if x < 0:
            c.add(t=float(t), xi_t=x)
        elif not O(t) > 0:
            c.add(t=float(t), O_t=O(t))
    checks["positivity"] = c.verdict()
    if c.found:
        # remaining checks need xi >= 0 on the grid
        return MembershipReport("Theta", checks, _describe(g))

    checks["monotone"] = _monotone(O, g)
    checks["continuity"] = _continuity(O, g)

    c = _Collector()
    sub = g[:: max(1, g.size // 40)]
    for t in sub:
        for s in sub:
            lhs = O(max(t, s))
            rhs = max(O(t), O(s))
            if lhs != rhs:
                c.add(t=float(t), s=float(s), lhs=lhs, rhs=rhs)
    checks["max_distribution"] = c.verdict()

    c = _Collector()
    for a in a_values:
        if not 0 < a < 1:
            raise ValueError(f"a must lie in (0, 1), got {a!r}")
        for t in g:
            lhs = O(t, scale=a)
            rhs = a * O(t)
            if lhs > rhs + 4 * np.spacing(abs(rhs)):
                c.add(a=float(a), t=float(t), lhs=lhs, rhs=rhs)
    checks["mild_assumption"] = c.verdict()
    return MembershipReport("Theta", checks, _describe(g))


# -- Delta (Geraghty) ---------------------------------------------------------

def check_geraghty(alpha: Ast, sample_grid=None,
                   delta_list: Sequence[float] = DEFAULT_DELTAS) -> MembershipReport:
    """Range ``[0, 1)`` and the trend of ``s(delta) = sup{t : alpha(t) >= 1 - delta}``.

    ``s(delta)`` should shrink towards 0 along ``delta_list``.  A table that
    never shrinks while staying positive fails with the last ``(delta, t)``
    as witness; a constant below ``1 - delta`` passes vacuously.
    """
    g = _grid(sample_grid)
    f = _f(alpha)
    vals = np.array([f(t) for t in g])
    checks = {}

    c = _Collector()
    for t, v in zip(g, vals):
        if not 0.0 <= v < 1.0:
            c.add(t=float(t), alpha_t=float(v))
    checks["range"] = c.verdict()

    deltas = sorted(delta_list, reverse=True)
    table = []
    for d in deltas:
        hit = g[vals >= 1.0 - d]
        table.append({"delta": d, "s": float(hit.max()) if hit.size else 0.0})
    s_first, s_last = table[0]["s"], table[-1]["s"]
    detail = {"table": table}
    if s_last == 0.0:
        checks["limit"] = Verdict(PASS, detail=dict(detail, vacuous=s_first == 0.0))
    elif s_last < 0.5 * s_first:
        checks["limit"] = Verdict(PASS, detail=detail)
    elif s_last >= s_first:
        w = {"delta": deltas[-1], "t": s_last, "alpha_t": float(f(s_last))}
        checks["limit"] = Verdict(FAIL, w, [w], detail)
    else:
        checks["limit"] = Verdict(INCONCLUSIVE, detail=detail)
    return MembershipReport("Delta", checks, _describe(g))


# -- Psi, Omega ---------------------------------------------------------------

def _zero_checks(f, g) -> tuple[Verdict, Verdict]:
    c0 = _Collector()
    f0 = f(0.0)
    if f0 != 0.0:
        c0.add(t=0.0, f_t=f0)
    cp = _Collector()
    for t in g:
        v = f(t)
        if not v > 0:
            cp.add(t=float(t), f_t=v)
    return c0.verdict(), cp.verdict()


def check_psi(eta: Ast, sample_grid=None) -> MembershipReport:
    g = _grid(sample_grid)
    f = _f(eta)
    zero, positive = _zero_checks(f, g)
    checks = {"monotone": _monotone(f, g), "zero_at_zero": zero, "positive": positive,
              "continuity": _continuity(f, g)}
    return MembershipReport("Psi", checks, _describe(g))


def check_omega(omega: Ast, sample_grid=None) -> MembershipReport:
    g = _grid(sample_grid)
    f = _f(omega)
    zero, positive = _zero_checks(f, g)
    checks = {"monotone": _monotone(f, g), "zero_at_zero": zero, "positive": positive}
    return MembershipReport("Omega", checks, _describe(g))


# -- F ------------------------------------------------------------------------

def check_F(F: Ast, lattice=None) -> MembershipReport:
    """``max{x, y} <= F(x, y)`` on a pair lattice, plus continuity along each axis."""
    axis = default_lattice() if lattice is None else np.unique(np.asarray(lattice, dtype=float))
    if np.any(axis < 0):
        raise ValueError("lattice values must be >= 0")
    X, Y = np.meshgrid(axis, axis, indexing="ij")
    vals = np.asarray(np.broadcast_to(evaluate(F, {"x": X, "y": Y}), X.shape))
    checks = {}
    c = _Collector()
    for i, j in zip(*np.nonzero(vals < np.maximum(X, Y))):
        c.add(x=float(X[i, j]), y=float(Y[i, j]), max_xy=float(max(X[i, j], Y[i, j])),
              F_xy=float(vals[i, j]))
    checks["dominates_max"] = c.verdict()

    c = _Collector()
    worst = 0.0
    for x, y, fxy in zip(X.ravel(), Y.ravel(), vals.ravel()):
        for dx, dy in ((1, 0), (0, 1)):
            h = max(x if dx else y, 1.0) * 1e-8
            jump = abs(evaluate(F, {"x": x + dx * h, "y": y + dy * h}) - fxy)
            worst = max(worst, jump / (1 + abs(fxy)))
            if jump > CONT_TOL * (1 + abs(fxy)):
                c.add(x=float(x), y=float(y), h=h, F_xy=float(fxy), jump=float(jump))
    checks["continuity"] = c.verdict(worst_relative_jump=worst)
    return MembershipReport("F", checks, f"{axis.size}x{axis.size} lattice in "
                                         f"[{axis[0]:.3g}, {axis[-1]:.3g}]^2")


# -- Upsilon (Mizoguchi-Takahashi) ------------------------------------------------

def check_mt(chi: Ast, sample_grid=None, refinements: int = 6) -> MembershipReport:
    """Range ``[0, 1)`` and a right-limsup proxy ``max chi`` over ``(t, t + h_j]``.

    The proxy at the finest ``h_j`` must stay below 1; the smallest margin
    ``1 - proxy`` is reported.
    """
    g = _grid(sample_grid)
    f = _f(chi)
    checks = {}
    c = _Collector()
    for t in np.concatenate([[0.0], g]):
        v = f(t)
        if not 0.0 <= v < 1.0:
            c.add(t=float(t), chi_t=v)
    checks["range"] = c.verdict()

    c = _Collector()
    margin = np.inf
    for t in np.concatenate([[0.0], g]):
        scale = max(t, 1.0)
        proxy = None
        for j in range(1, refinements + 1):
            h = scale * 10.0 ** -j
            proxy = max(f(t + h * k / 8) for k in range(1, 9))
        margin = min(margin, 1.0 - proxy)
        if not proxy < 1.0:
            c.add(t=float(t), h=float(scale * 10.0 ** -refinements), limsup_proxy=proxy)
    checks["right_limsup"] = c.verdict(min_margin=float(margin))
    return MembershipReport("Upsilon", checks, _describe(g))


def check_dominates(upper: Ast, lower: Ast, sample_grid=None) -> Verdict:
    """``upper(t) > lower(t)`` for sampled ``t > 0`` (e.g. ``eta > beta``)."""
    g = _grid(sample_grid)
    c = _Collector()
    for t in g:
        u, l = evaluate(upper, {"t": t}), evaluate(lower, {"t": t})
        if not u > l:
            c.add(t=float(t), upper=u, lower=l)
    return c.verdict()


# -- bundles and contraction inequalities -------------------------------------------------

_BUNDLE_VARS = {
    "alpha": ("t",), "beta": ("t",), "eta": ("t",), "phi": ("t",), "F": ("x", "y"),
    "xi": ("t",), "chi": ("t",), "omega": ("t",),
}


@dataclass(frozen=True)
class ControlBundle:
    """One instantiation of the control functions; unused slots stay ``None``."""

    alpha: Ast | None = None
    beta: Ast | None = None
    eta: Ast | None = None
    phi: Ast | None = None
    F: Ast | None = None
    xi: Ast | None = None
    O_form: str = "identity"
    chi: Ast | None = None
    omega: Ast | None = None

    def __post_init__(self):
        _form(self.O_form)

    @classmethod
    def from_strings(cls, O_form: str = "identity", **slots: str | None) -> "ControlBundle":
        unknown = set(slots) - set(_BUNDLE_VARS)
        if unknown:
            raise ValueError(f"unknown bundle slot(s): {sorted(unknown)}")
        asts = {k: parse(v, _BUNDLE_VARS[k]) for k, v in slots.items() if v is not None}
        if "xi" not in asts:
            asts["xi"] = parse("t", ("t",))
        return cls(O_form=O_form, **asts)

    def sources(self) -> dict:
        out = {"O_form": self.O_form}
        for f in fields(self):
            if f.name != "O_form":
                node = getattr(self, f.name)
                out[f.name] = None if node is None else to_source(node)
        return out

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ValueError(f"control bundle is missing slot(s): {', '.join(missing)}")

    def O(self, v: float) -> float:
        return O_apply(self.O_form, self.xi, v)

    def Fphi(self, sigma: float) -> float:
        phi = evaluate(self.phi, {"t": sigma})
        return evaluate(self.F, {"x": sigma, "y": phi})


def _check_sigmas(sigma_Y: float, sigma_TY: float) -> None:
    if sigma_Y < 0 or sigma_TY < 0:
        raise ValueError("sigma values must be >= 0")


def theta_contraction_sides(b: ControlBundle, sigma_Y: float, sigma_TY: float) -> tuple[float, float, bool]:
    """``eta(O(F(s', phi(s')))) <= alpha(O(eta(s))) * beta(O(F(s, phi(s))))``.

    ``s = sigma(Y)``, ``s' = sigma(TY)``.  ``eta > beta`` on positives is the
    caller's responsibility (:func:`check_dominates`).
    """
    b.require("alpha", "beta", "eta", "phi", "F", "xi")
    _check_sigmas(sigma_Y, sigma_TY)
    ev = lambda node, v: evaluate(node, {"t": v})  # noqa: E731
    lhs = ev(b.eta, b.O(b.Fphi(sigma_TY)))
    rhs = ev(b.alpha, b.O(ev(b.eta, sigma_Y))) * ev(b.beta, b.O(b.Fphi(sigma_Y)))
    return lhs, rhs, lhs <= rhs


def mt_contraction_sides(b: ControlBundle, sigma_Y: float, sigma_TY: float) -> tuple[float, float, bool]:
    """``omega(O(F(s', phi(s')))) <= chi(O(omega(s))) * omega(O(F(s, phi(s))))``."""
    b.require("omega", "chi", "phi", "F", "xi")
    _check_sigmas(sigma_Y, sigma_TY)
    ev = lambda node, v: evaluate(node, {"t": v})  # noqa: E731
    lhs = ev(b.omega, b.O(b.Fphi(sigma_TY)))
    rhs = ev(b.chi, b.O(ev(b.omega, sigma_Y))) * ev(b.omega, b.O(b.Fphi(sigma_Y)))
    return lhs, rhs, lhs <= rhs
