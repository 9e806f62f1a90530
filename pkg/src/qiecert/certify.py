"""Sampled check of the sufficient conditions for existence of a solution.

The three conditions checked are

(i)   ``|g(t,x) - g(t,y)| <= gamma |x - y|`` with ``gamma < 1``;
(ii)  ``|I_i[x](t) - I_i[y](t)| -> 0`` as ``t -> inf``, uniformly in ``x, y``;
(iii) ``|I_i[x](t)| <= A_i`` for all ``t`` and ``x``.

On top of these the module evaluates the continuity-modulus estimate
``w^L(TA, eps) <= gamma w^L(A, eps) + Lambda + sup G`` and the contraction
ratios of ``w0``, ``alpha`` and ``sigma`` under ``T``.

A ``CERTIFIED_NUMERICALLY`` verdict means no sampled check failed.  The
conditions quantify over all of ``E`` and all ``t``; this is a finite-sample
check, not a proof.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import ctrl
from .expr import Ast, evaluate, evaluate_on, parse
from .funcspace import Grid, GridFunction, ModulusParams, kernel_integral_rows, make_grid, modulus_rows
from .mnc import RATIO_FLOOR, Ensemble, default_tail_start, random_ensemble, sigma_estimate
from .operator import ProblemSpec

__all__ = [
    "CERTIFIED",
    "INCONCLUSIVE",
    "VIOLATED",
    "BANNER",
    "CertifyConfig",
    "CertificationReport",
    "estimate_gamma",
    "estimate_bounds",
    "check_decay",
    "kernel_modulus",
    "kernel_bound",
    "prelimit_inequality",
    "contraction_check",
    "certify_existence",
]

CERTIFIED = "CERTIFIED_NUMERICALLY"
INCONCLUSIVE = "INCONCLUSIVE"
VIOLATED = "VIOLATED"
BANNER = ("finite-sample check of the existence hypotheses on a truncated grid; "
          "a passing verdict is numerical evidence, not a proof")

_MIN_DX = 1e-9


def estimate_gamma(g: Ast, t_samples, x_range: float, pairs: int, seed: int = 0):
    """Largest sampled difference quotient of ``g`` in ``x``.

    Half of the pairs are independent uniforms on ``[-R, R]``; the rest are
    close pairs ``y = x + d`` with ``|d|`` log-uniform on ``[1e-6 R, R]``.
    Each quotient gives up a rounding allowance of four spacings at the
    scale ``max(|x|, |y|, |g(x)|, |g(y)|, 1)``, so cancellation inside ``g``
    cannot push the estimate above the true slope.

    Returns ``(gamma_hat, witness)``.
    """
    if not x_range > 0:
        raise ValueError(f"x_range must be positive, got {x_range!r}")
    if pairs < 1:
        raise ValueError(f"pairs must be >= 1, got {pairs!r}")
    rng = np.random.default_rng(seed)
    R = float(x_range)
    ts = np.asarray(t_samples, dtype=float)
    t = rng.choice(ts, pairs)
    x = rng.uniform(-R, R, pairs)
    far = pairs // 2
    y = np.empty(pairs)
    y[:far] = rng.uniform(-R, R, far)
    d = R * 10.0 ** rng.uniform(-6, 0, pairs - far) * rng.choice([-1.0, 1.0], pairs - far)
    y[far:] = np.clip(x[far:] + d, -R, R)
    keep = np.abs(x - y) > _MIN_DX
    t, x, y = t[keep], x[keep], y[keep]
    gx = np.asarray(evaluate_on(g, x.shape, {"t": t, "x": x}))
    gy = np.asarray(evaluate_on(g, y.shape, {"t": t, "x": y}))
    scale = np.maximum.reduce([np.abs(x), np.abs(y), np.abs(gx), np.abs(gy), np.ones_like(x)])
    allowance = 4.0 * np.spacing(scale)
    q = np.maximum(np.abs(gx - gy) - allowance, 0.0) / np.abs(x - y)
    i = int(np.argmax(q))
    witness = {"t": float(t[i]), "x": float(x[i]), "y": float(y[i]),
               "g_x": float(gx[i]), "g_y": float(gy[i]), "quotient": float(q[i])}
    return float(q[i]), witness


def estimate_bounds(p: ProblemSpec, probe: Ensemble) -> tuple[float, float]:
    """``A_i`` as the largest ``|I_i[x](t)|`` over probe members and nodes."""
    I1 = kernel_integral_rows(p.mu1, p.zeta1, probe.grid, probe.values)
    I2 = kernel_integral_rows(p.mu2, p.zeta2, probe.grid, probe.values)
    return float(np.abs(I1).max()), float(np.abs(I2).max())


def check_decay(p: ProblemSpec, pairs: Sequence[tuple], tail_start: float | None = None,
                decay_tol: float = 1e-8) -> dict:
    """Tabulate ``D_i(t) = |I_i[x](t) - I_i[y](t)|``, maximized over the pairs.

    Per kernel the tail verdict is ``pass`` when ``D_i`` is non-increasing on
    ``[tail_start, t_max]`` (steps up by at most ``decay_tol``) and ends
    below ``decay_tol``; ``fail`` when it ends higher than it entered the
    tail by more than ``decay_tol`` (growth); otherwise ``inconclusive``.
    """
    if not pairs:
        raise ValueError("check_decay needs at least one pair")
    grid = pairs[0][0].grid
    X = np.stack([x.values for x, _ in pairs])
    Y = np.stack([y.values for _, y in pairs])
    tail_start = default_tail_start(grid) if tail_start is None else tail_start
    k0 = int(math.ceil(tail_start / grid.h - 1e-9))
    out = {"t": grid.nodes, "tail_start": tail_start, "decay_tol": decay_tol}
    status = {}
    for i, (mu, zeta) in enumerate(((p.mu1, p.zeta1), (p.mu2, p.zeta2)), start=1):
        D = np.abs(kernel_integral_rows(mu, zeta, grid, X) - kernel_integral_rows(mu, zeta, grid, Y))
        Dmax = D.max(axis=0)
        tail = Dmax[k0:]
        if tail[-1] <= decay_tol and np.all(np.diff(tail) <= decay_tol):
            verdict = {"status": "pass"}
        elif tail[-1] > tail[0] + decay_tol:
            j = int(np.argmax(D[:, -1]))
            verdict = {"status": "fail", "witness": {
                "pair": j, "t_tail_start": float(grid.nodes[k0]), "D_tail_start": float(tail[0]),
                "t_max": grid.t_max, "D_t_max": float(tail[-1])}}
        else:
            verdict = {"status": "inconclusive", "D_t_max": float(tail[-1])}
        out[f"D{i}"] = Dmax
        status[f"D{i}"] = verdict
    out["verdicts"] = status
    states = [v["status"] for v in status.values()]
    out["status"] = "fail" if "fail" in states else "inconclusive" if "inconclusive" in states else "pass"
    return out


def _zeta_abs_max(zeta: Ast, s: np.ndarray, x_samples: np.ndarray) -> np.ndarray:
    Z = evaluate_on(zeta, (s.size, x_samples.size), {"s": s[:, None], "x": x_samples[None, :]})
    return np.abs(Z).max(axis=1)


def _mu_columns(mu: Ast, nodes: np.ndarray, block: int = 256):
    for c0 in range(0, nodes.size, block):
        s = nodes[c0:c0 + block]
        yield c0, np.asarray(evaluate_on(mu, (nodes.size, s.size),
                                         {"t": nodes[:, None], "s": s[None, :]}))


def kernel_modulus(mu: Ast, zeta: Ast, grid: Grid, L: float, eps: float, x_samples) -> float:
    """``sup |mu(t,s) zeta(s,x) - mu(u,s) zeta(s,x)|`` over nodes ``t, u, s <= L``, ``|t-u| <= eps``.

    The ``zeta`` factor is common to both terms, so the sup factorizes into
    ``max_s [max_{t,u} |mu(t,s) - mu(u,s)|] * [max_x |zeta(s,x)|]``.
    """
    if not eps >= 2 * grid.h * (1 - 1e-9):
        raise ValueError(f"eps must be >= 2h = {2 * grid.h!r}, got {eps!r}")
    iL = grid.index_at_or_below(L)
    K = min(grid.max_lag(eps), iL)
    nodes = grid.nodes[: iL + 1]
    zmax = _zeta_abs_max(zeta, nodes, np.asarray(x_samples, dtype=float))
    best = 0.0
    for c0, M in _mu_columns(mu, nodes):
        dmu = np.zeros(M.shape[1])
        for k in range(1, K + 1):
            np.maximum(dmu, np.abs(M[k:] - M[:-k]).max(axis=0), out=dmu)
        best = max(best, float((dmu * zmax[c0:c0 + M.shape[1]]).max()))
    return best


def kernel_bound(mu: Ast, zeta: Ast, grid: Grid, L: float, x_samples) -> float:
    """``B^L = max |mu(u,s) zeta(s,x)|`` over nodes ``u, s <= L`` and sampled ``x``."""
    iL = grid.index_at_or_below(L)
    nodes = grid.nodes[: iL + 1]
    zmax = _zeta_abs_max(zeta, nodes, np.asarray(x_samples, dtype=float))
    best = 0.0
    for c0, M in _mu_columns(mu, nodes):
        best = max(best, float((np.abs(M).max(axis=0) * zmax[c0:c0 + M.shape[1]]).max()))
    return best


def _x_window(A: Ensemble, L: float, count: int = 21) -> np.ndarray:
    iL = A.grid.index_at_or_below(L)
    v = A.values[:, : iL + 1]
    return np.linspace(v.min(), v.max(), count)


def prelimit_inequality(p: ProblemSpec, A: Ensemble, L: float, eps: float, gamma_hat: float,
                        A1_hat: float, A2_hat: float, x_samples=None) -> dict:
    """``w^L(TA, eps) <= gamma w^L(A, eps) + Lambda + sup_{|t-u|<=eps} G(t, u)``.

    ``Lambda = lam L (A1 w^L(mu2, zeta2, eps) + A2 w^L(mu1, zeta1, eps))`` and
    ``sup G = lam eps (L B2 w^L(mu1, zeta1, eps) + A1 B2 + A2 max(B1, B2))``;
    the last term takes the larger of the two index readings of the bound.
    ``x_samples`` defaults to the value range of ``A`` on ``[0, L]``.
    """
    grid = A.grid
    xs = _x_window(A, L) if x_samples is None else np.asarray(x_samples, dtype=float)
    lam = p.lam
    wk1 = kernel_modulus(p.mu1, p.zeta1, grid, L, eps, xs)
    wk2 = kernel_modulus(p.mu2, p.zeta2, grid, L, eps, xs)
    B1 = kernel_bound(p.mu1, p.zeta1, grid, L, xs)
    B2 = kernel_bound(p.mu2, p.zeta2, grid, L, xs)
    Lambda = lam * (L * A1_hat * wk2 + L * A2_hat * wk1)
    G_sup = lam * (eps * (L * B2 * wk1 + A1_hat * B2 + A2_hat * max(B1, B2)))
    wA = float(modulus_rows(A.values, grid, L, eps).max())
    wTA = float(modulus_rows(A.image(p).values, grid, L, eps).max())
    lhs = wTA
    rhs = gamma_hat * wA + Lambda + G_sup
    return {"lhs": lhs, "rhs": rhs, "holds": lhs <= rhs, "slack": rhs - lhs,
            "w_A": wA, "gamma_term": gamma_hat * wA, "Lambda": Lambda, "G_sup": G_sup,
            "w_kernel_1": wk1, "w_kernel_2": wk2, "B1": B1, "B2": B2, "L": L, "eps": eps}


def _ratio(num: float, den: float):
    return num / den if den > RATIO_FLOOR else None


def contraction_check(p: ProblemSpec, A: Ensemble, mp: ModulusParams | None = None,
                      tail_start: float | None = None, gamma_hat: float = 1.0,
                      slack: float = 0.05, xi: Ast | None = None,
                      gated_forms: Sequence[str] | None = None) -> dict:
    """Ratios of ``w0``, ``alpha``, ``sigma`` and ``O(xi; sigma)`` between ``TA`` and ``A``.

    Every ratio enters the verdict except ``O``-forms outside
    ``gated_forms``; by default those are the registry forms that satisfy
    ``O(a xi; t) <= a O(xi; t)`` on samples, the property the ``O`` ratio
    bound rests on.  A denominator at or below ``RATIO_FLOOR`` leaves its
    ratio undefined and the verdict ``inconclusive``.
    """
    xi = parse("t", ("t",)) if xi is None else xi
    eA = sigma_estimate(A, mp, tail_start)
    eT = sigma_estimate(A.image(p), mp, tail_start)
    ratios = {
        "w0": _ratio(eT.w0_hat, eA.w0_hat),
        "alpha": _ratio(eT.alpha_hat, eA.alpha_hat),
        "sigma": _ratio(eT.sigma_hat, eA.sigma_hat),
    }
    mild = {}
    for form in ctrl.O_FORMS:
        ratios[f"O_{form}"] = _ratio(ctrl.O_apply(form, xi, eT.sigma_hat),
                                     ctrl.O_apply(form, xi, eA.sigma_hat))
        mild[form] = ctrl.check_theta(form, xi).checks.get("mild_assumption")
    if gated_forms is None:
        gated_forms = [f for f, v in mild.items() if v is not None and v.status == "pass"]
    gated = ["w0", "alpha", "sigma"] + [f"O_{f}" for f in gated_forms]
    bound = gamma_hat + slack
    if eA.sigma_hat <= RATIO_FLOOR or any(ratios[k] is None for k in gated):
        status = "inconclusive"
    elif all(ratios[k] <= bound for k in gated):
        status = "pass"
    else:
        status = "fail"
    worst = max((k for k in gated if ratios[k] is not None), key=lambda k: ratios[k], default=None)
    return {
        "ratios": ratios,
        "gated": gated,
        "bound": bound,
        "status": status,
        "worst": worst,
        "exceeds_one": bool(worst is not None and ratios[worst] > 1.0),
        "sigma_A": eA.sigma_hat,
        "sigma_TA": eT.sigma_hat,
        "w0_A": eA.w0_hat,
        "w0_TA": eT.w0_hat,
        "alpha_A": eA.alpha_hat,
        "alpha_TA": eT.alpha_hat,
        "mild_assumption": {f: (v.status if v is not None else None) for f, v in mild.items()},
    }


@dataclass
class CertifyConfig:
    t_max: float = 30.0
    n: int = 4001
    tail_start: float | None = None
    seed: int = 0
    gamma_pairs: int = 20000
    gamma_t_samples: int = 16
    x_range: float = 10.0
    probe_size: int = 8
    contraction_ensembles: int = 4
    kernel_x_samples: int = 21
    gamma_margin: float = 0.02
    contraction_slack: float = 0.05
    decay_tol: float = 1e-8
    horizon_growth_tol: float = 0.1
    coarse_n: int = 601
    xi: str = "t"


@dataclass
class CertificationReport:
    gamma_hat: float
    gamma_witness: dict
    A1_hat: float
    A2_hat: float
    horizon: dict
    decay: dict
    decay_table: dict
    w_kernel: dict
    Lambda_hat: float
    G_sup_hat: float
    prelimit: dict
    prelimit_holds: bool
    ee_ratios: list
    verdict: str
    reasons: list
    banner: str = BANNER

    def as_dict(self) -> dict:
        return asdict(self)


def _decay_pairs(probe: Ensemble) -> list:
    members = probe.members
    grid = probe.grid
    pairs = [(members[i], members[j]) for i in range(len(members)) for j in range(i + 1, len(members))]
    pairs.append((GridFunction.constant(grid, 1.0), GridFunction.constant(grid, 0.0)))
    return pairs


def _horizon_probe(p: ProblemSpec, cfg: CertifyConfig) -> dict:
    short = make_grid(cfg.t_max, cfg.coarse_n)
    long = make_grid(2 * cfg.t_max, 2 * cfg.coarse_n - 1)
    a_short = estimate_bounds(p, random_ensemble(short, cfg.probe_size, cfg.seed))
    a_long = estimate_bounds(p, random_ensemble(long, cfg.probe_size, cfg.seed))
    growth = []
    for s, l in zip(a_short, a_long):
        growth.append((l - s) / s if s > 0 else (0.0 if l == 0 else math.inf))
    stable = all(g <= cfg.horizon_growth_tol for g in growth)
    return {"A_short": list(a_short), "A_long": list(a_long),
            "growth": [g if math.isfinite(g) else None for g in growth], "stable": stable}


def certify_existence(p: ProblemSpec, cfg: CertifyConfig | None = None) -> CertificationReport:
    """Run every sampled check and fold them into a verdict.

    ``VIOLATED`` needs a concrete witness: ``gamma_hat >= 1``, a growing
    decay difference, or a contraction ratio above 1.  ``CERTIFIED_NUMERICALLY``
    needs ``gamma_hat < 1 - gamma_margin``, horizon-stable bounds, passing
    decay, prelimit and contraction checks.  Anything else is ``INCONCLUSIVE``.
    """
    cfg = cfg or CertifyConfig()
    grid = make_grid(cfg.t_max, cfg.n)
    tail_start = default_tail_start(grid) if cfg.tail_start is None else cfg.tail_start
    mp = ModulusParams.default(grid)
    xi = parse(cfg.xi, ("t",))

    t_samples = np.linspace(0.0, cfg.t_max, cfg.gamma_t_samples)
    gamma_hat, gw = estimate_gamma(p.g, t_samples, cfg.x_range, cfg.gamma_pairs, cfg.seed)

    probe = random_ensemble(grid, cfg.probe_size, cfg.seed)
    A1, A2 = estimate_bounds(p, probe)
    horizon = _horizon_probe(p, cfg)
    decay = check_decay(p, _decay_pairs(probe), tail_start, cfg.decay_tol)

    L, eps = grid.t_max, mp.eps_min
    pre = prelimit_inequality(p, probe, L, eps, gamma_hat, A1, A2,
                              _x_window(probe, L, cfg.kernel_x_samples))

    ee = []
    for k in range(cfg.contraction_ensembles):
        A = random_ensemble(grid, cfg.probe_size, cfg.seed + 1 + k)
        ee.append(contraction_check(p, A, mp, tail_start, gamma_hat, cfg.contraction_slack, xi))

    reasons = []
    violated = False
    if gamma_hat >= 1.0:
        violated = True
        reasons.append(f"condition (i): difference quotient {gamma_hat:.6g} >= 1")
    if decay["status"] == "fail":
        violated = True
        reasons.append("condition (ii): kernel difference grows on the tail")
    if any(e["exceeds_one"] for e in ee):
        violated = True
        reasons.append("contraction ratio above 1")

    certified = (
        not violated
        and gamma_hat < 1.0 - cfg.gamma_margin
        and math.isfinite(A1) and math.isfinite(A2) and horizon["stable"]
        and decay["status"] == "pass"
        and pre["holds"]
        and all(e["status"] == "pass" for e in ee)
    )
    if violated:
        verdict = VIOLATED
    elif certified:
        verdict = CERTIFIED
    else:
        verdict = INCONCLUSIVE
        if not gamma_hat < 1.0 - cfg.gamma_margin:
            reasons.append("condition (i): gamma_hat within margin of 1")
        if not horizon["stable"]:
            reasons.append("condition (iii): bounds grow with the horizon")
        if decay["status"] != "pass":
            reasons.append("condition (ii): tail decay not established")
        if not pre["holds"]:
            reasons.append("modulus estimate does not hold")
        if not all(e["status"] == "pass" for e in ee):
            reasons.append("contraction ratios not within gamma_hat + slack")

    table = {"t": decay["t"].tolist(), "D1": decay["D1"].tolist(), "D2": decay["D2"].tolist()}
    return CertificationReport(
        gamma_hat=gamma_hat,
        gamma_witness=gw,
        A1_hat=A1,
        A2_hat=A2,
        horizon=horizon,
        decay={"status": decay["status"], "verdicts": decay["verdicts"],
               "tail_start": tail_start, "decay_tol": cfg.decay_tol},
        decay_table=table,
        w_kernel={"mu1_zeta1": pre["w_kernel_1"], "mu2_zeta2": pre["w_kernel_2"],
                  "B1": pre["B1"], "B2": pre["B2"], "L": L, "eps": eps},
        Lambda_hat=pre["Lambda"],
        G_sup_hat=pre["G_sup"],
        prelimit={k: v for k, v in pre.items() if k not in ("w_kernel_1", "w_kernel_2", "B1", "B2")},
        prelimit_holds=bool(pre["holds"]),
        ee_ratios=ee,
        verdict=verdict,
        reasons=reasons,
    )
