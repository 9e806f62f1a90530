"""Command-line front end.

    qiecert solve           --config run.json [--out report.json] [--csv residuals.csv]
    qiecert certify         --config run.json [--seed 7]
    qiecert mnc             --config run.json [--grid-n 1001] [--tmax 20]
    qiecert check-functions --config run.json

Configs and reports are JSON.  Unknown keys are rejected.  Exit status is
0 on success (whatever the verdict), 1 for config or parse errors and 2 for
numeric errors during the run.

Set ``QIECERT_THREADS`` to cap the BLAS/OpenMP thread pools.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import ctrl
from .certify import CertifyConfig, certify_existence
from .expr import ExpressionDomainError, ParseError, parse
from .funcspace import GridFunction, ModulusParams, make_grid
from .mnc import random_ensemble, set_iterate, sigma_estimate
from .operator import SLOT_VARS, ProblemSpec, picard_solve

__all__ = ["ConfigError", "RunConfig", "load_config", "config_from_dict", "emit_report", "run", "main"]

SUBCOMMANDS = ("solve", "certify", "mnc", "check-functions")
THREADS_ENV = "QIECERT_THREADS"

CSV_COLUMNS = {
    "solve": ("iter", "residual"),
    "mnc": ("step", "w0_hat", "alpha_hat", "sigma_hat", "ratio"),
    "certify": ("t", "D1", "D2"),
    "check-functions": ("inequality", "step", "sigma_Y", "sigma_TY", "lhs", "rhs", "holds"),
}


class ConfigError(ValueError):
    """Bad config document; the message names the file, key or offset."""


# -- config schema ----------------------------------------------------------------------

@dataclass
class ProblemSection:
    g: str
    mu1: str
    mu2: str
    zeta1: str
    zeta2: str
    lam: float = field(metadata={"key": "lambda"})


@dataclass
class GridSection:
    t_max: float = 30.0
    n: int = 4001
    tail_start: float | None = None


@dataclass
class SolverSection:
    tol: float = 1e-10
    max_iter: int = 100
    x0: str = "0"  # expression in t


@dataclass
class MncSection:
    ensemble_size: int = 8
    hull_samples: int = 8
    steps: int = 25
    L_list: list | None = None
    eps_list: list | None = None


@dataclass
class CertifySection:
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


@dataclass
class FunctionsSection:
    alpha: str | None = None
    beta: str | None = None
    eta: str | None = None
    phi: str | None = None
    F: str | None = None
    xi: str = "t"
    chi: str | None = None
    omega: str | None = None
    O_form: str = "identity"
    sigma_pairs: list = field(default_factory=list)


@dataclass
class RunConfig:
    problem: ProblemSection | None = None
    grid: GridSection = field(default_factory=GridSection)
    solver: SolverSection = field(default_factory=SolverSection)
    mnc: MncSection = field(default_factory=MncSection)
    certify: CertifySection = field(default_factory=CertifySection)
    functions: FunctionsSection | None = None
    seed: int = 0

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = _section_to_dict(v) if hasattr(v, "__dataclass_fields__") else v
        return out


_SECTIONS = {
    "problem": ProblemSection,
    "grid": GridSection,
    "solver": SolverSection,
    "mnc": MncSection,
    "certify": CertifySection,
    "functions": FunctionsSection,
}


def _key(f) -> str:
    return f.metadata.get("key", f.name)


def _section_to_dict(obj) -> dict:
    return {_key(f): getattr(obj, f.name) for f in fields(obj)}


def _coerce(value: Any, annotation: str, path: str):
    """Check ``value`` against a field annotation string; ints widen to floats."""
    optional = annotation.endswith("| None")
    base = annotation.replace("| None", "").strip()
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{path}: must not be null")
    if base == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(f"{path}: must be finite")
        return float(value)
    if base == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if base == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if base == "list":
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return value
    raise TypeError(f"unsupported annotation {annotation!r}")


def _build_section(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
    by_key = {_key(f): f for f in fields(cls)}
    unknown = sorted(set(data) - set(by_key))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(repr(k) for k in unknown)}")
    kwargs = {}
    for key, f in by_key.items():
        if key in data:
            kwargs[f.name] = _coerce(data[key], f.type, f"{path}.{key}")
        elif f.default is MISSING and f.default_factory is MISSING:
            raise ConfigError(f"{path}.{key}: required key is missing")
    return cls(**kwargs)


def config_from_dict(data: dict, source: str = "<config>") -> RunConfig:
    """Validate a decoded config document against the strict schema."""
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be an object")
    allowed = set(_SECTIONS) | {"seed"}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"{source}: unknown key(s) {', '.join(repr(k) for k in unknown)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if data.get(name) is not None:
            kwargs[name] = _build_section(cls, data[name], name)
    if "seed" in data:
        kwargs["seed"] = _coerce(data["seed"], "int", "seed")
    return RunConfig(**kwargs)


def load_config(path: str | os.PathLike) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {str(p)!r}: {err.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{p}: malformed JSON at line {err.lineno}, column {err.colno}: {err.msg}") from None
    return config_from_dict(data, str(p))


# -- report output ----------------------------------------------------------------------

def _jsonable(obj):
    """Plain JSON types; non-finite floats become ``null``."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "as_dict"):
        return _jsonable(obj.as_dict())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def config_hash(config: dict) -> str:
    canon = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def emit_report(report: dict, path: str | os.PathLike | None) -> None:
    text = json.dumps(_jsonable(report), indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])


# -- subcommands ------------------------------------------------------------------------

def _problem(cfg: RunConfig) -> ProblemSpec:
    if cfg.problem is None:
        raise ConfigError("problem: section is required for this subcommand")
    pr = cfg.problem
    asts = {}
    for slot in ("g", "mu1", "mu2", "zeta1", "zeta2"):
        try:
            asts[slot] = parse(getattr(pr, slot), SLOT_VARS[slot])
        except ParseError as err:
            raise ConfigError(f"problem.{slot}: {err}") from None
    try:
        return ProblemSpec(lam=pr.lam, **asts)
    except ValueError as err:
        raise ConfigError(f"problem: {err}") from None


def _grid(cfg: RunConfig):
    try:
        grid = make_grid(cfg.grid.t_max, cfg.grid.n)
    except ValueError as err:
        raise ConfigError(f"grid: {err}") from None
    ts = cfg.grid.tail_start
    if ts is not None and not 0 <= ts < grid.t_max:
        raise ConfigError(f"grid.tail_start: must lie in [0, t_max), got {ts!r}")
    return grid


def _modulus_params(cfg: RunConfig, grid) -> ModulusParams | None:
    m = cfg.mnc
    if m.L_list is None and m.eps_list is None:
        return None
    d = ModulusParams.default(grid)
    try:
        mp = ModulusParams(m.L_list if m.L_list is not None else d.L_list,
                           m.eps_list if m.eps_list is not None else d.eps_list)
        mp.check(grid)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"mnc: {err}") from None
    return mp


def _cmd_solve(cfg: RunConfig):
    p = _problem(cfg)
    grid = _grid(cfg)
    try:
        x0 = GridFunction.from_expression(grid, parse(cfg.solver.x0, ("t",)))
    except ParseError as err:
        raise ConfigError(f"solver.x0: {err}") from None
    try:
        rep = picard_solve(p, x0, cfg.solver.tol, cfg.solver.max_iter)
    except ExpressionDomainError:
        raise
    except ValueError as err:  # tol / max_iter validation
        raise ConfigError(f"solver: {err}") from None
    result = {
        "converged": rep.converged,
        "iterations": rep.iterations,
        "residuals": rep.residuals,
        "final_residual": rep.residuals[-1],
        "solution": {"t": grid.nodes, "x": rep.solution.values,
                     "min": float(rep.solution.values.min()), "max": float(rep.solution.values.max())},
    }
    rows = list(enumerate(rep.residuals, start=1))
    return result, rows, {"solve": rep.wall_time}


def _cmd_mnc(cfg: RunConfig):
    p = _problem(cfg)
    grid = _grid(cfg)
    mp = _modulus_params(cfg, grid)
    m = cfg.mnc
    for key in ("ensemble_size", "steps"):
        if getattr(m, key) < 1:
            raise ConfigError(f"mnc.{key}: must be >= 1")
    if m.hull_samples < 0:
        raise ConfigError("mnc.hull_samples: must be >= 0")
    A0 = random_ensemble(grid, m.ensemble_size, cfg.seed)
    rec = set_iterate(p, A0, m.steps, m.hull_samples, mp, cfg.grid.tail_start, cfg.seed)
    init = sigma_estimate(A0, mp, cfg.grid.tail_start)
    final = sigma_estimate(rec.final, mp, cfg.grid.tail_start)
    result = {
        "sizes": rec.sizes,
        "series": [dict(zip(CSV_COLUMNS["mnc"], r)) for r in rec.rows()],
        "initial": init.as_dict(),
        "final": final.as_dict(),
        "reduction": final.sigma_hat / init.sigma_hat if init.sigma_hat > 0 else None,
    }
    return result, rec.rows(), {}


def _cmd_certify(cfg: RunConfig):
    p = _problem(cfg)
    _grid(cfg)
    c = cfg.certify
    xi = cfg.functions.xi if cfg.functions is not None else "t"
    try:
        parse(xi, ("t",))
    except ParseError as err:
        raise ConfigError(f"functions.xi: {err}") from None
    ccfg = CertifyConfig(t_max=cfg.grid.t_max, n=cfg.grid.n, tail_start=cfg.grid.tail_start,
                         seed=cfg.seed, xi=xi, **asdict(c))
    rep = certify_existence(p, ccfg)
    d = rep.as_dict()
    table = d["decay_table"]
    rows = list(zip(table["t"], table["D1"], table["D2"]))
    return d, rows, {}


_MEMBERSHIP = (
    ("alpha", "geraghty", ctrl.check_geraghty),
    ("eta", "psi", ctrl.check_psi),
    ("omega", "omega", ctrl.check_omega),
    ("F", "F", ctrl.check_F),
    ("chi", "mizoguchi_takahashi", ctrl.check_mt),
)


def _cmd_functions(cfg: RunConfig):
    fs = cfg.functions
    if fs is None:
        raise ConfigError("functions: section is required for check-functions")
    slots = {k: getattr(fs, k) for k in ("alpha", "beta", "eta", "phi", "F", "xi", "chi", "omega")}
    try:
        b = ctrl.ControlBundle.from_strings(O_form=fs.O_form, **slots)
    except ParseError as err:
        raise ConfigError(f"functions: {err}") from None
    except ValueError as err:
        raise ConfigError(f"functions.O_form: {err}") from None
    pairs = []
    for k, pair in enumerate(fs.sigma_pairs):
        if (not isinstance(pair, list) or len(pair) != 2
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in pair)):
            raise ConfigError(f"functions.sigma_pairs[{k}]: expected [sigma_Y, sigma_TY]")
        if min(pair) < 0:
            raise ConfigError(f"functions.sigma_pairs[{k}]: sigma values must be >= 0")
        pairs.append((float(pair[0]), float(pair[1])))

    membership = {"theta": ctrl.check_theta(b.O_form, b.xi).as_dict()}
    for slot, name, check in _MEMBERSHIP:
        node = getattr(b, slot)
        if node is not None:
            membership[name] = check(node).as_dict()
    if b.eta is not None and b.beta is not None:
        membership["eta_dominates_beta"] = ctrl.check_dominates(b.eta, b.beta).as_dict()

    rows, inequalities = [], {}
    runners = (("theta_contraction", ("alpha", "beta", "eta", "phi", "F"), ctrl.theta_contraction_sides),
               ("mt_contraction", ("omega", "chi", "phi", "F"), ctrl.mt_contraction_sides))
    for name, needed, sides in runners:
        if not pairs or any(getattr(b, s) is None for s in needed):
            continue
        out = []
        for k, (sy, sty) in enumerate(pairs):
            lhs, rhs, holds = sides(b, sy, sty)
            out.append({"sigma_Y": sy, "sigma_TY": sty, "lhs": lhs, "rhs": rhs, "holds": holds})
            rows.append((name, k, sy, sty, lhs, rhs, holds))
        inequalities[name] = {"steps": out, "all_hold": all(r["holds"] for r in out)}
    result = {"bundle": b.sources(), "membership": membership, "inequalities": inequalities}
    return result, rows, {}


_COMMANDS = {
    "solve": _cmd_solve,
    "mnc": _cmd_mnc,
    "certify": _cmd_certify,
    "check-functions": _cmd_functions,
}


# -- entry point ------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qiecert",
                                 description="Solve and check quadratic integral equations on a grid.")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="JSON run config")
    ap.add_argument("--out", help="write the JSON report here (default: stdout)")
    ap.add_argument("--csv", help="write the subcommand's series as CSV")
    ap.add_argument("--seed", type=int, help="override config seed")
    ap.add_argument("--grid-n", type=int, help="override grid.n")
    ap.add_argument("--tmax", type=float, help="override grid.t_max")
    return ap


def _apply_overrides(cfg: RunConfig, args) -> None:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.grid_n is not None:
        cfg.grid.n = args.grid_n
    if args.tmax is not None:
        cfg.grid.t_max = float(args.tmax)


def _thread_limit():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV}: expected an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV}: must be >= 1")
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def run(argv: Sequence[str] | None = None) -> int:
    """Run one subcommand; returns the exit status."""
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    t0 = time.perf_counter()
    try:
        limiter = _thread_limit()
        cfg = load_config(args.config)
        _apply_overrides(cfg, args)
        config = cfg.to_dict()
        t1 = time.perf_counter()
        result, rows, extra_timing = _COMMANDS[args.subcommand](cfg)
        t2 = time.perf_counter()
        report = {
            "subcommand": args.subcommand,
            "config": config,
            "config_hash": config_hash(config),
            "result": result,
            "timing": {"load_s": t1 - t0, "run_s": t2 - t1, **{f"{k}_s": v for k, v in extra_timing.items()}},
        }
        emit_report(report, args.out)
        if args.csv:
            _write_csv(args.csv, CSV_COLUMNS[args.subcommand], rows)
        if limiter is not None:
            limiter.unregister()
    except (ConfigError, ParseError) as err:
        print(f"qiecert: config error: {err}", file=sys.stderr)
        return 1
    except (ExpressionDomainError, ArithmeticError, ValueError) as err:
        print(f"qiecert: numeric error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"qiecert: cannot write output: {err}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
