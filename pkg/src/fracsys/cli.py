"""Command-line front end.

Subcommands: ``classify``, ``atlas``, ``eigen``, ``solve-scalar``,
``solve-system`` and ``probe-uniqueness``.  Parameters come from flags or
from a flat ``key = value`` config file (``--config``); flags win.

Exit codes: 0 success, 2 usage error, 3 solver non-convergence,
4 regime refusal.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Exponents, Grid, NoConvergenceError, RegimeRefusal
from .fraclap import assemble
from .regimes import (EXISTENCE_LABELS, NONEXISTENCE_LABELS, HypothesisNotMet, InvalidCase,
                      classify)
from .singular import SingularProblem, solve_singular
from .spectral import principal_eigenpair, torsion, verify_eigen_bounds
from .system import prepare, solve_system, uniqueness_probe

SCHEMA = 1
EXIT_OK, EXIT_USAGE, EXIT_NOCONV, EXIT_REFUSAL = 0, 2, 3, 4
PARAM_NAMES = ("p", "q", "r", "theta", "s", "t")
ATLAS_HEADER = "p1,p2,verdict,alpha,beta,sigma_u,sigma_v"

DEFAULTS = {"a": -1.0, "b": 1.0, "n": 1024, "outer_tol": 1e-8, "inner_tol": 1e-10,
            "format": None, "seed": 0, "coeff": 1.0, "perturbation": 0.9,
            "steps1": 50, "steps2": 50}

# keys a config file may set, with their parsers
KEY_TYPES = {**{k: float for k in PARAM_NAMES},
             "a": float, "b": float, "n": int, "outer_tol": float, "inner_tol": float,
             "output": str, "format": str, "seed": int, "gamma": float, "coeff": float,
             "perturbation": float, "max_outer": int,
             "param1": str, "range1": str, "steps1": int,
             "param2": str, "range2": str, "steps2": int}


class UsageError(Exception):
    """Bad or missing input; ``key`` names the offending parameter."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class Sweep:
    param1: str
    range1: tuple[float, float]
    steps1: int
    param2: str
    range2: tuple[float, float]
    steps2: int


@dataclass
class RunConfig:
    subcommand: str
    values: dict = field(default_factory=dict)
    sweep: Sweep | None = None

    def get(self, key, default=None):
        return self.values.get(key, default)

    def require(self, key):
        if self.values.get(key) is None:
            raise UsageError(key, f"missing required parameter --{key.replace('_', '-')}")
        return self.values[key]

    @property
    def grid(self) -> Grid:
        try:
            return Grid(float(self.values["a"]), float(self.values["b"]), int(self.values["n"]))
        except ValueError as exc:
            raise UsageError("n", str(exc)) from None

    def exponents(self) -> Exponents:
        vals = {k: self.require(k) for k in PARAM_NAMES}
        return _make_exponents(vals)


def _make_exponents(vals: dict) -> Exponents:
    checks = {"p": lambda x: x >= 0, "theta": lambda x: x >= 0, "q": lambda x: x > 0,
              "r": lambda x: x > 0, "s": lambda x: 0 < x < 1, "t": lambda x: 0 < x < 1}
    for key in PARAM_NAMES:
        x = float(vals[key])
        if not (math.isfinite(x) and checks[key](x)):
            raise UsageError(key, f"value {x!r} out of range")
    return Exponents(**vals)


def read_config_file(path: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError("config", f"cannot read {path}: {exc.strerror}") from None
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError("config", f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in KEY_TYPES:
            raise UsageError(key, f"unknown config key (line {lineno})")
        out[key] = _convert(key, value)
    return out


def _convert(key, value):
    try:
        return KEY_TYPES[key](value)
    except ValueError:
        raise UsageError(key, f"invalid value {value!r}") from None


def _parse_range(key: str, text: str) -> tuple[float, float]:
    parts = text.replace(":", ",").split(",")
    if len(parts) != 2:
        raise UsageError(key, f"expected lo:hi, got {text!r}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError:
        raise UsageError(key, f"expected lo:hi, got {text!r}") from None
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("parameters")
    for name in PARAM_NAMES:
        g.add_argument(f"--{name}", type=float)
    g.add_argument("--a", type=float, help="left endpoint (default -1)")
    g.add_argument("--b", type=float, help="right endpoint (default 1)")
    g.add_argument("--n", type=int, help="interior nodes (default 1024)")
    g.add_argument("--outer-tol", type=float, help="outer tolerance (default 1e-8)")
    g.add_argument("--inner-tol", type=float, help="inner tolerance (default 1e-10)")
    g.add_argument("--config", help="key = value file; flags override its entries")
    g.add_argument("--output", "-o", help="write to this file instead of stdout")
    g.add_argument("--format", choices=("json", "csv"))
    g.add_argument("--seed", type=int, help="seed for randomized runs (default 0)")

    parser = argparse.ArgumentParser(prog="fracsys", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("classify", parents=[common], help="regime verdict for one exponent set")
    atlas = sub.add_parser("atlas", parents=[common], help="verdicts over a 2-D parameter slice")
    for i in (1, 2):
        atlas.add_argument(f"--param{i}", choices=PARAM_NAMES)
        atlas.add_argument(f"--range{i}", help="lo:hi")
        atlas.add_argument(f"--steps{i}", type=int)
    sub.add_parser("eigen", parents=[common], help="principal eigenpair of order s")
    scalar = sub.add_parser("solve-scalar", parents=[common],
                            help="(-Δ)^s u = coeff d^-gamma u^-p")
    scalar.add_argument("--gamma", type=float)
    scalar.add_argument("--coeff", type=float)
    for name in ("solve-system", "probe-uniqueness"):
        sp = sub.add_parser(name, parents=[common],
                            help="coupled solve" if name == "solve-system" else "two-start probe")
        sp.add_argument("--perturbation", type=float,
                        help="free parameter of the critical cases (default 0.9)")
        sp.add_argument("--max-outer", type=int)
    return parser


def parse_config(argv=None) -> RunConfig:
    """Merge defaults, the optional config file and the flags, in that order."""
    args = build_parser().parse_args(argv)
    values = dict(DEFAULTS)
    if args.config:
        values.update(read_config_file(args.config))
    for key, val in vars(args).items():
        if key in ("subcommand", "config") or val is None:
            continue
        values[key] = val
    if values["format"] is None:
        values["format"] = "csv" if args.subcommand == "atlas" else "json"
    if values["format"] not in ("json", "csv"):
        raise UsageError("format", "must be json or csv")
    cfg = RunConfig(args.subcommand, values)
    if cfg.subcommand == "atlas":
        names = [cfg.require("param1"), cfg.require("param2")]
        for i, nm in enumerate(names, 1):
            if nm not in PARAM_NAMES:
                raise UsageError(f"param{i}", f"must be one of {', '.join(PARAM_NAMES)}")
        if names[0] == names[1]:
            raise UsageError("param2", "must differ from param1")
        steps = [int(values["steps1"]), int(values["steps2"])]
        for i, k in enumerate(steps, 1):
            if k < 1:
                raise UsageError(f"steps{i}", "must be at least 1")
        cfg.sweep = Sweep(names[0], _parse_range("range1", cfg.require("range1")), steps[0],
                          names[1], _parse_range("range2", cfg.require("range2")), steps[1])
    return cfg


def _clean(obj):
    """Make a report JSON-safe: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def to_json(report: dict) -> str:
    return json.dumps(_clean({"schema": SCHEMA, **report}), sort_keys=True, indent=2) + "\n"


def _fmt(x) -> str:
    if x is None:
        return ""
    return f"{x:.17g}"


def _csv_columns(grid: Grid, **cols) -> str:
    lines = [",".join(["x", *cols])]
    for i, x in enumerate(grid.nodes):
        lines.append(",".join([_fmt(x), *(_fmt(c[i]) for c in cols.values())]))
    return "\n".join(lines) + "\n"


def _verdict_rows(v) -> tuple[str, str]:
    d = v.as_dict()
    keys = ["verdict", *PARAM_NAMES, "alpha", "beta", "predicted_u_rate", "predicted_v_rate"]
    row = [d["verdict"], *(_fmt(d["exponents"][k]) for k in PARAM_NAMES),
           _fmt(d["alpha"]), _fmt(d["beta"]), _fmt(d["predicted_u_rate"]),
           _fmt(d["predicted_v_rate"])]
    return ",".join(keys), ",".join(row)


def cmd_classify(cfg: RunConfig) -> str:
    v = classify(cfg.exponents())
    if cfg.get("format") == "csv":
        return "\n".join(_verdict_rows(v)) + "\n"
    return to_json(v.as_dict())


def atlas_rows(cfg: RunConfig) -> list[tuple]:
    """One row per sweep cell, ``param1`` outer and ``param2`` inner."""
    sw = cfg.sweep
    base = {k: cfg.get(k) for k in PARAM_NAMES}
    missing = [k for k in PARAM_NAMES if k not in (sw.param1, sw.param2) and base[k] is None]
    if missing:
        raise UsageError(missing[0], f"missing required parameter --{missing[0]}")
    xs = np.linspace(*sw.range1, sw.steps1)
    ys = np.linspace(*sw.range2, sw.steps2)
    rows = []
    for x in xs:
        for y in ys:
            vals = dict(base, **{sw.param1: float(x), sw.param2: float(y)})
            v = classify(_make_exponents(vals))
            rows.append((float(x), float(y), v.code, v.alpha, v.beta,
                         v.predicted_u_rate, v.predicted_v_rate))
    return rows


def cmd_atlas(cfg: RunConfig) -> str:
    rows = atlas_rows(cfg)
    if cfg.get("format") == "json":
        keys = ATLAS_HEADER.split(",")
        return to_json({"param1": cfg.sweep.param1, "param2": cfg.sweep.param2,
                        "rows": [dict(zip(keys, r)) for r in rows]})
    lines = [ATLAS_HEADER]
    for x, y, code, alpha, beta, su, sv in rows:
        lines.append(",".join([_fmt(x), _fmt(y), code, _fmt(alpha), _fmt(beta),
                               _fmt(su), _fmt(sv)]))
    return "\n".join(lines) + "\n"


def _order(cfg: RunConfig) -> float:
    s = float(cfg.require("s"))
    if not 0 < s < 1:
        raise UsageError("s", f"must lie in (0, 1), got {s}")
    return s


def cmd_eigen(cfg: RunConfig) -> str:
    s = _order(cfg)
    grid = cfg.grid
    op = assemble(grid, s)
    pair = principal_eigenpair(op)
    rep = verify_eigen_bounds(pair, torsion(op), grid, s)
    if cfg.get("format") == "csv":
        return _csv_columns(grid, phi=pair.phi.values)
    return to_json({"s": s, "n": grid.n, "lambda1": pair.lambda1, "c_low": rep.c_low,
                    "c_high": rep.c_high, "w3_ok": rep.w3_ok, "iterations": pair.iterations})


def cmd_solve_scalar(cfg: RunConfig) -> str:
    s = _order(cfg)
    gamma = float(cfg.require("gamma"))
    p = float(cfg.get("p") if cfg.get("p") is not None else 0.0)
    try:
        prob = SingularProblem(s, gamma, float(cfg.get("coeff")), p)
    except ValueError as exc:
        raise UsageError("gamma", str(exc)) from None
    grid = cfg.grid
    rep = solve_singular(assemble(grid, s), prob, tol=float(cfg.get("inner_tol")))
    if not rep.converged:
        raise NoConvergenceError(f"scalar solve stopped after {rep.iterations} iterations")
    if cfg.get("format") == "csv":
        return _csv_columns(grid, u=rep.u.values)
    return to_json({"s": s, "gamma": gamma, "p": p, "coeff": prob.coeff, "n": grid.n,
                    **rep.as_dict()})


def _system_setup(cfg: RunConfig):
    e = cfg.exponents()
    verdict = classify(e)
    if verdict.existence is None:
        if verdict.nonexistence is not None:
            raise RegimeRefusal(f"nonexistence condition ({verdict.nonexistence}) holds")
        raise RegimeRefusal("no existence theorem covers these exponents (undetermined)")
    a = float(cfg.get("perturbation"))
    if not 0 < a < 1:
        raise UsageError("perturbation", "must lie in (0, 1)")
    return e, verdict, prepare(e, cfg.grid, a=a)


def cmd_solve_system(cfg: RunConfig) -> str:
    e, verdict, st = _system_setup(cfg)
    kwargs = {"tol": float(cfg.get("outer_tol")), "inner_tol": float(cfg.get("inner_tol"))}
    if cfg.get("max_outer") is not None:
        kwargs["max_outer"] = int(cfg.get("max_outer"))
    rep = solve_system(st.op_s, st.op_t, e, st.bracket, **kwargs)
    if not rep.converged:
        raise NoConvergenceError(f"outer iteration stopped after {rep.outer_iterations} steps")
    if cfg.get("format") == "csv":
        return _csv_columns(cfg.grid, u=rep.u.values, v=rep.v.values)
    return to_json({"n": cfg.grid.n, "verdict": verdict.as_dict(), "report": rep.as_dict()})


def cmd_probe(cfg: RunConfig) -> str:
    e, verdict, st = _system_setup(cfg)
    if not verdict.unique:
        raise RegimeRefusal("uniqueness hypotheses do not hold for these exponents")
    pr = uniqueness_probe(st.op_s, st.op_t, e, st.bracket, tol=float(cfg.get("outer_tol")))
    if not (pr.bottom.converged and pr.top.converged):
        raise NoConvergenceError("one of the two starts did not converge")
    if cfg.get("format") == "csv":
        return _csv_columns(cfg.grid, u_bottom=pr.bottom.u.values, v_bottom=pr.bottom.v.values,
                            u_top=pr.top.u.values, v_top=pr.top.v.values)
    return to_json({"n": cfg.grid.n, "verdict": verdict.as_dict(), "distance": pr.distance,
                    "contraction": pr.contraction,
                    "bottom_iterations": pr.bottom.outer_iterations,
                    "top_iterations": pr.top.outer_iterations})


COMMANDS = {"classify": cmd_classify, "atlas": cmd_atlas, "eigen": cmd_eigen,
            "solve-scalar": cmd_solve_scalar, "solve-system": cmd_solve_system,
            "probe-uniqueness": cmd_probe}


def _emit(text: str, output: str | None):
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
        np.random.seed(int(cfg.get("seed")))
        _emit(COMMANDS[cfg.subcommand](cfg), cfg.get("output"))
    except SystemExit as exc:
        # argparse reports its own usage errors and exits with 2
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"fracsys: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NoConvergenceError as exc:
        print(f"fracsys: no convergence: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except (RegimeRefusal, HypothesisNotMet, InvalidCase) as exc:
        print(f"fracsys: refused: {exc}", file=sys.stderr)
        return EXIT_REFUSAL
    return EXIT_OK


__all__ = ["main", "parse_config", "build_parser", "read_config_file", "atlas_rows",
           "RunConfig", "UsageError", "ATLAS_HEADER", "EXISTENCE_LABELS",
           "NONEXISTENCE_LABELS"]
