"""Coupled solver for ``(-Δ)^s u = u^-p v^-q``, ``(-Δ)^t v = u^-r v^-theta``.

The solution is sought in an order box

    m1 d^eu_lo <= u <= M1 d^eu_hi,    m2 d^ev_lo <= v <= M2 d^ev_hi,

whose walls come from scalar model problems.  The map ``T`` freezes one
component and solves the other scalar singular problem, and the outer loop
is Picard iteration on ``T`` with the iterates clamped into the box.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (Exponents, Grid, GridFn, RateFit, NoConvergenceError, RegimeRefusal,
                   default_window, fit_rate)
from .fraclap import FracOp, assemble
from .regimes import (HypothesisNotMet, InvalidCase, classify_existence, classify_nonexistence,
                      classify_uniqueness, existence_case, swap, tc1iii_exponents)
from .singular import predict_rate, solve_weighted

DEFAULT_PERTURBATION = 0.9
# relative slack so the bracket chains hold strictly after rounding
CHAIN_SLACK = 1e-9
SAFETY = 2.0
CLAMP_WINDOW = 3


@dataclass(frozen=True)
class Envelopes:
    """Exponents of the lower and upper walls, ``*_hi <= *_lo``."""

    u_lo: float
    u_hi: float
    v_lo: float
    v_hi: float
    perturbation: float | None = None

    def swapped(self) -> "Envelopes":
        return Envelopes(self.v_lo, self.v_hi, self.u_lo, self.u_hi, self.perturbation)


def _case5_perturbation(e: Exponents, a: float) -> float:
    # need a*rs/t + theta > 1 so the perturbed weight stays superlinear
    a_min = (1 - e.theta) * e.t / (e.r * e.s)
    if a * e.r * e.s / e.t + e.theta > 1:
        return a
    return 0.5 * (max(a_min, 0.0) + 1.0)


def envelope_exponents(e: Exponents, existence: str, case: int | None = None,
                       a: float = DEFAULT_PERTURBATION) -> Envelopes:
    """Wall exponents of the order box for an existence regime.

    ``a`` is the free perturbation parameter of the critical cases 2, 4, 5
    and 6; it is ignored elsewhere.
    """
    if not 0 < a < 1:
        raise ValueError("perturbation parameter must lie in (0, 1)")
    if existence == "TC1-iii":
        ea, eb = tc1iii_exponents(e)
        return Envelopes(ea, ea, eb, eb)
    if existence == "TC1-ii":
        return envelope_exponents(swap(e), "TC1-i", case, a).swapped()
    if existence != "TC1-i":
        raise InvalidCase(f"unknown existence label {existence!r}")
    if case is None:
        case = existence_case(e, "TC1-i")
    s, t, r, theta = e.s, e.t, e.r, e.theta
    ev = (2 * t - r * s) / (1 + theta)
    if case == 1:
        return Envelopes(s, s, ev, ev)
    if case == 2:
        return Envelopes(s, s, t, t - a * t, a)
    if case == 3:
        return Envelopes(s, s, t, t)
    if case == 4:
        return Envelopes(s, s - a * s, t, t, a)
    if case == 5:
        a5 = _case5_perturbation(e, a)
        return Envelopes(s, s * a5, (2 * t - r * s * a5) / (1 + theta), ev, a5)
    if case == 6:
        return Envelopes(s, s - a * s, t, t - a * t, a)
    raise InvalidCase(f"case must be 1..6, got {case}")


@dataclass(frozen=True)
class BracketSet:
    """Order box constants.

    The ``log_*`` fields are authoritative; the plain fields are their
    exponentials and may underflow to 0 or overflow to inf when the coupling
    is close to the limit ``qr = (1+p)(1+theta)``.
    """

    m1: float
    M1: float
    m2: float
    M2: float
    c1: float
    c2: float
    env: Envelopes
    log_m1: float = np.nan
    log_M1: float = np.nan
    log_m2: float = np.nan
    log_M2: float = np.nan

    @property
    def representable(self) -> bool:
        """All four constants are finite, nonzero doubles."""
        vals = (self.m1, self.M1, self.m2, self.M2)
        return all(0 < v < np.inf for v in vals)

    def walls(self, grid: Grid):
        ld = np.log(grid.dist)
        e = self.env
        return (np.exp(self.log_m1 + e.u_lo * ld), np.exp(self.log_M1 + e.u_hi * ld),
                np.exp(self.log_m2 + e.v_lo * ld), np.exp(self.log_M2 + e.v_hi * ld))

    def contains(self, u: GridFn, v: GridFn) -> bool:
        ulo, uhi, vlo, vhi = self.walls(u.grid)
        return bool(np.all((ulo <= u.values) & (u.values <= uhi)
                           & (vlo <= v.values) & (v.values <= vhi)))

    def diam_ok(self, grid: Grid) -> bool:
        """Walls must not cross inside the domain (only binding when the exponents differ)."""
        ulo, uhi, vlo, vhi = self.walls(grid)
        return bool(np.all(ulo < uhi) and np.all(vlo < vhi))


def chain_defects(e: Exponents, b: BracketSet, space: str = "auto") -> dict[str, bool]:
    """Each link of the two bracket chains.

    ``space="float"`` substitutes the constants directly; ``"log"`` checks
    the logarithm of each inequality; ``"auto"`` uses floats whenever the
    constants and every product in the chains are ordinary doubles.
    """
    rho = e.r / (1 + e.theta)
    sig = e.q / (1 + e.p)
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        terms = [np.float64(b.M1) ** rho * b.m2, np.float64(b.M1) * b.m2 ** sig,
                 np.float64(b.M2) ** sig * b.m1, np.float64(b.M2) * b.m1 ** rho]
    if space == "auto":
        # every product must be an ordinary double for direct substitution to mean anything
        fine = b.representable and all(0 < x < np.inf for x in terms)
        space = "float" if fine else "log"
    if space == "float":
        links = {
            "31_left": terms[0] <= b.c1,
            "31_right": b.c2 <= terms[1],
            "32_left": terms[2] <= b.c1,
            "32_right": b.c2 <= terms[3],
        }
    elif space == "log":
        lc1, lc2 = np.log(b.c1), np.log(b.c2)
        links = {
            "31_left": rho * b.log_M1 + b.log_m2 <= lc1,
            "31_right": lc2 <= b.log_M1 + sig * b.log_m2,
            "32_left": sig * b.log_M2 + b.log_m1 <= lc1,
            "32_right": lc2 <= b.log_M2 + rho * b.log_m1,
        }
    else:
        raise ValueError(f"unknown space {space!r}")
    links["c_order"] = b.c1 < b.c2
    links["m_order"] = b.log_m1 < 0 < b.log_M1 and b.log_m2 < 0 < b.log_M2
    return {k: bool(v) for k, v in links.items()}


def build_bracket(e: Exponents, c1: float, c2: float, env: Envelopes | None = None) -> BracketSet:
    """Pick ``m1 < 1 < M1``, ``m2 < 1 < M2`` satisfying both bracket chains.

    With ``rho = r/(1+theta)``, ``sig = q/(1+p)`` and
    ``kappa = 1 - rho*sig > 0``::

        m2 = min(1/2, (c1 / c2^rho)^(1/kappa), (c2/2)^(1/sig)),   M1 = c2 m2^-sig
        m1 = min(1/2, (c1 / c2^sig)^(1/kappa), (c2/2)^(1/rho)),   M2 = c2 m1^-rho

    evaluated in logarithms.  The third term of each ``min`` only binds for
    ``c2 < 2`` and keeps ``M > 1``.  A relative slack of about 1e-9 on each
    link keeps the equalities strict after rounding.
    """
    if not 0 < c1 < c2:
        raise ValueError(f"need 0 < c1 < c2, got c1={c1}, c2={c2}")
    denom = (1 + e.p) * (1 + e.theta)
    if not denom - e.q * e.r > 0:
        raise HypothesisNotMet("(1+p)(1+theta) - qr > 0 fails; no bracket exists")
    rho = e.r / (1 + e.theta)
    sig = e.q / (1 + e.p)
    kappa = 1.0 - e.q * e.r / denom
    lc1, lc2 = np.log(c1), np.log(c2)

    def pick(first, second):
        # first is the exponent in M = c2 m^-first, second the one in the left link
        log_m = min(np.log(0.5), (lc1 - second * lc2) / kappa, (lc2 - np.log(2.0)) / first)
        eta = CHAIN_SLACK * max(1.0, abs(log_m), abs(lc1), abs(lc2))
        log_m -= 2 * (1 + second) * eta / kappa
        log_M = lc2 + eta - first * log_m
        return log_m, log_M

    lm2, lM1 = pick(sig, rho)
    lm1, lM2 = pick(rho, sig)
    if env is None:
        env = Envelopes(np.nan, np.nan, np.nan, np.nan)
    with np.errstate(over="ignore", under="ignore"):
        m1, M1, m2, M2 = (float(np.exp(x)) for x in (lm1, lM1, lm2, lM2))
    out = BracketSet(m1=m1, M1=M1, m2=m2, M2=M2, c1=c1, c2=c2, env=env,
                     log_m1=lm1, log_M1=lM1, log_m2=lm2, log_M2=lM2)
    bad = [k for k, ok in chain_defects(e, out).items() if not ok]
    if bad:
        raise ArithmeticError(f"bracket construction violated {bad}")
    return out


@dataclass(frozen=True)
class ModelProblem:
    component: str
    gamma: float
    power: float
    exponent: float
    bound: str


def model_problems(e: Exponents, env: Envelopes) -> list[ModelProblem]:
    """Scalar problems whose solutions pin down the box walls.

    ``Tu`` is bounded below through the weight ``d^-(q ev_hi)`` and above
    through ``d^-(q ev_lo)``; likewise for ``Tv`` with ``r`` and the ``u``
    exponents.
    """
    probs = [
        ModelProblem("u", e.q * env.v_hi, e.p, env.u_lo, "lower"),
        ModelProblem("u", e.q * env.v_lo, e.p, env.u_hi, "upper"),
        ModelProblem("v", e.r * env.u_hi, e.theta, env.v_lo, "lower"),
        ModelProblem("v", e.r * env.u_lo, e.theta, env.v_hi, "upper"),
    ]
    return probs


def calibrate_scalar(op: FracOp, gamma: float, p: float, exponent: float,
                     tol: float = 1e-10) -> tuple[float, float]:
    """``(min, max)`` of ``u / d^exponent`` for the solution of one model problem."""
    if predict_rate(op.s, gamma, p).regime == "nonexistent":
        raise RegimeRefusal(f"model weight exponent {gamma} >= 2s = {2 * op.s}")
    d = op.grid.dist
    res = solve_weighted(op, d ** (-gamma), p, tol=tol)
    if not res.converged:
        raise NoConvergenceError(f"model problem (gamma={gamma}, p={p}) did not converge")
    ratio = res.u / d ** exponent
    return float(ratio.min()), float(ratio.max())


def calibrate_constants(op_s: FracOp, op_t: FracOp, e: Exponents, env: Envelopes,
                        tol: float = 1e-10) -> tuple[float, float]:
    """Measured envelope constants, padded by a factor 2 each way."""
    lows, highs = [], []
    cache = {}
    for mp in model_problems(e, env):
        op = op_s if mp.component == "u" else op_t
        key = (mp.component, mp.gamma, mp.power, mp.exponent)
        if key not in cache:
            cache[key] = calibrate_scalar(op, mp.gamma, mp.power, mp.exponent, tol)
        lo, hi = cache[key]
        (lows if mp.bound == "lower" else highs).append(lo if mp.bound == "lower" else hi)
    c1 = min(lows) / SAFETY
    c2 = max(highs) * SAFETY
    if not 0 < c1 < c2:
        raise ArithmeticError(f"calibration produced c1={c1}, c2={c2}")
    return c1, c2


def apply_T(op_s: FracOp, op_t: FracOp, e: Exponents, u: GridFn, v: GridFn,
            guess: tuple[np.ndarray, np.ndarray] | None = None,
            tol: float = 1e-10) -> tuple[GridFn, GridFn]:
    """Decoupled update: solve for ``Tu`` with ``v`` frozen and for ``Tv`` with ``u`` frozen."""
    if np.any(u.values <= 0) or np.any(v.values <= 0):
        raise ValueError("T is only defined on positive pairs")
    gu, gv = (None, None) if guess is None else guess
    ru = solve_weighted(op_s, v.values ** (-e.q), e.p, u0=gu, tol=tol)
    rv = solve_weighted(op_t, u.values ** (-e.r), e.theta, u0=gv, tol=tol)
    if not (ru.converged and rv.converged):
        raise NoConvergenceError("inner scalar solve failed inside T")
    return GridFn(op_s.grid, ru.u), GridFn(op_t.grid, rv.u)


@dataclass(frozen=True)
class SystemReport:
    u: GridFn
    v: GridFn
    outer_iterations: int
    residuals: tuple[float, float]
    pde_residuals: tuple[float, float]
    in_bracket: bool
    fitted_rates: tuple[RateFit | None, RateFit | None]
    converged: bool
    bracket: BracketSet
    widened: bool = False

    def as_dict(self) -> dict:
        fu, fv = self.fitted_rates
        b = self.bracket
        return {
            "outer_iterations": self.outer_iterations,
            "residuals": list(self.residuals),
            "pde_residuals": list(self.pde_residuals),
            "in_bracket": self.in_bracket,
            "converged": self.converged,
            "widened": self.widened,
            "fitted_u_rate": None if fu is None else fu.exponent,
            "fitted_v_rate": None if fv is None else fv.exponent,
            "bracket": {"m1": b.m1, "M1": b.M1, "m2": b.m2, "M2": b.M2,
                        "c1": b.c1, "c2": b.c2,
                        "envelopes": {"u_lo": b.env.u_lo, "u_hi": b.env.u_hi,
                                      "v_lo": b.env.v_lo, "v_hi": b.env.v_hi,
                                      "perturbation": b.env.perturbation}},
        }


def _rel_change(new: np.ndarray, old: np.ndarray) -> float:
    return float(np.max(np.abs(new - old)) / np.max(np.abs(new)))


def pde_residuals(op_s: FracOp, op_t: FracOp, e: Exponents, u: GridFn, v: GridFn):
    uu, vv = u.values, v.values
    fu = uu ** (-e.p) * vv ** (-e.q)
    fv = uu ** (-e.r) * vv ** (-e.theta)
    return (float(np.max(np.abs(op_s.matvec(uu) - fu)) / np.max(fu)),
            float(np.max(np.abs(op_t.matvec(vv) - fv)) / np.max(fv)))


def _safe_fit(f: GridFn) -> RateFit | None:
    try:
        return fit_rate(f)
    except ValueError:
        return None


def _check_solvable(e: Exponents):
    if classify_existence(e) is None:
        cond = classify_nonexistence(e)
        if cond is not None:
            raise RegimeRefusal(f"nonexistence condition ({cond}) holds; nothing to solve")
        raise HypothesisNotMet("no existence theorem covers these exponents")


def _start(bracket: BracketSet, grid: Grid, start):
    ulo, uhi, vlo, vhi = bracket.walls(grid)
    if isinstance(start, tuple):
        return np.array(start[0].values), np.array(start[1].values)
    if start == "mid":
        return np.sqrt(ulo * uhi), np.sqrt(vlo * vhi)
    if start == "bottom":
        return ulo.copy(), vlo.copy()
    if start == "top":
        return uhi.copy(), vhi.copy()
    raise ValueError(f"unknown start {start!r}")


def _picard(op_s, op_t, e, bracket, u, v, tol, max_outer, inner_tol):
    ulo, uhi, vlo, vhi = bracket.walls(op_s.grid)
    clamps, changes = [], (np.inf, np.inf)
    guess = None
    converged = False
    it = 0
    for it in range(1, max_outer + 1):
        tu, tv = apply_T(op_s, op_t, e, GridFn(op_s.grid, u), GridFn(op_t.grid, v),
                         guess=guess, tol=inner_tol)
        guess = (tu.values, tv.values)
        nu = np.clip(tu.values, ulo, uhi)
        nv = np.clip(tv.values, vlo, vhi)
        clamps.append(bool(np.any(nu != tu.values) or np.any(nv != tv.values)))
        changes = (_rel_change(nu, u), _rel_change(nv, v))
        u, v = nu, nv
        if max(changes) <= tol:
            converged = True
            break
    in_bracket = not any(clamps[-CLAMP_WINDOW:])
    return u, v, it, changes, converged, in_bracket


def solve_system(op_s: FracOp, op_t: FracOp, e: Exponents, bracket: BracketSet,
                 tol: float = 1e-8, max_outer: int = 1000, inner_tol: float = 1e-10,
                 start="mid", widen: bool = True) -> SystemReport:
    """Outer Picard iteration on ``T`` inside the bracket.

    Converged when the relative sup-norm change of both components is at
    most ``tol``.  Clamping against a wall during the last three sweeps
    marks the bracket as too tight; with ``widen`` the constants are relaxed
    once (``c1/2``, ``2 c2``) and the iteration resumes from where it
    stopped.
    """
    _check_solvable(e)
    if op_s.grid != op_t.grid:
        raise ValueError("both operators must live on the same grid")
    u, v = _start(bracket, op_s.grid, start)
    u, v, it, changes, converged, in_bracket = _picard(
        op_s, op_t, e, bracket, u, v, tol, max_outer, inner_tol)
    widened = False
    if widen and not in_bracket:
        bracket = build_bracket(e, bracket.c1 / 2, bracket.c2 * 2, bracket.env)
        widened = True
        u, v, it2, changes, converged, in_bracket = _picard(
            op_s, op_t, e, bracket, u, v, tol, max_outer, inner_tol)
        it += it2
    gu, gv = GridFn(op_s.grid, u), GridFn(op_t.grid, v)
    return SystemReport(u=gu, v=gv, outer_iterations=it, residuals=changes,
                        pde_residuals=pde_residuals(op_s, op_t, e, gu, gv),
                        in_bracket=in_bracket, fitted_rates=(_safe_fit(gu), _safe_fit(gv)),
                        converged=converged, bracket=bracket, widened=widened)


def fixed_point_residual(op_s: FracOp, op_t: FracOp, e: Exponents, report: SystemReport,
                         inner_tol: float = 1e-10) -> float:
    tu, tv = apply_T(op_s, op_t, e, report.u, report.v, guess=(report.u.values, report.v.values),
                     tol=inner_tol)
    return max(_rel_change(tu.values, report.u.values), _rel_change(tv.values, report.v.values))


@dataclass(frozen=True)
class LowerBoundReport:
    u_min: float
    v_min: float
    u_inner_outer: float
    v_inner_outer: float
    stable_ratio: float = 0.5

    @property
    def passed(self) -> bool:
        return (self.u_min > 0 and self.v_min > 0
                and self.u_inner_outer >= self.stable_ratio
                and self.v_inner_outer >= self.stable_ratio)


def _halves_ratio(f: GridFn, expo: float, window) -> float:
    d = f.grid.dist
    lo, hi = window
    mid = np.sqrt(lo * hi)
    ratio = f.values / d ** expo
    inner = ratio[(d >= lo * (1 - 1e-9)) & (d < mid)]
    outer = ratio[(d >= mid) & (d <= hi * (1 + 1e-9))]
    if inner.size == 0 or outer.size == 0:
        raise ValueError("window too narrow to split")
    return float(inner.min() / outer.max())


def lower_bound_report(u: GridFn, v: GridFn, s: float, t: float,
                       window: tuple[float, float] | None = None) -> LowerBoundReport:
    """``u >= c d^s`` and ``v >= c d^t``: the ratios must stay positive and must not
    sag toward the boundary.

    The fit window is split at its geometric midpoint; the smallest ratio in
    the half nearer the boundary must be at least half the largest ratio in
    the other half.
    """
    if window is None:
        window = default_window(u.grid)
    d = u.grid.dist
    return LowerBoundReport(u_min=float((u.values / d ** s).min()),
                            v_min=float((v.values / d ** t).min()),
                            u_inner_outer=_halves_ratio(u, s, window),
                            v_inner_outer=_halves_ratio(v, t, window))


def lower_bound_check(u: GridFn, v: GridFn, s: float, t: float,
                      window: tuple[float, float] | None = None) -> bool:
    return lower_bound_report(u, v, s, t, window).passed


@dataclass(frozen=True)
class ProbeReport:
    distance: float
    contraction: float
    bottom: SystemReport
    top: SystemReport


def uniqueness_probe(op_s: FracOp, op_t: FracOp, e: Exponents, bracket: BracketSet,
                     tol: float = 1e-10) -> ProbeReport:
    """Solve from the bottom and the top wall of the box and compare the limits."""
    if not classify_uniqueness(e):
        raise HypothesisNotMet("uniqueness hypotheses do not hold")
    lo = solve_system(op_s, op_t, e, bracket, tol=tol, start="bottom")
    hi = solve_system(op_s, op_t, e, bracket, tol=tol, start="top")
    dist = max(_rel_change(lo.u.values, hi.u.values), _rel_change(lo.v.values, hi.v.values))
    contraction = e.q * e.r / ((1 + e.p) * (1 + e.theta))
    return ProbeReport(distance=dist, contraction=contraction, bottom=lo, top=hi)


@dataclass(frozen=True)
class SystemSetup:
    grid: Grid
    op_s: FracOp
    op_t: FracOp
    existence: str
    case: int | None
    envelopes: Envelopes
    bracket: BracketSet


def prepare(e: Exponents, grid: Grid, a: float = DEFAULT_PERTURBATION,
            op_s: FracOp | None = None, op_t: FracOp | None = None) -> SystemSetup:
    """Classify, assemble both operators, calibrate and build the bracket."""
    _check_solvable(e)
    existence = classify_existence(e)
    case = existence_case(e, existence)
    env = envelope_exponents(e, existence, case, a)
    if op_s is None:
        op_s = assemble(grid, e.s)
    if op_t is None:
        op_t = op_s if e.t == e.s else assemble(grid, e.t)
    c1, c2 = calibrate_constants(op_s, op_t, e, env)
    bracket = build_bracket(e, c1, c2, env)
    if not bracket.diam_ok(grid):
        raise ArithmeticError("bracket walls cross inside the domain")
    return SystemSetup(grid, op_s, op_t, existence, case, env, bracket)


@dataclass(frozen=True)
class DiagnosticRow:
    n: int
    peak: float


def nonexistence_diagnostic(e: Exponents, sizes=(128, 256, 512, 1024),
                            a: float = -1.0, b: float = 1.0) -> dict:
    """Heuristic only: solve the reduced scalar problem from the nonexistence argument
    on refining grids and report how its peak value grows.

    The reduced problem has a weight exponent at or above twice the order, so
    no continuum solution exists; discrete solutions exist on every grid but
    their peak should grow without bound as ``h -> 0``.
    """
    cond = classify_nonexistence(e)
    if cond is None:
        raise HypothesisNotMet("no nonexistence condition holds")
    target = e if cond in ("i", "ii", "v") else swap(e)
    label = {"iii": "i", "iv": "ii", "vi": "v"}.get(cond, cond)
    p, q, r, theta, s, t = (target.p, target.q, target.r, target.theta, target.s, target.t)
    if label == "i":
        order, gamma, power = t, r * s, theta
    elif label == "ii":
        order, gamma, power = t, r * (2 * s - q * t) / (1 + p), theta
    else:
        order, gamma, power = s, q * (2 * t * (1 + p) - 2 * r * s) / ((1 + p) * (1 + theta)), p
    rows = []
    for n in sizes:
        grid = Grid(a, b, n)
        op = assemble(grid, order)
        res = solve_weighted(op, grid.dist ** (-gamma), power)
        rows.append(DiagnosticRow(n, float(res.u.max())))
    growth = [rows[i + 1].peak / rows[i].peak for i in range(len(rows) - 1)]
    return {"heuristic": True, "condition": cond, "order": order, "gamma": gamma,
            "power": power, "critical_gamma": 2 * order,
            "peaks": [(row.n, row.peak) for row in rows], "growth": growth}


__all__ = [
    "Envelopes", "BracketSet", "SystemReport", "ProbeReport", "SystemSetup",
    "envelope_exponents", "build_bracket", "chain_defects", "model_problems",
    "calibrate_scalar", "calibrate_constants", "apply_T", "solve_system",
    "fixed_point_residual", "lower_bound_check", "lower_bound_report",
    "uniqueness_probe", "prepare", "nonexistence_diagnostic",
]
