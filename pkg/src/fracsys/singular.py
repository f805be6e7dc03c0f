"""Scalar singular problem ``(-Δ)^s u = coeff * d^-gamma * u^-p`` and its boundary rates.

``S(u) = solve((K u^-p))`` is order reversing for ``p > 0``, so plain Picard
iteration oscillates.  The solver uses the geometric-mean update

    u <- u^(1 - w) * S(u)^w,   w = 1 / (1 + p),

which is exact on the scaling mode ``u -> c u`` and contracts every other
mode by at most ``p / (1 + p)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .core import (GridFn, RateFit, RegimeRefusal, FracsysError, NonpositiveSampleError,
                   default_window, fit_rate)
from .fraclap import FracOp
from .spectral import EigenPair, principal_eigenpair

FLOOR = 1e-14
RESIDUAL_TOL = 1e-8

Regime = Literal["sublinear", "critical", "superlinear", "nonexistent"]


class NotASubsolution(FracsysError, ValueError):
    pass


class NotASupersolution(FracsysError, ValueError):
    pass


@dataclass(frozen=True)
class RatePrediction:
    regime: Regime
    exponent: float | None
    log_correction: bool


@dataclass(frozen=True)
class SingularProblem:
    """``K(x) = coeff * d(x)^-gamma`` with power ``p``."""

    s: float
    gamma: float
    coeff: float = 1.0
    p: float = 0.0

    def __post_init__(self):
        if not 0 < self.s < 1:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        if self.gamma < 0 or self.p < 0:
            raise ValueError("gamma and p must be nonnegative")
        if not self.coeff > 0:
            raise ValueError("coeff must be positive")

    def weight(self, d: np.ndarray) -> np.ndarray:
        return self.coeff * d ** (-self.gamma)


def predict_rate(s: float, gamma: float, p: float) -> RatePrediction:
    """Boundary exponent of positive solutions, from the sign of ``gamma/s + p - 1``."""
    if not 0 < s < 1 or gamma < 0 or p < 0:
        raise ValueError(f"invalid (s, gamma, p) = {(s, gamma, p)}")
    if gamma >= 2 * s:
        return RatePrediction("nonexistent", None, False)
    x = gamma / s + p
    if x < 1:
        return RatePrediction("sublinear", s, False)
    if x == 1:
        return RatePrediction("critical", s, True)
    return RatePrediction("superlinear", (2 * s - gamma) / (1 + p), False)


@dataclass(frozen=True)
class InnerResult:
    u: np.ndarray
    converged: bool
    iterations: int
    residual: float
    residual_history: list[float]
    change_history: list[float]
    floor_ok: bool


def _residual(op: FracOp, u: np.ndarray, weight: np.ndarray, p: float) -> float:
    rhs = weight * u ** (-p)
    return float(np.max(np.abs(op.matvec(u) - rhs)) / np.max(np.abs(rhs)))


def solve_weighted(op: FracOp, weight: np.ndarray, p: float, u0: np.ndarray | None = None,
                   tol: float = 1e-10, max_iter: int = 500) -> InnerResult:
    """Damped fixed-point solve of ``A u = weight * u^-p`` with nodal ``weight > 0``.

    Converged means relative sup-norm change ``<= tol`` and relative
    residual ``<= 1e-8``.  A non-converged run returns its last iterate.
    """
    weight = np.asarray(weight, dtype=float)
    if np.any(weight <= 0) or not np.all(np.isfinite(weight)):
        raise ValueError("weight must be positive and finite")
    if p == 0:
        u = op.solve_array(weight)
        res = _residual(op, u, weight, 0.0)
        return InnerResult(u, bool(res <= RESIDUAL_TOL and np.all(u > 0)), 1, res,
                           [res], [], bool(np.all(u > 0)))

    d = op.grid.dist
    if u0 is None:
        u = op.solve_array(np.ones(op.grid.n))
        u = np.maximum(u, FLOOR * d ** op.s)
    else:
        u = np.array(u0, dtype=float)
        if np.any(u <= 0):
            raise ValueError("initial guess must be positive")
    omega = 1.0 / (1.0 + p)
    res_hist, chg_hist = [], []
    converged = False
    for it in range(1, max_iter + 1):
        su = op.solve_array(weight * u ** (-p))
        su = np.maximum(su, FLOOR * su.max())
        new = u ** (1 - omega) * su ** omega
        change = float(np.max(np.abs(new - u)) / np.max(new))
        u = new
        res = _residual(op, u, weight, p)
        chg_hist.append(change)
        res_hist.append(res)
        if change <= tol and res <= RESIDUAL_TOL:
            converged = True
            break
    floor_ok = bool(u.min() > 10 * FLOOR * u.max())
    return InnerResult(u, converged, it, res_hist[-1], res_hist, chg_hist, floor_ok)


@dataclass(frozen=True)
class SolveReport:
    u: GridFn
    prediction: RatePrediction
    converged: bool
    iterations: int
    residual: float
    residual_history: list[float] = field(repr=False)
    floor_ok: bool
    fit: RateFit | None
    fit_corrected: RateFit | None = None

    @property
    def fitted_exponent(self) -> float | None:
        """Fitted power of ``d``, after dividing out the predicted log factor if any."""
        best = self.fit_corrected or self.fit
        return None if best is None else best.exponent

    def as_dict(self) -> dict:
        fit = self.fit_corrected or self.fit
        return {
            "regime": self.prediction.regime,
            "predicted_exponent": self.prediction.exponent,
            "log_correction": self.prediction.log_correction,
            "fitted_exponent": self.fitted_exponent,
            "raw_fitted_exponent": None if self.fit is None else self.fit.exponent,
            "r_squared": None if fit is None else fit.r_squared,
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
        }


def log_factor(phi: GridFn, p: float) -> np.ndarray:
    """``(ln(2 / phi))^(1/(1+p))`` for an eigenfunction normalised to ``max phi = 1``."""
    return np.log(2.0 / phi.values) ** (1.0 / (1.0 + p))


def solve_singular(op: FracOp, prob: SingularProblem, tol: float = 1e-10,
                   max_iter: int = 500, eigen: EigenPair | None = None,
                   window: tuple[float, float] | None = None) -> SolveReport:
    """Solve the scalar problem and fit the boundary exponent of the result.

    Raises :class:`RegimeRefusal` when ``gamma >= 2s``.  In the critical
    regime the fit is also done on ``u / (ln(2/phi))^(1/(1+p))``; pass
    ``eigen`` to reuse an eigenpair already computed on ``op``.
    """
    if abs(op.s - prob.s) > 1e-15:
        raise ValueError(f"operator order {op.s} differs from problem order {prob.s}")
    pred = predict_rate(prob.s, prob.gamma, prob.p)
    if pred.regime == "nonexistent":
        raise RegimeRefusal(
            f"gamma={prob.gamma} >= 2s={2 * prob.s}: no positive solution exists")
    grid = op.grid
    inner = solve_weighted(op, prob.weight(grid.dist), prob.p, tol=tol, max_iter=max_iter)
    u = GridFn(grid, inner.u)
    try:
        fit = fit_rate(u, window)
    except (FracsysError, ValueError):
        fit = None
    fit_corr = None
    if pred.log_correction and fit is not None:
        if eigen is None:
            eigen = principal_eigenpair(op)
        fit_corr = fit_rate(GridFn(grid, inner.u / log_factor(eigen.phi, prob.p)), window)
    return SolveReport(u=u, prediction=pred, converged=inner.converged,
                       iterations=inner.iterations, residual=inner.residual,
                       residual_history=inner.residual_history, floor_ok=inner.floor_ok,
                       fit=fit, fit_corrected=fit_corr)


@dataclass(frozen=True)
class LogCorrectionReport:
    ratio_min: float
    ratio_max: float
    drift: float
    factor: float

    @property
    def spread(self) -> float:
        return self.ratio_max / self.ratio_min

    @property
    def passed(self) -> bool:
        return self.spread <= self.factor


def check_log_correction(u: GridFn, phi: GridFn, s: float, p: float,
                         window: tuple[float, float] | None = None,
                         factor: float = 3.0) -> LogCorrectionReport:
    """Bound ``u / (d^s ln(2/phi)^(1/(1+p)))`` above and below inside the window.

    ``drift`` is the log-log slope of that ratio against ``d``; a missing log
    factor shows up as a clearly positive drift (ratio falling toward the
    boundary).
    """
    grid = u.grid
    if window is None:
        window = default_window(grid)
    d = grid.dist
    ratio = u.values / (d ** s * log_factor(phi, p))
    mask = (d >= window[0] * (1 - 1e-9)) & (d <= window[1] * (1 + 1e-9))
    if np.any(ratio[mask] <= 0):
        raise NonpositiveSampleError("ratio must be positive inside the window")
    drift = fit_rate(GridFn(grid, np.where(ratio > 0, ratio, 1.0)), window).exponent
    return LogCorrectionReport(ratio_min=float(ratio[mask].min()),
                               ratio_max=float(ratio[mask].max()),
                               drift=float(drift), factor=factor)


def comparison_check(op: FracOp, psi: GridFn, p: float, u_sub: GridFn, u_super: GridFn,
                     tol: float = 1e-8) -> bool:
    """Check ``u_sub <= u_super`` for a verified sub/supersolution pair.

    Both inequalities ``A u_sub <= psi u_sub^-p`` and
    ``A u_super >= psi u_super^-p`` are verified first, with slack ``tol``
    relative to the size of the right-hand side.
    """
    if np.any(psi.values <= 0):
        raise ValueError("psi must be positive")
    for f in (u_sub, u_super):
        if np.any(f.values <= 0):
            raise ValueError("sub/supersolutions must be positive")
    rhs_sub = psi.values * u_sub.values ** (-p)
    rhs_sup = psi.values * u_super.values ** (-p)
    if np.any(op.matvec(u_sub.values) - rhs_sub > tol * np.max(rhs_sub)):
        raise NotASubsolution("A u_sub exceeds psi u_sub^-p")
    if np.any(op.matvec(u_super.values) - rhs_sup < -tol * np.max(rhs_sup)):
        raise NotASupersolution("A u_super falls below psi u_super^-p")
    return bool(np.all(u_sub.values <= u_super.values))
