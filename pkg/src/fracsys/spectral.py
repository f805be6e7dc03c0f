"""Principal eigenpair, torsion function and the bounds tying them to ``d^s``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Grid, GridFn, NoConvergenceError
from .fraclap import FracOp, solve_dirichlet

EIGEN_TOL = 1e-10
EIGEN_MAX_ITER = 500
# nodes dropped at each end when measuring phi / d^s
EDGE_SKIP = 2
# residual below this many ulps of the diagonal is round-off, not error
ROUNDOFF_ULPS = 64


@dataclass(frozen=True)
class EigenPair:
    lambda1: float
    phi: GridFn
    residual: float
    iterations: int


@dataclass(frozen=True)
class TorsionFn:
    phi_torsion: GridFn


@dataclass(frozen=True)
class EigenBoundsReport:
    c_low: float
    c_high: float
    w3_ok: bool
    w3_min_gap: float

    @property
    def ratio(self) -> float:
        return self.c_high / self.c_low


def principal_eigenpair(op: FracOp, tol: float = EIGEN_TOL, max_iter: int = EIGEN_MAX_ITER,
                        start: np.ndarray | None = None) -> EigenPair:
    """Inverse power iteration for the smallest eigenvalue.

    The iterate is renormalised to ``max phi = 1`` every step and ``lambda``
    is the Rayleigh quotient.  Stops once
    ``||A phi - lambda phi||_inf <= tol * lambda``, or once the residual
    reaches the round-off level ``64 eps max(diag A)`` when that is larger
    (fine grids with ``s`` near 1).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = op.grid.n
    x = np.ones(n) if start is None else np.array(start, dtype=float)
    if x.shape != (n,) or np.any(x <= 0):
        raise ValueError("start vector must be positive with one entry per node")
    x /= x.max()
    floor = ROUNDOFF_ULPS * np.finfo(float).eps * float(np.max(np.diag(op.matrix)))
    lam, res = np.nan, np.inf
    for it in range(1, max_iter + 1):
        y = op.solve_array(x)
        x = y / y.max()
        ax = op.matvec(x)
        lam = float(x @ ax / (x @ x))
        res = float(np.max(np.abs(ax - lam * x)))
        if res <= max(tol * lam, floor):
            break
    else:
        raise NoConvergenceError(
            f"inverse iteration stalled at residual {res:.3e} after {max_iter} steps")
    if np.any(x <= 0):
        raise NoConvergenceError("principal eigenvector lost positivity")
    return EigenPair(lambda1=lam, phi=GridFn(op.grid, x), residual=res, iterations=it)


def torsion(op: FracOp) -> TorsionFn:
    """Solution of ``(-Δ)^s phi = 1`` with zero exterior data."""
    one = GridFn(op.grid, np.ones(op.grid.n))
    return TorsionFn(solve_dirichlet(op, one))


def rayleigh_quotient(op: FracOp, f: np.ndarray) -> float:
    """``(f^T A f + Σ T_i f_i^2) / f^T f``, split the way the operator is stored."""
    f = np.asarray(f, dtype=float)
    return float((f @ (op.stencil @ f) + np.sum(op.tail * f * f)) / (f @ f))


def verify_eigen_bounds(pair: EigenPair, tors: TorsionFn, grid: Grid, s: float,
                        tol: float | None = None) -> EigenBoundsReport:
    """Empirical two-sided bound ``c d^s <= phi <= d^s / c`` and ``phi <= lambda1 * torsion``.

    The ratio ``phi / d^s`` skips the two nodes next to each endpoint.  The
    torsion comparison is checked at every node with slack ``tol``
    (default ``1e-8 * lambda1``).
    """
    if pair.phi.grid != grid or tors.phi_torsion.grid != grid:
        raise ValueError("eigenpair, torsion and grid disagree")
    if tol is None:
        tol = 1e-8 * pair.lambda1
    d = grid.dist
    ratio = pair.phi.values / d ** s
    inner = ratio[EDGE_SKIP:grid.n - EDGE_SKIP] if grid.n > 2 * EDGE_SKIP else ratio
    gap = pair.lambda1 * tors.phi_torsion.values - pair.phi.values
    return EigenBoundsReport(c_low=float(inner.min()), c_high=float(inner.max()),
                             w3_ok=bool(np.all(gap >= -tol)), w3_min_gap=float(gap.min()))
