"""Discrete 1-D fractional Laplacian with zero exterior data.

For a node ``x_i`` the singular integral

    C(1,s) PV ∫ (u(x_i) - u(y)) / |x_i - y|^(1+2s) dy

is split into a near field ``|y - x_i| < h`` and a far field.  In the near
field ``u`` is replaced by its quadratic Taylor model, which gives the usual
second difference times ``h^(-2s)/(2-2s)``.  In the far field ``u`` is its
continuous piecewise-linear interpolant on the nodes ``a, x_1, ..., x_n, b``
(zero at the endpoints and beyond) and the kernel is integrated exactly
against every hat function.  All weights come in closed form, so the matrix
is a symmetric Toeplitz M-matrix plus a diagonal exterior term.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy import integrate, linalg, special

from .core import GridFn, Grid, GridMismatchError


def _check_order(s: float):
    if not 0.0 < s < 1.0:
        raise ValueError(f"fractional order must lie in (0, 1), got s={s}")


@lru_cache(maxsize=64)
def normalization_constant(s: float) -> float:
    """``C(1,s) = (∫_R (1 - cos z) / |z|^(1+2s) dz)^-1`` by adaptive quadrature.

    On ``[0, 1]`` the integrand is written as ``z^(1-2s) * 2 sin^2(z/2)/z^2``
    and handed to QAWS with the algebraic weight.  On ``[1, ∞)`` the
    non-oscillatory part integrates to ``1/(2s)`` and the cosine part goes
    through the QAWF Fourier routine.
    """
    _check_order(s)

    def smooth(z):
        # 2 sin^2(z/2) / z^2, regular at 0
        return 0.5 * np.sinc(z / (2 * np.pi)) ** 2

    head, _ = integrate.quad(smooth, 0.0, 1.0, weight="alg", wvar=(1 - 2 * s, 0.0),
                             epsabs=0.0, epsrel=1e-13, limit=200)
    with warnings.catch_warnings():
        # QAWF flags slow cycle convergence for small s; its error estimate stays tiny
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        cos_tail, err = integrate.quad(lambda z: z ** (-1 - 2 * s), 1.0, np.inf,
                                       weight="cos", wvar=1.0, epsabs=1e-15, limlst=200)
    if not err < 1e-11:
        raise ArithmeticError(f"oscillatory tail quadrature failed for s={s} (err={err:g})")
    total = 2.0 * (head + 1.0 / (2 * s) - cos_tail)
    return 1.0 / total


def normalization_constant_closed(s: float) -> float:
    """Gamma-function form ``4^s Γ(1/2+s) s / (√π Γ(1-s))``."""
    _check_order(s)
    return float(4.0 ** s * special.gamma(0.5 + s) * s
                 / (np.sqrt(np.pi) * special.gamma(1.0 - s)))


def _expm1_ratio(beta: float, L):
    """``(exp(beta*L) - 1) / beta`` with the ``beta -> 0`` limit ``L``."""
    if beta == 0.0:
        return L
    return np.expm1(beta * L) / beta


def hat_weights(s: float, kmax: int) -> np.ndarray:
    """Far-field weights ``w_k = ∫_{|z|>=1} hat(z - k) |z|^(-1-2s) dz`` on a unit lattice.

    Returns an array of length ``kmax + 1`` with ``w[0] = 0``.
    """
    _check_order(s)
    beta = 1.0 - 2.0 * s
    w = np.zeros(kmax + 1)
    if kmax >= 1:
        w[1] = (1.0 - _expm1_ratio(beta, np.log(2.0))) / (2 * s)
    if kmax >= 2:
        k = np.arange(2, kmax + 1, dtype=float)
        # second difference of the antiderivative z^beta / (2s(2s-1))
        w[2:] = -k ** beta * (_expm1_ratio(beta, np.log1p(1.0 / k))
                              + _expm1_ratio(beta, np.log1p(-1.0 / k))) / (2 * s)
    return w


def near_field_weight(s: float) -> float:
    return 1.0 / (2.0 - 2.0 * s)


def exterior_weights(s: float, i: np.ndarray) -> np.ndarray:
    """Total coupling of node ``i`` (1-based, counted from one endpoint) to the zero data
    at and beyond that endpoint, on a unit lattice."""
    beta = 1.0 - 2.0 * s
    i = np.asarray(i, dtype=float)
    out = np.empty_like(i)
    first = i == 1
    out[first] = 1.0 / (2 * s) + near_field_weight(s)
    rest = ~first
    ir = i[rest]
    out[rest] = -ir ** beta * _expm1_ratio(beta, np.log1p(-1.0 / ir)) / (2 * s)
    return out


@dataclass(frozen=True, eq=False)
class FracOp:
    """Assembled operator: ``apply(f) = stencil @ f + tail * f``.

    ``stencil`` has nonpositive off-diagonal entries and zero row sums, so it
    only measures differences between interior values.  ``tail`` collects
    the coupling to the zero exterior.
    """

    s: float
    grid: Grid
    normalization: float
    stencil: np.ndarray
    tail: np.ndarray

    @cached_property
    def matrix(self) -> np.ndarray:
        m = self.stencil.copy()
        m[np.diag_indices_from(m)] += self.tail
        m.setflags(write=False)
        return m

    @cached_property
    def _cho(self):
        return linalg.cho_factor(self.matrix, lower=False, check_finite=False)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def solve_array(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        x = linalg.cho_solve(self._cho, rhs, check_finite=False)
        # one step of iterative refinement
        x += linalg.cho_solve(self._cho, rhs - self.matrix @ x, check_finite=False)
        return x

    def dump(self) -> tuple[str, str]:
        """Return ``(json_header, csv_body)`` describing the stencil."""
        header = json.dumps({"s": self.s, "n": self.grid.n, "a": self.grid.a,
                             "b": self.grid.b, "normalization": self.normalization},
                            sort_keys=True)
        lines = ["i,j,A_ij"]
        n = self.grid.n
        for i in range(n):
            for j in range(n):
                lines.append(f"{i},{j},{self.stencil[i, j]:.17g}")
        return header, "\n".join(lines) + "\n"


def assemble(grid: Grid, s: float) -> FracOp:
    _check_order(s)
    n, h = grid.n, grid.h
    c = normalization_constant(s)
    scale = c * h ** (-2 * s)

    w = hat_weights(s, n - 1)
    w[1] += near_field_weight(s)
    off = scale * w
    stencil = -linalg.toeplitz(off)
    # row sums of |off-diagonal| for row i: offsets 1..i-1 on the left, 1..n-i on the right
    csum = np.concatenate(([0.0], np.cumsum(off[1:])))
    i = np.arange(1, n + 1)
    stencil[np.diag_indices(n)] = csum[i - 1] + csum[n - i]
    tail = scale * (exterior_weights(s, i) + exterior_weights(s, n + 1 - i))
    stencil.setflags(write=False)
    tail.setflags(write=False)
    return FracOp(s=float(s), grid=grid, normalization=c, stencil=stencil, tail=tail)


def _check_grid(op: FracOp, f: GridFn):
    if f.grid != op.grid:
        raise GridMismatchError(f"function lives on {f.grid}, operator on {op.grid}")


def apply(op: FracOp, f: GridFn) -> GridFn:
    _check_grid(op, f)
    return GridFn(op.grid, op.matvec(f.values))


def solve_dirichlet(op: FracOp, rhs: GridFn) -> GridFn:
    """Solve ``(-Δ)^s w = rhs`` in the interval with ``w = 0`` outside."""
    _check_grid(op, rhs)
    return GridFn(op.grid, op.solve_array(rhs.values))


def green_table(op: FracOp) -> np.ndarray:
    """Discrete Green's function ``G`` with ``w_i = Σ_j G[i, j] rhs_j h``."""
    n = op.grid.n
    return op.solve_array(np.eye(n)) / op.grid.h


def greens_column(op: FracOp, j: int) -> GridFn:
    """Column ``j`` of :func:`green_table`, counting nodes from 1 as ``x_1 .. x_n``."""
    n = op.grid.n
    if not 1 <= j <= n:
        raise IndexError(f"column {j} out of range 1..{n}")
    e = np.zeros(n)
    e[j - 1] = 1.0
    return GridFn(op.grid, op.solve_array(e) / op.grid.h)


def fractional_power_bump(s: float) -> float:
    """Constant value of ``(-Δ)^s (1 - x^2)_+^s`` on ``(-1, 1)``."""
    return float(4.0 ** s * special.gamma(1 + s) * special.gamma(0.5 + s) / np.sqrt(np.pi))
