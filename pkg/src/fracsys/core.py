"""Parameter records, interval grids, grid functions and log-log rate fitting.

Everything here is immutable.  A :class:`GridFn` stores values at the
interior nodes of a :class:`Grid`; its extension outside ``(a, b)`` is zero
by construction and never stored.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import stats

MIN_NODES = 3
MIN_FIT_NODES = 5

Side = Literal["left", "right", "pooled"]


class FracsysError(Exception):
    """Base class for errors raised by this package."""


class InsufficientDataError(FracsysError, ValueError):
    pass


class NonpositiveSampleError(FracsysError, ValueError):
    pass


class GridMismatchError(FracsysError, ValueError):
    pass


class NoConvergenceError(FracsysError, RuntimeError):
    pass


class RegimeRefusal(FracsysError, ValueError):
    """Raised when asked to solve a problem in a provably empty regime."""


@dataclass(frozen=True)
class Exponents:
    """The six exponents of the coupled system.

    ``(-Δ)^s u = u^-p v^-q``, ``(-Δ)^t v = u^-r v^-theta``.
    """

    p: float
    q: float
    r: float
    theta: float
    s: float
    t: float

    def __post_init__(self):
        for name in ("p", "q", "r", "theta", "s", "t"):
            val = getattr(self, name)
            if not np.isfinite(val):
                raise ValueError(f"exponent {name}={val!r} is not finite")
            object.__setattr__(self, name, float(val))
        if self.p < 0 or self.theta < 0:
            raise ValueError(f"need p, theta >= 0, got p={self.p}, theta={self.theta}")
        if self.q <= 0 or self.r <= 0:
            raise ValueError(f"need q, r > 0, got q={self.q}, r={self.r}")
        if not (0 < self.s < 1 and 0 < self.t < 1):
            raise ValueError(f"need s, t in (0, 1), got s={self.s}, t={self.t}")

    def as_dict(self) -> dict[str, float]:
        return {"p": self.p, "q": self.q, "r": self.r,
                "theta": self.theta, "s": self.s, "t": self.t}


@dataclass(frozen=True)
class Grid:
    """Uniform mesh of the interior of ``(a, b)`` with ``n`` nodes."""

    a: float
    b: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)) or self.a >= self.b:
            raise ValueError(f"need a < b, got a={self.a}, b={self.b}")
        if int(self.n) != self.n or self.n < MIN_NODES:
            raise ValueError(f"need integer n >= {MIN_NODES}, got n={self.n}")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.n + 1)

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def nodes(self) -> np.ndarray:
        i = np.arange(1, self.n + 1)
        x = self.a + i * self.h
        x.setflags(write=False)
        return x

    @property
    def dist(self) -> np.ndarray:
        # index arithmetic keeps d_i = i*h exact up to one rounding
        i = np.arange(1, self.n + 1)
        d = np.minimum(i, self.n + 1 - i) * self.h
        d.setflags(write=False)
        return d

    def fn(self, values) -> "GridFn":
        return GridFn(self, values)

    def sample(self, func) -> "GridFn":
        """Evaluate a vectorised callable at the interior nodes."""
        return GridFn(self, func(self.nodes))


def make_grid(a: float, b: float, n: int) -> Grid:
    return Grid(a, b, n)


@dataclass(frozen=True, eq=False)
class GridFn:
    """Function values at the interior nodes of ``grid``; zero outside."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.grid.n

    def _check(self, other: "GridFn"):
        if other.grid != self.grid:
            raise GridMismatchError(f"grids differ: {self.grid} vs {other.grid}")

    def __add__(self, other):
        if isinstance(other, GridFn):
            self._check(other)
            return GridFn(self.grid, self.values + other.values)
        return GridFn(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, GridFn):
            self._check(other)
            return GridFn(self.grid, self.values - other.values)
        return GridFn(self.grid, self.values - other)

    def __mul__(self, other):
        if isinstance(other, GridFn):
            self._check(other)
            return GridFn(self.grid, self.values * other.values)
        return GridFn(self.grid, self.values * other)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFn(self.grid, -self.values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("x,value\n")
        for x, v in zip(self.grid.nodes, self.values):
            buf.write(f"{x:.17g},{v:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, grid: Grid, text: str) -> "GridFn":
        rows = list(csv.DictReader(io.StringIO(text)))
        x = np.array([float(r["x"]) for r in rows])
        if len(x) != grid.n or not np.allclose(x, grid.nodes, rtol=0, atol=1e-12 * grid.length):
            raise GridMismatchError("CSV nodes do not match the grid")
        return cls(grid, [float(r["value"]) for r in rows])


def distance(grid: Grid) -> GridFn:
    """Distance of each interior node to the nearest endpoint."""
    return GridFn(grid, grid.dist)


def weighted_norm(f: GridFn, s: float) -> float:
    """Rectangle-rule quadrature of the weighted L1 norm ``∫|f|/(1+|x|^(1+2s))``."""
    x = f.grid.nodes
    return float(f.grid.h * np.sum(np.abs(f.values) / (1.0 + np.abs(x) ** (1 + 2 * s))))


@dataclass(frozen=True)
class RateFit:
    exponent: float
    intercept: float
    r_squared: float
    window: tuple[float, float]
    side: str
    npoints: int


WINDOW_NODES = 5
WINDOW_FRACTION = 0.025


def default_window(grid: Grid) -> tuple[float, float]:
    """``[5h, max(0.025 (b - a), 15h)]``.

    The upper end stays close to the boundary: subleading terms of relative
    size ``d^(s - sigma)`` bias the slope by 0.02-0.05 if the band reaches
    a tenth of the interval.  The ``15h`` floor keeps coarse grids fittable.
    """
    return (WINDOW_NODES * grid.h,
            max(WINDOW_FRACTION * grid.length, 3 * WINDOW_NODES * grid.h))


def fit_rate(f: GridFn, window: tuple[float, float] | None = None,
             side: Side = "pooled") -> RateFit:
    """Least-squares slope of ``log f`` against ``log d`` near the boundary.

    Parameters
    ----------
    f : GridFn
        Samples, positive inside the window.
    window : (d_min, d_max), optional
        Distance band used for the fit. Defaults to :func:`default_window`.
    side : {"left", "right", "pooled"}
        Which endpoint's boundary layer to use.

    Returns
    -------
    RateFit
        ``exponent`` is the fitted power of ``d``; ``intercept`` is the log of
        the fitted prefactor.
    """
    grid = f.grid
    if window is None:
        window = default_window(grid)
    d_min, d_max = window
    if not d_min < d_max:
        raise ValueError(f"empty window {window}")
    x, d = grid.nodes, grid.dist
    mid = 0.5 * (grid.a + grid.b)
    if side == "left":
        on_side = x <= mid
    elif side == "right":
        on_side = x >= mid
    elif side == "pooled":
        on_side = np.ones(grid.n, dtype=bool)
    else:
        raise ValueError(f"unknown side {side!r}")
    # relative slack so that exact multiples of h land inside the window
    eps = 1e-9 * grid.h
    mask = on_side & (d >= d_min - eps) & (d <= d_max + eps)
    if mask.sum() < MIN_FIT_NODES:
        raise InsufficientDataError(
            f"only {int(mask.sum())} nodes in window {window} on side {side!r}")
    vals = f.values[mask]
    if np.any(vals <= 0):
        raise NonpositiveSampleError("nonpositive samples inside the fit window")
    res = stats.linregress(np.log(d[mask]), np.log(vals))
    r2 = float(min(1.0, max(0.0, res.rvalue ** 2)))
    if not np.isfinite(r2):
        r2 = 1.0
    return RateFit(exponent=float(res.slope), intercept=float(res.intercept),
                   r_squared=r2, window=(float(d_min), float(d_max)),
                   side=side, npoints=int(mask.sum()))
