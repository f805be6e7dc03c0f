"""Numerics for the coupled fractional singular system

    (-Δ)^s u = u^-p v^-q,   (-Δ)^t v = u^-r v^-theta   in (a, b),

with zero exterior data: a discrete fractional Laplacian, scalar singular
solves with boundary-rate fits, a classifier of the exponent space and a
bracketed fixed-point solver for the system.
"""

from .core import (Exponents, Grid, GridFn, RateFit, FracsysError, InsufficientDataError,
                   NonpositiveSampleError, GridMismatchError, NoConvergenceError, RegimeRefusal,
                   make_grid, distance, weighted_norm, fit_rate, default_window)
from .fraclap import (FracOp, assemble, apply, solve_dirichlet, green_table, greens_column,
                      normalization_constant, normalization_constant_closed)
from .spectral import EigenPair, principal_eigenpair, torsion, verify_eigen_bounds
from .singular import (SingularProblem, predict_rate, solve_singular, check_log_correction,
                       comparison_check)
from .regimes import (RegimeVerdict, classify, classify_existence, classify_nonexistence,
                      classify_uniqueness, swap, HypothesisNotMet, InvalidCase)
from .system import (BracketSet, SystemReport, build_bracket, calibrate_constants, apply_T,
                     solve_system, lower_bound_check, uniqueness_probe, prepare)

__version__ = "0.1.0"
