import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from fracsys.core import Grid, GridFn, GridMismatchError
from fracsys.fraclap import (apply, assemble, exterior_weights, fractional_power_bump,
                             green_table, greens_column, hat_weights, near_field_weight,
                             normalization_constant, normalization_constant_closed,
                             solve_dirichlet)
from fracsys.spectral import torsion

from conftest import operator


def quad_hat_weight(s, k):
    """Independent route: integrate hat(z - k) |z|^(-1-2s) piecewise with quad."""
    f = lambda z: (1 - abs(z - k)) * z ** (-1 - 2 * s)
    lo = max(1.0, k - 1.0)
    parts = [(lo, k), (k, k + 1)] if lo < k else [(k, k + 1)]
    return sum(integrate.quad(f, a, b, epsabs=0, epsrel=1e-13)[0] for a, b in parts)


@pytest.mark.parametrize("s", [0.1, 0.3, 0.5, 0.7, 0.9])
def test_normalization_two_routes(s):
    assert normalization_constant(s) == pytest.approx(normalization_constant_closed(s),
                                                      rel=0, abs=1e-8)


def test_normalization_half_is_one_over_pi():
    assert abs(normalization_constant(0.5) - 1 / np.pi) < 1e-8


@pytest.mark.parametrize("s", [0.0, 1.0, 1.2, -0.3])
def test_normalization_domain(s):
    with pytest.raises(ValueError):
        normalization_constant(s)


@pytest.mark.parametrize("s", [0.05, 0.3, 0.5, 0.7, 0.95])
def test_hat_weights_against_quadrature(s):
    w = hat_weights(s, 40)
    assert w[0] == 0.0
    for k in (1, 2, 3, 7, 40):
        assert w[k] == pytest.approx(quad_hat_weight(s, k), rel=1e-11)


@pytest.mark.parametrize("s", [0.2, 0.5, 0.8])
def test_exterior_weights_partition_of_unity(s):
    # hats on k >= 1 partition unity on z >= 1, whose kernel mass is 1/(2s)
    w = hat_weights(s, 60)
    i = np.arange(1, 61)
    ext = exterior_weights(s, i)
    oracle = 1 / (2 * s) - np.concatenate(([0.0], np.cumsum(w[1:60])))
    oracle[0] += near_field_weight(s)
    np.testing.assert_allclose(ext, oracle, rtol=1e-10)


@settings(max_examples=30, deadline=None)
@given(s=st.floats(0.02, 0.98), n=st.integers(3, 120))
def test_m_matrix_structure(s, n):
    op = assemble(Grid(-1, 1, n), s)
    A = op.matrix
    off = A - np.diag(np.diag(A))
    assert np.all(off <= 0)
    assert np.array_equal(A, A.T)
    assert np.all(op.tail > 0)
    # full diagonal is a single constant C h^-2s (1/s + 1/(1-s))
    const = op.normalization * op.grid.h ** (-2 * s) * (1 / s + 1 / (1 - s))
    np.testing.assert_allclose(np.diag(A), const, rtol=1e-12)
    assert np.all(op.matvec(np.ones(n)) > 0)


def test_stencil_rows_sum_to_zero():
    op = operator(0.4, 200)
    np.testing.assert_allclose(op.stencil.sum(axis=1), 0, atol=1e-10 * op.stencil[0, 0])


@pytest.mark.parametrize("s", [0.3, 0.5, 0.7])
def test_bump_profile_constant(s):
    # Richardson on the centre value, then compare with the closed-form constant
    vals = []
    for n in (511, 1023, 2047):
        g = Grid(-1, 1, n)
        u = g.sample(lambda x: (1 - x ** 2) ** s)
        vals.append(apply(operator(s, n), u).values[n // 2])
    d1, d2 = vals[1] - vals[0], vals[2] - vals[1]
    rate = d1 / d2
    extrap = vals[2] + d2 / (rate - 1)
    exact = fractional_power_bump(s)
    assert abs(extrap - exact) / exact < 0.01
    assert abs(vals[2] - exact) / exact < 0.01
    # and it is flat away from the endpoints
    g = Grid(-1, 1, 2047)
    au = apply(operator(s, 2047), g.sample(lambda x: (1 - x ** 2) ** s)).values
    inner = au[np.abs(g.nodes) < 0.8]
    assert inner.max() / inner.min() - 1 < 0.01


def test_bump_half_is_one():
    assert fractional_power_bump(0.5) == pytest.approx(1.0, rel=1e-14)


def test_apply_zero_linear_and_mismatch():
    op = operator(0.5, 128)
    g = op.grid
    rng = np.random.default_rng(3)
    f, h = GridFn(g, rng.normal(size=g.n)), GridFn(g, rng.normal(size=g.n))
    assert np.all(apply(op, GridFn(g, np.zeros(g.n))).values == 0)
    lhs = apply(op, f + h).values
    rhs = apply(op, f).values + apply(op, h).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(lhs))
    with pytest.raises(GridMismatchError):
        apply(op, GridFn(Grid(-1, 1, 127), np.zeros(127)))


@pytest.mark.parametrize("n", [128, 512])
def test_apply_torsion_gives_one(n):
    op = operator(0.5, n)
    w = torsion(op).phi_torsion
    np.testing.assert_allclose(apply(op, w).values, 1.0, atol=1e-10)


def test_solve_dirichlet_basic():
    op = operator(0.3, 101)
    g = op.grid
    assert np.all(solve_dirichlet(op, GridFn(g, np.zeros(g.n))).values == 0)
    w = solve_dirichlet(op, GridFn(g, np.ones(g.n))).values
    assert np.all(w > 0)
    np.testing.assert_allclose(w, w[::-1], rtol=1e-12)


@pytest.mark.parametrize("s", [0.3, 0.5, 0.7])
def test_green_table_nonnegative_symmetric(s):
    op = operator(s, 64)
    G = green_table(op)
    assert np.all(G >= 0)
    assert np.max(np.abs(G - G.T)) <= 1e-10 * np.max(G)
    # full inverse against column-by-column solves
    for j in (1, 17, 64):
        np.testing.assert_allclose(greens_column(op, j).values, G[:, j - 1], rtol=1e-12)


def test_green_superposition():
    op = operator(0.6, 80)
    G = green_table(op)
    rhs = np.random.default_rng(5).uniform(-1, 1, 80)
    w = solve_dirichlet(op, GridFn(op.grid, rhs)).values
    np.testing.assert_allclose(w, G @ rhs * op.grid.h, rtol=1e-10, atol=1e-13)


def test_greens_column_range():
    op = operator(0.5, 16)
    with pytest.raises(IndexError):
        greens_column(op, 17)
    with pytest.raises(IndexError):
        greens_column(op, 0)
    # discrete strong maximum principle: a point source is felt everywhere
    assert np.all(greens_column(op, 1).values > 0)


def test_dump_format():
    op = operator(0.5, 4)
    header, body = op.dump()
    meta = json.loads(header)
    assert meta["n"] == 4 and meta["s"] == 0.5
    lines = body.strip().splitlines()
    assert lines[0] == "i,j,A_ij" and len(lines) == 17
    i, j, v = lines[2].split(",")
    assert (int(i), int(j)) == (0, 1) and float(v) == op.stencil[0, 1]


def test_solve_residual_and_comparison():
    op = operator(0.45, 300)
    rng = np.random.default_rng(9)
    f = rng.uniform(0, 1, 300)
    w = op.solve_array(f)
    assert np.max(np.abs(op.matvec(w) - f)) <= 1e-12 * np.max(np.abs(f))
    # A f <= A g entrywise forces f <= g
    g_rhs = f + rng.uniform(0, 0.1, 300)
    assert np.all(op.solve_array(g_rhs) >= w)


@pytest.mark.parametrize("s", [0.3, 0.7])
def test_smooth_profile_consistency_order(s):
    # (1 - x^2)^(s+1) has no closed-form image, so compare successive refinements
    # at fixed physical points and read off the observed order
    xs = np.array([-0.5, 0.0, 0.25])
    vals = []
    for n in (255, 511, 1023, 2047):
        g = Grid(-1, 1, n)
        au = apply(operator(s, n), g.sample(lambda x: (1 - x ** 2) ** (s + 1))).values
        vals.append(np.interp(xs, g.nodes, au))
    diffs = [np.max(np.abs(vals[k + 1] - vals[k])) for k in range(3)]
    orders = [np.log2(diffs[k] / diffs[k + 1]) for k in range(2)]
    assert min(orders) >= 0.5
