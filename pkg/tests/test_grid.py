"""Spectral grid, Fourier calculus, Helmholtz smoother, norms, mollifiers."""

import math

import numpy as np
import pytest

from smch2 import (
    Field,
    MollifierKind,
    dealias_field,
    derivative,
    evaluate_at,
    field_from_function,
    helmholtz_inverse,
    hs_inner,
    l2_inner,
    make_grid,
    mollify,
    scale,
    sobolev_norm,
    w1inf_norm,
    zero_field,
)
from smch2.errors import (
    GridMismatch,
    InvalidEpsilon,
    InvalidGrid,
    NonFiniteField,
)


def test_make_grid_layout():
    g = make_grid(64, 10.0)
    assert g.n == 64
    assert g.L == 10.0
    assert g.dx == pytest.approx(20.0 / 64)
    assert g.x[0] == -10.0
    assert g.x[-1] == pytest.approx(10.0 - g.dx)
    # wavenumbers are pi*j/L for integer j
    assert g.k[1] == pytest.approx(math.pi / 10.0)
    assert g.k[-1] == pytest.approx(-math.pi / 10.0)


@pytest.mark.parametrize("n", [0, 7, 12, 100, -64])
def test_make_grid_rejects_bad_sizes(n):
    with pytest.raises(InvalidGrid):
        make_grid(n, 10.0)


@pytest.mark.parametrize("L", [0.0, -1.0])
def test_make_grid_rejects_bad_length(L):
    with pytest.raises(InvalidGrid):
        make_grid(64, L)


def test_derivative_of_trig_mode_is_exact():
    g = make_grid(128, math.pi)
    f = field_from_function(g, lambda x: np.sin(3.0 * x))
    df = derivative(f)
    expected = 3.0 * np.cos(3.0 * g.x)
    assert np.max(np.abs(df.values - expected)) < 1e-12


def test_second_derivative_composes():
    g = make_grid(128, math.pi)
    f = field_from_function(g, lambda x: np.cos(2.0 * x))
    d2 = derivative(derivative(f))
    assert np.max(np.abs(d2.values + 4.0 * f.values)) < 1e-11


def test_helmholtz_inverse_is_fourier_multiplier():
    # (1 - dxx)^{-1} cos(kx) = cos(kx) / (1 + k^2)
    g = make_grid(64, math.pi)
    f = field_from_function(g, lambda x: np.cos(4.0 * x))
    out = helmholtz_inverse(f)
    assert np.max(np.abs(out.values - f.values / 17.0)) < 1e-14


def test_helmholtz_inverse_round_trip():
    g = make_grid(256, 20.0)
    rng = np.random.default_rng(7)
    f = field_from_function(g, lambda x: np.exp(-((x - 1.0) / 2.0) ** 2))
    forward = Field(g, f.values - derivative(derivative(f)).values)
    back = helmholtz_inverse(forward)
    assert np.max(np.abs(back.values - f.values)) < 1e-12


def test_helmholtz_inverse_with_dx_matches_composition():
    g = make_grid(256, 20.0)
    f = field_from_function(g, lambda x: np.exp(-(x / 1.5) ** 2) * np.sin(x))
    a = helmholtz_inverse(f, with_dx=True)
    b = derivative(helmholtz_inverse(f))
    assert np.max(np.abs(a.values - b.values)) < 1e-13


def test_helmholtz_inverse_matches_kernel_quadrature():
    # Independent oracle: Gauss-Legendre quadrature of the periodized kernel
    # (1/2) sum_m exp(-|x - y - 2 L m|) applied to a decaying profile.
    g = make_grid(256, 20.0)
    nodes, wts = np.polynomial.legendre.leggauss(160)

    def f(y):
        y = np.asarray(y)
        return np.exp(-((y - 1.0) / 1.5) ** 2) - 0.5 * np.exp(-((y + 2.0) / 1.0) ** 2)

    spectral = helmholtz_inverse(field_from_function(g, f)).values
    quad = np.empty(g.n)
    for i, xi in enumerate(g.x):
        acc = 0.0
        for a, b in ((-g.L, xi), (xi, g.L)):
            y = 0.5 * (b - a) * nodes + 0.5 * (a + b)
            ker = sum(0.5 * np.exp(-np.abs(xi - y - 2.0 * g.L * m)) for m in (-1, 0, 1))
            acc += 0.5 * (b - a) * float(np.sum(wts * ker * f(y)))
        quad[i] = acc
    assert np.max(np.abs(spectral - quad)) / np.max(np.abs(quad)) < 1e-10


def test_sobolev_norm_of_single_mode():
    # ||cos(3x)||_{H^s}^2 = (1 + 9)^s * pi on [-pi, pi)
    g = make_grid(128, math.pi)
    f = field_from_function(g, lambda x: np.cos(3.0 * x))
    assert sobolev_norm(f, 0.0) == pytest.approx(math.sqrt(math.pi), rel=1e-12)
    assert sobolev_norm(f, 2.0) == pytest.approx(10.0 * math.sqrt(math.pi), rel=1e-12)


def test_hs_inner_orthogonality_and_weighting():
    g = make_grid(128, math.pi)
    f = field_from_function(g, lambda x: np.sin(2.0 * x))
    h = field_from_function(g, lambda x: np.cos(5.0 * x))
    assert abs(hs_inner(f, h, 1.0)) < 1e-12
    # <f, f>_{H^1} = (1 + 4) ||f||_{L^2}^2
    assert hs_inner(f, f, 1.0) == pytest.approx(5.0 * l2_inner(f, f), rel=1e-12)


def test_l2_inner_matches_direct_sum():
    g = make_grid(64, 5.0)
    rng = np.random.default_rng(3)
    f = Field(g, rng.standard_normal(g.n))
    h = Field(g, rng.standard_normal(g.n))
    direct = float(np.sum(f.values * h.values) * g.dx)
    assert l2_inner(f, h) == pytest.approx(direct, rel=1e-12)


def test_w1inf_norm_of_single_mode():
    # max(|A|, |A k|) for A cos(kx)
    g = make_grid(128, math.pi)
    f = field_from_function(g, lambda x: 0.5 * np.cos(4.0 * x))
    assert w1inf_norm(f) == pytest.approx(2.0, rel=1e-10)


def test_dealias_field_kills_top_third_only():
    g = make_grid(128, math.pi)
    keep = field_from_function(g, lambda x: np.cos(8.0 * x))
    kill = field_from_function(g, lambda x: np.cos(50.0 * x))
    both = Field(g, keep.values + kill.values)
    out = dealias_field(both)
    assert np.max(np.abs(out.values - keep.values)) < 1e-12


def test_mollify_tepsilon_multiplier_and_validation():
    g = make_grid(64, math.pi)
    f = field_from_function(g, lambda x: np.cos(3.0 * x))
    out = mollify(f, 0.2)
    assert np.max(np.abs(out.values - f.values / (1.0 + 0.04 * 9.0))) < 1e-13
    with pytest.raises(InvalidEpsilon):
        mollify(f, 1.0)
    with pytest.raises(InvalidEpsilon):
        mollify(f, 0.0)


def test_mollify_friedrichs_multiplier_and_validation():
    g = make_grid(64, math.pi)
    f = field_from_function(g, lambda x: np.sin(2.0 * x))
    out = mollify(f, 0.5, MollifierKind.FRIEDRICHS)
    assert np.max(np.abs(out.values - f.values * math.exp(-0.5 * 0.25 * 4.0))) < 1e-13
    with pytest.raises(InvalidEpsilon):
        mollify(f, -0.1, MollifierKind.FRIEDRICHS)


def test_mollify_never_increases_sobolev_norms():
    g = make_grid(128, 10.0)
    rng = np.random.default_rng(11)
    f = Field(g, rng.standard_normal(g.n))
    for kind, eps in ((MollifierKind.TEPSILON, 0.3), (MollifierKind.FRIEDRICHS, 0.7)):
        for s in (0.0, 1.0, 2.0):
            assert sobolev_norm(mollify(f, eps, kind), s) <= sobolev_norm(f, s) + 1e-12


def test_evaluate_at_reproduces_grid_and_interpolates():
    g = make_grid(64, math.pi)
    f = field_from_function(g, lambda x: np.sin(5.0 * x) + 0.3 * np.cos(2.0 * x))
    on_grid = evaluate_at(f, g.x)
    assert np.max(np.abs(on_grid - f.values)) < 1e-12
    pts = np.array([-1.234, 0.0, 0.777, 2.5])
    exact = np.sin(5.0 * pts) + 0.3 * np.cos(2.0 * pts)
    assert np.max(np.abs(evaluate_at(f, pts) - exact)) < 1e-12
    exact_d = 5.0 * np.cos(5.0 * pts) - 0.6 * np.sin(2.0 * pts)
    assert np.max(np.abs(evaluate_at(f, pts, nderiv=1) - exact_d)) < 1e-11


def test_scale_and_zero_field():
    g = make_grid(32, 5.0)
    f = field_from_function(g, lambda x: np.cos(x * math.pi / 5.0))
    assert np.array_equal(scale(f, -2.0).values, -2.0 * f.values)
    assert not np.any(zero_field(g).values)


def test_grid_mismatch_is_rejected():
    f = field_from_function(make_grid(32, 5.0), lambda x: x * 0.0 + 1.0)
    h = field_from_function(make_grid(64, 5.0), lambda x: x * 0.0 + 1.0)
    with pytest.raises(GridMismatch):
        l2_inner(f, h)


def test_non_finite_fields_are_rejected():
    g = make_grid(32, 5.0)
    bad = Field(g, np.full(g.n, np.nan))
    with pytest.raises(NonFiniteField):
        derivative(bad)
    with pytest.raises(NonFiniteField):
        helmholtz_inverse(bad)
