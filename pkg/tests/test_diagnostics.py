"""Threshold formulas, regime scans, fitted constants, inequality probes."""

import math

import numpy as np
import pytest

from smch2 import (
    FittedConstants,
    check_strong_noise_regime,
    commutator_probe,
    energy,
    energy_inequality_probe,
    escape_bound,
    field_from_function,
    fit_constants,
    make_grid,
    mollified_pairing_probe,
    random_smooth_field,
    regime_envelope,
    regime_ray,
    regime_scan,
    report_break_cubic,
    report_break_slope,
    report_global_weak,
    report_strong_noise,
    threshold_break_cubic,
    threshold_break_slope,
    threshold_global_weak,
    zero_field,
)
from smch2.errors import InvalidC, InvalidParams, RegimeViolation


def test_energy_single_mode():
    grid = make_grid(128, math.pi)
    v1 = field_from_function(grid, np.sin)
    assert energy(v1, zero_field(grid)) == pytest.approx(2.0 * math.pi, rel=1e-12)
    v2 = field_from_function(grid, np.cos)
    assert energy(v1, v2) == pytest.approx(4.0 * math.pi, rel=1e-12)


def test_threshold_break_slope_values():
    assert threshold_break_slope(1.0, 1.0, 0.5) == pytest.approx(
        -math.sqrt(2.0) - 1.0, rel=1e-14
    )
    assert threshold_break_slope(1.0, 1.0, 0.9) == pytest.approx(
        -1.6995144601096668, rel=1e-14
    )
    # zero noise bound reduces to -sqrt(E)
    assert threshold_break_slope(1.0, 0.0, 0.5) == pytest.approx(-1.0)
    assert threshold_break_slope(4.0, 0.0, 0.5) == pytest.approx(-2.0)


def test_threshold_break_cubic_value():
    assert threshold_break_cubic(1.0, 1.0, 0.5) == pytest.approx(
        -math.sqrt(2.875) - 1.0, rel=1e-14
    )
    assert threshold_break_cubic(1.0, 1.0, 0.5) == pytest.approx(-2.6955824957813173)


@pytest.mark.parametrize("bad_c", [0.0, 1.0, -0.3, 2.0])
def test_threshold_c_range(bad_c):
    with pytest.raises(InvalidC):
        threshold_break_slope(1.0, 1.0, bad_c)
    with pytest.raises(InvalidC):
        threshold_break_cubic(1.0, 1.0, bad_c)


def test_threshold_negative_inputs_rejected():
    with pytest.raises(InvalidParams):
        threshold_break_slope(-1.0, 1.0, 0.5)
    with pytest.raises(InvalidParams):
        threshold_break_slope(1.0, -1.0, 0.5)


def test_threshold_global_weak_value_and_validation():
    assert threshold_global_weak(1.0, 2.0, 1.0, 2.0, 2.0) == pytest.approx(1.0 / 128.0)
    with pytest.raises(InvalidParams):
        threshold_global_weak(1.0, 2.0, 1.0, 1.0, 2.0)  # lambda1 must exceed 1
    with pytest.raises(InvalidParams):
        threshold_global_weak(1.0, 2.0, 1.0, 2.0, 1.0)  # R must exceed 1
    with pytest.raises(InvalidParams):
        threshold_global_weak(1.0, 1.0, 1.0, 2.0, 2.0)  # C_fit must exceed 1
    with pytest.raises(InvalidParams):
        threshold_global_weak(1.0, 2.0, 0.0, 2.0, 2.0)
    with pytest.raises(InvalidParams):
        threshold_global_weak(0.0, 2.0, 1.0, 2.0, 2.0)


def test_escape_bound_values():
    assert escape_bound(1.0, 2.0) == pytest.approx(0.75)
    assert escape_bound(0.4, 2.0) == pytest.approx(0.42565082250148256, rel=1e-14)
    with pytest.raises(InvalidParams):
        escape_bound(0.0, 2.0)
    with pytest.raises(InvalidParams):
        escape_bound(1.0, 1.0)


def test_regime_envelope_hand_value():
    # s=2, p=9, frac=2/3, log term 1+ln 3:
    # 1*2 + 3*9 - 2*2*9*(4/9) + 1*3*9/(1+ln 3)
    val = regime_envelope(1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 3.0, 2.0, 1.0, 1.0, 1.0)
    assert val == pytest.approx(13.0 + 27.0 / (1.0 + math.log(3.0)), rel=1e-14)
    # broadcasting over arrays
    arr = regime_envelope(
        np.array([1.0, 1.0]), 1.0, 1.0, 1.0, 1.0, 2.0, 3.0, 2.0, 1.0, 1.0, 1.0
    )
    assert arr.shape == (2,)
    assert np.allclose(arr, val)


def test_regime_scan_in_regime_interior_supremum():
    sc = regime_scan(a=1.0, b_star=2.0, b_sup=3.0, eta=2.0, c=1.0, m1=1.0, m2=1.0)
    assert sc.sup_value == pytest.approx(24.602383683163062, rel=1e-12)
    assert not sc.at_boundary
    assert sc.ray_decreasing
    # argmax sits at order-one arguments, far from the sampling edge
    assert max(sc.argmax) < 10.0
    # deterministic given the seed
    sc2 = regime_scan(a=1.0, b_star=2.0, b_sup=3.0, eta=2.0, c=1.0, m1=1.0, m2=1.0)
    assert sc2.sup_value == sc.sup_value


def test_regime_scan_violation_raises():
    with pytest.raises(RegimeViolation):
        regime_scan(a=1.0, b_star=1.0, b_sup=3.0, eta=2.0, c=1.0, m1=1.0, m2=1.0)
    # eta = 1 needs 2 b_star > a + b_sup
    with pytest.raises(RegimeViolation):
        regime_scan(a=1.0, b_star=1.9, b_sup=3.0, eta=1.0, c=1.0, m1=1.0, m2=1.0)
    sc = regime_scan(a=1.0, b_star=2.5, b_sup=3.0, eta=1.0, c=1.0, m1=1.0, m2=1.0)
    assert math.isfinite(sc.sup_value)


def test_regime_ray_unbounded_outside_regime():
    ray = regime_ray(1.0, 1.0, 3.0, 2.0, 1.0, 1.0, 1.0)
    assert np.all(np.diff(ray) > 0.0)
    assert ray[0] == pytest.approx(200.41523208318716, rel=1e-12)
    assert ray[-1] > 1e11


def test_regime_parameter_validation():
    with pytest.raises(InvalidParams):
        regime_ray(0.0, 1.0, 3.0, 2.0, 1.0, 1.0, 1.0)
    with pytest.raises(InvalidParams):
        regime_ray(1.0, 3.0, 3.0, 2.0, 1.0, 1.0, 1.0)  # b_star < b_sup required
    with pytest.raises(InvalidParams):
        regime_ray(1.0, 1.0, 3.0, 0.5, 1.0, 1.0, 1.0)  # eta >= 1


def test_check_strong_noise_regime_cases():
    assert check_strong_noise_regime(1.0, 1.5, 1.0)
    assert not check_strong_noise_regime(1.0, 2.5, 1.0)
    assert check_strong_noise_regime(1.0, 1.5, 0.5, k_fit=0.4)
    assert not check_strong_noise_regime(1.0, 1.5, 0.5, k_fit=0.6)
    assert not check_strong_noise_regime(1.0, 1.5, 0.3)
    with pytest.raises(InvalidParams):
        check_strong_noise_regime(0.0, 1.0, 1.0)
    with pytest.raises(InvalidParams):
        check_strong_noise_regime(2.0, 1.0, 1.0)


def test_report_break_slope_flags():
    rep = report_break_slope(1.0, 1.0, 0.5, observed_slope=-3.0)
    assert rep.threshold == pytest.approx(-math.sqrt(2.0) - 1.0)
    assert rep.observed == -3.0
    assert rep.satisfied
    assert not report_break_slope(1.0, 1.0, 0.5, observed_slope=-2.0).satisfied
    d = rep.as_dict()
    assert d["satisfied"] is True
    assert "threshold" in d and "inputs" in d and "kind" in d


def test_report_break_cubic_flags():
    assert report_break_cubic(1.0, 1.0, 0.5, observed_cubic=-3.0).satisfied
    assert not report_break_cubic(1.0, 1.0, 0.5, observed_cubic=-2.0).satisfied


def test_report_global_weak_flags():
    fits = FittedConstants(c_fit=2.0, q_fit=1.0, k_fit=0.5, s=2.0, n_fields=12, seed=0)
    rep = report_global_weak(1.0, fits, 2.0, 2.0, observed_hs2=1e-3)
    assert rep.threshold == pytest.approx(1.0 / 128.0)
    assert rep.satisfied
    assert not report_global_weak(1.0, fits, 2.0, 2.0, observed_hs2=1e-2).satisfied


def test_report_strong_noise_flags():
    assert report_strong_noise(1.0, 1.5, 1.0, 0.0).satisfied
    assert not report_strong_noise(1.0, 2.5, 1.0, 0.0).satisfied


def test_fit_constants_deterministic_and_clamped():
    grid = make_grid(128, 10.0)
    fc = fit_constants(grid, seed=0)
    assert fc == fit_constants(grid, seed=0)
    assert fc.c_fit > 1.0
    assert fc.q_fit > 0.0
    assert fc.k_fit >= 0.0
    assert fc.s == 2.0 and fc.n_fields == 12 and fc.seed == 0
    other = fit_constants(grid, seed=1)
    assert other.q_fit != fc.q_fit


def test_probes_bounded_on_smooth_suite():
    grid = make_grid(128, 10.0)
    rng = np.random.default_rng(7)
    for _ in range(5):
        f = random_smooth_field(grid, rng)
        g = random_smooth_field(grid, rng)
        for eps in (0.5, 0.1, 0.02):
            assert 0.0 <= commutator_probe(g, f, eps) < 1.0
            assert 0.0 <= mollified_pairing_probe(f, g, eps) < 1.0
        assert abs(energy_inequality_probe(f, g)) < 1.0
    z = zero_field(grid)
    assert commutator_probe(z, z, 0.1) == 0.0
    assert energy_inequality_probe(z, z) == 0.0


def test_random_smooth_field_reproducible():
    grid = make_grid(64, 10.0)
    a = random_smooth_field(grid, np.random.default_rng(3))
    b = random_smooth_field(grid, np.random.default_rng(3))
    assert np.array_equal(a.values, b.values)
    assert np.all(np.isfinite(a.values))
