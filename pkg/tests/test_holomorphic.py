"""Branch factors, zero certification, and flat decay measurements."""

import numpy as np
import pytest

from qhalf.holomorphic import (
    ZeroMatchError,
    branch_factor,
    branch_product,
    branch_product_prime,
    cauchy_riemann_residual,
    decay_constant,
    derivative_decay_check,
    fd_weights,
    find_zeros_numeric,
    flat_profile,
    log_derivative,
    predicted_zero_set,
    predicted_zeros_in_annulus,
    product_log_abs,
    product_phase,
)

# reference values computed with 40-digit arithmetic
F_AT_ONE = [
    0.84660055414926127477j,
    0.20154402981776545279j,
    -0.20154402981776545279j,
    -0.84660055414926127477j,
]
F1_AT_P = -0.17211843223593608353 + 0.24038799608623566437j
G_AT_P = 0.019133197544892224165 + 0.0026486411817210529721j
G_AT_Q = 1.0812780417187566868 - 0.16876933481255753907j
H_AT_001 = 0.16533663615751249312 - 0.048926515675144086687j
G_ALPHA07 = 0.076612317504163191773 - 0.085142018058007295138j


def test_factor_values():
    for k in range(4):
        np.testing.assert_allclose(branch_factor(1.0, k), F_AT_ONE[k],
                                   rtol=1e-13)
    np.testing.assert_allclose(branch_factor(0.7 + 0.2j, 1), F1_AT_P,
                               rtol=1e-13)


def test_product_values():
    np.testing.assert_allclose(branch_product(0.7 + 0.2j), G_AT_P,
                               rtol=1e-13)
    np.testing.assert_allclose(branch_product(0.05 + 1.3j), G_AT_Q,
                               rtol=1e-13)
    np.testing.assert_allclose(branch_product(0.4 - 0.6j, alpha=0.7),
                               G_ALPHA07, rtol=1e-13)


def test_flat_extension_at_origin():
    assert branch_product(0.0) == 0.0
    for k in range(4):
        assert branch_factor(0.0, k) == 0.0


def test_conjugation_symmetry():
    # conjugating z swaps factor k with factor 3-k and fixes the product
    pts = np.array([0.7 + 0.2j, 0.05 + 1.3j, 1.4 - 0.9j])
    for k in range(4):
        np.testing.assert_allclose(branch_factor(np.conj(pts), k),
                                   np.conj(branch_factor(pts, 3 - k)),
                                   rtol=1e-13)
    np.testing.assert_allclose(branch_product(np.conj(pts)),
                               np.conj(branch_product(pts)), rtol=1e-13)


def test_slit_plane_domain():
    with pytest.raises(ValueError):
        branch_product(-1.0)
    with pytest.raises(ValueError):
        branch_factor(np.array([0.3 + 0.1j, -0.2 + 0.0j]), 0)
    # just off the slit is fine
    branch_product(-1.0 + 0.5j)


def test_predicted_zero_closed_forms():
    np.testing.assert_allclose(predicted_zero_set(0, [0]), [-1j], atol=1e-15)
    np.testing.assert_allclose(predicted_zero_set(3, [0]), [1j], atol=1e-15)
    np.testing.assert_allclose(predicted_zero_set(2, [1]),
                               [np.exp(np.pi) * np.exp(1j * np.pi / 6)],
                               rtol=1e-14)
    ring0 = predicted_zeros_in_annulus(0.5, 2.0)
    assert ring0.size == 4
    np.testing.assert_allclose(np.abs(ring0), 1.0, rtol=1e-14)


def test_product_vanishes_on_zero_rings():
    for n in (-1, 0, 1):
        for k in range(4):
            z = predicted_zero_set(k, [n])[0]
            assert abs(branch_product(z)) < 1e-12
            assert abs(branch_factor(z, k)) < 1e-12


def test_prime_matches_finite_difference():
    h = 1e-5
    for z in (0.7 + 0.2j, 1.3 - 0.4j, 0.05 + 1.3j):
        fd = (branch_product(z + h) - branch_product(z - h)) / (2 * h)
        np.testing.assert_allclose(branch_product_prime(z), fd, rtol=1e-5)


def test_log_derivative_consistency():
    for z in (0.7 + 0.2j, 0.05 + 1.3j, 1.4 - 0.9j):
        ratio = branch_product_prime(z) / branch_product(z)
        np.testing.assert_allclose(log_derivative(z), ratio, rtol=1e-10)


def test_phase_and_log_abs_below_underflow():
    # at this point exp(-4 Re z^{-1/2}) is around exp(-25000)
    z = 1e-8 * np.exp(1j * np.pi / 5)
    assert branch_product(z) == 0.0
    assert product_log_abs(z) < -2e4
    assert np.isfinite(product_phase(z))


def test_cauchy_riemann_residual_quadratic():
    pts = [0.8 + 0.35j, 0.85 + 0.3j, 0.75 + 0.42j]
    r1 = cauchy_riemann_residual(pts, 1e-3)
    r2 = cauchy_riemann_residual(pts, 5e-4)
    assert r1 < 1e-5
    assert 2.8 < r1 / r2 < 5.5


def test_find_zeros_unit_ring():
    zeros = find_zeros_numeric(0.5, 2.0)
    expected = np.array([np.exp(-1j * np.pi / 2), np.exp(-1j * np.pi / 6),
                         np.exp(1j * np.pi / 6), np.exp(1j * np.pi / 2)])
    np.testing.assert_allclose(zeros, expected, atol=1e-12)


def test_find_zeros_three_rings():
    zeros = find_zeros_numeric(0.02, 30.0)
    assert zeros.size == 12
    moduli = np.sort(np.abs(zeros))
    expected = np.repeat([np.exp(-np.pi), 1.0, np.exp(np.pi)], 4)
    np.testing.assert_allclose(moduli, expected, rtol=1e-12)


def test_find_zeros_empty_annulus():
    assert find_zeros_numeric(2.0, 10.0).size == 0


def test_zero_on_cell_boundary_is_rejected():
    # inner radius exactly on the unit ring puts four zeros on the
    # cell boundary, which the winding count must refuse to certify
    with pytest.raises(ZeroMatchError):
        find_zeros_numeric(1.0, 2.0)


def test_flat_profile_value_and_axis_zeros():
    np.testing.assert_allclose(flat_profile(0.01), H_AT_001, rtol=1e-13)
    s0 = np.exp(-3 * np.pi)
    assert abs(flat_profile(s0)) < 1e-15
    assert abs(flat_profile(1.1 * s0)) > 1e-8
    with pytest.raises(ValueError):
        flat_profile(-0.1)


def test_envelope_on_right_half_plane():
    c = decay_constant(0.5)
    slack = np.log(72.0)
    for theta in (-1.5, -0.9, -0.3, 0.2, 0.8, 1.4):
        r = np.geomspace(5e-3, 1.5, 120)
        la = product_log_abs(r * np.exp(1j * theta))
        assert np.all(la <= slack - 4 * c * r ** -0.5 + 1e-9)


def test_fd_weights_exact_on_polynomials():
    x = np.array([0.3, 0.45, 0.7, 0.8, 1.1])
    p = np.array([1.0, -2.0, 0.0, 1.0, -3.0])  # x^4 - 2x^3 + x - 3
    for m, want in ((0, np.polyval(p, 0.6)),
                    (2, 12 * 0.6 ** 2 - 12 * 0.6),
                    (4, 24.0)):
        w = fd_weights(x, 0.6, m)
        np.testing.assert_allclose(w @ np.polyval(p, x), want,
                                   rtol=1e-12, atol=1e-12)


def test_decay_reports_default_windows():
    for order in range(5):
        rep = derivative_decay_check(order)
        assert rep.tail_monotone
        assert rep.underflow_zeros == 0
        assert rep.exponent_ok
        assert rep.expected_exponent == pytest.approx(1.0 / 6.0)
        if order == 0:
            assert rep.envelope_ok
            # the whole direct window is already decaying
            assert rep.crossover == pytest.approx(1e-2)
        else:
            assert rep.envelope_ok is None


def test_decay_other_alphas():
    for alpha in (0.4, 0.7):
        rep = derivative_decay_check(4, alpha=alpha)
        assert rep.expected_exponent == pytest.approx(alpha / 3.0)
        assert rep.exponent_ok
        assert rep.tail_monotone


def test_decay_deep_grid_underflows_to_zero():
    rep = derivative_decay_check(0, s_grid=np.geomspace(1e-2, 1e-20, 40))
    assert rep.underflow_zeros >= 1
    assert np.all(rep.magnitude >= 0.0)


def test_decay_validation():
    with pytest.raises(ValueError):
        derivative_decay_check(5)
    with pytest.raises(ValueError):
        derivative_decay_check(1, alpha=1.0)
    with pytest.raises(ValueError):
        derivative_decay_check(1, s_grid=np.geomspace(1e-4, 1e-2, 20))
