import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from qedbohm.basis import (
    OscillatorBasis,
    PointerBasis,
    WellBasis,
    ladder_hamiltonian_check,
    ladder_matrices,
    make_bases,
    oscillator_derivative,
    oscillator_q_element,
    oscillator_second_derivative,
    oscillator_value,
    packet_spatial_width,
    pointer_derivative,
    pointer_packet,
    pointer_value,
    well_derivative,
    well_dipole,
    well_second_derivative,
    well_value,
)
from qedbohm.config import UNITS

L = 16.0
MASS = 0.042 * UNITS.m0
WELL = WellBasis(L, MASS, 2)
OSC = OscillatorBasis(0.15940021915057007, 2)
PTR = PointerBasis(1000.0, 10, MASS)


def test_well_energies_reproduce_reported_values():
    # frozen from (n+1)^2 pi^2 hbar^2 / (2 m L^2) with CODATA constants
    assert WELL.energy(0) == pytest.approx(0.034973043392461864, rel=1e-12)
    gap = WELL.energy(1) - WELL.energy(0)
    assert gap == pytest.approx(0.10491913017738559, rel=1e-12)
    # the rounded values quoted for this geometry
    assert WELL.energy(0) == pytest.approx(0.035, rel=5e-3)
    assert gap == pytest.approx(0.105, rel=5e-3)
    assert WELL.energies()[1] > WELL.energies()[0]


def test_well_value_examples():
    assert well_value(WELL, 0, L / 2) == pytest.approx(math.sqrt(2.0 / L), rel=1e-14)
    assert well_value(WELL, 1, L / 2) == pytest.approx(0.0, abs=1e-14)
    assert well_value(WELL, 0, -0.5) == 0.0
    assert well_value(WELL, 0, L + 0.5) == 0.0
    with pytest.raises(IndexError):
        well_value(WELL, 2, 1.0)


def test_well_orthonormality_quadrature():
    for n in range(2):
        for n2 in range(2):
            val, err = quad(lambda x: well_value(WELL, n, x) * well_value(WELL, n2, x), 0, L)
            assert val == pytest.approx(1.0 if n == n2 else 0.0, abs=1e-10)


def test_well_dipole_values():
    # diagonal vanishes exactly in the centered convention
    assert well_dipole(WELL, 0, 0) == 0.0
    assert well_dipole(WELL, 1, 1) == 0.0
    # frozen from the quadrature oracle of (2/L) int x sin(pi x/L) sin(2 pi x/L) dx
    assert well_dipole(WELL, 0, 1) == pytest.approx(-2.88202477915983, rel=1e-12)
    assert abs(well_dipole(WELL, 0, 1)) == pytest.approx(16 * L / (9 * math.pi**2), rel=1e-14)
    assert well_dipole(WELL, 0, 1) == well_dipole(WELL, 1, 0)


def test_well_dipole_quadrature_oracle():
    val, _ = quad(
        lambda x: well_value(WELL, 0, x) * (x - L / 2) * well_value(WELL, 1, x), 0, L
    )
    assert val == pytest.approx(well_dipole(WELL, 0, 1), abs=1e-10)


def test_well_derivatives_match_finite_differences():
    rng = np.random.default_rng(5)
    h = 1e-4
    for n in range(2):
        for x in rng.uniform(0.5, L - 0.5, size=5):
            fd1 = (well_value(WELL, n, x + h) - well_value(WELL, n, x - h)) / (2 * h)
            assert well_derivative(WELL, n, x) == pytest.approx(fd1, rel=1e-7, abs=1e-9)
            fd2 = (
                well_value(WELL, n, x + h) - 2 * well_value(WELL, n, x) + well_value(WELL, n, x - h)
            ) / h**2
            assert well_second_derivative(WELL, n, x) == pytest.approx(fd2, rel=1e-5)


def test_oscillator_energies_and_values():
    hw = UNITS.hbar * OSC.omega
    assert OSC.energy(0) == pytest.approx(0.5 * hw, rel=1e-14)
    assert OSC.energy(1) == pytest.approx(1.5 * hw, rel=1e-14)
    assert oscillator_value(OSC, 0, 0.0) == pytest.approx(math.pi**-0.25, rel=1e-14)
    assert oscillator_value(OSC, 1, 0.0) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(IndexError):
        oscillator_value(OSC, 5, 0.0)


def test_oscillator_q_elements():
    assert oscillator_q_element(OSC, 0, 1) == pytest.approx(1 / math.sqrt(2), rel=1e-15)
    assert oscillator_q_element(OSC, 0, 0) == 0.0
    big = OscillatorBasis(OSC.omega, 4)
    # frozen from the Hermite-function quadrature oracle
    assert oscillator_q_element(big, 1, 2) == pytest.approx(1.0, rel=1e-14)
    val, _ = quad(
        lambda q: oscillator_value(big, 1, q) * q * oscillator_value(big, 2, q), -12, 12
    )
    assert val == pytest.approx(1.0, abs=1e-10)


def test_oscillator_orthonormality_quadrature():
    big = OscillatorBasis(OSC.omega, 4)
    for k in range(4):
        for k2 in range(k, 4):
            val, _ = quad(
                lambda q: oscillator_value(big, k, q) * oscillator_value(big, k2, q), -14, 14
            )
            assert val == pytest.approx(1.0 if k == k2 else 0.0, abs=1e-10)


def test_oscillator_derivative_ladder_identity_vs_fd():
    big = OscillatorBasis(OSC.omega, 4)
    rng = np.random.default_rng(11)
    h = 1e-5
    for m in range(4):
        for q in rng.uniform(-2.5, 2.5, size=5):
            fd = (oscillator_value(big, m, q + h) - oscillator_value(big, m, q - h)) / (2 * h)
            assert oscillator_derivative(big, m, q) == pytest.approx(fd, abs=1e-8)
            fd2 = (
                oscillator_value(big, m, q + h)
                - 2 * oscillator_value(big, m, q)
                + oscillator_value(big, m, q - h)
            ) / h**2
            assert oscillator_second_derivative(big, m, q) == pytest.approx(fd2, abs=1e-4)


def test_pointer_basis_energies_and_values():
    l = 3
    k = math.pi * l / PTR.box_length
    assert PTR.momentum(l) == pytest.approx(UNITS.hbar * k, rel=1e-15)
    assert PTR.energy(l) == pytest.approx((UNITS.hbar * k) ** 2 / (2 * MASS), rel=1e-15)
    y = 123.4
    val = pointer_value(PTR, l, y)
    assert abs(val) == pytest.approx(1 / math.sqrt(2 * PTR.box_length), rel=1e-14)
    assert pointer_derivative(PTR, l, y) == pytest.approx(1j * k * val, rel=1e-13)
    with pytest.raises(IndexError):
        pointer_value(PTR, 11, 0.0)


def test_pointer_orthonormality_on_period():
    for l in (-2, 0, 1):
        for l2 in (-2, 0, 1, 2):
            re, _ = quad(
                lambda y: (pointer_value(PTR, l, y).conjugate() * pointer_value(PTR, l2, y)).real,
                -PTR.box_length, PTR.box_length, limit=300,
            )
            assert re == pytest.approx(1.0 if l == l2 else 0.0, abs=1e-10)


def test_pointer_packet_shape_and_width():
    c = pointer_packet(PTR, math.sqrt(10.0))
    assert np.sum(np.abs(c) ** 2) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(c, c[::-1])  # symmetric about l = 0
    # spatial width against direct grid evaluation of the packet
    grid = np.linspace(-PTR.box_length, PTR.box_length, 8001)
    psi = np.zeros_like(grid, dtype=complex)
    for coeff, l in zip(c, PTR.mode_numbers()):
        psi += coeff * np.exp(1j * math.pi * l * grid / PTR.box_length)
    dens = np.abs(psi) ** 2
    dens /= np.trapezoid(dens, grid)
    var = np.trapezoid(grid**2 * dens, grid)
    target = packet_spatial_width(PTR, math.sqrt(10.0))
    assert math.sqrt(var) == pytest.approx(target, rel=0.2)
    assert target == pytest.approx(PTR.box_length / (2 * math.pi * math.sqrt(10.0)), rel=1e-14)


def test_pointer_packet_degenerate_warns():
    with pytest.warns(UserWarning, match="degenerate"):
        pointer_packet(PTR, 1e-3)
    with pytest.raises(ValueError):
        pointer_packet(PTR, -1.0)
    with pytest.raises(IndexError):
        pointer_packet(PTR, 1.0, center_mode=99)


@settings(max_examples=40, deadline=None)
@given(
    sigma=st.floats(min_value=0.3, max_value=6.0),
    trunc=st.integers(min_value=1, max_value=12),
)
def test_pointer_packet_normalization_property(sigma, trunc):
    basis = PointerBasis(1000.0, trunc, MASS)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        c = pointer_packet(basis, sigma)
    assert np.sum(np.abs(c) ** 2) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(c, c[::-1])


@pytest.mark.parametrize("n_levels", [2, 3, 6])
def test_ladder_hamiltonian_equivalence_exact(n_levels):
    basis = OscillatorBasis(OSC.omega, n_levels)
    deviation, commutator = ladder_hamiltonian_check(basis)
    assert deviation == 0.0
    for m in range(n_levels - 1):
        assert commutator[m, m] == pytest.approx(1.0, abs=1e-12)
    # truncation artifact in the top corner: documented, not unity
    assert commutator[n_levels - 1, n_levels - 1] == pytest.approx(1.0 - n_levels, abs=1e-12)


def test_ladder_matrices_against_direct_product():
    a, adag = ladder_matrices(4)
    number = adag @ a
    assert np.allclose(np.diag(number), [0, 1, 2, 3], atol=1e-12)
    assert np.allclose(number - np.diag(np.diag(number)), 0.0)


def test_make_bases_collapses_pointers_when_unmeasured(unmeasured_config, measured_config):
    b_plain = make_bases(unmeasured_config)
    assert b_plain.pointer.n_modes == 1
    b_meas = make_bases(measured_config)
    assert b_meas.pointer.n_modes == 21
    assert b_meas.well.n_levels == 2
    assert b_meas.oscillator.n_levels == 2
