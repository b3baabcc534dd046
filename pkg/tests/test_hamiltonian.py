import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qedbohm.basis import make_bases
from qedbohm.config import UNITS
from qedbohm.hamiltonian import (
    apply,
    assemble,
    build_space,
    correction_report,
    dense_matrix,
    mu_of_t,
)

# frozen product of the dipole and q matrix elements with alpha = 6.24e-3
COUPLING_001_100 = 0.012716491412923445


def test_space_sizes(unmeasured_config, measured_config):
    assert build_space(unmeasured_config).flat_size == 8
    assert build_space(measured_config).flat_size == 3528  # 8 * 21 * 21


def test_space_round_trip(measured_config):
    space = build_space(measured_config)
    for flat in range(0, space.flat_size, 97):
        n, m, k, l, s = space.unflatten(flat)
        assert space.flatten(n, m, k, l, s) == flat
    with pytest.raises(IndexError):
        space.flatten(0, 0, 0, 99, 0)


def test_space_cap(measured_config):
    huge = dataclasses.replace(measured_config, pointer_truncation=1000)
    with pytest.raises(ValueError, match="cap"):
        build_space(huge)


def test_parity_masks(unmeasured_config):
    space = build_space(unmeasured_config)
    odd, even = space.parity_masks()
    assert len(odd) == 4 and len(even) == 4
    odd_kets = {space.unflatten(int(i))[:3] for i in odd}
    assert odd_kets == {(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 1)}
    assert set(odd) | set(even) == set(range(8))


def test_assemble_coupling_structure(unmeasured_config):
    space = build_space(unmeasured_config)
    bases = make_bases(unmeasured_config)
    terms = assemble(unmeasured_config, space, bases)

    i001 = space.flatten(0, 0, 1, 0, 0)
    i100 = space.flatten(1, 0, 0, 0, 0)
    i110 = space.flatten(1, 1, 0, 0, 0)
    dense = dense_matrix(terms, space).real
    assert abs(dense[i001, i100]) == pytest.approx(COUPLING_001_100, rel=1e-12)
    # parity forbids any amplitude transfer between these
    assert dense[i001, i110] == 0.0
    # Hermitian list: every (i, j, v) has its mirror
    pairs = set(zip(terms.coupling_rows.tolist(), terms.coupling_cols.tolist()))
    assert all((j, i) in pairs for i, j in pairs)
    # each entry flips exactly one electron level and the photon level
    for i, j in pairs:
        a, b = space.unflatten(i), space.unflatten(j)
        electron_flips = (a[0] != b[0]) + (a[1] != b[1])
        assert electron_flips == 1 and a[2] != b[2] and a[3] == b[3] and a[4] == b[4]
    # electron-1 vs electron-2 sublists are disjoint and cover everything
    assert len(terms.coupling_entries(1)) + len(terms.coupling_entries(2)) == len(
        terms.coupling_rows
    )


def test_measurement_diagonals(measured_config):
    space = build_space(measured_config)
    bases = make_bases(measured_config)
    terms = assemble(measured_config, space, bases)
    gap = bases.well.energy(1) - bases.well.energy(0)
    for l in (-10, -3, 0, 7):
        i_ground = space.flatten(0, 0, 1, l, 0)
        assert terms.meas_diag_y[i_ground] == 0.0  # n = 0 rows vanish exactly
        i_excited = space.flatten(1, 0, 0, l, 0)
        expected = UNITS.hbar * math.pi * l / measured_config.pointer_box_length * gap
        assert terms.meas_diag_y[i_excited] == pytest.approx(expected, rel=1e-14)
    assert np.all(np.isreal(terms.meas_diag_y)) and np.all(np.isreal(terms.meas_diag_z))


def test_apply_diagonal_action(unmeasured_config):
    space = build_space(unmeasured_config)
    bases = make_bases(unmeasured_config)
    terms = assemble(unmeasured_config, space, bases)
    c = np.zeros(space.flat_size, dtype=complex)
    i000 = space.flatten(0, 0, 0, 0, 0)
    c[i000] = 1.0
    out = apply(terms, space, c)
    e000 = 2 * bases.well.energy(0) + bases.oscillator.energy(0)
    assert out[i000] == pytest.approx(e000, rel=1e-14)


def test_apply_hermiticity_and_dense_oracle(measured_config):
    trimmed = dataclasses.replace(measured_config, pointer_truncation=1)
    space = build_space(trimmed)
    bases = make_bases(trimmed)
    terms = assemble(trimmed, space, bases)
    rng = np.random.default_rng(3)
    mu = 140.0
    dense = dense_matrix(terms, space, mu_t=mu)
    assert np.allclose(dense, dense.conj().T, atol=1e-15)
    for _ in range(5):
        c = rng.normal(size=space.flat_size) + 1j * rng.normal(size=space.flat_size)
        c /= np.linalg.norm(c)
        hc = apply(terms, space, c, mu_t=mu)
        assert abs(np.vdot(c, hc).imag) <= 1e-12
        assert np.max(np.abs(dense @ c - hc)) <= 1e-14


def test_apply_parity_closure(measured_config):
    trimmed = dataclasses.replace(measured_config, pointer_truncation=2)
    space = build_space(trimmed)
    bases = make_bases(trimmed)
    terms = assemble(trimmed, space, bases)
    odd, even = space.parity_masks()
    rng = np.random.default_rng(8)
    c = np.zeros(space.flat_size, dtype=complex)
    c[odd] = rng.normal(size=odd.size) + 1j * rng.normal(size=odd.size)
    out = apply(terms, space, c, mu_t=55.0)
    assert np.all(out[even] == 0.0)


def test_apply_argument_errors(unmeasured_config):
    space = build_space(unmeasured_config)
    bases = make_bases(unmeasured_config)
    terms = assemble(unmeasured_config, space, bases)
    with pytest.raises(ValueError, match="shape"):
        apply(terms, space, np.zeros(5, dtype=complex))
    with pytest.raises(ValueError, match="mu_t"):
        apply(terms, space, np.zeros(8, dtype=complex), mu_t=-1.0)


def test_mu_of_t(measured_config):
    t0 = measured_config.meas_center_time
    sig = measured_config.meas_width
    assert mu_of_t(measured_config, t0) == pytest.approx(200.0, rel=1e-14)
    assert mu_of_t(measured_config, t0 + 2 * sig) == pytest.approx(200.0 / math.e, rel=1e-14)
    assert mu_of_t(measured_config, t0 - 2 * sig) == pytest.approx(200.0 / math.e, rel=1e-14)
    off = dataclasses.replace(measured_config, measurement_enabled=False)
    assert mu_of_t(off, t0) == 0.0


def test_correction_report(unmeasured_config):
    bases = make_bases(unmeasured_config)
    rep = correction_report(unmeasured_config, bases)
    # bare formula hbar w <q> / (alpha <x>), frozen
    assert rep.timescale_ratio_raw == pytest.approx(4.1253, abs=1e-3)
    # with the same population-frequency convention as the quoted Rabi rate
    assert rep.timescale_ratio == pytest.approx(8.25, abs=0.01)
    assert rep.mode_diag_shift_ev < 0.1 * rep.hbar_omega_ev
    assert rep.dipole_diag_shift_ev < 0.1 * rep.hbar_omega_ev
    assert not rep.negligible
    weak = dataclasses.replace(unmeasured_config, coupling_alpha=0.0)
    rep0 = correction_report(weak, bases)
    assert rep0.negligible and math.isinf(rep0.timescale_ratio_raw)
    assert "negligible" in rep0.format()


@settings(max_examples=25, deadline=None)
@given(
    ne=st.integers(min_value=1, max_value=3),
    nq=st.integers(min_value=1, max_value=3),
    trunc=st.integers(min_value=0, max_value=2),
)
def test_space_bijection_property(unmeasured_config, ne, nq, trunc):
    cfg = dataclasses.replace(
        unmeasured_config,
        n_electron_levels=ne,
        n_photon_levels=nq,
        pointer_truncation=max(trunc, 1),
        measurement_enabled=trunc > 0,
    )
    space = build_space(cfg)
    seen = set()
    for flat in range(space.flat_size):
        tup = space.unflatten(flat)
        assert space.flatten(*tup) == flat
        seen.add(tup)
    assert len(seen) == space.flat_size
