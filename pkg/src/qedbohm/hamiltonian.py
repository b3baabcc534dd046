"""Truncated product-space Hamiltonian: index bookkeeping, assembly, action.

The flat state vector runs over (n, m, k, l, s) in C order: electron 1,
electron 2, cavity mode, y pointer, z pointer.  The operator splits into

  * a static diagonal of free energies,
  * a sparse Hermitian dipole coupling alpha <n|x|n'><k|q|k'> acting on
    (n,k) and (m,k) with everything else spectating,
  * two measurement diagonals, scaled by mu(t) at apply time; the value
    (hbar pi l / L_y)(E_n - E_0) is exact because the pointer momentum and
    the electron kinetic term are simultaneously diagonal in this basis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .basis import Bases, oscillator_q_element, well_dipole
from .config import UNITS, ScenarioConfig

FLAT_SIZE_CAP = 10**7


@dataclass(frozen=True)
class MultiIndexSpace:
    """Bijection between flat indices and (n, m, k, l, s) tuples."""

    dims: tuple[int, int, int, int, int]

    @property
    def flat_size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def pointer_offset(self) -> tuple[int, int]:
        """Offsets turning the l/s array index into the signed mode number."""
        return (self.dims[3] - 1) // 2, (self.dims[4] - 1) // 2

    def flatten(self, n: int, m: int, k: int, l: int, s: int) -> int:
        """Flat index of (n, m, k, l, s); l and s are signed mode numbers."""
        off_l, off_s = self.pointer_offset
        idx = (n, m, k, l + off_l, s + off_s)
        for axis, (i, d) in enumerate(zip(idx, self.dims)):
            if not 0 <= i < d:
                raise IndexError(f"index {idx} out of range for dims {self.dims} (axis {axis})")
        return int(np.ravel_multi_index(idx, self.dims))

    def unflatten(self, flat: int) -> tuple[int, int, int, int, int]:
        n, m, k, li, si = np.unravel_index(flat, self.dims)
        off_l, off_s = self.pointer_offset
        return int(n), int(m), int(k), int(li) - off_l, int(si) - off_s

    def parity_masks(self) -> tuple[np.ndarray, np.ndarray]:
        """(odd, even) flat-index arrays by parity of n + m + k."""
        n, m, k, _, _ = np.unravel_index(np.arange(self.flat_size), self.dims)
        odd = (n + m + k) % 2 == 1
        return np.flatnonzero(odd), np.flatnonzero(~odd)


def build_space(config: ScenarioConfig) -> MultiIndexSpace:
    """Index space for the config; pointer axes collapse to one mode when
    measurement is disabled."""
    if config.measurement_enabled:
        n_pointer = 2 * config.pointer_truncation + 1
    else:
        n_pointer = 1
    dims = (
        config.n_electron_levels,
        config.n_electron_levels,
        config.n_photon_levels,
        n_pointer,
        n_pointer,
    )
    size = int(np.prod(dims))
    if size > FLAT_SIZE_CAP:
        raise ValueError(f"flat size {size} exceeds cap {FLAT_SIZE_CAP}")
    return MultiIndexSpace(dims)


@dataclass(frozen=True)
class HamiltonianTerms:
    """Assembled operator pieces; immutable after construction."""

    diag_energy: np.ndarray          # [eV] free energies E_n + E_m + E_k + E_l + E_s
    coupling_rows: np.ndarray        # Hermitian dipole list, both (i,j) and (j,i)
    coupling_cols: np.ndarray
    coupling_vals: np.ndarray        # [eV]
    coupling_which: np.ndarray       # 1 for electron-1 entries, 2 for electron-2
    meas_diag_y: np.ndarray          # [eV per unit mu] = p_l (E_n - E_0)
    meas_diag_z: np.ndarray          # [eV per unit mu] = p_s (E_m - E_0)
    coupling_csr: sp.csr_matrix

    def coupling_entries(self, which: int) -> list[tuple[int, int, float]]:
        """Entries (i, j, value) of one electron's coupling list."""
        keep = self.coupling_which == which
        return [
            (int(i), int(j), float(v))
            for i, j, v in zip(
                self.coupling_rows[keep], self.coupling_cols[keep], self.coupling_vals[keep]
            )
        ]


def assemble(config: ScenarioConfig, space: MultiIndexSpace, bases: Bases) -> HamiltonianTerms:
    """Build diagonal, dipole coupling and measurement diagonals."""
    ne, ne2, nq, nl, ns = space.dims
    if ne != bases.well.n_levels or nq != bases.oscillator.n_levels:
        raise ValueError("space dimensions inconsistent with bases")
    if nl != bases.pointer.n_modes or ns != bases.pointer.n_modes:
        raise ValueError("pointer dimensions inconsistent with bases")

    e_well = bases.well.energies()
    e_osc = bases.oscillator.energies()
    e_ptr = bases.pointer.energies()
    p_ptr = np.array([bases.pointer.momentum(l) for l in bases.pointer.mode_numbers()])

    n_idx, m_idx, k_idx, li_idx, si_idx = np.unravel_index(np.arange(space.flat_size), space.dims)
    diag = (
        e_well[n_idx] + e_well[m_idx] + e_osc[k_idx] + e_ptr[li_idx] + e_ptr[si_idx]
    )
    meas_y = p_ptr[li_idx] * (e_well[n_idx] - e_well[0])
    meas_z = p_ptr[si_idx] * (e_well[m_idx] - e_well[0])

    # dipole pairs: (n,n') with <n|x|n'> != 0 and (k,k') adjacent
    x_elems = [
        (n, n2, well_dipole(bases.well, n, n2))
        for n in range(ne)
        for n2 in range(ne)
        if n != n2 and well_dipole(bases.well, n, n2) != 0.0
    ]
    q_elems = [
        (k, k2, oscillator_q_element(bases.oscillator, k, k2))
        for k in range(nq)
        for k2 in range(nq)
        if abs(k - k2) == 1
    ]

    rows, cols, vals, which = [], [], [], []
    strides = np.array([ne2 * nq * nl * ns, nq * nl * ns, nl * ns, ns, 1])
    spectators_x1 = [
        (m, li, si) for m in range(ne2) for li in range(nl) for si in range(ns)
    ]
    for n, n2, xval in x_elems:
        for k, k2, qval in q_elems:
            v = config.coupling_alpha * xval * qval
            for m, li, si in spectators_x1:
                i = n * strides[0] + m * strides[1] + k * strides[2] + li * strides[3] + si
                j = n2 * strides[0] + m * strides[1] + k2 * strides[2] + li * strides[3] + si
                rows.append(i)
                cols.append(j)
                vals.append(v)
                which.append(1)
    spectators_x2 = [
        (n, li, si) for n in range(ne) for li in range(nl) for si in range(ns)
    ]
    for m, m2, xval in x_elems:
        for k, k2, qval in q_elems:
            v = config.coupling_alpha * xval * qval
            for n, li, si in spectators_x2:
                i = n * strides[0] + m * strides[1] + k * strides[2] + li * strides[3] + si
                j = n * strides[0] + m2 * strides[1] + k2 * strides[2] + li * strides[3] + si
                rows.append(i)
                cols.append(j)
                vals.append(v)
                which.append(2)

    rows_a = np.asarray(rows, dtype=np.int64)
    cols_a = np.asarray(cols, dtype=np.int64)
    vals_a = np.asarray(vals, dtype=np.float64)
    csr = sp.csr_matrix(
        (vals_a, (rows_a, cols_a)), shape=(space.flat_size, space.flat_size)
    )
    return HamiltonianTerms(
        diag_energy=diag,
        coupling_rows=rows_a,
        coupling_cols=cols_a,
        coupling_vals=vals_a,
        coupling_which=np.asarray(which, dtype=np.int8),
        meas_diag_y=meas_y,
        meas_diag_z=meas_z,
        coupling_csr=csr,
    )


def mu_of_t(config: ScenarioConfig, t: float) -> float:
    """Gaussian measurement coupling mu_0 exp(-(t - t0)^2 / (4 sigma^2))."""
    if not config.measurement_enabled:
        return 0.0
    arg = (t - config.meas_center_time) / (2.0 * config.meas_width)
    return config.meas_strength * math.exp(-arg * arg)


def apply(
    terms: HamiltonianTerms,
    space: MultiIndexSpace,
    c: np.ndarray,
    t: float = 0.0,
    mu_t: float = 0.0,
) -> np.ndarray:
    """H(t) c: diagonal + dipole couplings + mu(t) * measurement diagonals."""
    if c.shape != (space.flat_size,):
        raise ValueError(f"coefficient vector has shape {c.shape}, expected ({space.flat_size},)")
    if mu_t < 0.0:
        raise ValueError(f"mu_t must be >= 0, got {mu_t}")
    out = terms.diag_energy * c
    out += terms.coupling_csr.dot(c)
    if mu_t != 0.0:
        out += mu_t * (terms.meas_diag_y + terms.meas_diag_z) * c
    return out


def dense_matrix(terms: HamiltonianTerms, space: MultiIndexSpace, mu_t: float = 0.0) -> np.ndarray:
    """Dense H(t); oracle companion to the matrix-free apply (small spaces only)."""
    h = np.diag(terms.diag_energy + mu_t * (terms.meas_diag_y + terms.meas_diag_z)).astype(
        np.complex128
    )
    for i, j, v in zip(terms.coupling_rows, terms.coupling_cols, terms.coupling_vals):
        h[i, j] += v
    return h


@dataclass(frozen=True)
class CorrectionReport:
    """Magnitudes of the gauge-transformation leftovers (reported, not asserted)."""

    mode_diag_shift_ev: float       # ~ alpha^2 / (m_e omega_c^2)
    dipole_diag_shift_ev: float     # alpha^2 <0|x|1>^2 / (2 hbar omega_c)
    hbar_omega_ev: float
    timescale_ratio_raw: float      # hbar w <0|q|1> / (alpha <0|x|1>)
    timescale_ratio: float          # 2x raw, the population-frequency convention
    negligible: bool                # True when alpha -> 0 collapses the couplings

    def format(self) -> str:
        lines = [
            f"mode_diag_shift_ev = {self.mode_diag_shift_ev:.6g}",
            f"dipole_diag_shift_ev = {self.dipole_diag_shift_ev:.6g}",
            f"hbar_omega_ev = {self.hbar_omega_ev:.6g}",
            f"timescale_ratio_raw = {self.timescale_ratio_raw:.6g}",
            f"timescale_ratio = {self.timescale_ratio:.6g}",
        ]
        if self.negligible:
            lines.append("corrections negligible (coupling ~ 0)")
        return "\n".join(lines)


def correction_report(config: ScenarioConfig, bases: Bases) -> CorrectionReport:
    """Size of the terms dropped when reducing to the bilinear q(x1+x2) coupling.

    The slow cross-well transfer driven by the residual x1*x2 term runs at
    Omega_xx ~ (alpha^2 / hbar omega_c) <0|x|1>^2 / hbar against the dipole
    Rabi rate; the ratio of timescales is reported both as the bare formula
    hbar w <q> / (alpha <x>) and with the same factor-2 population-frequency
    convention used for the quoted Rabi frequency (see config.rabi_estimate).
    """
    alpha = config.coupling_alpha
    hbar_omega = UNITS.hbar * config.cavity_omega
    dipole = abs(well_dipole(bases.well, 0, 1))
    q01 = abs(oscillator_q_element(bases.oscillator, 0, 1))
    mode_shift = alpha**2 / (config.electron_mass * config.cavity_omega**2)
    dipole_shift = alpha**2 * dipole**2 / (2.0 * hbar_omega)
    denom = alpha * dipole
    if denom == 0.0:
        ratio_raw = math.inf
    else:
        ratio_raw = hbar_omega * q01 / denom
    return CorrectionReport(
        mode_diag_shift_ev=mode_shift,
        dipole_diag_shift_ev=dipole_shift,
        hbar_omega_ev=hbar_omega,
        timescale_ratio_raw=ratio_raw,
        timescale_ratio=2.0 * ratio_raw,
        negligible=not math.isfinite(ratio_raw),
    )
