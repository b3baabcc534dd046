"""Norm-monitored RK4 integration of i hbar dc/dt = H(t) c.

The integrator works on a spectrally shifted copy of the diagonal (H - E_ref)
to keep the RK4 stability phase per step small, and multiplies the exact
scalar phase exp(-i E_ref (t - t0) / hbar) back into every stored snapshot,
so the returned coefficients solve the unshifted equation.  The norm is
never renormalized; drift is measured and becomes a hard failure past 1e-6.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .basis import Bases
from .config import UNITS
from .hamiltonian import HamiltonianTerms, MultiIndexSpace


class NormDriftError(RuntimeError):
    """Norm drift exceeded the abort threshold during integration."""


NORM_ABORT = 1e-6


@dataclass
class CoefficientState:
    """Coefficient vector over the flat product basis at one instant."""

    t: float
    c: np.ndarray

    def norm_sq(self) -> float:
        return float(np.vdot(self.c, self.c).real)


@dataclass
class CoefficientSeries:
    """Snapshots at uniform cadence, plus the integration diagnostics."""

    times: np.ndarray                 # (T,)
    coeffs: np.ndarray                # (T, flat_size) complex
    max_norm_drift: float = 0.0
    dt: float = 0.0

    def __post_init__(self):
        if len(self.times) > 1:
            steps = np.diff(self.times)
            if not (np.all(steps > 0) or np.all(steps < 0)):
                raise ValueError("snapshot times must be strictly monotonic")
            if np.max(np.abs(steps - steps[0])) > 1e-9 * abs(steps[0]):
                raise ValueError("snapshot cadence must be uniform")

    @property
    def cadence(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def state(self, index: int) -> CoefficientState:
        return CoefficientState(float(self.times[index]), self.coeffs[index])

    def at_time(self, t: float) -> CoefficientState:
        """Snapshot nearest to t (must match within half a cadence)."""
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 0.5 * abs(self.cadence) + 1e-9:
            raise ValueError(f"no snapshot near t = {t}")
        return self.state(idx)


def initial_state(
    space: MultiIndexSpace,
    bases: Bases,
    ket: str = "001",
    packet_y: np.ndarray | None = None,
    packet_z: np.ndarray | None = None,
) -> CoefficientState:
    """Product initial state: named (n, m, k) ket times Gaussian pointer packets.

    ``ket`` is a digit string like "001" selecting phi_n phi_m psi_k.  The
    packet arrays default to the single l = 0 mode (the measurement-disabled
    layout); their coefficient norms are forced to one.
    """
    ne, ne2, nq, nl, ns = space.dims
    if len(ket) != 3 or not ket.isdigit():
        raise ValueError(f"unknown ket label {ket!r}; expected three digits like '001'")
    n, m, k = (int(ch) for ch in ket)
    if n >= ne or m >= ne2 or k >= nq:
        raise ValueError(f"ket |{ket}> outside truncation {space.dims[:3]}")
    cy = np.ones(1, dtype=np.complex128) if packet_y is None else packet_y.astype(np.complex128)
    cz = np.ones(1, dtype=np.complex128) if packet_z is None else packet_z.astype(np.complex128)
    if cy.shape != (nl,) or cz.shape != (ns,):
        raise ValueError("pointer packet lengths do not match the index space")
    cy = cy / np.linalg.norm(cy)
    cz = cz / np.linalg.norm(cz)
    c = np.zeros(space.dims, dtype=np.complex128)
    c[n, m, k, :, :] = np.outer(cy, cz)
    return CoefficientState(0.0, c.reshape(-1))


def evolve(
    terms: HamiltonianTerms,
    space: MultiIndexSpace,
    state: CoefficientState,
    t_end: float,
    dt: float,
    mu_schedule: Callable[[float], float],
    snapshot_stride: int = 1,
) -> CoefficientSeries:
    """Integrate to t_end, storing a snapshot every ``snapshot_stride`` steps.

    dt > 0; integration runs backward automatically when t_end < state.t.
    The step count is rounded so the run ends on the snapshot grid, landing
    within max(1, snapshot_stride) * dt / 2 of t_end (dt/2 for the default
    stride).  Raises NormDriftError when | |c|^2 - 1 | exceeds 1e-6.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if snapshot_stride < 1:
        raise ValueError("snapshot_stride must be >= 1")
    span = t_end - state.t
    if span == 0.0:
        raise ValueError("t_end coincides with the initial time")
    n_steps = snapshot_stride * max(1, round(abs(span) / (dt * snapshot_stride)))
    h = math.copysign(dt, span)

    diag = terms.diag_energy
    e_ref = 0.5 * (float(diag.min()) + float(diag.max()))
    diag_shifted = diag - e_ref
    meas = terms.meas_diag_y + terms.meas_diag_z
    csr = terms.coupling_csr
    minus_i_over_hbar = -1j / UNITS.hbar

    def rhs(c: np.ndarray, t: float) -> np.ndarray:
        hc = diag_shifted * c
        hc += csr.dot(c)
        mu = mu_schedule(t)
        if mu != 0.0:
            hc += mu * meas * c
        return minus_i_over_hbar * hc

    t0 = state.t
    c = state.c.astype(np.complex128).copy()
    norm0 = float(np.vdot(c, c).real)
    max_drift = abs(norm0 - 1.0)

    n_snaps = n_steps // snapshot_stride + 1
    times = np.empty(n_snaps)
    coeffs = np.empty((n_snaps, c.size), dtype=np.complex128)

    def store(slot: int, step: int) -> None:
        t = t0 + step * h
        times[slot] = t
        # undo the spectral shift: the stored snapshot solves the true equation
        coeffs[slot] = c * np.exp(-1j * e_ref * (t - t0) / UNITS.hbar)

    store(0, 0)
    slot = 1
    for step in range(1, n_steps + 1):
        t = t0 + (step - 1) * h
        k1 = rhs(c, t)
        k2 = rhs(c + 0.5 * h * k1, t + 0.5 * h)
        k3 = rhs(c + 0.5 * h * k2, t + 0.5 * h)
        k4 = rhs(c + h * k3, t + h)
        c = c + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if step % snapshot_stride == 0:
            drift = abs(float(np.vdot(c, c).real) - 1.0)
            max_drift = max(max_drift, drift)
            if drift > NORM_ABORT:
                raise NormDriftError(
                    f"norm drift {drift:.3e} exceeds {NORM_ABORT:.0e} at t = {t + h:.4f} fs "
                    f"(dt = {dt} is too coarse)"
                )
            store(slot, step)
            slot += 1
    return CoefficientSeries(times, coeffs, max_norm_drift=max_drift, dt=dt)


def population(state: CoefficientState, space: MultiIndexSpace, n: int, m: int, k: int) -> float:
    """Probability of the (n, m, k) light-matter configuration, pointer traced out."""
    ne, ne2, nq, _, _ = space.dims
    if not (0 <= n < ne and 0 <= m < ne2 and 0 <= k < nq):
        raise IndexError(f"({n},{m},{k}) outside truncation {space.dims[:3]}")
    c = state.c.reshape(space.dims)
    return float(np.sum(np.abs(c[n, m, k, :, :]) ** 2))


def populations_nmk(series: CoefficientSeries, space: MultiIndexSpace) -> np.ndarray:
    """|c_nmk|^2 over time, pointer modes summed out; shape (T, ne, ne, nq)."""
    c = series.coeffs.reshape((len(series.times),) + space.dims)
    return np.sum(np.abs(c) ** 2, axis=(4, 5))


def sector_probability(state: CoefficientState, mask: np.ndarray) -> float:
    """Total probability carried by the flat indices in ``mask``."""
    return float(np.sum(np.abs(state.c[mask]) ** 2))


def export_csv(
    series: CoefficientSeries,
    space: MultiIndexSpace,
    path,
    odd_only: bool = True,
) -> None:
    """Write the coefficient series with header t,re_c_<nmk>_<l>_<s>,im_c_...

    Restricted to the odd parity sector by default, which is where all the
    dynamics from the stock initial states lives.
    """
    odd, even = space.parity_masks()
    idx = odd if odd_only else np.arange(space.flat_size)
    headers = ["t"]
    for flat in idx:
        n, m, k, l, s = space.unflatten(int(flat))
        headers.append(f"re_c_{n}{m}{k}_{l}_{s}")
        headers.append(f"im_c_{n}{m}{k}_{l}_{s}")
    with open(path, "w") as fh:
        fh.write(",".join(headers) + "\n")
        for row, t in enumerate(series.times):
            vals = [repr(float(t))]
            for flat in idx:
                z = series.coeffs[row, flat]
                vals.append(repr(float(z.real)))
                vals.append(repr(float(z.imag)))
            fh.write(",".join(vals) + "\n")
