"""Figure-level quantities: population/energy series, conditional branches,
Born-rule statistics, and their CSV exports."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .basis import Bases
from .bohmian import BRANCH_UNRESOLVED, Ensemble, Trajectory, equivariance_check
from .config import ScenarioConfig
from .evolution import CoefficientSeries, CoefficientState
from .hamiltonian import HamiltonianTerms, MultiIndexSpace
from .wavefield import (
    conditional_coefficients,
    conditional_energy,
    conditional_interaction_energy,
)


@dataclass
class UnconditionalSeries:
    """Populations and energy expectations of the full wave function."""

    times: np.ndarray
    populations: np.ndarray       # (T, ne, ne, nq)
    energy_x1: np.ndarray         # [eV]
    energy_x2: np.ndarray
    energy_field: np.ndarray
    energy_pointer: np.ndarray
    energy_interaction: np.ndarray
    norm: np.ndarray
    rabi_period: float | None = None   # first-return detection, None if unseen

    @property
    def energy_total(self) -> np.ndarray:
        return (
            self.energy_x1
            + self.energy_x2
            + self.energy_field
            + self.energy_pointer
            + self.energy_interaction
        )


def detect_rabi_period(times: np.ndarray, p_initial: np.ndarray, threshold: float = 0.02) -> float | None:
    """Time of first return of the initial-state population to within
    ``threshold`` of one, refined to the local maximum.

    The population must first leave (drop below 0.5) so the flat start does
    not trigger the detector.
    """
    below = np.flatnonzero(p_initial < 0.5)
    if below.size == 0:
        return None
    start = below[0]
    returned = np.flatnonzero(p_initial[start:] >= 1.0 - threshold)
    if returned.size == 0:
        return None
    idx = start + returned[0]
    # walk uphill to the local maximum of the return peak
    while idx + 1 < len(p_initial) and p_initial[idx + 1] >= p_initial[idx]:
        idx += 1
    return float(times[idx])


def unconditional_series(
    series: CoefficientSeries,
    space: MultiIndexSpace,
    bases: Bases,
    terms: HamiltonianTerms,
    initial_ket: tuple[int, int, int] = (0, 0, 1),
) -> UnconditionalSeries:
    """Populations |c_nmk|^2 and per-subsystem energies along the series."""
    nt = len(series.times)
    dims = space.dims
    c = series.coeffs.reshape((nt,) + dims)
    pops = np.sum(np.abs(c) ** 2, axis=(4, 5))

    e_well = bases.well.energies()
    e_osc = bases.oscillator.energies()
    e_ptr = bases.pointer.energies()

    pop_n = pops.sum(axis=(2, 3))             # (T, ne)
    pop_m = pops.sum(axis=(1, 3))
    pop_k = pops.sum(axis=(1, 2))
    abs_sq = np.abs(series.coeffs) ** 2
    n_idx, m_idx, k_idx, li_idx, si_idx = np.unravel_index(np.arange(space.flat_size), dims)
    pointer_energy_flat = e_ptr[li_idx] + e_ptr[si_idx]

    e_x1 = pop_n @ e_well
    e_x2 = pop_m @ e_well
    e_field = pop_k @ e_osc
    e_pointer = abs_sq @ pointer_energy_flat
    e_int = np.array(
        [float(np.vdot(series.coeffs[i], terms.coupling_csr.dot(series.coeffs[i])).real)
         for i in range(nt)]
    )
    norm = abs_sq.sum(axis=1)

    n0, m0, k0 = initial_ket
    period = detect_rabi_period(series.times, pops[:, n0, m0, k0])
    return UnconditionalSeries(
        times=series.times,
        populations=pops,
        energy_x1=e_x1,
        energy_x2=e_x2,
        energy_field=e_field,
        energy_pointer=e_pointer,
        energy_interaction=e_int,
        norm=norm,
        rabi_period=period,
    )


@dataclass
class ConditionalSeries:
    """Populations and energies of the conditional wave function along one
    trajectory (the effective-collapse view)."""

    times: np.ndarray
    populations: np.ndarray      # (T, ne, ne, nq)
    energy_x1: np.ndarray
    energy_x2: np.ndarray
    energy_field: np.ndarray
    energy_interaction: np.ndarray
    branch: str
    raw_norms: np.ndarray        # pre-normalization slice norms (node diagnostics)


def conditional_series(
    ensemble_traj: Trajectory,
    series: CoefficientSeries,
    space: MultiIndexSpace,
    bases: Bases,
    config: ScenarioConfig,
) -> ConditionalSeries:
    """Conditional-state series along a resolved trajectory."""
    if ensemble_traj.aborted:
        raise ValueError("cannot condition on an aborted trajectory")
    if ensemble_traj.branch == BRANCH_UNRESOLVED and config.meas_strength > 0.0 and config.measurement_enabled:
        raise ValueError("trajectory did not resolve into a branch")
    nt = len(ensemble_traj.times)
    ne, ne2, nq = space.dims[:3]
    pops = np.empty((nt, ne, ne2, nq))
    e_x1 = np.empty(nt)
    e_x2 = np.empty(nt)
    e_field = np.empty(nt)
    e_int = np.empty(nt)
    raw_norms = np.empty(nt)
    for i, t in enumerate(ensemble_traj.times):
        state = series.at_time(float(t))
        y, z = ensemble_traj.points[i, 3], ensemble_traj.points[i, 4]
        cond, raw = conditional_coefficients(state, space, bases, y, z)
        pops[i] = np.abs(cond) ** 2
        e_x1[i] = conditional_energy(cond, bases, "x1")
        e_x2[i] = conditional_energy(cond, bases, "x2")
        e_field[i] = conditional_energy(cond, bases, "field")
        e_int[i] = conditional_interaction_energy(cond, bases, config.coupling_alpha)
        raw_norms[i] = raw
    return ConditionalSeries(
        times=ensemble_traj.times.copy(),
        populations=pops,
        energy_x1=e_x1,
        energy_x2=e_x2,
        energy_field=e_field,
        energy_interaction=e_int,
        branch=ensemble_traj.branch,
        raw_norms=raw_norms,
    )


@dataclass
class RunReport:
    """Everything a finished run reports: series, branch statistics and
    per-coordinate equivariance distances."""

    unconditional: UnconditionalSeries
    branch_stats: dict[str, int] | None = None
    branch_fractions: dict[str, float] | None = None
    equivariance: dict[str, float] | None = None

    def invariant_violations(self) -> list[str]:
        out = []
        un = self.unconditional
        closure = np.abs(un.populations.reshape(len(un.times), -1).sum(axis=1) - 1.0)
        if float(closure.max()) > 1e-8:
            out.append(f"population closure violated by {float(closure.max()):.3e}")
        if not np.all(np.isfinite(un.energy_total)):
            out.append("non-finite energy expectation")
        if self.branch_stats is not None:
            resolved = self.branch_stats["n_y_branch"] + self.branch_stats["n_z_branch"]
            if resolved + self.branch_stats["n_unresolved"] + self.branch_stats[
                "n_aborted"
            ] != self.branch_stats["n_total"]:
                out.append("branch counts do not add up")
        return out


@dataclass
class BornSummary:
    """Branch fractions against the Born-rule reference populations."""

    n_resolved: int
    n_y: int
    n_z: int
    y_fraction: float
    z_fraction: float
    ci_halfwidth_3sigma: float
    reference_p100: float
    reference_p010: float

    def consistent(self) -> bool:
        return (
            abs(self.y_fraction - self.reference_p100) <= self.ci_halfwidth_3sigma
            and abs(self.z_fraction - self.reference_p010) <= self.ci_halfwidth_3sigma
        )


def born_summary(
    ensemble: Ensemble,
    series: CoefficientSeries,
    space: MultiIndexSpace,
    t_reference: float,
    min_resolved: int = 100,
) -> BornSummary:
    """Compare Y/Z branch frequencies to |c_100|^2, |c_010|^2 at onset."""
    counts = ensemble.counts()
    n_resolved = counts["n_y_branch"] + counts["n_z_branch"]
    if n_resolved < min_resolved:
        raise ValueError(f"only {n_resolved} resolved trajectories (need {min_resolved})")
    state = series.at_time(t_reference)
    from .evolution import population

    p100 = population(state, space, 1, 0, 0)
    p010 = population(state, space, 0, 1, 0)
    y_frac = counts["n_y_branch"] / n_resolved
    z_frac = counts["n_z_branch"] / n_resolved
    half = 3.0 * math.sqrt(0.25 / n_resolved)
    return BornSummary(
        n_resolved=n_resolved,
        n_y=counts["n_y_branch"],
        n_z=counts["n_z_branch"],
        y_fraction=y_frac,
        z_fraction=z_frac,
        ci_halfwidth_3sigma=half,
        reference_p100=p100,
        reference_p010=p010,
    )


# --- CSV writers ---------------------------------------------------------------


def _write_rows(path, header: list[str], columns: list[np.ndarray]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _ket_labels(space: MultiIndexSpace) -> list[tuple[int, int, int]]:
    ne, ne2, nq = space.dims[:3]
    return [(n, m, k) for n in range(ne) for m in range(ne2) for k in range(nq)]


def export_populations_csv(path, un: UnconditionalSeries, space: MultiIndexSpace) -> None:
    """One column per (n, m, k) population plus the total norm."""
    labels = _ket_labels(space)
    header = ["t"] + [f"p{n}{m}{k}" for n, m, k in labels] + ["norm"]
    cols = [un.times] + [un.populations[:, n, m, k] for n, m, k in labels] + [un.norm]
    _write_rows(path, header, cols)


def export_energies_csv(path, un: UnconditionalSeries) -> None:
    header = ["t", "E_x1", "E_x2", "E_field", "E_pointer", "E_int", "E_total"]
    cols = [
        un.times,
        un.energy_x1,
        un.energy_x2,
        un.energy_field,
        un.energy_pointer,
        un.energy_interaction,
        un.energy_total,
    ]
    _write_rows(path, header, cols)


def export_conditional_csv(path, cond: ConditionalSeries) -> None:
    """Fig.-4-style panel: odd-sector conditional populations and energies."""
    header = ["t", "p100", "p010", "p001", "p111", "E_x1", "E_x2", "E_field"]
    cols = [
        cond.times,
        cond.populations[:, 1, 0, 0],
        cond.populations[:, 0, 1, 0],
        cond.populations[:, 0, 0, 1],
        cond.populations[:, 1, 1, 1],
        cond.energy_x1,
        cond.energy_x2,
        cond.energy_field,
    ]
    _write_rows(path, header, cols)


def export_trajectories_csv(path, ensemble: Ensemble) -> None:
    with open(path, "w") as fh:
        fh.write("traj_id,t,x1,x2,q,y,z\n")
        for tid, tr in enumerate(ensemble.trajectories):
            for t, row in zip(tr.times, tr.points):
                vals = ",".join(repr(float(v)) for v in row)
                fh.write(f"{tid},{repr(float(t))},{vals}\n")


def export_branch_summary(
    path,
    ensemble: Ensemble,
    born: BornSummary | None,
    ks_stats: dict[str, float] | None,
) -> None:
    """Key-value ensemble summary (branch counts, fractions, KS distances)."""
    counts = ensemble.counts()
    lines = [f"{key} = {val}" for key, val in counts.items()]
    if born is not None:
        lines.append(f"y_fraction = {float(born.y_fraction)!r}")
        lines.append(f"z_fraction = {float(born.z_fraction)!r}")
        lines.append(f"born_reference_p100 = {float(born.reference_p100)!r}")
        lines.append(f"born_reference_p010 = {float(born.reference_p010)!r}")
        lines.append(f"born_ci_halfwidth_3sigma = {float(born.ci_halfwidth_3sigma)!r}")
    lines.append(f"both_pointer_events = {ensemble.both_pointer_events()}")
    lines.append(f"branch_threshold_nm = {float(ensemble.branch_threshold)!r}")
    lines.append(
        f"expected_displacement_full_window_nm = {float(ensemble.expected_displacement_full)!r}"
    )
    lines.append(
        f"expected_displacement_half_window_nm = {float(ensemble.expected_displacement_half)!r}"
    )
    if ks_stats:
        for name, val in ks_stats.items():
            lines.append(f"ks_{name} = {float(val)!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def ensemble_ks_stats(
    ensemble: Ensemble,
    state: CoefficientState,
    space: MultiIndexSpace,
    bases: Bases,
) -> dict[str, float]:
    """KS sup distance per coordinate at the state's time."""
    return {
        name: equivariance_check(ensemble, state, space, bases, name)[0]
        for name in ("x1", "x2", "q", "y", "z")
    }
