"""Quantum-equilibrium sampling, guidance velocities, trajectory ensembles.

The velocity fields implement the probability currents of the measured
five-coordinate system; with the measurement coupling off they reduce to
the plain hbar/m Im(Phi* grad Phi)/|Phi|^2 form.  The von Neumann coupling
mu(t) P (K - E0) adds (i) a mixed-derivative current to the electron
velocities, (ii) a |d_x Phi|^2 current to its pointer, and (iii) a uniform
-mu(t) E0 drift on the pointers from the ground-energy subtraction.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from . import _kernels
from .basis import Bases
from .config import UNITS, ScenarioConfig, config_digest
from .evolution import CoefficientSeries, CoefficientState
from .hamiltonian import MultiIndexSpace
from .wavefield import ConfigPoint, FieldEvaluator

BRANCH_Y = "Y"
BRANCH_Z = "Z"
BRANCH_UNRESOLVED = "UNRESOLVED"

CDF_TABLE_SIZE = 2**14
KS_CRITICAL_5PCT = 1.36  # Kolmogorov statistic scale at the 5% level


@dataclass
class Trajectory:
    """One Bohmian history: recorded points, branch label, diagnostics."""

    seed: int
    times: np.ndarray          # (T,)
    points: np.ndarray         # (T, 5) columns x1, x2, q, y, z
    branch: str = BRANCH_UNRESOLVED
    aborted: bool = False
    n_regularized: int = 0
    min_density: float = math.inf

    def coordinate(self, name: str) -> np.ndarray:
        return self.points[:, {"x1": 0, "x2": 1, "q": 2, "y": 3, "z": 4}[name]]

    def displacement(self, name: str) -> float:
        col = self.coordinate(name)
        return float(col[-1] - col[0])


@dataclass
class Ensemble:
    """Deterministic bundle of trajectories from (config, master seed)."""

    trajectories: list[Trajectory]
    config_hash: str
    master_seed: int
    branch_threshold: float = 0.0
    expected_displacement_full: float = 0.0
    expected_displacement_half: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return self.trajectories[0].times

    def counts(self) -> dict[str, int]:
        n_y = sum(1 for tr in self.trajectories if not tr.aborted and tr.branch == BRANCH_Y)
        n_z = sum(1 for tr in self.trajectories if not tr.aborted and tr.branch == BRANCH_Z)
        n_unresolved = sum(
            1 for tr in self.trajectories if not tr.aborted and tr.branch == BRANCH_UNRESOLVED
        )
        n_aborted = sum(1 for tr in self.trajectories if tr.aborted)
        return {
            "n_total": len(self.trajectories),
            "n_y_branch": n_y,
            "n_z_branch": n_z,
            "n_unresolved": n_unresolved,
            "n_aborted": n_aborted,
        }

    def both_pointer_events(self) -> int:
        """Trajectories whose two pointers both crossed the branch threshold."""
        count = 0
        for tr in self.trajectories:
            if tr.aborted:
                continue
            if (
                abs(tr.displacement("y")) > self.branch_threshold
                and abs(tr.displacement("z")) > self.branch_threshold
            ):
                count += 1
        return count

    def positions_at(self, index: int) -> np.ndarray:
        """(n_live, 5) coordinates of non-aborted trajectories at a record slot."""
        rows = [tr.points[index] for tr in self.trajectories if not tr.aborted]
        return np.array(rows)


# --- quantum-equilibrium sampling ------------------------------------------


def _is_product_state(c: np.ndarray, dims, tol: float = 1e-10) -> bool:
    """True when the coefficient tensor factorizes across all five axes."""
    rem = c.reshape(dims)
    for _ in range(4):
        mat = rem.reshape(rem.shape[0], -1)
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
        if s.size > 1 and s[1] > tol * s[0]:
            return False
        rem = (s[0] * vt[0]).reshape(rem.shape[1:])
    return True


def _coordinate_grids(space: MultiIndexSpace, bases: Bases) -> dict[str, np.ndarray]:
    """Tabulation grids per coordinate, avoiding the hard-wall endpoints."""
    L = bases.well.length
    edges_x = np.linspace(0.0, L, CDF_TABLE_SIZE + 1)
    q_max = math.sqrt(2.0 * space.dims[2] + 1.0) + 6.0
    edges_q = np.linspace(-q_max, q_max, CDF_TABLE_SIZE + 1)
    half_period = bases.pointer.box_length
    edges_y = np.linspace(-half_period, half_period, CDF_TABLE_SIZE + 1)
    return {"x1": edges_x, "x2": edges_x.copy(), "q": edges_q, "y": edges_y, "z": edges_y.copy()}


def _cdf_table(
    state: CoefficientState,
    space: MultiIndexSpace,
    bases: Bases,
    coordinate: str,
    edges: np.ndarray,
) -> np.ndarray:
    """Normalized CDF at the grid edges, from midpoint density masses."""
    from .wavefield import marginal_density

    centers = 0.5 * (edges[:-1] + edges[1:])
    dens = marginal_density(state, space, bases, coordinate, centers)
    masses = dens * np.diff(edges)
    cdf = np.concatenate(([0.0], np.cumsum(masses)))
    total = cdf[-1]
    if total <= 0.0:
        raise ValueError(f"marginal of {coordinate} has no mass on the tabulation grid")
    return cdf / total


def sample_initial(
    state0: CoefficientState,
    space: MultiIndexSpace,
    bases: Bases,
    n: int,
    seed: int,
) -> np.ndarray:
    """Draw n configurations from |Phi(., 0)|^2 by per-coordinate inverse CDF.

    Requires a product initial state so the five marginals are independent.
    Uses one spawned generator per trajectory so draws do not depend on n or
    on how the ensemble is later scheduled.  Returns an (n, 5) array.
    """
    if not _is_product_state(state0.c, space.dims):
        raise ValueError("initial state is not a product over the five coordinates")
    grids = _coordinate_grids(space, bases)
    tables = {
        name: (_cdf_table(state0, space, bases, name, edges), edges)
        for name, edges in grids.items()
    }
    children = np.random.SeedSequence(seed).spawn(n)
    out = np.empty((n, 5))
    order = ("x1", "x2", "q", "y", "z")
    for i, child in enumerate(children):
        rng = np.random.Generator(np.random.PCG64(child))
        u = rng.random(5)
        for axis, name in enumerate(order):
            cdf, edges = tables[name]
            out[i, axis] = np.interp(u[axis], cdf, edges)
    return out


def trajectory_seeds(master_seed: int, n: int) -> np.ndarray:
    """64-bit per-trajectory tags from the master seed's spawn tree."""
    children = np.random.SeedSequence(master_seed).spawn(n)
    return np.array(
        [child.generate_state(1, np.uint64)[0] for child in children], dtype=np.uint64
    )


# --- velocities --------------------------------------------------------------


def velocity(
    state: CoefficientState,
    space: MultiIndexSpace,
    bases: Bases,
    p: ConfigPoint,
    mu_t: float = 0.0,
    eps_node: float = 0.0,
    evaluator: FieldEvaluator | None = None,
) -> np.ndarray:
    """Guidance velocities (v_x1, v_x2, v_q, v_y, v_z) at one point.

    Pure-Python reference route; the numba kernel used for ensembles is
    checked against this function in the test suite.
    """
    ev = evaluator if evaluator is not None else FieldEvaluator(space, bases)
    f = ev.evaluate_vector(state.c, p)
    rho = f.density
    rho_eff = max(rho, eps_node)
    hbar = UNITS.hbar
    m_e = bases.well.mass
    m_y = m_z = bases.pointer.mass
    kappa = hbar * hbar / (2.0 * m_e)
    phi_c = np.conj(f.value)

    j_x1 = (hbar / m_e) * (phi_c * f.d_x1).imag
    j_x2 = (hbar / m_e) * (phi_c * f.d_x2).imag
    j_q = bases.oscillator.omega * (phi_c * f.d_q).imag
    j_y = (hbar / m_y) * (phi_c * f.d_y).imag
    j_z = (hbar / m_z) * (phi_c * f.d_z).imag
    drift = 0.0
    if mu_t != 0.0:
        j_x1 -= mu_t * kappa * 2.0 * (phi_c * f.d2_y_x1).real
        j_x2 -= mu_t * kappa * 2.0 * (phi_c * f.d2_z_x2).real
        j_y += mu_t * kappa * abs(f.d_x1) ** 2
        j_z += mu_t * kappa * abs(f.d_x2) ** 2
        drift = mu_t * bases.well.energy(0)
    return np.array(
        [
            j_x1 / rho_eff,
            j_x2 / rho_eff,
            j_q / rho_eff,
            j_y / rho_eff - drift,
            j_z / rho_eff - drift,
        ]
    )


def current(
    state: CoefficientState,
    space: MultiIndexSpace,
    bases: Bases,
    p: ConfigPoint,
    mu_t: float = 0.0,
    evaluator: FieldEvaluator | None = None,
) -> np.ndarray:
    """Probability currents J_i = rho * v_i (no node regularization)."""
    ev = evaluator if evaluator is not None else FieldEvaluator(space, bases)
    f = ev.evaluate_vector(state.c, p)
    v = velocity(state, space, bases, p, mu_t=mu_t, eps_node=0.0, evaluator=ev)
    return f.density * v


# --- propagation --------------------------------------------------------------


def _kernel_args(config: ScenarioConfig, bases: Bases):
    # per-step displacement budgets; steps that would move further are
    # retried at finer resolution (node swing-bys produce huge velocities)
    L = bases.well.length
    sigma0 = bases.pointer.box_length / (
        2.0 * math.pi * config.pointer_packet_width_modes
    )
    budget = np.array([L / 100.0, L / 100.0, 0.04, sigma0 / 8.0, sigma0 / 8.0])
    return dict(
        L=L,
        Ly=bases.pointer.box_length,
        ky=(math.pi / bases.pointer.box_length) * bases.pointer.mode_numbers().astype(np.float64),
        hbar=UNITS.hbar,
        m_e=bases.well.mass,
        m_y=bases.pointer.mass,
        m_z=bases.pointer.mass,
        omega=bases.oscillator.omega,
        e_well0=bases.well.energy(0),
        mu0=config.meas_strength,
        t_center=config.meas_center_time,
        sigma_mu=config.meas_width,
        meas_enabled=config.measurement_enabled,
        budget=budget,
    )


def _series_tensor(series: CoefficientSeries, space: MultiIndexSpace) -> np.ndarray:
    return np.ascontiguousarray(
        series.coeffs.reshape((len(series.times),) + space.dims)
    )


def propagate(
    series: CoefficientSeries,
    space: MultiIndexSpace,
    bases: Bases,
    config: ScenarioConfig,
    start: ConfigPoint,
    dt_traj: float,
    seed: int = 0,
    record_stride: int = 1,
    t_end: float | None = None,
) -> Trajectory:
    """Integrate one trajectory along the precomputed coefficient series."""
    ensemble = _propagate_many(
        series, space, bases, config,
        np.asarray([start.as_array()]), dt_traj, record_stride, t_end,
    )
    points, status, regs, rho_mins, times = ensemble
    tr = Trajectory(
        seed=seed,
        times=times,
        points=points[0],
        aborted=bool(status[0] != _kernels.STATUS_OK),
        n_regularized=int(regs[0]),
        min_density=float(rho_mins[0]),
    )
    return tr


def _propagate_many(
    series: CoefficientSeries,
    space: MultiIndexSpace,
    bases: Bases,
    config: ScenarioConfig,
    starts: np.ndarray,
    dt_traj: float,
    record_stride: int,
    t_end: float | None,
):
    if series.cadence <= 0.0:
        raise ValueError("coefficient series must hold at least two snapshots")
    if series.cadence > dt_traj * (1.0 + 1e-9):
        raise ValueError(
            f"series cadence {series.cadence} exceeds trajectory step {dt_traj}"
        )
    t0 = float(series.times[0])
    t_final = float(series.times[-1]) if t_end is None else float(t_end)
    n_steps = max(1, round((t_final - t0) / dt_traj))
    if n_steps % record_stride != 0:
        raise ValueError("record_stride must divide the number of steps")
    if t0 + n_steps * dt_traj > float(series.times[-1]) + 1e-9:
        raise ValueError("trajectory window extends past the coefficient series")
    coeffs = _series_tensor(series, space)
    n_traj = starts.shape[0]
    n_rec = n_steps // record_stride + 1
    # aborted trajectories leave their remaining record slots as NaN
    rec_points = np.full((n_traj, n_rec, 5), np.nan)
    status = np.empty(n_traj, dtype=np.int64)
    regs = np.empty(n_traj, dtype=np.int64)
    rho_mins = np.empty(n_traj)
    args = _kernel_args(config, bases)
    _kernels.propagate_batch(
        coeffs, t0, series.cadence, np.ascontiguousarray(starts), t0, dt_traj,
        n_steps, record_stride,
        args["L"], args["Ly"], args["ky"], args["hbar"], args["m_e"],
        args["m_y"], args["m_z"], args["omega"], args["e_well0"],
        args["mu0"], args["t_center"], args["sigma_mu"], args["meas_enabled"],
        args["budget"], rec_points, status, regs, rho_mins,
    )
    times = t0 + dt_traj * record_stride * np.arange(n_rec)
    return rec_points, status, regs, rho_mins, times


def expected_pointer_displacement(config: ScenarioConfig, from_center: bool = False) -> float:
    """(E1 - E0) * integral of mu(t) over the run, the excited-branch shift.

    ``from_center`` integrates from t0 instead of 0 (half-window variant);
    both are logged so the simulated displacement can arbitrate.
    """
    if not config.measurement_enabled:
        return 0.0
    gap = config.well_energy(1) - config.well_energy(0)
    s = config.meas_width
    t0 = config.meas_center_time
    T = config.sim_duration
    lower = t0 if from_center else 0.0
    integral = (
        config.meas_strength
        * s
        * math.sqrt(math.pi)
        * (erf((T - t0) / (2.0 * s)) - erf((lower - t0) / (2.0 * s)))
    )
    return float(gap * integral)


def classify_branches(ensemble: Ensemble) -> None:
    """Assign Y/Z/UNRESOLVED labels from the final pointer displacements.

    The threshold is half the expected excited-branch displacement: ground
    and excited pointer displacements concentrate near 0 and the full shift,
    so the midpoint separates them with a wide margin.
    """
    tau = ensemble.branch_threshold
    for tr in ensemble.trajectories:
        if tr.aborted:
            continue
        dy = abs(tr.displacement("y"))
        dz = abs(tr.displacement("z"))
        if dy > tau and dz <= tau:
            tr.branch = BRANCH_Y
        elif dz > tau and dy <= tau:
            tr.branch = BRANCH_Z
        else:
            tr.branch = BRANCH_UNRESOLVED


def run_ensemble(
    config: ScenarioConfig,
    series: CoefficientSeries,
    space: MultiIndexSpace,
    bases: Bases,
    state0: CoefficientState,
    n: int,
    record_stride: int = 1,
    max_abort_fraction: float = 0.05,
) -> Ensemble:
    """Sample, propagate and classify n trajectories; deterministic in
    (config, rng_seed) regardless of thread count.

    Thread count is capped by the QEDBOHM_THREADS environment variable.
    Raises RuntimeError when more than ``max_abort_fraction`` of the
    trajectories abort.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    threads = os.environ.get("QEDBOHM_THREADS")
    if threads:
        import numba

        numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))
    starts = sample_initial(state0, space, bases, n, config.rng_seed)
    seeds = trajectory_seeds(config.rng_seed, n)
    rec_points, status, regs, rho_mins, times = _propagate_many(
        series, space, bases, config, starts, config.dt_traj, record_stride, None
    )
    trajectories = []
    for i in range(n):
        trajectories.append(
            Trajectory(
                seed=int(seeds[i]),
                times=times,
                points=rec_points[i],
                aborted=bool(status[i] != _kernels.STATUS_OK),
                n_regularized=int(regs[i]),
                min_density=float(rho_mins[i]),
            )
        )
    full = expected_pointer_displacement(config, from_center=False)
    ens = Ensemble(
        trajectories=trajectories,
        config_hash=config_digest(config),
        master_seed=config.rng_seed,
        branch_threshold=0.5 * abs(full),
        expected_displacement_full=full,
        expected_displacement_half=expected_pointer_displacement(config, from_center=True),
    )
    if config.measurement_enabled and config.meas_strength > 0.0:
        classify_branches(ens)
    counts = ens.counts()
    if counts["n_aborted"] > max_abort_fraction * n:
        raise RuntimeError(
            f"{counts['n_aborted']} of {n} trajectories aborted "
            f"(> {max_abort_fraction:.0%})"
        )
    return ens


# --- equivariance -------------------------------------------------------------


def ks_statistic(samples: np.ndarray, cdf_edges: np.ndarray, cdf_values: np.ndarray) -> float:
    """One-sample Kolmogorov-Smirnov sup distance against a tabulated CDF."""
    xs = np.sort(np.asarray(samples, dtype=float))
    n = xs.size
    f = np.interp(xs, cdf_edges, cdf_values)
    upper = np.max(np.arange(1, n + 1) / n - f)
    lower = np.max(f - np.arange(0, n) / n)
    return float(max(upper, lower))


def equivariance_check(
    ensemble: Ensemble,
    state: CoefficientState,
    space: MultiIndexSpace,
    bases: Bases,
    coordinate: str,
) -> tuple[float, float, bool]:
    """KS distance between the trajectory marginal and |Phi(t)|^2's marginal.

    Returns (statistic, 5% critical value, passed).  The ensemble must hold
    a record slot at the state's time.
    """
    idx = int(np.argmin(np.abs(ensemble.times - state.t)))
    if abs(ensemble.times[idx] - state.t) > 1e-6:
        raise ValueError(f"ensemble holds no record at t = {state.t}")
    cols = {"x1": 0, "x2": 1, "q": 2, "y": 3, "z": 4}
    samples = ensemble.positions_at(idx)[:, cols[coordinate]]
    edges = _coordinate_grids(space, bases)[coordinate]
    cdf = _cdf_table(state, space, bases, coordinate, edges)
    stat = ks_statistic(samples, edges, cdf)
    critical = KS_CRITICAL_5PCT / math.sqrt(samples.size)
    return stat, critical, stat < critical
