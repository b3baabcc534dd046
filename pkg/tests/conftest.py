"""Shared fixtures: scenario configs and the expensive evolved series."""

from __future__ import annotations

import dataclasses

import pytest

from qedbohm import bohmian
from qedbohm.basis import make_bases, pointer_packet
from qedbohm.cli import scenario_dir
from qedbohm.config import load_scenario, rabi_estimate
from qedbohm.evolution import evolve, initial_state
from qedbohm.hamiltonian import assemble, build_space, mu_of_t


@pytest.fixture(scope="session")
def unmeasured_config():
    return load_scenario(scenario_dir() / "unmeasured.scn")


@pytest.fixture(scope="session")
def measured_config():
    return load_scenario(scenario_dir() / "measured.scn")


@dataclasses.dataclass
class Run:
    config: object
    space: object
    bases: object
    terms: object
    state0: object
    series: object
    rabi_omega: float
    rabi_period: float


def _run(config) -> Run:
    bases = make_bases(config)
    space = build_space(config)
    terms = assemble(config, space, bases)
    packets = None
    if config.measurement_enabled:
        packets = pointer_packet(bases.pointer, config.pointer_packet_width_modes)
    state0 = initial_state(space, bases, "001", packets, packets)
    stride = max(1, round(config.dt_traj / config.dt_coeff))
    series = evolve(
        terms, space, state0, config.sim_duration, config.dt_coeff,
        lambda t: mu_of_t(config, t), snapshot_stride=stride,
    )
    omega_r, period_r = rabi_estimate(config)
    return Run(config, space, bases, terms, state0, series, omega_r, period_r)


@pytest.fixture(scope="session")
def unmeasured_run(unmeasured_config) -> Run:
    """Four Rabi periods of the pointerless reference scenario."""
    return _run(unmeasured_config)


@pytest.fixture(scope="session")
def measured_run(measured_config) -> Run:
    """The 3528-dimensional measured scenario up to just past the window."""
    return _run(measured_config)


@pytest.fixture(scope="session")
def measured_mini_ensemble(measured_run) -> bohmian.Ensemble:
    """Sixteen trajectories of the measured scenario (exemplar source)."""
    cfg = dataclasses.replace(measured_run.config, n_trajectories=16)
    return bohmian.run_ensemble(
        cfg, measured_run.series, measured_run.space, measured_run.bases,
        measured_run.state0, 16, record_stride=10,
    )
