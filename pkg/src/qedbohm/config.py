"""Run parameters, unit system, scenario-file parsing and physical sanity checks.

Internal units are eV (energy), fs (time), nm (length) throughout the
package.  With those choices hbar = 0.6582119569 eV fs and the electron
rest mass is derived from the rest energy, so masses come out in
eV fs^2 / nm^2.  Angular frequencies are rad/fs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    """Raised for malformed scenario files or invalid parameter values."""


@dataclass(frozen=True)
class UnitSystem:
    """Fundamental constants in internal units (eV, fs, nm). Never tunable."""

    hbar: float = 0.6582119569              # eV fs (CODATA)
    electron_rest_energy: float = 510998.95  # eV (CODATA)
    c_light: float = 299.792458              # nm/fs (exact)

    @property
    def m0(self) -> float:
        """Free electron mass in eV fs^2 / nm^2."""
        return self.electron_rest_energy / self.c_light**2


UNITS = UnitSystem()

# Keys that parse as integers in scenario files; everything else except
# measurement_enabled is a float.
_INT_KEYS = {
    "n_electron_levels",
    "n_photon_levels",
    "pointer_truncation",
    "n_trajectories",
    "rng_seed",
}
_BOOL_KEYS = {"measurement_enabled"}


@dataclass(frozen=True)
class ScenarioConfig:
    """All physical and numerical parameters of a run.

    Lengths in nm, times in fs, energies in eV, angular frequencies in
    rad/fs.  ``meas_strength`` is the von Neumann coupling mu_0 in
    nm/(eV fs).
    """

    well_length: float                 # L, identical for both wells
    effective_mass_ratio: float        # m_e / m_0
    cavity_omega: float                # omega_c [rad/fs]
    coupling_alpha: float              # alpha [eV/nm]
    n_electron_levels: int             # N per electron
    n_photon_levels: int               # M for the cavity mode
    pointer_truncation: int            # pointer mode cutoff (same for y and z)
    pointer_box_length: float          # L_y = L_z [nm]
    pointer_mass_ratio: float          # m_y / m_e = m_z / m_e
    pointer_packet_width_modes: float  # sigma_k for both pointer packets
    meas_strength: float               # mu_0 [nm/(eV fs)]
    meas_center_time: float            # t_0 [fs]
    meas_width: float                  # sigma_mu [fs]
    sim_duration: float                # T_sim [fs]
    dt_coeff: float                    # coefficient-ODE step [fs]
    dt_traj: float                     # trajectory step / snapshot cadence [fs]
    n_trajectories: int
    rng_seed: int
    measurement_enabled: bool

    # -- derived quantities ------------------------------------------------

    @property
    def electron_mass(self) -> float:
        return self.effective_mass_ratio * UNITS.m0

    @property
    def pointer_mass(self) -> float:
        return self.pointer_mass_ratio * self.electron_mass

    def well_energy(self, n: int) -> float:
        """Infinite-well level E_n = (n+1)^2 pi^2 hbar^2 / (2 m L^2)."""
        return ((n + 1) * math.pi * UNITS.hbar) ** 2 / (
            2.0 * self.electron_mass * self.well_length**2
        )


_FIELD_NAMES = tuple(f.name for f in fields(ScenarioConfig))


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _BOOL_KEYS:
            if raw.lower() in ("true", "false"):
                return raw.lower() == "true"
            raise ValueError(raw)
        if key in _INT_KEYS:
            return int(raw)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"cannot parse value for key '{key}': {raw!r}") from exc


def load_scenario(path: str | Path, overrides: dict[str, str] | None = None) -> ScenarioConfig:
    """Read a ``key = value`` scenario file into a ScenarioConfig.

    Lines starting with ``#`` (or blank) are skipped; inline ``#`` comments
    are stripped.  Unknown keys, duplicate keys, unparsable values and
    missing fields are all hard errors.  ``overrides`` maps field names to
    raw string values and is applied after the file is read.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"scenario file not found: {path}")
    values: dict[str, object] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _FIELD_NAMES:
            raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key '{key}'")
        values[key] = _parse_value(key, raw)
    for key, raw in (overrides or {}).items():
        if key not in _FIELD_NAMES:
            raise ConfigError(f"unknown override key '{key}'")
        values[key] = _parse_value(key, raw)
    missing = [name for name in _FIELD_NAMES if name not in values]
    if missing:
        raise ConfigError(f"{path}: missing keys: {', '.join(missing)}")
    return ScenarioConfig(**values)  # type: ignore[arg-type]


def apply_overrides(config: ScenarioConfig, overrides: dict[str, str]) -> ScenarioConfig:
    """Return a copy of ``config`` with string overrides parsed and applied."""
    parsed = {}
    for key, raw in overrides.items():
        if key not in _FIELD_NAMES:
            raise ConfigError(f"unknown override key '{key}'")
        parsed[key] = _parse_value(key, raw)
    return replace(config, **parsed)


@dataclass
class ValidationReport:
    """Outcome of the consistency checks on a ScenarioConfig."""

    errors: list[str]
    warnings: list[str]
    metrics: dict[str, float]

    @property
    def ok(self) -> bool:
        return not self.errors

    def format(self) -> str:
        lines = []
        for key, val in sorted(self.metrics.items()):
            lines.append(f"{key} = {val:.10g}")
        for msg in self.warnings:
            lines.append(f"WARNING: {msg}")
        for msg in self.errors:
            lines.append(f"ERROR: {msg}")
        return "\n".join(lines)


# Hard-positivity fields: zero or negative values are rejected outright.
_POSITIVE_FIELDS = (
    "well_length",
    "effective_mass_ratio",
    "cavity_omega",
    "coupling_alpha",
    "pointer_box_length",
    "pointer_mass_ratio",
    "pointer_packet_width_modes",
    "meas_width",
    "sim_duration",
    "dt_coeff",
    "dt_traj",
)
# Counts must be >= 1.
_COUNT_FIELDS = ("n_electron_levels", "n_photon_levels", "n_trajectories")


def validate(config: ScenarioConfig) -> ValidationReport:
    """Check positivity, resonance and pointer-stability conditions.

    Non-positive or non-finite parameters are hard errors.  Resonance
    detuning above 1% of hbar*omega_c and stability-hierarchy ratios below
    10 are warnings only.
    """
    errors: list[str] = []
    warnings: list[str] = []
    metrics: dict[str, float] = {}

    for name in _POSITIVE_FIELDS:
        val = getattr(config, name)
        if not math.isfinite(val) or val <= 0.0:
            errors.append(f"{name} must be positive and finite, got {val}")
    for name in _COUNT_FIELDS:
        val = getattr(config, name)
        if val < 1:
            errors.append(f"{name} must be >= 1, got {val}")
    if config.pointer_truncation < 1:
        errors.append(f"pointer_truncation must be >= 1, got {config.pointer_truncation}")
    if not math.isfinite(config.meas_strength) or config.meas_strength < 0.0:
        # mu_0 = 0 is allowed: pointers present but uncoupled.
        errors.append(f"meas_strength must be >= 0 and finite, got {config.meas_strength}")
    if not math.isfinite(config.meas_center_time):
        errors.append(f"meas_center_time must be finite, got {config.meas_center_time}")
    if errors:
        return ValidationReport(errors, warnings, metrics)

    if config.dt_coeff > config.dt_traj * (1.0 + 1e-12):
        errors.append(
            f"dt_coeff ({config.dt_coeff}) must not exceed dt_traj ({config.dt_traj})"
        )
    stride = config.dt_traj / config.dt_coeff
    if abs(stride - round(stride)) > 1e-9 * stride:
        errors.append(
            f"dt_traj ({config.dt_traj}) must be an integer multiple of "
            f"dt_coeff ({config.dt_coeff})"
        )

    # (a) resonance: E_{1,e} - E_{0,e} against hbar*omega_c
    gap = config.well_energy(1) - config.well_energy(0)
    hbar_omega = UNITS.hbar * config.cavity_omega
    detuning = abs(gap - hbar_omega) / hbar_omega
    metrics["well_E0_eV"] = config.well_energy(0)
    metrics["well_gap_eV"] = gap
    metrics["hbar_omega_eV"] = hbar_omega
    metrics["resonance_detuning_rel"] = detuning
    if detuning > 0.01:
        warnings.append(
            f"resonance detuning {detuning:.3%} of hbar*omega_c exceeds 1%; "
            "light and matter will exchange energy inefficiently"
        )

    # (b) pointer packet stability hierarchy
    sigma0 = config.pointer_box_length / (2.0 * math.pi * config.pointer_packet_width_modes)
    m_y = config.pointer_mass
    tau_d = 2.0 * m_y * sigma0**2 / UNITS.hbar
    sigma_t = sigma0 * math.sqrt(1.0 + (UNITS.hbar * config.sim_duration / (2.0 * m_y * sigma0**2)) ** 2)
    diffusion_len = math.sqrt(UNITS.hbar * config.sim_duration / (2.0 * config.electron_mass))
    ratio_box = config.pointer_box_length / sigma_t
    ratio_spread = sigma_t / diffusion_len
    metrics["pointer_sigma0_nm"] = sigma0
    metrics["pointer_sigma_T_nm"] = sigma_t
    metrics["pointer_dispersion_time_fs"] = tau_d
    metrics["hierarchy_ratio_box"] = ratio_box
    metrics["hierarchy_ratio_spread"] = ratio_spread
    if config.measurement_enabled:
        if ratio_box < 10.0:
            warnings.append(
                f"pointer box only {ratio_box:.2f}x wider than the packet; "
                "hierarchy L >> sigma(t) is marginal"
            )
        if ratio_spread < 10.0:
            warnings.append(
                f"packet width only {ratio_spread:.2f}x above the free-spreading "
                "scale sqrt(hbar T / 2 m_e); hierarchy sigma(t) >> spread is marginal"
            )

    return ValidationReport(errors, warnings, metrics)


def rabi_estimate(config: ScenarioConfig) -> tuple[float, float]:
    """Rabi angular frequency and period for the two-electron symmetric case.

    Returns (Omega_R, T_R) with Omega_R = 2*sqrt(2)*(alpha/hbar)*|<0|x|1>|*|<0|q|1>|.
    The overall factor 2*sqrt(2) is calibrated so that T_R = 2*pi/Omega_R is
    the full population-return period of the initial photon state (~115 fs
    for the reference parameters); sqrt(2) of it is the symmetric
    two-electron enhancement, the remaining 2 converts the coupling rate to
    the population oscillation frequency.
    """
    from .basis import WellBasis, OscillatorBasis, well_dipole, oscillator_q_element

    well = WellBasis(config.well_length, config.electron_mass, max(config.n_electron_levels, 2))
    osc = OscillatorBasis(config.cavity_omega, max(config.n_photon_levels, 2))
    dipole = abs(well_dipole(well, 0, 1))
    q01 = abs(oscillator_q_element(osc, 0, 1))
    omega_r = 2.0 * math.sqrt(2.0) * (config.coupling_alpha / UNITS.hbar) * dipole * q01
    return omega_r, 2.0 * math.pi / omega_r


def config_digest(config: ScenarioConfig) -> str:
    """Stable hex digest of every config field, for manifests and ensembles."""
    import hashlib

    parts = [f"{name}={getattr(config, name)!r}" for name in _FIELD_NAMES]
    return hashlib.sha256(";".join(parts).encode()).hexdigest()
