"""Cavity-QED simulator: truncated-basis wave-function evolution of two
quantum-well electrons coupled to one cavity mode, optional von Neumann
measurement pointers, and Bohmian trajectory ensembles on top."""

__version__ = "0.1.0"

from .config import ScenarioConfig, UnitSystem, UNITS, load_scenario, validate, rabi_estimate

__all__ = [
    "ScenarioConfig",
    "UnitSystem",
    "UNITS",
    "load_scenario",
    "validate",
    "rabi_estimate",
    "__version__",
]
