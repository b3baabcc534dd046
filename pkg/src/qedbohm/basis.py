"""Analytic eigenbases: infinite well, harmonic oscillator, pointer plane waves.

All eigenfunctions, derivatives and matrix elements are closed-form; no
grids are involved.  The quadrature checks against these live in the test
suite and in the verify battery, not here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .config import UNITS


@dataclass(frozen=True)
class WellBasis:
    """Infinite square well on [0, L]; eigenfunctions sqrt(2/L) sin((n+1) pi x / L)."""

    length: float       # nm
    mass: float         # eV fs^2 / nm^2
    n_levels: int

    def energy(self, n: int) -> float:
        self._check(n)
        return ((n + 1) * math.pi * UNITS.hbar) ** 2 / (2.0 * self.mass * self.length**2)

    def energies(self) -> np.ndarray:
        return np.array([self.energy(n) for n in range(self.n_levels)])

    def _check(self, n: int) -> None:
        if not 0 <= n < self.n_levels:
            raise IndexError(f"well level {n} outside [0, {self.n_levels})")


def well_value(basis: WellBasis, n: int, x: float) -> float:
    """phi_n(x); zero outside (0, L)."""
    basis._check(n)
    L = basis.length
    if x <= 0.0 or x >= L:
        return 0.0
    return math.sqrt(2.0 / L) * math.sin((n + 1) * math.pi * x / L)


def well_derivative(basis: WellBasis, n: int, x: float) -> float:
    basis._check(n)
    L = basis.length
    if x <= 0.0 or x >= L:
        return 0.0
    k = (n + 1) * math.pi / L
    return math.sqrt(2.0 / L) * k * math.cos(k * x)


def well_second_derivative(basis: WellBasis, n: int, x: float) -> float:
    # phi'' = -k^2 phi inside the well
    k = (n + 1) * math.pi / basis.length
    return -(k**2) * well_value(basis, n, x)


def well_dipole(basis: WellBasis, n: int, n2: int) -> float:
    """<n| x - L/2 |n2> in nm, with the well origin shifted to its center.

    The centered convention makes every diagonal element exactly zero; the
    off-diagonal closed form is -8 L p q / (pi^2 (p^2 - q^2)^2) for
    p = n+1, q = n2+1 of opposite parity.
    """
    basis._check(n)
    basis._check(n2)
    if n == n2:
        return 0.0
    p, q = n + 1, n2 + 1
    if (p - q) % 2 == 0:
        return 0.0
    return -8.0 * basis.length * p * q / (math.pi**2 * (p * p - q * q) ** 2)


@dataclass(frozen=True)
class OscillatorBasis:
    """Harmonic oscillator in the dimensionless mode coordinate q."""

    omega: float        # rad/fs
    n_levels: int

    def energy(self, m: int) -> float:
        self._check(m)
        return UNITS.hbar * self.omega * (m + 0.5)

    def energies(self) -> np.ndarray:
        return np.array([self.energy(m) for m in range(self.n_levels)])

    def _check(self, m: int) -> None:
        if not 0 <= m < self.n_levels:
            raise IndexError(f"oscillator level {m} outside [0, {self.n_levels})")


def _hermite_functions(n_max: int, q: float) -> np.ndarray:
    """Normalized Hermite functions h_0..h_{n_max} at q by upward recurrence.

    h_{m+1} = q sqrt(2/(m+1)) h_m - sqrt(m/(m+1)) h_{m-1}; stable because the
    Gaussian is folded in from the start.
    """
    out = np.empty(n_max + 1)
    out[0] = math.pi**-0.25 * math.exp(-0.5 * q * q)
    if n_max >= 1:
        out[1] = math.sqrt(2.0) * q * out[0]
    for m in range(1, n_max):
        out[m + 1] = q * math.sqrt(2.0 / (m + 1)) * out[m] - math.sqrt(m / (m + 1)) * out[m - 1]
    return out


def oscillator_value(basis: OscillatorBasis, m: int, q: float) -> float:
    basis._check(m)
    return _hermite_functions(m, q)[m]


def oscillator_derivative(basis: OscillatorBasis, m: int, q: float) -> float:
    """d psi_m / dq via the ladder identity sqrt(m/2) psi_{m-1} - sqrt((m+1)/2) psi_{m+1}."""
    basis._check(m)
    h = _hermite_functions(m + 1, q)
    lower = math.sqrt(m / 2.0) * h[m - 1] if m >= 1 else 0.0
    return lower - math.sqrt((m + 1) / 2.0) * h[m + 1]


def oscillator_second_derivative(basis: OscillatorBasis, m: int, q: float) -> float:
    # psi'' = (q^2 - (2m+1)) psi from the oscillator ODE
    return (q * q - (2 * m + 1)) * oscillator_value(basis, m, q)


def oscillator_q_element(basis: OscillatorBasis, k: int, k2: int) -> float:
    """<k|q|k2> = sqrt(max(k,k2)/2) on adjacent levels, zero otherwise."""
    basis._check(k)
    basis._check(k2)
    if abs(k - k2) != 1:
        return 0.0
    return math.sqrt(max(k, k2) / 2.0)


@dataclass(frozen=True)
class PointerBasis:
    """Travelling plane waves exp(i pi l y / L) / sqrt(2 L), l = -trunc..trunc.

    The wavenumber spacing pi/L makes the natural period 2L, so the basis is
    taken orthonormal on [-L, L).  Momentum eigenvalues are hbar pi l / L.
    """

    box_length: float   # L_y (= L_z) in nm
    truncation: int     # script-L; 2*truncation + 1 modes
    mass: float         # eV fs^2 / nm^2

    @property
    def n_modes(self) -> int:
        return 2 * self.truncation + 1

    def mode_numbers(self) -> np.ndarray:
        return np.arange(-self.truncation, self.truncation + 1)

    def momentum(self, l: int) -> float:
        self._check(l)
        return UNITS.hbar * math.pi * l / self.box_length

    def energy(self, l: int) -> float:
        return self.momentum(l) ** 2 / (2.0 * self.mass)

    def energies(self) -> np.ndarray:
        return np.array([self.energy(l) for l in self.mode_numbers()])

    def _check(self, l: int) -> None:
        if abs(l) > self.truncation:
            raise IndexError(f"pointer mode {l} outside [-{self.truncation}, {self.truncation}]")


def pointer_value(basis: PointerBasis, l: int, y: float) -> complex:
    basis._check(l)
    k = math.pi * l / basis.box_length
    return complex(math.cos(k * y), math.sin(k * y)) / math.sqrt(2.0 * basis.box_length)


def pointer_derivative(basis: PointerBasis, l: int, y: float) -> complex:
    k = math.pi * l / basis.box_length
    return 1j * k * pointer_value(basis, l, y)


def pointer_packet(basis: PointerBasis, sigma_modes: float, center_mode: int = 0) -> np.ndarray:
    """Gaussian mode coefficients c_l = N exp(-(l - l0)^2 / (4 sigma_k^2)).

    Normalized so sum |c_l|^2 = 1; the induced spatial packet has width
    sigma_0 ~ L / (2 pi sigma_k).  A sigma so small that one mode carries
    >99% of the weight trips a degeneracy warning (the packet would fill the
    box instead of localizing).
    """
    import warnings

    if sigma_modes <= 0.0:
        raise ValueError(f"sigma_modes must be positive, got {sigma_modes}")
    ls = basis.mode_numbers()
    if abs(center_mode) > basis.truncation:
        raise IndexError(f"center mode {center_mode} outside truncation {basis.truncation}")
    c = np.exp(-((ls - center_mode) ** 2) / (4.0 * sigma_modes**2))
    c /= np.linalg.norm(c)
    if np.max(c**2) > 0.99:
        warnings.warn(
            "pointer packet is degenerate: over 99% of the weight sits in a "
            "single mode, the spatial packet will not be localized",
            stacklevel=2,
        )
    return c


def packet_spatial_width(basis: PointerBasis, sigma_modes: float) -> float:
    """Continuum estimate of the packet's spatial standard deviation."""
    return basis.box_length / (2.0 * math.pi * sigma_modes)


# --- ladder-operator equivalence oracle -----------------------------------

def _ladder_product_diag(n_levels: int, dagger_first: bool) -> list[Fraction]:
    """Diagonal of a^dag a (or a a^dag) on the truncated space, exactly.

    Ladder entries are square roots of integers, so products of matching
    entries are exact integers; doing the bookkeeping on the radicands keeps
    the arithmetic in Fraction space with no rounding at all.
    """
    diag = []
    for m in range(n_levels):
        if dagger_first:
            # (a^dag a)|m> = m |m>, the sqrt(m)*sqrt(m) product
            diag.append(Fraction(m))
        else:
            # (a a^dag)|m> = (m+1)|m> unless a^dag pushes past the truncation
            diag.append(Fraction(m + 1) if m + 1 < n_levels else Fraction(0))
    return diag


def ladder_matrices(n_levels: int) -> tuple[np.ndarray, np.ndarray]:
    """Float annihilation/creation matrices with a|m> = sqrt(m)|m-1>."""
    a = np.zeros((n_levels, n_levels))
    for m in range(1, n_levels):
        a[m - 1, m] = math.sqrt(m)
    return a, a.T.copy()


def ladder_hamiltonian_check(basis: OscillatorBasis) -> tuple[float, np.ndarray]:
    """Compare diag(hbar w (m + 1/2)) against hbar w (a^dag a + 1/2).

    The product a^dag a is evaluated in exact rational arithmetic, so the
    returned max deviation is identically zero whenever the algebra holds.
    Also returns the float commutator [a, a^dag], whose diagonal is 1 except
    for the -(M-1) truncation artifact in the top corner.
    """
    n = basis.n_levels
    number_exact = _ladder_product_diag(n, dagger_first=True)
    max_dev = 0.0
    for m in range(n):
        direct = Fraction(2 * m + 1, 2)                 # (m + 1/2)
        ladder = number_exact[m] + Fraction(1, 2)
        max_dev = max(max_dev, abs(float(direct - ladder)) * UNITS.hbar * basis.omega)
    a, adag = ladder_matrices(n)
    commutator = a @ adag - adag @ a
    return max_dev, commutator


@dataclass(frozen=True)
class Bases:
    """The four factor bases of the product space (x2 shares the well basis)."""

    well: WellBasis
    oscillator: OscillatorBasis
    pointer: PointerBasis   # shared by the y and z pointers


def make_bases(config) -> Bases:
    """Construct the factor bases for a validated config.

    With measurement disabled the pointer factors collapse to the single
    l = 0 plane wave, which is constant in space and carries no energy.
    """
    trunc = config.pointer_truncation if config.measurement_enabled else 0
    return Bases(
        well=WellBasis(config.well_length, config.electron_mass, config.n_electron_levels),
        oscillator=OscillatorBasis(config.cavity_omega, config.n_photon_levels),
        pointer=PointerBasis(config.pointer_box_length, trunc, config.pointer_mass),
    )
