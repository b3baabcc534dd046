"""Pointwise evaluation of the five-coordinate wave function and derivatives.

Everything is spectral: Phi(x1, x2, q, y, z) is a sum of coefficient times
per-factor analytic basis values, so derivatives of any order are products
of per-factor closed forms.  A per-coordinate factor cache makes repeated
evaluations that move one coordinate (finite-difference stencils, conditional
slices along a trajectory) cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import Bases
from .config import UNITS
from .evolution import CoefficientState
from .hamiltonian import MultiIndexSpace


class DomainError(ValueError):
    """Configuration point outside the wave function's domain."""


class DegenerateSliceError(RuntimeError):
    """Conditioning on a pointer slice where the wave function vanishes."""


NODE_NORM_FLOOR = 1e-30


@dataclass(frozen=True)
class ConfigPoint:
    """One point of the 5-dimensional configuration space."""

    x1: float   # nm, in (0, L)
    x2: float   # nm, in (0, L)
    q: float    # dimensionless mode amplitude
    y: float    # nm, pointer 1
    z: float    # nm, pointer 2

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.q, self.y, self.z])


@dataclass(frozen=True)
class FieldEval:
    """Phi and the derivative stack needed by velocities and oracles."""

    value: complex
    d_x1: complex
    d_x2: complex
    d_q: complex
    d_y: complex
    d_z: complex
    d2_x1x1: complex
    d2_x2x2: complex
    d2_qq: complex
    d2_yy: complex
    d2_zz: complex
    d2_y_x1: complex      # mixed second derivative, the current term
    d2_z_x2: complex
    d3_y_x1x1: complex    # d/dy d^2/dx1^2, the measurement term of the PDE
    d3_z_x2x2: complex

    @property
    def density(self) -> float:
        return abs(self.value) ** 2


class FieldEvaluator:
    """Caches per-factor basis values keyed by coordinate value."""

    def __init__(self, space: MultiIndexSpace, bases: Bases):
        self.space = space
        self.bases = bases
        ne = space.dims[0]
        self._kx = np.arange(1, ne + 1) * math.pi / bases.well.length
        self._kq_count = space.dims[2]
        ls = bases.pointer.mode_numbers()
        self._ky = math.pi * ls / bases.pointer.box_length
        self._caches: tuple[dict, dict, dict] = ({}, {}, {})  # well, oscillator, pointer

    # -- per-factor stacks (value, first, second derivative) ---------------

    def _well_factors(self, x: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        cache = self._caches[0]
        hit = cache.get(x)
        if hit is not None:
            return hit
        L = self.bases.well.length
        if x <= 0.0 or x >= L:
            raise DomainError(f"x = {x} outside the open well (0, {L})")
        amp = math.sqrt(2.0 / L)
        vals = amp * np.sin(self._kx * x)
        d1 = amp * self._kx * np.cos(self._kx * x)
        d2 = -(self._kx**2) * vals
        out = (vals, d1, d2)
        if len(cache) > 1024:
            cache.clear()
        cache[x] = out
        return out

    def _osc_factors(self, q: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        cache = self._caches[1]
        hit = cache.get(q)
        if hit is not None:
            return hit
        if not math.isfinite(q):
            raise DomainError(f"q = {q} is not finite")
        nq = self._kq_count
        h = np.empty(nq + 1)
        h[0] = math.pi**-0.25 * math.exp(-0.5 * q * q)
        if nq >= 1:
            h[1] = math.sqrt(2.0) * q * h[0]
        for mm in range(1, nq):
            h[mm + 1] = q * math.sqrt(2.0 / (mm + 1)) * h[mm] - math.sqrt(mm / (mm + 1)) * h[mm - 1]
        vals = h[:nq].copy()
        d1 = np.empty(nq)
        for mm in range(nq):
            lower = math.sqrt(mm / 2.0) * h[mm - 1] if mm >= 1 else 0.0
            d1[mm] = lower - math.sqrt((mm + 1) / 2.0) * h[mm + 1]
        d2 = (q * q - (2.0 * np.arange(nq) + 1.0)) * vals
        out = (vals, d1, d2)
        if len(cache) > 1024:
            cache.clear()
        cache[q] = out
        return out

    def _pointer_factors(self, y: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        cache = self._caches[2]
        hit = cache.get(y)
        if hit is not None:
            return hit
        if not math.isfinite(y):
            raise DomainError(f"pointer coordinate {y} is not finite")
        amp = 1.0 / math.sqrt(2.0 * self.bases.pointer.box_length)
        vals = amp * np.exp(1j * self._ky * y)
        d1 = 1j * self._ky * vals
        d2 = -(self._ky**2) * vals
        out = (vals, d1, d2)
        if len(cache) > 1024:
            cache.clear()
        cache[y] = out
        return out

    # -- contractions -------------------------------------------------------

    def evaluate_vector(self, cvec: np.ndarray, p: ConfigPoint) -> FieldEval:
        """Full derivative stack for an arbitrary coefficient vector."""
        C = cvec.reshape(self.space.dims)
        f1, f1d, f1dd = self._well_factors(p.x1)
        f2, f2d, f2dd = self._well_factors(p.x2)
        fq, fqd, fqdd = self._osc_factors(p.q)
        fy, fyd, fydd = self._pointer_factors(p.y)
        fz, fzd, fzdd = self._pointer_factors(p.z)

        # stage the contraction innermost-axis first; reuse partial sums
        t_z = np.tensordot(C, fz, axes=([4], [0]))        # (n,m,k,l)
        t_zd = np.tensordot(C, fzd, axes=([4], [0]))
        t_zdd = np.tensordot(C, fzdd, axes=([4], [0]))

        u = np.tensordot(t_z, fy, axes=([3], [0]))        # (n,m,k)
        u_y = np.tensordot(t_z, fyd, axes=([3], [0]))
        u_yy = np.tensordot(t_z, fydd, axes=([3], [0]))
        u_z = np.tensordot(t_zd, fy, axes=([3], [0]))
        u_zz = np.tensordot(t_zdd, fy, axes=([3], [0]))

        w = u @ fq                                        # (n,m)
        w_q = u @ fqd
        w_qq = u @ fqdd
        w_y = u_y @ fq
        w_yy = u_yy @ fq
        w_z = u_z @ fq
        w_zz = u_zz @ fq

        def close(mat: np.ndarray, g1: np.ndarray, g2: np.ndarray) -> complex:
            return complex(g1 @ mat @ g2)

        return FieldEval(
            value=close(w, f1, f2),
            d_x1=close(w, f1d, f2),
            d_x2=close(w, f1, f2d),
            d_q=close(w_q, f1, f2),
            d_y=close(w_y, f1, f2),
            d_z=close(w_z, f1, f2),
            d2_x1x1=close(w, f1dd, f2),
            d2_x2x2=close(w, f1, f2dd),
            d2_qq=close(w_qq, f1, f2),
            d2_yy=close(w_yy, f1, f2),
            d2_zz=close(w_zz, f1, f2),
            d2_y_x1=close(w_y, f1d, f2),
            d2_z_x2=close(w_z, f1, f2d),
            d3_y_x1x1=close(w_y, f1dd, f2),
            d3_z_x2x2=close(w_z, f1, f2dd),
        )

    def value(self, cvec: np.ndarray, p: ConfigPoint) -> complex:
        C = cvec.reshape(self.space.dims)
        f1 = self._well_factors(p.x1)[0]
        f2 = self._well_factors(p.x2)[0]
        fq = self._osc_factors(p.q)[0]
        fy = self._pointer_factors(p.y)[0]
        fz = self._pointer_factors(p.z)[0]
        t = np.tensordot(C, fz, axes=([4], [0]))
        t = np.tensordot(t, fy, axes=([3], [0]))
        return complex(f1 @ (t @ fq) @ f2)

    def schrodinger_rhs_value(
        self, terms, cvec: np.ndarray, p: ConfigPoint, mu_t: float
    ) -> complex:
        """d Phi / dt at p, from dc/dt = -i H(t) c / hbar (no time differencing)."""
        from .hamiltonian import apply

        cdot = apply(terms, self.space, cvec, mu_t=mu_t) * (-1j / UNITS.hbar)
        return self.value(cdot, p)


def evaluate(
    state: CoefficientState, space: MultiIndexSpace, bases: Bases, p: ConfigPoint
) -> FieldEval:
    """One-shot evaluation; build a FieldEvaluator directly for hot paths."""
    return FieldEvaluator(space, bases).evaluate_vector(state.c, p)


def conditional_coefficients(
    state: CoefficientState,
    space: MultiIndexSpace,
    bases: Bases,
    y_val: float,
    z_val: float,
) -> tuple[np.ndarray, float]:
    """Light-matter coefficients conditioned on pointer values (y, z).

    Returns (unit-normalized (ne, ne, nq) array, pre-normalization norm).
    Conditioning on a slice where the packet vanishes raises
    DegenerateSliceError.
    """
    ev = FieldEvaluator(space, bases)
    fy = ev._pointer_factors(y_val)[0]
    fz = ev._pointer_factors(z_val)[0]
    C = state.c.reshape(space.dims)
    cond = np.tensordot(np.tensordot(C, fz, axes=([4], [0])), fy, axes=([3], [0]))
    raw_norm = float(np.linalg.norm(cond))
    if raw_norm < NODE_NORM_FLOOR:
        raise DegenerateSliceError(
            f"conditional slice at (y={y_val}, z={z_val}) has norm {raw_norm:.3e}"
        )
    return cond / raw_norm, raw_norm


def conditional_energy(cond: np.ndarray, bases: Bases, which: str) -> float:
    """<H_j> of a normalized conditional vector; j in {x1, x2, field}.

    The interaction term is excluded here; conditional_interaction_energy
    reports it as the residual.
    """
    pops = np.abs(cond) ** 2
    if which == "x1":
        return float(np.sum(bases.well.energies() * pops.sum(axis=(1, 2))))
    if which == "x2":
        return float(np.sum(bases.well.energies() * pops.sum(axis=(0, 2))))
    if which == "field":
        return float(np.sum(bases.oscillator.energies() * pops.sum(axis=(0, 1))))
    raise ValueError(f"unknown subsystem {which!r}")


def conditional_interaction_energy(cond: np.ndarray, bases: Bases, alpha: float) -> float:
    """<alpha q (x1 + x2)> for a normalized (ne, ne, nq) conditional vector."""
    from .basis import oscillator_q_element, well_dipole

    ne, ne2, nq = cond.shape
    total = 0.0 + 0.0j
    for k in range(nq):
        for k2 in range(nq):
            qv = oscillator_q_element(bases.oscillator, k, k2)
            if qv == 0.0:
                continue
            for n in range(ne):
                for n2 in range(ne):
                    xv = well_dipole(bases.well, n, n2)
                    if xv != 0.0:
                        total += alpha * xv * qv * np.vdot(cond[n, :, k], cond[n2, :, k2])
            for m in range(ne2):
                for m2 in range(ne2):
                    xv = well_dipole(bases.well, m, m2)
                    if xv != 0.0:
                        total += alpha * xv * qv * np.vdot(cond[:, m, k], cond[:, m2, k2])
    return float(total.real)


_AXIS_BY_NAME = {"x1": 0, "x2": 1, "q": 2, "y": 3, "z": 4}


def marginal_density(
    state: CoefficientState,
    space: MultiIndexSpace,
    bases: Bases,
    coordinate: str,
    grid: np.ndarray,
) -> np.ndarray:
    """|Phi|^2 marginal of one coordinate on a grid (unnormalized).

    Contracts the reduced one-axis density matrix with basis values:
    rho(x) = sum_ab rho_ab f_a(x) f_b*(x).
    """
    axis = _AXIS_BY_NAME.get(coordinate)
    if axis is None:
        raise ValueError(f"unknown coordinate {coordinate!r}")
    C = state.c.reshape(space.dims)
    moved = np.moveaxis(C, axis, 0).reshape(space.dims[axis], -1)
    rho = moved @ moved.conj().T
    ev = FieldEvaluator(space, bases)
    if axis in (0, 1):
        factor = lambda v: ev._well_factors(v)[0].astype(np.complex128)
    elif axis == 2:
        factor = lambda v: ev._osc_factors(v)[0].astype(np.complex128)
    else:
        factor = lambda v: ev._pointer_factors(v)[0]
    out = np.empty(len(grid))
    for i, v in enumerate(grid):
        f = factor(float(v))
        # rho(x) = sum_ab f_a rho_ab f_b^*; conjugating the wrong factor
        # would mirror complex bases (plane waves) through the origin
        out[i] = float(np.real(f @ rho @ np.conj(f)))
    return out


def local_density_rate(
    f: FieldEval, p: ConfigPoint, bases: Bases, alpha: float, mu_t: float
) -> float:
    """d|Phi|^2/dt from the pointwise Schrodinger equation at one point.

    Applies every Hamiltonian term as actual derivatives of the evaluated
    field (well + oscillator kinetics, dipole coupling, pointer kinetics,
    and the von Neumann terms i hbar mu kappa d3 + i hbar mu E0 d1).  This
    is the time derivative that the guidance currents balance exactly; the
    coefficient-space evolution differs from it by the basis-truncation
    transport defect.
    """
    hbar = UNITS.hbar
    m_e = bases.well.mass
    m_y = m_z = bases.pointer.mass
    omega = bases.oscillator.omega
    half_l = 0.5 * bases.well.length
    kappa = hbar * hbar / (2.0 * m_e)
    e0 = bases.well.energy(0)
    h_phi = (
        -(hbar**2) / (2.0 * m_e) * (f.d2_x1x1 + f.d2_x2x2)
        + 0.5 * hbar * omega * (-f.d2_qq + p.q * p.q * f.value)
        + alpha * p.q * ((p.x1 - half_l) + (p.x2 - half_l)) * f.value
        - (hbar**2) / (2.0 * m_y) * f.d2_yy
        - (hbar**2) / (2.0 * m_z) * f.d2_zz
    )
    if mu_t != 0.0:
        h_phi += 1j * hbar * mu_t * (
            kappa * (f.d3_y_x1x1 + f.d3_z_x2x2) + e0 * (f.d_y + f.d_z)
        )
    return float((2.0 / hbar) * (np.conj(f.value) * h_phi).imag)
