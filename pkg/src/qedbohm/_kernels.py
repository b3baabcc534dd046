"""Numba kernels for trajectory integration.

These duplicate the spectral field evaluation of `wavefield` in flat,
allocation-free form so that ensembles of thousands of trajectories run at
native speed.  A cross-check test asserts the kernel velocity agrees with
the pure-Python route to near machine precision.

Trajectories are integrated in lockstep time but are fully independent;
the parallel driver assigns one prange iteration per trajectory, so results
are bit-identical for any thread count.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

# status codes for propagate_one
STATUS_OK = 0
STATUS_LEFT_DOMAIN = 1

MAX_HALVINGS = 8
NODE_EPS_REL = 1e-12


@njit(cache=True)
def _fill_well(x, L, amp, vals, dvals):
    n = vals.shape[0]
    for i in range(n):
        k = (i + 1) * math.pi / L
        vals[i] = amp * math.sin(k * x)
        dvals[i] = amp * k * math.cos(k * x)


@njit(cache=True)
def _fill_osc(q, h, vals, dvals):
    nq = vals.shape[0]
    h[0] = 0.7511255444649425 * math.exp(-0.5 * q * q)  # pi**-0.25
    if nq >= 1:
        h[1] = math.sqrt(2.0) * q * h[0]
    for m in range(1, nq):
        h[m + 1] = q * math.sqrt(2.0 / (m + 1)) * h[m] - math.sqrt(m / (m + 1)) * h[m - 1]
    for m in range(nq):
        vals[m] = h[m]
        lower = math.sqrt(m / 2.0) * h[m - 1] if m >= 1 else 0.0
        dvals[m] = lower - math.sqrt((m + 1) / 2.0) * h[m + 1]


@njit(cache=True)
def _fill_pointer(y, ky, amp, vals, dvals):
    n = ky.shape[0]
    for i in range(n):
        c = math.cos(ky[i] * y)
        s = math.sin(ky[i] * y)
        vals[i] = complex(amp * c, amp * s)
        dvals[i] = complex(-amp * ky[i] * s, amp * ky[i] * c)


@njit(cache=True)
def _interp_coeffs(coeffs, tc0, dtc, t, cw):
    """Linear interpolation of the snapshot series into the scratch tensor."""
    n_snap = coeffs.shape[0]
    pos = (t - tc0) / dtc
    j = int(math.floor(pos))
    if j < 0:
        j = 0
    if j > n_snap - 2:
        j = n_snap - 2
    w = pos - j
    if w < 0.0:
        w = 0.0
    if w > 1.0:
        w = 1.0
    a = coeffs[j]
    b = coeffs[j + 1]
    flat_a = a.reshape(-1)
    flat_b = b.reshape(-1)
    flat_c = cw.reshape(-1)
    for i in range(flat_a.shape[0]):
        flat_c[i] = (1.0 - w) * flat_a[i] + w * flat_b[i]


@njit(cache=True)
def _eval_fields(cw, f1, f1d, f2, f2d, fq, fqd, fy, fyd, fz, fzd, u, uy, uz):
    """Phi and the seven first/mixed derivatives needed by the velocities."""
    ne, ne2, nq, nl, ns = cw.shape
    for n in range(ne):
        for m in range(ne2):
            for k in range(nq):
                acc = complex(0.0, 0.0)
                accy = complex(0.0, 0.0)
                accz = complex(0.0, 0.0)
                for l in range(nl):
                    sz = complex(0.0, 0.0)
                    szd = complex(0.0, 0.0)
                    for s in range(ns):
                        cval = cw[n, m, k, l, s]
                        sz += cval * fz[s]
                        szd += cval * fzd[s]
                    acc += sz * fy[l]
                    accy += sz * fyd[l]
                    accz += szd * fy[l]
                u[n, m, k] = acc
                uy[n, m, k] = accy
                uz[n, m, k] = accz
    phi = complex(0.0, 0.0)
    dx1 = complex(0.0, 0.0)
    dx2 = complex(0.0, 0.0)
    dq = complex(0.0, 0.0)
    dy = complex(0.0, 0.0)
    dz = complex(0.0, 0.0)
    dyx1 = complex(0.0, 0.0)
    dzx2 = complex(0.0, 0.0)
    for n in range(ne):
        h0 = complex(0.0, 0.0)
        h2 = complex(0.0, 0.0)
        hq = complex(0.0, 0.0)
        hy = complex(0.0, 0.0)
        hz0 = complex(0.0, 0.0)
        hz2 = complex(0.0, 0.0)
        for m in range(ne2):
            w = complex(0.0, 0.0)
            wq = complex(0.0, 0.0)
            wy = complex(0.0, 0.0)
            wz = complex(0.0, 0.0)
            for k in range(nq):
                w += u[n, m, k] * fq[k]
                wq += u[n, m, k] * fqd[k]
                wy += uy[n, m, k] * fq[k]
                wz += uz[n, m, k] * fq[k]
            h0 += w * f2[m]
            h2 += w * f2d[m]
            hq += wq * f2[m]
            hy += wy * f2[m]
            hz0 += wz * f2[m]
            hz2 += wz * f2d[m]
        phi += h0 * f1[n]
        dx1 += h0 * f1d[n]
        dx2 += h2 * f1[n]
        dq += hq * f1[n]
        dy += hy * f1[n]
        dyx1 += hy * f1d[n]
        dz += hz0 * f1[n]
        dzx2 += hz2 * f1[n]
    return phi, dx1, dx2, dq, dy, dz, dyx1, dzx2


@njit(cache=True)
def _mu_at(t, mu0, t_center, sigma_mu, enabled):
    if not enabled or mu0 == 0.0:
        return 0.0
    arg = (t - t_center) / (2.0 * sigma_mu)
    return mu0 * math.exp(-arg * arg)


@njit(cache=True)
def _velocity(
    coeffs, tc0, dtc, point, t,
    L, Ly, ky, hbar, m_e, m_y, m_z, omega, e_well0,
    mu0, t_center, sigma_mu, meas_enabled,
    eps_node,
    cw, f1, f1d, f2, f2d, fqh, fq, fqd, fy, fyd, fz, fzd, u, uy, uz, vel,
):
    """Fill vel[0:5] with the guidance velocities at (point, t); returns rho.

    rho below eps_node is clamped in the denominators (the caller decides
    whether to retry the step at finer resolution).
    """
    _interp_coeffs(coeffs, tc0, dtc, t, cw)
    amp_x = math.sqrt(2.0 / L)
    amp_y = 1.0 / math.sqrt(2.0 * Ly)
    _fill_well(point[0], L, amp_x, f1, f1d)
    _fill_well(point[1], L, amp_x, f2, f2d)
    _fill_osc(point[2], fqh, fq, fqd)
    _fill_pointer(point[3], ky, amp_y, fy, fyd)
    _fill_pointer(point[4], ky, amp_y, fz, fzd)
    phi, dx1, dx2, dq, dy, dz, dyx1, dzx2 = _eval_fields(
        cw, f1, f1d, f2, f2d, fq, fqd, fy, fyd, fz, fzd, u, uy, uz
    )
    rho = phi.real * phi.real + phi.imag * phi.imag
    rho_eff = rho if rho > eps_node else eps_node
    mu = _mu_at(t, mu0, t_center, sigma_mu, meas_enabled)
    kappa = hbar * hbar / (2.0 * m_e)

    im_x1 = phi.real * dx1.imag - phi.imag * dx1.real
    im_x2 = phi.real * dx2.imag - phi.imag * dx2.real
    im_q = phi.real * dq.imag - phi.imag * dq.real
    im_y = phi.real * dy.imag - phi.imag * dy.real
    im_z = phi.real * dz.imag - phi.imag * dz.real

    j_x1 = (hbar / m_e) * im_x1
    j_x2 = (hbar / m_e) * im_x2
    j_y = (hbar / m_y) * im_y
    j_z = (hbar / m_z) * im_z
    if mu != 0.0:
        re_yx1 = phi.real * dyx1.real + phi.imag * dyx1.imag
        re_zx2 = phi.real * dzx2.real + phi.imag * dzx2.imag
        j_x1 -= mu * kappa * 2.0 * re_yx1
        j_x2 -= mu * kappa * 2.0 * re_zx2
        j_y += mu * kappa * (dx1.real * dx1.real + dx1.imag * dx1.imag)
        j_z += mu * kappa * (dx2.real * dx2.real + dx2.imag * dx2.imag)

    vel[0] = j_x1 / rho_eff
    vel[1] = j_x2 / rho_eff
    vel[2] = omega * im_q / rho_eff
    # the -E0 drift of the von Neumann coupling mu P (K - E0) is a plain
    # velocity offset, not a current divided by rho
    vel[3] = j_y / rho_eff - mu * e_well0
    vel[4] = j_z / rho_eff - mu * e_well0
    return rho


@njit(cache=True)
def _rk4_substep(
    coeffs, tc0, dtc, point, t, h,
    L, Ly, ky, hbar, m_e, m_y, m_z, omega, e_well0,
    mu0, t_center, sigma_mu, meas_enabled, eps_node,
    cw, f1, f1d, f2, f2d, fqh, fq, fqd, fy, fyd, fz, fzd, u, uy, uz,
    k1, k2, k3, k4, tmp, out, budget,
):
    """One RK4 step of length h.

    Returns (min stage rho, rho at the start point, within_budget): the last
    is False when any stage velocity would move a coordinate further than
    its per-step displacement budget, i.e. the step is too coarse to resolve
    the local flow (node swing-bys).
    """
    rho_first = _velocity(
        coeffs, tc0, dtc, point, t,
        L, Ly, ky, hbar, m_e, m_y, m_z, omega, e_well0,
        mu0, t_center, sigma_mu, meas_enabled, eps_node,
        cw, f1, f1d, f2, f2d, fqh, fq, fqd, fy, fyd, fz, fzd, u, uy, uz, k1,
    )
    rho_min = rho_first
    for i in range(5):
        tmp[i] = point[i] + 0.5 * h * k1[i]
    rho = _velocity(
        coeffs, tc0, dtc, tmp, t + 0.5 * h,
        L, Ly, ky, hbar, m_e, m_y, m_z, omega, e_well0,
        mu0, t_center, sigma_mu, meas_enabled, eps_node,
        cw, f1, f1d, f2, f2d, fqh, fq, fqd, fy, fyd, fz, fzd, u, uy, uz, k2,
    )
    rho_min = min(rho_min, rho)
    for i in range(5):
        tmp[i] = point[i] + 0.5 * h * k2[i]
    rho = _velocity(
        coeffs, tc0, dtc, tmp, t + 0.5 * h,
        L, Ly, ky, hbar, m_e, m_y, m_z, omega, e_well0,
        mu0, t_center, sigma_mu, meas_enabled, eps_node,
        cw, f1, f1d, f2, f2d, fqh, fq, fqd, fy, fyd, fz, fzd, u, uy, uz, k3,
    )
    rho_min = min(rho_min, rho)
    for i in range(5):
        tmp[i] = point[i] + h * k3[i]
    rho = _velocity(
        coeffs, tc0, dtc, tmp, t + h,
        L, Ly, ky, hbar, m_e, m_y, m_z, omega, e_well0,
        mu0, t_center, sigma_mu, meas_enabled, eps_node,
        cw, f1, f1d, f2, f2d, fqh, fq, fqd, fy, fyd, fz, fzd, u, uy, uz, k4,
    )
    rho_min = min(rho_min, rho)
    within_budget = True
    habs = abs(h)
    for i in range(5):
        vmax = max(abs(k1[i]), abs(k2[i]), abs(k3[i]), abs(k4[i]))
        if vmax * habs > budget[i]:
            within_budget = False
        out[i] = point[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return rho_min, rho_first, within_budget


@njit(cache=True)
def _propagate_one(
    coeffs, tc0, dtc, start, t_start, dt, n_steps, rec_stride,
    L, Ly, ky, hbar, m_e, m_y, m_z, omega, e_well0,
    mu0, t_center, sigma_mu, meas_enabled, budget,
    rec_points,
):
    """Integrate one trajectory; returns (status, n_regularized, rho_min_seen).

    Node handling: when any RK4 stage sees rho below 1e-12 of the running
    maximum, exceeds a per-step displacement budget, or leaves the well, the
    step is retried with up to 2^8 substeps; at the deepest level the
    clamped velocities are accepted and the event is counted.
    """
    ne = coeffs.shape[1]
    ne2 = coeffs.shape[2]
    nq = coeffs.shape[3]
    nl = coeffs.shape[4]
    ns = coeffs.shape[5]

    cw = np.empty((ne, ne2, nq, nl, ns), dtype=np.complex128)
    f1 = np.empty(ne)
    f1d = np.empty(ne)
    f2 = np.empty(ne2)
    f2d = np.empty(ne2)
    fqh = np.empty(nq + 1)
    fq = np.empty(nq)
    fqd = np.empty(nq)
    fy = np.empty(nl, dtype=np.complex128)
    fyd = np.empty(nl, dtype=np.complex128)
    fz = np.empty(ns, dtype=np.complex128)
    fzd = np.empty(ns, dtype=np.complex128)
    u = np.empty((ne, ne2, nq), dtype=np.complex128)
    uy = np.empty((ne, ne2, nq), dtype=np.complex128)
    uz = np.empty((ne, ne2, nq), dtype=np.complex128)
    k1 = np.empty(5)
    k2 = np.empty(5)
    k3 = np.empty(5)
    k4 = np.empty(5)
    tmp = np.empty(5)
    point = np.empty(5)
    cand = np.empty(5)
    sub_point = np.empty(5)

    for i in range(5):
        point[i] = start[i]

    # reference density for the node floor
    rho_max = _velocity(
        coeffs, tc0, dtc, point, t_start,
        L, Ly, ky, hbar, m_e, m_y, m_z, omega, e_well0,
        mu0, t_center, sigma_mu, meas_enabled, 0.0,
        cw, f1, f1d, f2, f2d, fqh, fq, fqd, fy, fyd, fz, fzd, u, uy, uz, k1,
    )
    rho_min_seen = rho_max
    n_regularized = 0
    rec_points[0, :] = point[:]
    rec_slot = 1

    for step in range(n_steps):
        t = t_start + step * dt
        accepted = False
        for level in range(MAX_HALVINGS + 1):
            n_sub = 1 << level
            hs = dt / n_sub
            eps_node = NODE_EPS_REL * rho_max
            for i in range(5):
                sub_point[i] = point[i]
            ok = True
            clamp_hit = False
            step_rho_min = rho_max
            step_rho_start_max = 0.0
            for sub in range(n_sub):
                ts = t + sub * hs
                rho_min, rho_start, within_budget = _rk4_substep(
                    coeffs, tc0, dtc, sub_point, ts, hs,
                    L, Ly, ky, hbar, m_e, m_y, m_z, omega, e_well0,
                    mu0, t_center, sigma_mu, meas_enabled, eps_node,
                    cw, f1, f1d, f2, f2d, fqh, fq, fqd, fy, fyd, fz, fzd,
                    u, uy, uz, k1, k2, k3, k4, tmp, cand, budget,
                )
                if rho_min < eps_node or not within_budget:
                    if level < MAX_HALVINGS:
                        ok = False
                        break
                    # deepest level: accept the clamped/under-resolved step
                    clamp_hit = True
                if not (0.0 < cand[0] < L and 0.0 < cand[1] < L):
                    if level < MAX_HALVINGS:
                        ok = False
                        break
                    return STATUS_LEFT_DOMAIN, n_regularized, min(rho_min_seen, rho_min)
                if rho_min < step_rho_min:
                    step_rho_min = rho_min
                if rho_start > step_rho_start_max:
                    step_rho_start_max = rho_start
                for i in range(5):
                    sub_point[i] = cand[i]
            if ok:
                if clamp_hit:
                    n_regularized += 1
                if step_rho_min < rho_min_seen:
                    rho_min_seen = step_rho_min
                if step_rho_start_max > rho_max:
                    rho_max = step_rho_start_max
                for i in range(5):
                    point[i] = sub_point[i]
                accepted = True
                break
        if not accepted:
            return STATUS_LEFT_DOMAIN, n_regularized, rho_min_seen
        if (step + 1) % rec_stride == 0:
            rec_points[rec_slot, :] = point[:]
            rec_slot += 1
    return STATUS_OK, n_regularized, rho_min_seen


@njit(cache=True, parallel=True)
def propagate_batch(
    coeffs, tc0, dtc, starts, t_start, dt, n_steps, rec_stride,
    L, Ly, ky, hbar, m_e, m_y, m_z, omega, e_well0,
    mu0, t_center, sigma_mu, meas_enabled, budget,
    rec_points, status, reg_counts, rho_mins,
):
    """Drive independent trajectories in parallel (one prange lane each)."""
    n_traj = starts.shape[0]
    for i in prange(n_traj):
        st, reg, rmin = _propagate_one(
            coeffs, tc0, dtc, starts[i], t_start, dt, n_steps, rec_stride,
            L, Ly, ky, hbar, m_e, m_y, m_z, omega, e_well0,
            mu0, t_center, sigma_mu, meas_enabled, budget,
            rec_points[i],
        )
        status[i] = st
        reg_counts[i] = reg
        rho_mins[i] = rmin


@njit(cache=True)
def velocity_single(
    coeffs, tc0, dtc, point, t,
    L, Ly, ky, hbar, m_e, m_y, m_z, omega, e_well0,
    mu0, t_center, sigma_mu, meas_enabled, eps_node,
):
    """Single-point kernel velocity (cross-check entry point)."""
    ne = coeffs.shape[1]
    ne2 = coeffs.shape[2]
    nq = coeffs.shape[3]
    nl = coeffs.shape[4]
    ns = coeffs.shape[5]
    cw = np.empty((ne, ne2, nq, nl, ns), dtype=np.complex128)
    f1 = np.empty(ne)
    f1d = np.empty(ne)
    f2 = np.empty(ne2)
    f2d = np.empty(ne2)
    fqh = np.empty(nq + 1)
    fq = np.empty(nq)
    fqd = np.empty(nq)
    fy = np.empty(nl, dtype=np.complex128)
    fyd = np.empty(nl, dtype=np.complex128)
    fz = np.empty(ns, dtype=np.complex128)
    fzd = np.empty(ns, dtype=np.complex128)
    u = np.empty((ne, ne2, nq), dtype=np.complex128)
    uy = np.empty((ne, ne2, nq), dtype=np.complex128)
    uz = np.empty((ne, ne2, nq), dtype=np.complex128)
    vel = np.empty(5)
    rho = _velocity(
        coeffs, tc0, dtc, point, t,
        L, Ly, ky, hbar, m_e, m_y, m_z, omega, e_well0,
        mu0, t_center, sigma_mu, meas_enabled, eps_node,
        cw, f1, f1d, f2, f2d, fqh, fq, fqd, fy, fyd, fz, fzd, u, uy, uz, vel,
    )
    return vel, rho
