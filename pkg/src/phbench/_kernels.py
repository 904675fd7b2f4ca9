"""Compiled serial-chain dynamics kernels.

All functions operate on packed plain arrays (see dynamics.PackedModel):
    jtype   int64[n]     0 = revolute, 1 = prismatic
    axis    f8[n,3]      joint axis, joint frame
    R0      f8[n,3,3]    fixed rotation parent link frame -> joint frame
    p0      f8[n,3]      fixed translation parent link frame -> joint frame
    mass    f8[n]        link masses
    com     f8[n,3]      link com, link frame
    inertia f8[n,3,3]    rotational inertia about com, link frame

Link i frame coincides with joint i frame after joint motion.  World-frame
recursions throughout; n is small (<= 7) so dense small-matrix work wins
over spatial-algebra bookkeeping.
"""

import numpy as np
from numba import njit

REVOLUTE = 0
PRISMATIC = 1


@njit(cache=True)
def _rot_axis(axis, angle):
    """Rodrigues rotation about a unit axis."""
    c = np.cos(angle)
    s = np.sin(angle)
    x, y, z = axis[0], axis[1], axis[2]
    R = np.empty((3, 3))
    R[0, 0] = c + x * x * (1.0 - c)
    R[0, 1] = x * y * (1.0 - c) - z * s
    R[0, 2] = x * z * (1.0 - c) + y * s
    R[1, 0] = y * x * (1.0 - c) + z * s
    R[1, 1] = c + y * y * (1.0 - c)
    R[1, 2] = y * z * (1.0 - c) - x * s
    R[2, 0] = z * x * (1.0 - c) - y * s
    R[2, 1] = z * y * (1.0 - c) + x * s
    R[2, 2] = c + z * z * (1.0 - c)
    return R


@njit(cache=True)
def _cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(cache=True)
def fk_links(jtype, axis, R0, p0, q):
    """World pose of every link frame plus world joint axes."""
    n = q.shape[0]
    Rw = np.empty((n, 3, 3))
    pw = np.empty((n, 3))
    zw = np.empty((n, 3))
    Rp = np.eye(3)
    pp = np.zeros(3)
    for i in range(n):
        Rpre = Rp @ R0[i]
        ppre = pp + Rp @ p0[i]
        z = Rpre @ axis[i]
        if jtype[i] == REVOLUTE:
            Rw[i] = Rpre @ _rot_axis(axis[i], q[i])
            pw[i] = ppre
        else:
            Rw[i] = Rpre
            pw[i] = ppre + z * q[i]
        zw[i] = z
        Rp = Rw[i]
        pp = pw[i]
    return Rw, pw, zw


@njit(cache=True)
def link_velocities(jtype, axis, R0, p0, q, qd):
    """World pose of link frames plus angular/linear frame-origin velocities."""
    n = q.shape[0]
    Rw, pw, zw = fk_links(jtype, axis, R0, p0, q)
    w = np.empty((n, 3))
    v = np.empty((n, 3))
    wp = np.zeros(3)
    vp = np.zeros(3)
    pp = np.zeros(3)
    for i in range(n):
        if jtype[i] == REVOLUTE:
            r = pw[i] - pp
            vpre = vp + _cross(wp, r)
            w[i] = wp + zw[i] * qd[i]
            v[i] = vpre
        else:
            # joint origin (fixed on parent) then slide along the axis
            o = pw[i] - zw[i] * q[i]
            vpre = vp + _cross(wp, o - pp)
            w[i] = wp
            v[i] = vpre + _cross(wp, zw[i] * q[i]) + zw[i] * qd[i]
        wp = w[i]
        vp = v[i]
        pp = pw[i]
    return Rw, pw, zw, w, v


@njit(cache=True)
def rnea(jtype, axis, R0, p0, mass, com, inertia, gravity, q, qd, qdd):
    """Inverse dynamics: tau = M(q) qdd + C(q,qd) qd + g(q).

    Pass gravity = zeros to drop the gravity term.
    """
    n = q.shape[0]
    Rw = np.empty((n, 3, 3))
    pw = np.empty((n, 3))
    zw = np.empty((n, 3))
    w = np.empty((n, 3))
    dw = np.empty((n, 3))
    a = np.empty((n, 3))
    F = np.empty((n, 3))
    N = np.empty((n, 3))
    rc_all = np.empty((n, 3))

    Rp = np.eye(3)
    pp = np.zeros(3)
    wp = np.zeros(3)
    dwp = np.zeros(3)
    ap = -gravity  # base acceleration trick folds gravity into the sweep
    for i in range(n):
        Rpre = Rp @ R0[i]
        ppre = pp + Rp @ p0[i]
        z = Rpre @ axis[i]
        r = ppre - pp
        apre = ap + _cross(dwp, r) + _cross(wp, _cross(wp, r))
        if jtype[i] == REVOLUTE:
            Rw[i] = Rpre @ _rot_axis(axis[i], q[i])
            pw[i] = ppre
            w[i] = wp + z * qd[i]
            dw[i] = dwp + z * qdd[i] + _cross(wp, z * qd[i])
            a[i] = apre
        else:
            Rw[i] = Rpre
            d = z * q[i]
            pw[i] = ppre + d
            w[i] = wp
            dw[i] = dwp
            a[i] = (apre + _cross(dwp, d) + _cross(wp, _cross(wp, d))
                    + 2.0 * _cross(wp, z * qd[i]) + z * qdd[i])
        zw[i] = z
        rc = Rw[i] @ com[i]
        rc_all[i] = rc
        ac = a[i] + _cross(dw[i], rc) + _cross(w[i], _cross(w[i], rc))
        F[i] = mass[i] * ac
        Iw = Rw[i] @ inertia[i] @ Rw[i].T
        N[i] = Iw @ dw[i] + _cross(w[i], Iw @ w[i])
        Rp = Rw[i]
        pp = pw[i]
        wp = w[i]
        dwp = dw[i]
        ap = a[i]

    tau = np.empty(n)
    f_child = np.zeros(3)
    n_child = np.zeros(3)
    p_child = np.zeros(3)
    for i in range(n - 1, -1, -1):
        ni = N[i] + _cross(rc_all[i], F[i])
        fi = F[i].copy()
        if i < n - 1:
            ni = ni + n_child + _cross(p_child - pw[i], f_child)
            fi = fi + f_child
        if jtype[i] == REVOLUTE:
            tau[i] = zw[i] @ ni
        else:
            tau[i] = zw[i] @ fi
        f_child = fi
        n_child = ni
        p_child = pw[i]
    return tau


@njit(cache=True)
def crba(jtype, axis, R0, p0, mass, com, inertia, q):
    """Joint-space mass matrix via the composite-rigid-body algorithm."""
    n = q.shape[0]
    Rw, pw, zw = fk_links(jtype, axis, R0, p0, q)
    M = np.zeros((n, n))
    I3 = np.eye(3)
    mc = 0.0
    cc = np.zeros(3)
    Ic = np.zeros((3, 3))
    for j in range(n - 1, -1, -1):
        cj = pw[j] + Rw[j] @ com[j]
        Ij = Rw[j] @ inertia[j] @ Rw[j].T
        if j == n - 1:
            mc = mass[j]
            cc = cj
            Ic = Ij
        else:
            mnew = mc + mass[j]
            cnew = (mc * cc + mass[j] * cj) / mnew
            d1 = cc - cnew
            d2 = cj - cnew
            Ic = (Ic + mc * ((d1 @ d1) * I3 - np.outer(d1, d1))
                  + Ij + mass[j] * ((d2 @ d2) * I3 - np.outer(d2, d2)))
            mc = mnew
            cc = cnew
        # wrench of the composite under unit acceleration of joint j
        if jtype[j] == REVOLUTE:
            f = mc * _cross(zw[j], cc - pw[j])
            nm = Ic @ zw[j] + _cross(cc - pw[j], f)
            M[j, j] = zw[j] @ nm
        else:
            f = mc * zw[j]
            nm = _cross(cc - pw[j], f)
            M[j, j] = zw[j] @ f
        for i in range(j - 1, -1, -1):
            if jtype[i] == REVOLUTE:
                ni = nm + _cross(pw[j] - pw[i], f)
                M[i, j] = zw[i] @ ni
            else:
                M[i, j] = zw[i] @ f
            M[j, i] = M[i, j]
    return M


@njit(cache=True)
def mechanical_energy(jtype, axis, R0, p0, mass, com, inertia, gravity, q, qd):
    """Kinetic energy and absolute gravitational potential of the chain."""
    n = q.shape[0]
    M = crba(jtype, axis, R0, p0, mass, com, inertia, q)
    kin = 0.0
    for i in range(n):
        for j in range(n):
            kin += 0.5 * qd[i] * M[i, j] * qd[j]
    Rw, pw, _ = fk_links(jtype, axis, R0, p0, q)
    pot = 0.0
    for i in range(n):
        c = pw[i] + Rw[i] @ com[i]
        pot -= mass[i] * (gravity[0] * c[0] + gravity[1] * c[1] + gravity[2] * c[2])
    return kin, pot


@njit(cache=True)
def ee_pose(jtype, axis, R0, p0, q, ee_link, ee_offset):
    """World position of the tool point and orientation of the EE link."""
    Rw, pw, _ = fk_links(jtype, axis, R0, p0, q)
    p = pw[ee_link] + Rw[ee_link] @ ee_offset
    return Rw[ee_link].copy(), p


@njit(cache=True)
def jac6(jtype, axis, R0, p0, q, ee_link, ee_offset, rel_link):
    """Geometric Jacobian (6 x n): rows 0-2 linear, 3-5 angular, world frame.

    rel_link >= 0 subtracts the linear Jacobian of that link's frame origin,
    yielding relative-translation task rates (angular rows stay absolute).
    """
    n = q.shape[0]
    Rw, pw, zw = fk_links(jtype, axis, R0, p0, q)
    p_ee = pw[ee_link] + Rw[ee_link] @ ee_offset
    J = np.zeros((6, n))
    for i in range(ee_link + 1):
        if jtype[i] == REVOLUTE:
            Jv = _cross(zw[i], p_ee - pw[i])
            J[0, i] = Jv[0]
            J[1, i] = Jv[1]
            J[2, i] = Jv[2]
            J[3, i] = zw[i, 0]
            J[4, i] = zw[i, 1]
            J[5, i] = zw[i, 2]
        else:
            J[0, i] = zw[i, 0]
            J[1, i] = zw[i, 1]
            J[2, i] = zw[i, 2]
    if rel_link >= 0:
        p_b = pw[rel_link]
        for i in range(rel_link + 1):
            if jtype[i] == REVOLUTE:
                Jv = _cross(zw[i], p_b - pw[i])
                J[0, i] -= Jv[0]
                J[1, i] -= Jv[1]
                J[2, i] -= Jv[2]
            else:
                J[0, i] -= zw[i, 0]
                J[1, i] -= zw[i, 1]
                J[2, i] -= zw[i, 2]
    return J


@njit(cache=True)
def jac6_dot(jtype, axis, R0, p0, q, qd, ee_link, ee_offset, rel_link):
    """Time derivative of jac6 along (q, qd)."""
    n = q.shape[0]
    Rw, pw, zw, w, v = link_velocities(jtype, axis, R0, p0, q, qd)
    p_ee = pw[ee_link] + Rw[ee_link] @ ee_offset
    v_ee = v[ee_link] + _cross(w[ee_link], Rw[ee_link] @ ee_offset)
    Jd = np.zeros((6, n))
    for i in range(ee_link + 1):
        zdot = _cross(w[i], zw[i])
        if jtype[i] == REVOLUTE:
            Jvd = _cross(zdot, p_ee - pw[i]) + _cross(zw[i], v_ee - v[i])
            Jd[0, i] = Jvd[0]
            Jd[1, i] = Jvd[1]
            Jd[2, i] = Jvd[2]
            Jd[3, i] = zdot[0]
            Jd[4, i] = zdot[1]
            Jd[5, i] = zdot[2]
        else:
            Jd[0, i] = zdot[0]
            Jd[1, i] = zdot[1]
            Jd[2, i] = zdot[2]
    if rel_link >= 0:
        p_b = pw[rel_link]
        v_b = v[rel_link]
        for i in range(rel_link + 1):
            zdot = _cross(w[i], zw[i])
            if jtype[i] == REVOLUTE:
                Jvd = _cross(zdot, p_b - pw[i]) + _cross(zw[i], v_b - v[i])
                Jd[0, i] -= Jvd[0]
                Jd[1, i] -= Jvd[1]
                Jd[2, i] -= Jvd[2]
            else:
                Jd[0, i] -= zdot[0]
                Jd[1, i] -= zdot[1]
                Jd[2, i] -= zdot[2]
    return Jd


@njit(cache=True)
def ee_point_state(jtype, axis, R0, p0, q, qd, ee_link, ee_offset):
    """World position and velocity of the tool point."""
    Rw, pw, zw, w, v = link_velocities(jtype, axis, R0, p0, q, qd)
    r = Rw[ee_link] @ ee_offset
    p_ee = pw[ee_link] + r
    v_ee = v[ee_link] + _cross(w[ee_link], r)
    return p_ee, v_ee


@njit(cache=True)
def contact_force(p_ee, v_ee, ground_h, k_n, d_n, c_t):
    """Unilateral penalty contact on the plane z = ground_h (normal +z)."""
    f = np.zeros(3)
    pen = ground_h - p_ee[2]
    if pen > 0.0:
        fn = k_n * pen - d_n * v_ee[2]
        if fn < 0.0:
            fn = 0.0
        f[2] = fn
        f[0] = -c_t * v_ee[0]
        f[1] = -c_t * v_ee[1]
    return f


@njit(cache=True)
def coriolis_mat(jtype, axis, R0, p0, mass, com, inertia, q, qd):
    """Christoffel-consistent Coriolis matrix via exact polarization of the
    quadratic velocity force: C e_j = 0.5 [c(qd+e_j) - c(qd) - c(e_j)]."""
    n = q.shape[0]
    zg = np.zeros(3)
    zn = np.zeros(n)
    c_qd = rnea(jtype, axis, R0, p0, mass, com, inertia, zg, q, qd, zn)
    C = np.empty((n, n))
    v = np.empty(n)
    for j in range(n):
        for i in range(n):
            v[i] = 0.0
        v[j] = 1.0
        c_e = rnea(jtype, axis, R0, p0, mass, com, inertia, zg, q, v, zn)
        for i in range(n):
            v[i] = qd[i]
        v[j] += 1.0
        c_sum = rnea(jtype, axis, R0, p0, mass, com, inertia, zg, q, v, zn)
        for i in range(n):
            C[i, j] = 0.5 * (c_sum[i] - c_qd[i] - c_e[i])
    return C


@njit(cache=True, inline="always", fastmath=True)
def _chol_solve(A, b, x, L, y, idx_n):
    """Solve A x = b for SPD A (size idx_n) in place via Cholesky."""
    for i in range(idx_n):
        for j in range(i + 1):
            s = A[i, j]
            for m in range(j):
                s -= L[i, m] * L[j, m]
            if i == j:
                L[i, j] = np.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    for i in range(idx_n):
        s = b[i]
        for m in range(i):
            s -= L[i, m] * y[m]
        y[i] = s / L[i, i]
    for i in range(idx_n - 1, -1, -1):
        s = y[i]
        for m in range(i + 1, idx_n):
            s -= L[m, i] * x[m]
        x[i] = s / L[i, i]


@njit(cache=True, inline="always", fastmath=True)
def _mm33(A, B, out):
    """out = A @ B for 3x3, no temporaries."""
    for r in range(3):
        a0 = A[r, 0]
        a1 = A[r, 1]
        a2 = A[r, 2]
        out[r, 0] = a0 * B[0, 0] + a1 * B[1, 0] + a2 * B[2, 0]
        out[r, 1] = a0 * B[0, 1] + a1 * B[1, 1] + a2 * B[2, 1]
        out[r, 2] = a0 * B[0, 2] + a1 * B[1, 2] + a2 * B[2, 2]


@njit(cache=True, inline="always", fastmath=True)
def _mm33_bt(A, B, out):
    """out = A @ B.T for 3x3, no temporaries."""
    for r in range(3):
        a0 = A[r, 0]
        a1 = A[r, 1]
        a2 = A[r, 2]
        out[r, 0] = a0 * B[0, 0] + a1 * B[0, 1] + a2 * B[0, 2]
        out[r, 1] = a0 * B[1, 0] + a1 * B[1, 1] + a2 * B[1, 2]
        out[r, 2] = a0 * B[2, 0] + a1 * B[2, 1] + a2 * B[2, 2]


@njit(cache=True, inline="always", fastmath=True)
def _rot_axis_into(axis, angle, out):
    c = np.cos(angle)
    s = np.sin(angle)
    x, y, z = axis[0], axis[1], axis[2]
    ic = 1.0 - c
    out[0, 0] = c + x * x * ic
    out[0, 1] = x * y * ic - z * s
    out[0, 2] = x * z * ic + y * s
    out[1, 0] = y * x * ic + z * s
    out[1, 1] = c + y * y * ic
    out[1, 2] = y * z * ic - x * s
    out[2, 0] = z * x * ic - y * s
    out[2, 1] = z * y * ic + x * s
    out[2, 2] = c + z * z * ic


@njit(cache=True, fastmath=True)
def _fused_qdd(jtype, axis, R0, p0, mass, com, inertia, gravity, q, qd, tau_act,
               free, lim_on, lim_lo, lim_hi, lim_k, lim_d,
               contact_on, ground_h, k_n, d_n, c_t, f_ext6, any_ext,
               ee_link, ee_offset,
               Rw, pw, zw, wv, vv, rc, Iw, Fb, Nb, dwb, ab, Mm, taub, B0, B1,
               Mr, rr, sol, Lb, yb, qdd_out):
    """Forward dynamics under held torque plus state-dependent forces.

    One fused, allocation-free sweep shares the kinematic pass between the
    bias forces, the composite-rigid-body mass matrix, contact and
    joint-limit penalties; all buffers are preallocated by the caller.
    Free-joint reduction handled by an in-place Cholesky.
    """
    n = q.shape[0]

    # --- forward pass: kinematics, velocities, accelerations (qdd = 0) ---
    # parent-frame state in scalars; gravity folded in as base acceleration
    wpx = 0.0; wpy = 0.0; wpz = 0.0
    dwpx = 0.0; dwpy = 0.0; dwpz = 0.0
    vpx = 0.0; vpy = 0.0; vpz = 0.0
    apx = -gravity[0]; apy = -gravity[1]; apz = -gravity[2]
    ppx = 0.0; ppy = 0.0; ppz = 0.0
    for i in range(n):
        # Rpre = Rparent @ R0[i] into B0; ppre = pparent + Rparent @ p0[i]
        if i == 0:
            for r in range(3):
                for cix in range(3):
                    B0[r, cix] = R0[0, r, cix]
            prx = p0[0, 0]
            pry = p0[0, 1]
            prz = p0[0, 2]
        else:
            _mm33(Rw[i - 1], R0[i], B0)
            Rpar = Rw[i - 1]
            prx = ppx + Rpar[0, 0] * p0[i, 0] + Rpar[0, 1] * p0[i, 1] + Rpar[0, 2] * p0[i, 2]
            pry = ppy + Rpar[1, 0] * p0[i, 0] + Rpar[1, 1] * p0[i, 1] + Rpar[1, 2] * p0[i, 2]
            prz = ppz + Rpar[2, 0] * p0[i, 0] + Rpar[2, 1] * p0[i, 1] + Rpar[2, 2] * p0[i, 2]
        zx = B0[0, 0] * axis[i, 0] + B0[0, 1] * axis[i, 1] + B0[0, 2] * axis[i, 2]
        zy = B0[1, 0] * axis[i, 0] + B0[1, 1] * axis[i, 1] + B0[1, 2] * axis[i, 2]
        zz = B0[2, 0] * axis[i, 0] + B0[2, 1] * axis[i, 1] + B0[2, 2] * axis[i, 2]
        zw[i, 0] = zx
        zw[i, 1] = zy
        zw[i, 2] = zz
        # rigid transport of velocity/acceleration to the joint origin
        rx = prx - ppx
        ry = pry - ppy
        rz = prz - ppz
        vprex = vpx + wpy * rz - wpz * ry
        vprey = vpy + wpz * rx - wpx * rz
        vprez = vpz + wpx * ry - wpy * rx
        # w x (w x r)
        t1x = wpy * rz - wpz * ry
        t1y = wpz * rx - wpx * rz
        t1z = wpx * ry - wpy * rx
        aprex = apx + dwpy * rz - dwpz * ry + wpy * t1z - wpz * t1y
        aprey = apy + dwpz * rx - dwpx * rz + wpz * t1x - wpx * t1z
        aprez = apz + dwpx * ry - dwpy * rx + wpx * t1y - wpy * t1x
        if jtype[i] == REVOLUTE:
            _rot_axis_into(axis[i], q[i], B1)
            _mm33(B0, B1, Rw[i])
            pw[i, 0] = prx
            pw[i, 1] = pry
            pw[i, 2] = prz
            qdi = qd[i]
            wv[i, 0] = wpx + zx * qdi
            wv[i, 1] = wpy + zy * qdi
            wv[i, 2] = wpz + zz * qdi
            dwb[i, 0] = dwpx + (wpy * zz - wpz * zy) * qdi
            dwb[i, 1] = dwpy + (wpz * zx - wpx * zz) * qdi
            dwb[i, 2] = dwpz + (wpx * zy - wpy * zx) * qdi
            vv[i, 0] = vprex
            vv[i, 1] = vprey
            vv[i, 2] = vprez
            ab[i, 0] = aprex
            ab[i, 1] = aprey
            ab[i, 2] = aprez
        else:
            for r in range(3):
                for cix in range(3):
                    Rw[i, r, cix] = B0[r, cix]
            dx = zx * q[i]
            dy = zy * q[i]
            dz = zz * q[i]
            pw[i, 0] = prx + dx
            pw[i, 1] = pry + dy
            pw[i, 2] = prz + dz
            wv[i, 0] = wpx
            wv[i, 1] = wpy
            wv[i, 2] = wpz
            dwb[i, 0] = dwpx
            dwb[i, 1] = dwpy
            dwb[i, 2] = dwpz
            qdi = qd[i]
            vv[i, 0] = vprex + wpy * dz - wpz * dy + zx * qdi
            vv[i, 1] = vprey + wpz * dx - wpx * dz + zy * qdi
            vv[i, 2] = vprez + wpx * dy - wpy * dx + zz * qdi
            # w x (w x d)
            t1x = wpy * dz - wpz * dy
            t1y = wpz * dx - wpx * dz
            t1z = wpx * dy - wpy * dx
            ab[i, 0] = (aprex + dwpy * dz - dwpz * dy + wpy * t1z - wpz * t1y
                        + 2.0 * (wpy * zz - wpz * zy) * qdi)
            ab[i, 1] = (aprey + dwpz * dx - dwpx * dz + wpz * t1x - wpx * t1z
                        + 2.0 * (wpz * zx - wpx * zz) * qdi)
            ab[i, 2] = (aprez + dwpx * dy - dwpy * dx + wpx * t1y - wpy * t1x
                        + 2.0 * (wpx * zy - wpy * zx) * qdi)
        # com offset in world
        Ri = Rw[i]
        rcx = Ri[0, 0] * com[i, 0] + Ri[0, 1] * com[i, 1] + Ri[0, 2] * com[i, 2]
        rcy = Ri[1, 0] * com[i, 0] + Ri[1, 1] * com[i, 1] + Ri[1, 2] * com[i, 2]
        rcz = Ri[2, 0] * com[i, 0] + Ri[2, 1] * com[i, 1] + Ri[2, 2] * com[i, 2]
        rc[i, 0] = rcx
        rc[i, 1] = rcy
        rc[i, 2] = rcz
        wx = wv[i, 0]; wy = wv[i, 1]; wz = wv[i, 2]
        dwx = dwb[i, 0]; dwy = dwb[i, 1]; dwz = dwb[i, 2]
        # com acceleration: a + dw x rc + w x (w x rc)
        t1x = wy * rcz - wz * rcy
        t1y = wz * rcx - wx * rcz
        t1z = wx * rcy - wy * rcx
        acx = ab[i, 0] + dwy * rcz - dwz * rcy + wy * t1z - wz * t1y
        acy = ab[i, 1] + dwz * rcx - dwx * rcz + wz * t1x - wx * t1z
        acz = ab[i, 2] + dwx * rcy - dwy * rcx + wx * t1y - wy * t1x
        Fb[i, 0] = mass[i] * acx
        Fb[i, 1] = mass[i] * acy
        Fb[i, 2] = mass[i] * acz
        # world rotational inertia Iw = R I R^T (reused by the CRBA below)
        _mm33(Ri, inertia[i], B0)
        _mm33_bt(B0, Ri, Iw[i])
        Ii = Iw[i]
        hx = Ii[0, 0] * wx + Ii[0, 1] * wy + Ii[0, 2] * wz
        hy = Ii[1, 0] * wx + Ii[1, 1] * wy + Ii[1, 2] * wz
        hz = Ii[2, 0] * wx + Ii[2, 1] * wy + Ii[2, 2] * wz
        Nb[i, 0] = Ii[0, 0] * dwx + Ii[0, 1] * dwy + Ii[0, 2] * dwz + wy * hz - wz * hy
        Nb[i, 1] = Ii[1, 0] * dwx + Ii[1, 1] * dwy + Ii[1, 2] * dwz + wz * hx - wx * hz
        Nb[i, 2] = Ii[2, 0] * dwx + Ii[2, 1] * dwy + Ii[2, 2] * dwz + wx * hy - wy * hx
        ppx = pw[i, 0]; ppy = pw[i, 1]; ppz = pw[i, 2]
        wpx = wx; wpy = wy; wpz = wz
        dwpx = dwx; dwpy = dwy; dwpz = dwz
        vpx = vv[i, 0]; vpy = vv[i, 1]; vpz = vv[i, 2]
        apx = ab[i, 0]; apy = ab[i, 1]; apz = ab[i, 2]

    # --- backward pass: taub = tau_act - (C qd + g) ---
    fcx = 0.0; fcy = 0.0; fcz = 0.0
    ncx = 0.0; ncy = 0.0; ncz = 0.0
    pcx = 0.0; pcy = 0.0; pcz = 0.0
    for i in range(n - 1, -1, -1):
        nix = Nb[i, 0] + rc[i, 1] * Fb[i, 2] - rc[i, 2] * Fb[i, 1]
        niy = Nb[i, 1] + rc[i, 2] * Fb[i, 0] - rc[i, 0] * Fb[i, 2]
        niz = Nb[i, 2] + rc[i, 0] * Fb[i, 1] - rc[i, 1] * Fb[i, 0]
        fix = Fb[i, 0]
        fiy = Fb[i, 1]
        fiz = Fb[i, 2]
        if i < n - 1:
            rx = pcx - pw[i, 0]
            ry = pcy - pw[i, 1]
            rz = pcz - pw[i, 2]
            nix += ncx + ry * fcz - rz * fcy
            niy += ncy + rz * fcx - rx * fcz
            niz += ncz + rx * fcy - ry * fcx
            fix += fcx
            fiy += fcy
            fiz += fcz
        if jtype[i] == REVOLUTE:
            taub[i] = tau_act[i] - (zw[i, 0] * nix + zw[i, 1] * niy + zw[i, 2] * niz)
        else:
            taub[i] = tau_act[i] - (zw[i, 0] * fix + zw[i, 1] * fiy + zw[i, 2] * fiz)
        fcx = fix; fcy = fiy; fcz = fiz
        ncx = nix; ncy = niy; ncz = niz
        pcx = pw[i, 0]; pcy = pw[i, 1]; pcz = pw[i, 2]

    # --- joint-limit penalties ---
    for i in range(n):
        if lim_on[i]:
            if q[i] > lim_hi[i]:
                taub[i] += -lim_k * (q[i] - lim_hi[i]) - lim_d * qd[i]
            elif q[i] < lim_lo[i]:
                taub[i] += -lim_k * (q[i] - lim_lo[i]) - lim_d * qd[i]

    # --- interaction wrench at the tool point ---
    have_wrench = any_ext
    w0 = f_ext6[0]
    w1 = f_ext6[1]
    w2 = f_ext6[2]
    Re = Rw[ee_link]
    rex = Re[0, 0] * ee_offset[0] + Re[0, 1] * ee_offset[1] + Re[0, 2] * ee_offset[2]
    rey = Re[1, 0] * ee_offset[0] + Re[1, 1] * ee_offset[1] + Re[1, 2] * ee_offset[2]
    rez = Re[2, 0] * ee_offset[0] + Re[2, 1] * ee_offset[1] + Re[2, 2] * ee_offset[2]
    if contact_on:
        pz = pw[ee_link, 2] + rez
        pen = ground_h - pz
        if pen > 0.0:
            vex = vv[ee_link, 0] + wv[ee_link, 1] * rez - wv[ee_link, 2] * rey
            vey = vv[ee_link, 1] + wv[ee_link, 2] * rex - wv[ee_link, 0] * rez
            vez = vv[ee_link, 2] + wv[ee_link, 0] * rey - wv[ee_link, 1] * rex
            fn = k_n * pen - d_n * vez
            if fn < 0.0:
                fn = 0.0
            w0 -= c_t * vex
            w1 -= c_t * vey
            w2 += fn
            have_wrench = True
    if have_wrench:
        pex = pw[ee_link, 0] + rex
        pey = pw[ee_link, 1] + rey
        pez = pw[ee_link, 2] + rez
        for i in range(ee_link + 1):
            if jtype[i] == REVOLUTE:
                rx = pex - pw[i, 0]
                ry = pey - pw[i, 1]
                rz = pez - pw[i, 2]
                jvx = zw[i, 1] * rz - zw[i, 2] * ry
                jvy = zw[i, 2] * rx - zw[i, 0] * rz
                jvz = zw[i, 0] * ry - zw[i, 1] * rx
                taub[i] += jvx * w0 + jvy * w1 + jvz * w2
                taub[i] += (zw[i, 0] * f_ext6[3] + zw[i, 1] * f_ext6[4]
                            + zw[i, 2] * f_ext6[5])
            else:
                taub[i] += zw[i, 0] * w0 + zw[i, 1] * w1 + zw[i, 2] * w2

    # --- composite-rigid-body mass matrix (reuses the kinematic pass) ---
    mc = mass[n - 1]
    ccx = pw[n - 1, 0] + rc[n - 1, 0]
    ccy = pw[n - 1, 1] + rc[n - 1, 1]
    ccz = pw[n - 1, 2] + rc[n - 1, 2]
    for r in range(3):
        for cix in range(3):
            B1[r, cix] = Iw[n - 1, r, cix]
    for j in range(n - 1, -1, -1):
        if j < n - 1:
            mj = mass[j]
            cjx = pw[j, 0] + rc[j, 0]
            cjy = pw[j, 1] + rc[j, 1]
            cjz = pw[j, 2] + rc[j, 2]
            mnew = mc + mj
            cnx = (mc * ccx + mj * cjx) / mnew
            cny = (mc * ccy + mj * cjy) / mnew
            cnz = (mc * ccz + mj * cjz) / mnew
            d1x = ccx - cnx; d1y = ccy - cny; d1z = ccz - cnz
            d2x = cjx - cnx; d2y = cjy - cny; d2z = cjz - cnz
            dd1 = d1x * d1x + d1y * d1y + d1z * d1z
            dd2 = d2x * d2x + d2y * d2y + d2z * d2z
            B1[0, 0] += mc * (dd1 - d1x * d1x) + Iw[j, 0, 0] + mj * (dd2 - d2x * d2x)
            B1[0, 1] += -mc * d1x * d1y + Iw[j, 0, 1] - mj * d2x * d2y
            B1[0, 2] += -mc * d1x * d1z + Iw[j, 0, 2] - mj * d2x * d2z
            B1[1, 1] += mc * (dd1 - d1y * d1y) + Iw[j, 1, 1] + mj * (dd2 - d2y * d2y)
            B1[1, 2] += -mc * d1y * d1z + Iw[j, 1, 2] - mj * d2y * d2z
            B1[2, 2] += mc * (dd1 - d1z * d1z) + Iw[j, 2, 2] + mj * (dd2 - d2z * d2z)
            B1[1, 0] = B1[0, 1]
            B1[2, 0] = B1[0, 2]
            B1[2, 1] = B1[1, 2]
            mc = mnew
            ccx = cnx; ccy = cny; ccz = cnz
        # wrench of the composite under unit acceleration of joint j
        rx = ccx - pw[j, 0]
        ry = ccy - pw[j, 1]
        rz = ccz - pw[j, 2]
        if jtype[j] == REVOLUTE:
            fx = mc * (zw[j, 1] * rz - zw[j, 2] * ry)
            fy = mc * (zw[j, 2] * rx - zw[j, 0] * rz)
            fz = mc * (zw[j, 0] * ry - zw[j, 1] * rx)
            nmx = (B1[0, 0] * zw[j, 0] + B1[0, 1] * zw[j, 1] + B1[0, 2] * zw[j, 2]
                   + ry * fz - rz * fy)
            nmy = (B1[1, 0] * zw[j, 0] + B1[1, 1] * zw[j, 1] + B1[1, 2] * zw[j, 2]
                   + rz * fx - rx * fz)
            nmz = (B1[2, 0] * zw[j, 0] + B1[2, 1] * zw[j, 1] + B1[2, 2] * zw[j, 2]
                   + rx * fy - ry * fx)
            Mm[j, j] = zw[j, 0] * nmx + zw[j, 1] * nmy + zw[j, 2] * nmz
        else:
            fx = mc * zw[j, 0]
            fy = mc * zw[j, 1]
            fz = mc * zw[j, 2]
            nmx = ry * fz - rz * fy
            nmy = rz * fx - rx * fz
            nmz = rx * fy - ry * fx
            Mm[j, j] = zw[j, 0] * fx + zw[j, 1] * fy + zw[j, 2] * fz
        for i in range(j - 1, -1, -1):
            if jtype[i] == REVOLUTE:
                rx2 = pw[j, 0] - pw[i, 0]
                ry2 = pw[j, 1] - pw[i, 1]
                rz2 = pw[j, 2] - pw[i, 2]
                nix = nmx + ry2 * fz - rz2 * fy
                niy = nmy + rz2 * fx - rx2 * fz
                niz = nmz + rx2 * fy - ry2 * fx
                Mm[i, j] = zw[i, 0] * nix + zw[i, 1] * niy + zw[i, 2] * niz
            else:
                Mm[i, j] = zw[i, 0] * fx + zw[i, 1] * fy + zw[i, 2] * fz
            Mm[j, i] = Mm[i, j]

    # --- reduce to free joints, Cholesky solve ---
    nf = 0
    for i in range(n):
        if free[i]:
            nf += 1
    a = 0
    for i in range(n):
        qdd_out[i] = 0.0
        if free[i]:
            rr[a] = taub[i]
            b = 0
            for jj in range(n):
                if free[jj]:
                    Mr[a, b] = Mm[i, jj]
                    b += 1
            a += 1
    _chol_solve(Mr, rr, sol, Lb, yb, nf)
    a = 0
    for i in range(n):
        if free[i]:
            qdd_out[i] = sol[a]
            a += 1


@njit(cache=True, fastmath=True)
def integrate_tick(jtype, axis, R0, p0, mass, com, inertia, gravity, q, qd,
                   tau_act, free, lim_on, lim_lo, lim_hi, lim_k, lim_d,
                   contact_on, ground_h, k_n, d_n, c_t, f_ext6,
                   ee_link, ee_offset, h, n_sub):
    """Advance one control tick: n_sub fixed-step RK4 substeps with held tau.

    Returns (q, qd, ok); ok = False when any state magnitude exceeds 1e6.
    """
    n = q.shape[0]
    Rw = np.empty((n, 3, 3))
    pw = np.empty((n, 3))
    zw = np.empty((n, 3))
    wv = np.empty((n, 3))
    vv = np.empty((n, 3))
    rc = np.empty((n, 3))
    Iw = np.empty((n, 3, 3))
    Fb = np.empty((n, 3))
    Nb = np.empty((n, 3))
    dwb = np.empty((n, 3))
    ab = np.empty((n, 3))
    Mm = np.empty((n, n))
    taub = np.empty(n)
    B0 = np.empty((3, 3))
    B1 = np.empty((3, 3))
    Mr = np.empty((n, n))
    rr = np.empty(n)
    sol = np.empty(n)
    Lb = np.empty((n, n))
    yb = np.empty(n)
    qc = q.copy()
    vc = qd.copy()
    q2 = np.empty(n)
    v2 = np.empty(n)
    q3 = np.empty(n)
    v3 = np.empty(n)
    q4 = np.empty(n)
    v4 = np.empty(n)
    a1 = np.empty(n)
    a2 = np.empty(n)
    a3 = np.empty(n)
    a4 = np.empty(n)
    any_ext = False
    for r in range(6):
        if f_ext6[r] != 0.0:
            any_ext = True
    for _ in range(n_sub):
        _fused_qdd(jtype, axis, R0, p0, mass, com, inertia, gravity, qc, vc,
                   tau_act, free, lim_on, lim_lo, lim_hi, lim_k, lim_d,
                   contact_on, ground_h, k_n, d_n, c_t, f_ext6, any_ext,
                   ee_link, ee_offset, Rw, pw, zw, wv, vv, rc, Iw, Fb, Nb, dwb, ab,
                   Mm, taub, B0, B1, Mr, rr, sol, Lb, yb, a1)
        for i in range(n):
            q2[i] = qc[i] + 0.5 * h * vc[i]
            v2[i] = vc[i] + 0.5 * h * a1[i]
        _fused_qdd(jtype, axis, R0, p0, mass, com, inertia, gravity, q2, v2,
                   tau_act, free, lim_on, lim_lo, lim_hi, lim_k, lim_d,
                   contact_on, ground_h, k_n, d_n, c_t, f_ext6, any_ext,
                   ee_link, ee_offset, Rw, pw, zw, wv, vv, rc, Iw, Fb, Nb, dwb, ab,
                   Mm, taub, B0, B1, Mr, rr, sol, Lb, yb, a2)
        for i in range(n):
            q3[i] = qc[i] + 0.5 * h * v2[i]
            v3[i] = vc[i] + 0.5 * h * a2[i]
        _fused_qdd(jtype, axis, R0, p0, mass, com, inertia, gravity, q3, v3,
                   tau_act, free, lim_on, lim_lo, lim_hi, lim_k, lim_d,
                   contact_on, ground_h, k_n, d_n, c_t, f_ext6, any_ext,
                   ee_link, ee_offset, Rw, pw, zw, wv, vv, rc, Iw, Fb, Nb, dwb, ab,
                   Mm, taub, B0, B1, Mr, rr, sol, Lb, yb, a3)
        for i in range(n):
            q4[i] = qc[i] + h * v3[i]
            v4[i] = vc[i] + h * a3[i]
        _fused_qdd(jtype, axis, R0, p0, mass, com, inertia, gravity, q4, v4,
                   tau_act, free, lim_on, lim_lo, lim_hi, lim_k, lim_d,
                   contact_on, ground_h, k_n, d_n, c_t, f_ext6, any_ext,
                   ee_link, ee_offset, Rw, pw, zw, wv, vv, rc, Iw, Fb, Nb, dwb, ab,
                   Mm, taub, B0, B1, Mr, rr, sol, Lb, yb, a4)
        ok = True
        for i in range(n):
            if free[i]:
                qc[i] = qc[i] + (h / 6.0) * (vc[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i])
                vc[i] = vc[i] + (h / 6.0) * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i])
            if np.abs(qc[i]) > 1e6 or np.abs(vc[i]) > 1e6 or not np.isfinite(qc[i]):
                ok = False
        if not ok:
            return qc, vc, False
    return qc, vc, True
