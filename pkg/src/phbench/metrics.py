"""Port-Hamiltonian benchmark quantities.

Hamiltonians of the robot and of the rendered impedance, the causal
impedance integrator used as ground truth, passivity margins (general and
force-sensing-free quasi-static), the power-distribution identity, and the
step-response power fidelity metric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dynamics as dyn
from .control import ImpedanceParams, ReferenceSignal
from .errors import MissingInteractionData, NonQuasiStaticReference, OverdampedUnsupported
from .model import RobotModel


# ---------------------------------------------------------------------------
# Energies
# ---------------------------------------------------------------------------

def robot_hamiltonian(model: RobotModel, q, qd, datum_q=None) -> float:
    """Mechanical energy 0.5 qd' M qd + U_g(q).

    The potential datum is fixed at datum_q (typically the scenario's initial
    configuration) so that a resting robot starts at zero energy.
    """
    kin, pot = dyn.mechanical_energy(model, q, qd)
    if datum_q is not None:
        pot -= dyn.potential_energy(model, datum_q)
    return kin + pot


def impedance_hamiltonian(x, x_d, xdot, xdot_d, params: ImpedanceParams,
                          lam=None) -> float:
    """Energy of the rendered mass-spring-damper.

    0.5 (xdot - xdot_d)' Lam (xdot - xdot_d) + 0.5 e' K e, with e = x - x_d in
    task coordinates.  With inertia shaping Lam is the commanded diagonal
    inertia; without shaping pass the instantaneous task-space inertia lam.
    """
    e = np.asarray(x, dtype=float) - np.asarray(x_d, dtype=float)
    edot = np.asarray(xdot, dtype=float) - np.asarray(xdot_d, dtype=float)
    elastic = 0.5 * e @ (params.stiffness * e)
    if params.inertia_shaping:
        kinetic = 0.5 * edot @ (params.inertia * edot)
    else:
        if lam is None:
            raise ValueError("no inertia shaping: pass the task-space inertia lam")
        kinetic = 0.5 * edot @ np.asarray(lam) @ edot
    return float(kinetic + elastic)


# ---------------------------------------------------------------------------
# Causal impedance model (ground-truth integrator)
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CausalTrajectory:
    """Fixed-grid solution of the causal impedance equations."""
    t: np.ndarray        # (N,)
    x: np.ndarray        # (N,k) pose coordinates
    p: np.ndarray        # (N,k) momenta Lam_d xdot
    x_d: np.ndarray      # (N,k)
    xdot_d: np.ndarray   # (N,k)
    pdot_d: np.ndarray   # (N,k)
    f_int: np.ndarray    # (N,k)
    H: np.ndarray        # (N,) impedance Hamiltonian
    lam_d: np.ndarray    # (k,) desired inertia diagonal

    @property
    def xdot(self) -> np.ndarray:
        return self.p / self.lam_d[None, :]


def _ref_vector(ref, k: int):
    """Adapt a ReferenceSignal or plain callable to vector-valued outputs."""
    if isinstance(ref, ReferenceSignal):
        def f(t):
            pose, xdot_d, xddot_d = ref.evaluate(t)
            return pose.position[:k], xdot_d[:k], xddot_d[:k]
        return f
    return ref


def simulate_causal_impedance(params: ImpedanceParams, ref, f_int=None,
                              x0=None, p0=None, dt: float = 1e-4,
                              duration: float = 1.0) -> CausalTrajectory:
    """Integrate the causal impedance dynamics with fixed-step RK4.

        xdot = Lam_d^-1 p
        pdot = -K (x - x_d) - D Lam_d^-1 (p - p_d) + pdot_d + f_int

    with p_d = Lam_d xdot_d and pdot_d = Lam_d xddot_d from the reference.
    This is the ground-truth desired closed-loop behavior.
    """
    if not params.inertia_shaping:
        raise ValueError("causal integrator needs a fixed desired inertia")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    k = params.k
    lam_d = params.inertia
    K_d = params.stiffness
    D_d = params.damping
    ref_f = _ref_vector(ref, k)
    f_f = (lambda t: np.zeros(k)) if f_int is None else f_int

    n_steps = int(round(duration / dt))
    t = np.arange(n_steps + 1) * dt
    x = np.empty((n_steps + 1, k))
    p = np.empty((n_steps + 1, k))
    x_d_log = np.empty((n_steps + 1, k))
    xdot_d_log = np.empty((n_steps + 1, k))
    pdot_d_log = np.empty((n_steps + 1, k))
    f_log = np.empty((n_steps + 1, k))
    H = np.empty(n_steps + 1)

    xd0, xdotd0, _ = ref_f(0.0)
    x[0] = np.asarray(xd0, dtype=float) if x0 is None else np.asarray(x0, dtype=float)
    p[0] = lam_d * xdotd0 if p0 is None else np.asarray(p0, dtype=float)

    def deriv(tc, xc, pc):
        x_dc, xdot_dc, xddot_dc = ref_f(tc)
        pd = lam_d * xdot_dc
        fdc = f_f(tc)
        xdot = pc / lam_d
        pdot = -K_d * (xc - x_dc) - D_d * ((pc - pd) / lam_d) + lam_d * xddot_dc + fdc
        return xdot, pdot

    for i in range(n_steps + 1):
        ti = t[i]
        x_di, xdot_di, xddot_di = ref_f(ti)
        x_d_log[i] = x_di
        xdot_d_log[i] = xdot_di
        pdot_d_log[i] = lam_d * xddot_di
        f_log[i] = f_f(ti)
        H[i] = impedance_hamiltonian(x[i], x_di, p[i] / lam_d, xdot_di, params)
        if i == n_steps:
            break
        h = dt
        k1x, k1p = deriv(ti, x[i], p[i])
        k2x, k2p = deriv(ti + 0.5 * h, x[i] + 0.5 * h * k1x, p[i] + 0.5 * h * k1p)
        k3x, k3p = deriv(ti + 0.5 * h, x[i] + 0.5 * h * k2x, p[i] + 0.5 * h * k2p)
        k4x, k4p = deriv(ti + h, x[i] + h * k3x, p[i] + h * k3p)
        x[i + 1] = x[i] + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        p[i + 1] = p[i] + (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)

    return CausalTrajectory(t=t, x=x, p=p, x_d=x_d_log, xdot_d=xdot_d_log,
                            pdot_d=pdot_d_log, f_int=f_log, H=H,
                            lam_d=np.asarray(lam_d, dtype=float))


def causal_balance_residual(traj: CausalTrajectory, params: ImpedanceParams) -> np.ndarray:
    """Residual of the instantaneous power balance along a causal trajectory:

        (xdot - xdot_d)'(pdot_d + f_int) = dH/dt + (xdot - xdot_d)' D (xdot - xdot_d)

    dH/dt is taken from the sampled H series with 4th-order central
    differences; boundary samples are excluded from the returned array.
    """
    dt = traj.t[1] - traj.t[0]
    ed = (traj.p / params.inertia[None, :]) - traj.xdot_d
    lhs = np.einsum("ij,ij->i", ed, traj.pdot_d + traj.f_int)
    dissipation = np.einsum("ij,ij->i", ed, params.damping[None, :] * ed)
    H = traj.H
    dH = (H[:-4] - 8.0 * H[1:-3] + 8.0 * H[3:-1] - H[4:]) / (12.0 * dt)
    return lhs[2:-2] - dH - dissipation[2:-2]


# ---------------------------------------------------------------------------
# Integrals and passivity margins
# ---------------------------------------------------------------------------

def running_trapz(t, y) -> np.ndarray:
    """Cumulative trapezoidal integral, result[0] = 0."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(t.shape[0])
    np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t), out=out[1:])
    return out


def command_work(q, tau) -> np.ndarray:
    """Running integral of the commanded power q̇' tau_act.

    The torque is held between control ticks (zero-order hold), so the work
    over one interval is exactly tau_k' (q_{k+1} - q_k); summing those gives
    the integral free of sampling truncation.  A plain trapezoid of the
    sampled power carries an O(dt^2) bias that can mask the sign of the
    passivity margin once the true margin has decayed below it.
    """
    q = np.asarray(q, dtype=float)
    tau = np.asarray(tau, dtype=float)
    w_interval = np.einsum("ij,ij->i", tau[:-1], np.diff(q, axis=0))
    out = np.zeros(q.shape[0])
    np.cumsum(w_interval, out=out[1:])
    return out


def hamiltonian_gap(H_q, H_omega) -> np.ndarray:
    """(H_q - H_q(0)) - (H_omega - H_omega(0)), both datum-anchored at t=0."""
    H_q = np.asarray(H_q, dtype=float)
    H_omega = np.asarray(H_omega, dtype=float)
    return (H_q - H_q[0]) - (H_omega - H_omega[0])


def quasi_static_passivity_margin(q, tau_act, H_q, H_omega,
                                  xdot_d=None) -> np.ndarray:
    """Force-sensing-free passivity margin under a quasi-static reference:

        margin(t) = int_0^t qd' tau_act dt - [(H_q - H_q(0)) - (H_omega - H_omega(0))]

    The system is passive with respect to the commanded power iff the margin
    stays positive.  Raises NonQuasiStaticReference when the supplied
    reference velocities are not identically zero.
    """
    if xdot_d is not None and np.any(np.asarray(xdot_d) != 0.0):
        raise NonQuasiStaticReference(
            "reference reports nonzero velocity; quasi-static margin undefined")
    return command_work(q, tau_act) - hamiltonian_gap(H_q, H_omega)


def general_passivity_margin(t, xdot, xdot_d, pdot_d, f_int, H_omega) -> np.ndarray:
    """Damping-independent margin valid for time-varying references:

        margin(t) = int_0^t (xdot - xdot_d)'(pdot_d + f_int) dt
                    - H_omega(t) + H_omega(0)

    Positive for all t iff the rendered impedance is passive with respect to
    its exogenous inputs.  Requires the interaction wrench.
    """
    if f_int is None:
        raise MissingInteractionData("general passivity margin needs f_int")
    ed = np.asarray(xdot, dtype=float) - np.asarray(xdot_d, dtype=float)
    supply = np.einsum("ij,ij->i", ed, np.asarray(pdot_d, dtype=float)
                       + np.asarray(f_int, dtype=float))
    H = np.asarray(H_omega, dtype=float)
    return running_trapz(t, supply) - (H - H[0])


def general_margin_of_causal(traj: CausalTrajectory) -> np.ndarray:
    return general_passivity_margin(traj.t, traj.p / traj.lam_d[None, :],
                                    traj.xdot_d, traj.pdot_d, traj.f_int, traj.H)


# ---------------------------------------------------------------------------
# Power distribution identity
# ---------------------------------------------------------------------------

def power_distribution(qd, tau_act, xdot, xdot_d, pdot_d, f_int):
    """Evaluate both sides of the supplied-power distribution identity.

    lhs = qd' tau_act + xdot_d' f_int
    rhs = [y'u]_q - [y'u]_Omega - (xdot_d - xdot)' pdot_d

    with [y'u]_q = qd'(tau_act + J^T f_int) = qd' tau_act + xdot' f_int and
    [y'u]_Omega = (xdot - xdot_d)'(pdot_d + f_int).
    Returns (lhs, (term_q, term_omega, term_inertial), residual).
    """
    qd = np.asarray(qd, dtype=float)
    tau_act = np.asarray(tau_act, dtype=float)
    xdot = np.asarray(xdot, dtype=float)
    xdot_d = np.asarray(xdot_d, dtype=float)
    pdot_d = np.asarray(pdot_d, dtype=float)
    f_int = np.asarray(f_int, dtype=float)
    lhs = qd @ tau_act + xdot_d @ f_int
    term_q = qd @ tau_act + xdot @ f_int
    term_omega = (xdot - xdot_d) @ (pdot_d + f_int)
    term_inertial = (xdot_d - xdot) @ pdot_d
    residual = lhs - (term_q - term_omega - term_inertial)
    return lhs, (term_q, term_omega, term_inertial), residual


# ---------------------------------------------------------------------------
# Step response and power fidelity
# ---------------------------------------------------------------------------

def _step_params(k_d: float, d_d: float, m_d: float):
    wn = np.sqrt(k_d / m_d)
    zeta = d_d / (2.0 * np.sqrt(k_d * m_d))
    if zeta >= 1.0:
        raise OverdampedUnsupported(
            f"damping ratio {zeta:.4f} >= 1; closed form covers the underdamped case only")
    wd = wn * np.sqrt(1.0 - zeta ** 2)
    return wn, zeta, wd


def step_response_closed_form(k_d: float, d_d: float, m_d: float,
                              amplitude: float, t):
    """Underdamped unit-step response scaled by amplitude, with its velocity.

        x(t)  = A [1 - e^{-zeta wn t} cos(wd t - beta) / sqrt(1-zeta^2)]
        xdot  = A wn e^{-zeta wn t} sin(wd t) / sqrt(1-zeta^2)

    Zero for t < 0.  Raises OverdampedUnsupported when zeta >= 1.
    """
    wn, zeta, wd = _step_params(k_d, d_d, m_d)
    t = np.asarray(t, dtype=float)
    root = np.sqrt(1.0 - zeta ** 2)
    beta = np.arctan2(zeta, root)
    env = np.exp(-zeta * wn * t)
    x = amplitude * (1.0 - env * np.cos(wd * t - beta) / root)
    xdot = amplitude * wn * env * np.sin(wd * t) / root
    x = np.where(t < 0.0, 0.0, x)
    xdot = np.where(t < 0.0, 0.0, xdot)
    if x.ndim == 0:
        return float(x), float(xdot)
    return x, xdot


def step_power_reference(k_d: float, d_d: float, m_d: float,
                         amplitude: float, t_star):
    """Mechanical power of the ideal single-axis step response at time t_star
    after the step: P = xdot [k_d (x_d - x) - d_d xdot]."""
    x, xdot = step_response_closed_form(k_d, d_d, m_d, amplitude, t_star)
    return xdot * (k_d * (amplitude - x) - d_d * xdot)


def cartesian_power(x, x_d, xdot, params: ImpedanceParams):
    """Measured n-DoF Cartesian impedance power: xdot'[K (x_d - x) - D xdot]."""
    x = np.asarray(x, dtype=float)
    x_d = np.asarray(x_d, dtype=float)
    xdot = np.asarray(xdot, dtype=float)
    return float(xdot @ (params.stiffness * (x_d - x) - params.damping * xdot))


def step_power_error(x, x_d, xdot, params: ImpedanceParams, m_d: float,
                     axis: int, amplitude: float, t_star: float) -> float:
    """Model-based step power fidelity error:

        e_step = P_step(t_star) - xdot'[K (x_d - x) - D xdot]

    m_d is the reference mass on the stepped axis (the commanded inertia with
    shaping; the initial task-space inertia diagonal without).
    """
    if t_star < 0.0:
        return 0.0
    p_ref = step_power_reference(params.stiffness[axis], params.damping[axis],
                                 m_d, amplitude, t_star)
    return float(p_ref - cartesian_power(x, x_d, xdot, params))


def rms_over_window(t, series, t0: float, t1: float) -> float:
    """Root-mean-square of a sampled series on [t0, t1] (trapezoidal mean of
    squares).  Raises ValueError when the window leaves the log range."""
    t = np.asarray(t, dtype=float)
    series = np.asarray(series, dtype=float)
    eps = 1e-12
    if t1 <= t0:
        raise ValueError("window must satisfy t1 > t0")
    if t0 < t[0] - eps or t1 > t[-1] + eps:
        raise ValueError(f"window [{t0}, {t1}] outside log range [{t[0]}, {t[-1]}]")
    sel = (t >= t0 - eps) & (t <= t1 + eps)
    if np.count_nonzero(sel) < 2:
        raise ValueError("window contains fewer than two samples")
    tw = t[sel]
    yw = series[sel]
    return float(np.sqrt(np.trapezoid(yw ** 2, tw) / (tw[-1] - tw[0])))
