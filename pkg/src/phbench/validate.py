"""Built-in invariant suite: dynamics oracles, energy audits, balance
residuals.  Each check returns (name, passed, detail); the CLI prints the
table and exits nonzero on any failure.
"""

from __future__ import annotations

import time

import numpy as np

from . import control as ctl
from . import dynamics as dyn
from . import metrics as mx
from . import sim as sm
from .model import builtin_model


def _planar2_closed_forms(model, q, qd):
    """Textbook two-link closed forms for unit lengths and tip point masses."""
    q1, q2 = q
    c2 = np.cos(q2)
    M = np.array([[3.0 + 2.0 * c2, 1.0 + c2], [1.0 + c2, 1.0]])
    g = 9.81 * np.array([2.0 * np.cos(q1) + np.cos(q1 + q2), np.cos(q1 + q2)])
    h = -np.sin(q2)
    C = np.array([[h * qd[1], h * (qd[0] + qd[1])], [-h * qd[0], 0.0]])
    s1, s12 = np.sin(q1), np.sin(q1 + q2)
    c1, c12 = np.cos(q1), np.cos(q1 + q2)
    J = np.array([[-s1 - s12, -s12], [c1 + c12, c12]])
    fk = np.array([c1 + c12, s1 + s12, 0.0])
    return M, g, C, J, fk


def check_planar2_oracle(corrupt=None):
    model = builtin_model("planar2")
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(20):
        q = rng.uniform(-np.pi, np.pi, 2)
        qd = rng.uniform(-2.0, 2.0, 2)
        M_ref, g_ref, C_ref, J_ref, fk_ref = _planar2_closed_forms(model, q, qd)
        M = dyn.mass_matrix(model, q)
        if corrupt == "mass_asymmetry":
            M = M.copy()
            M[0, 1] += 1e-3
        worst = max(worst, np.max(np.abs(M - M_ref)))
        worst = max(worst, np.max(np.abs(dyn.gravity_vector(model, q) - g_ref)))
        worst = max(worst, np.max(np.abs(dyn.coriolis_matrix(model, q, qd) - C_ref)))
        worst = max(worst, np.max(np.abs(dyn.geometric_jacobian(model, q) - J_ref)))
        worst = max(worst, np.max(np.abs(
            dyn.forward_kinematics(model, q).position - fk_ref)))
    return worst < 1e-9, f"max closed-form deviation {worst:.2e} (tol 1e-9)"


def check_mass_matrix_routes(corrupt=None):
    """CRBA mass matrix equals the matrix built from unit-acceleration
    inverse-dynamics columns, and is symmetric positive definite."""
    rng = np.random.default_rng(12)
    worst = 0.0
    min_eig = np.inf
    for name in ("planar2", "gantry3", "arm6", "leg3"):
        model = builtin_model(name)
        for _ in range(5):
            q = rng.uniform(-1.3, 1.3, model.n)
            M = dyn.mass_matrix(model, q)
            if corrupt == "mass_asymmetry":
                M = M.copy()
                M[0, -1] += 1e-3
            g = dyn.gravity_vector(model, q)
            cols = np.column_stack([
                dyn.inverse_dynamics(model, q, np.zeros(model.n), e) - g
                for e in np.eye(model.n)])
            worst = max(worst, np.max(np.abs(M - cols)))
            worst = max(worst, np.max(np.abs(M - M.T)))
            min_eig = min(min_eig, np.linalg.eigvalsh(M)[0])
    ok = worst < 1e-9 and min_eig > 0.0
    return ok, f"CRBA vs RNEA columns {worst:.2e}, min eig {min_eig:.2e}"


def check_gravity_gradient(corrupt=None):
    rng = np.random.default_rng(13)
    eps = 1e-6
    worst = 0.0
    for name in ("planar2", "arm6", "leg3"):
        model = builtin_model(name)
        for _ in range(5):
            q = rng.uniform(-1.2, 1.2, model.n)
            g = dyn.gravity_vector(model, q)
            for i in range(model.n):
                dq = np.zeros(model.n)
                dq[i] = eps
                num = (dyn.potential_energy(model, q + dq)
                       - dyn.potential_energy(model, q - dq)) / (2 * eps)
                worst = max(worst, abs(g[i] - num))
    return worst < 1e-6, f"gravity vs grad U deviation {worst:.2e} (tol 1e-6)"


def check_jacobian_consistency(corrupt=None):
    rng = np.random.default_rng(14)
    eps = 1e-7
    worst = 0.0
    for name in ("planar2", "gantry3", "arm6"):
        model = builtin_model(name)
        rows = list(model.task.translation_rows)
        for _ in range(5):
            q = rng.uniform(-1.2, 1.2, model.n)
            qd = rng.uniform(-1.0, 1.0, model.n)
            xdot = (dyn.geometric_jacobian(model, q) @ qd)[:len(rows)]
            num = (dyn.forward_kinematics(model, q + eps * qd).position
                   - dyn.forward_kinematics(model, q - eps * qd).position) / (2 * eps)
            worst = max(worst, np.max(np.abs(xdot - num[rows])))
    return worst < 1e-6, f"J qd vs FD of FK deviation {worst:.2e} (tol 1e-6)"


def check_jacobian_dot(corrupt=None):
    rng = np.random.default_rng(15)
    eps = 1e-6
    worst = 0.0
    for name in ("planar2", "arm6", "leg3"):
        model = builtin_model(name)
        for _ in range(5):
            q = rng.uniform(-1.0, 1.0, model.n)
            qd = rng.uniform(-1.0, 1.0, model.n)
            Jd = dyn.jacobian_dot(model, q, qd)
            num = (dyn.geometric_jacobian(model, q + eps * qd)
                   - dyn.geometric_jacobian(model, q - eps * qd)) / (2 * eps)
            worst = max(worst, np.max(np.abs(Jd - num)))
    return worst < 1e-6, f"Jdot vs FD deviation {worst:.2e} (tol 1e-6)"


def check_skew_symmetry(corrupt=None):
    rng = np.random.default_rng(16)
    model = builtin_model("arm6")
    eps = 1e-5  # keeps the finite-difference roundoff below the tolerance
    worst = 0.0
    for _ in range(100):
        q = rng.uniform(-1.5, 1.5, 6)
        qd = rng.uniform(-1.0, 1.0, 6)
        C = dyn.coriolis_matrix(model, q, qd)
        Mdot = (dyn.mass_matrix(model, q + eps * qd)
                - dyn.mass_matrix(model, q - eps * qd)) / (2 * eps)
        worst = max(worst, abs(qd @ (Mdot - 2.0 * C) @ qd))
    return worst < 1e-9, f"|qd'(Mdot-2C)qd| max {worst:.2e} (tol 1e-9)"


def check_forward_dynamics_plugback(corrupt=None):
    rng = np.random.default_rng(17)
    worst = 0.0
    for name in ("planar2", "arm6", "leg3"):
        model = builtin_model(name)
        for _ in range(10):
            q = rng.uniform(-1.2, 1.2, model.n)
            qd = rng.uniform(-1.5, 1.5, model.n)
            tau = rng.uniform(-30.0, 30.0, model.n)
            qdd = dyn.forward_dynamics(model, q, qd, tau)
            res = dyn.inverse_dynamics(model, q, qd, qdd) - tau
            worst = max(worst, np.max(np.abs(res)))
    return worst < 1e-10, f"plug-back residual {worst:.2e} (tol 1e-10)"


def check_energy_conservation(corrupt=None):
    model = builtin_model("planar2")
    config = sm.SimConfig(control_dt=1e-3, physics_substeps=10, duration=5.0)
    _, _, _, H = sm.simulate_passive(model, np.array([0.4, 0.3]),
                                     np.array([2.0, -1.0]), config)
    drift = np.max(np.abs(H - H[0]))
    return drift <= 1e-3, f"unforced swing |H_q drift| {drift:.2e} J (tol 1e-3)"


def check_causal_balance(corrupt=None):
    params = ctl.ImpedanceParams(np.array([800.0, 400.0]), np.array([134.2, 60.0]),
                                 np.array([10.0, 6.0]))

    def ref(t):
        x_d = np.array([0.1 * np.sin(2.0 * t), 0.05 * np.cos(3.0 * t)])
        xdot_d = np.array([0.2 * np.cos(2.0 * t), -0.15 * np.sin(3.0 * t)])
        xddot_d = np.array([-0.4 * np.sin(2.0 * t), -0.45 * np.cos(3.0 * t)])
        return x_d, xdot_d, xddot_d

    def f_int(t):
        return np.array([3.0 * np.sin(5.0 * t), 2.0 * np.cos(4.0 * t)])

    traj = mx.simulate_causal_impedance(params, ref, f_int, x0=np.array([0.05, 0.0]),
                                        p0=np.zeros(2), dt=1e-4, duration=1.0)
    res = np.max(np.abs(mx.causal_balance_residual(traj, params)))
    return res <= 1e-6, f"balance residual {res:.2e} W (tol 1e-6)"


def check_power_distribution(corrupt=None):
    model = builtin_model("gantry3")
    params = ctl.ImpedanceParams(np.array([800.0] * 3), np.array([134.2] * 3),
                                 np.array([5.0, 8.0, 12.0]))
    config = sm.SimConfig(duration=0.5)
    q0 = np.zeros(3)
    base = dyn.task_pose(model, q0)
    ref = ctl.make_step_reference(0, 0.3, base, k=3, step_time=config.control_dt)

    def wrench(t):
        return np.array([4.0 * np.sin(3.0 * t), -2.0 * np.cos(5.0 * t),
                         1.5 * np.sin(2.0 * t)])

    simu = sm.Simulation(model, params, ref, config, q0, external_wrench=wrench,
                         step_axis=0, step_amplitude=0.3, step_time=config.control_dt)
    traj = simu.run()
    worst = 0.0
    zero = np.zeros(3)
    for i in range(len(traj.t)):
        _, _, res = mx.power_distribution(traj.qd[i], traj.tau[i], traj.xdot[i],
                                          zero, zero, traj.f_int[i])
        worst = max(worst, abs(res))
    return worst <= 1e-8, f"distribution residual {worst:.2e} W (tol 1e-8)"


def check_step_power_identity(corrupt=None):
    k_d, d_d, m_d, amp = 800.0, 134.2, 10.0, 0.4
    t = np.linspace(0.0, 2.0, 2001)
    _, xdot = mx.step_response_closed_form(k_d, d_d, m_d, amp, t)
    kinetic = 0.5 * m_d * xdot ** 2
    # Gauss-Legendre per interval: quadrature oracle for the running integral
    nodes, weights = np.polynomial.legendre.leggauss(8)
    acc = np.zeros_like(t)
    for i in range(len(t) - 1):
        mid = 0.5 * (t[i] + t[i + 1])
        half = 0.5 * (t[i + 1] - t[i])
        ts = mid + half * nodes
        acc[i + 1] = acc[i] + half * np.sum(
            weights * mx.step_power_reference(k_d, d_d, m_d, amp, ts))
    rel = np.max(np.abs(acc - kinetic)) / np.max(kinetic)
    return rel <= 1e-9, f"step power vs kinetic energy rel err {rel:.2e} (tol 1e-9)"


def check_closed_form_vs_rk4(corrupt=None):
    worst = 0.0
    for (k_d, d_d, m_d) in ((800.0, 134.2, 10.0), (120.0, 13.96, 0.722)):
        params = ctl.ImpedanceParams(np.array([k_d]), np.array([d_d]), np.array([m_d]))

        def ref(t):
            return np.array([0.4]), np.zeros(1), np.zeros(1)

        traj = mx.simulate_causal_impedance(params, ref, x0=np.zeros(1),
                                            p0=np.zeros(1), dt=1e-5, duration=1.0)
        x_ref, _ = mx.step_response_closed_form(k_d, d_d, m_d, 0.4, traj.t)
        worst = max(worst, np.max(np.abs(traj.x[:, 0] - x_ref)))
    return worst <= 1e-8, f"closed form vs RK4 max dev {worst:.2e} m (tol 1e-8)"


def check_sim_vs_causal_oracle(corrupt=None):
    model = builtin_model("gantry3")
    params = ctl.ImpedanceParams(np.array([800.0] * 3), np.array([134.2] * 3),
                                 np.array([10.0] * 3))
    config = sm.SimConfig(duration=1.0)
    traj = sm.run_scenario("step_arm", config=config, params=params, model=model,
                           q0=np.zeros(3), axis=0, amplitude=0.4)
    x_cf, _ = mx.step_response_closed_form(800.0, 134.2, 10.0, 0.4,
                                           traj.t - config.control_dt)
    rms = float(np.sqrt(np.mean((traj.x[:, 0] - traj.x[0, 0] - x_cf) ** 2)))
    return rms <= 1e-3, f"perfect-rendering RMS {rms:.2e} m (tol 1e-3)"


CHECKS = (
    ("planar2 closed-form oracle", check_planar2_oracle),
    ("mass matrix dual route + SPD", check_mass_matrix_routes),
    ("gravity equals potential gradient", check_gravity_gradient),
    ("jacobian vs FK finite differences", check_jacobian_consistency),
    ("jacobian rate vs finite differences", check_jacobian_dot),
    ("coriolis skew-symmetry", check_skew_symmetry),
    ("forward dynamics plug-back", check_forward_dynamics_plugback),
    ("unforced energy conservation", check_energy_conservation),
    ("causal model power balance", check_causal_balance),
    ("power distribution identity", check_power_distribution),
    ("step power kinetic identity", check_step_power_identity),
    ("step response closed form vs RK4", check_closed_form_vs_rk4),
    ("gantry rendering vs causal oracle", check_sim_vs_causal_oracle),
)


def run_validation(corrupt=None, stream=None) -> bool:
    """Run the full suite; prints one line per check, returns overall pass."""
    import sys
    out = stream or sys.stdout
    all_ok = True
    for name, fn in CHECKS:
        t0 = time.time()
        try:
            ok, detail = fn(corrupt=corrupt)
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        all_ok &= ok
        status = "PASS" if ok else "FAIL"
        print(f"[{status}] {name:38s} {detail} ({time.time() - t0:.2f}s)", file=out)
    return all_ok
