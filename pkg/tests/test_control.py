import numpy as np
import pytest

from phbench import control as ctl
from phbench import dynamics as dyn
from phbench.model import builtin_model

ARM_IS = ctl.ImpedanceParams(
    stiffness=np.array([800.0, 800.0, 800.0, 120.0, 120.0, 120.0]),
    damping=np.array([134.2, 134.2, 134.2, 13.96, 13.96, 13.96]),
    inertia=np.array([10.0, 10.0, 10.0, 0.722, 0.722, 0.722]))

LEG = ctl.ImpedanceParams(stiffness=np.array([400.0, 400.0, 800.0]),
                          damping=np.array([43.0, 43.0, 90.0]))


def _pose(p, R=None):
    return dyn.CartesianState(position=np.asarray(p, float),
                              orientation=np.eye(3) if R is None else R)


# --- parameter container ----------------------------------------------------

def test_params_invariants():
    with pytest.raises(ValueError):
        ctl.ImpedanceParams(np.array([1.0, -1.0]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        ctl.ImpedanceParams(np.array([1.0]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        ctl.ImpedanceParams(np.array([1.0]), np.array([1.0]), np.array([0.0]))
    p = ctl.ImpedanceParams(np.array([1.0]), np.array([1.0]))
    assert not p.inertia_shaping
    assert ARM_IS.inertia_shaping


# --- references -------------------------------------------------------------

def test_step_reference():
    base = _pose([1.0, 2.0, 3.0])
    ref = ctl.make_step_reference(0, 0.4, base, k=3)
    before, _, _ = ref.evaluate(-1e-9)
    after, xd, xdd = ref.evaluate(0.0)
    assert np.allclose(after.position - before.position, [0.4, 0.0, 0.0])
    assert np.all(xd == 0.0) and np.all(xdd == 0.0)
    # quasi-static: identical for all t > 0
    later, _, _ = ref.evaluate(17.3)
    assert np.array_equal(later.position, after.position)


def test_step_reference_zero_amplitude_constant():
    ref = ctl.make_step_reference(1, 0.0, _pose([0, 0, 0]), k=3)
    assert ref.kind == "constant"
    a, _, _ = ref.evaluate(0.0)
    b, _, _ = ref.evaluate(5.0)
    assert np.array_equal(a.position, b.position)


def test_gait_reference_periodicity_and_extents():
    base = _pose([0.1, 0.0, -0.35])
    gait = ctl.make_gait_reference(0.40, 0.7, 0.08, base, k=3)
    t = np.linspace(0.0, 0.7, 400, endpoint=False)
    pos = np.array([gait.evaluate(ti)[0].position for ti in t])
    for ti in (0.05, 0.21, 0.5, 0.64):
        a, va, aa = gait.evaluate(ti)
        b, vb, ab = gait.evaluate(ti + 0.7)
        assert np.allclose(a.position, b.position, atol=1e-12)
        assert np.allclose(va, vb, atol=1e-12)
    assert pos[:, 0].max() - pos[:, 0].min() == pytest.approx(0.40, abs=1e-6)
    assert pos[:, 2].max() - pos[:, 2].min() == pytest.approx(0.08, abs=1e-5)
    # position continuous across the stance/swing hand-off
    eps = 1e-9
    a = gait.evaluate(0.35 - eps)[0].position
    b = gait.evaluate(0.35 + eps)[0].position
    assert np.allclose(a, b, atol=1e-6)


def test_gait_quasi_static_view():
    gait = ctl.make_gait_reference(0.4, 0.7, 0.08, _pose([0, 0, 0]), k=3)
    assert not gait.quasi_static
    qs = gait.as_quasi_static()
    assert qs.quasi_static and qs.kind == "gait"
    pose, xd, xdd = qs.evaluate(0.123)
    assert np.array_equal(pose.position, gait.evaluate(0.123)[0].position)
    assert np.all(xd == 0.0) and np.all(xdd == 0.0)


def test_jump_reference_sequence():
    rest = _pose([0.0, 0.08, -0.46])
    ref = ctl.make_jump_reference(1.0, 0.2, rest, k=3, start_time=0.5)
    z = lambda t: ref.evaluate(t)[0].position[2]
    assert z(0.49) == pytest.approx(-0.46)
    assert z(0.5) == pytest.approx(-1.46)
    assert z(0.699) == pytest.approx(-1.46)
    assert z(0.7) == pytest.approx(-0.46)
    assert z(2.0) == pytest.approx(-0.46)
    # determinism
    assert ref.evaluate(0.6)[0].position @ np.ones(3) == \
        ref.evaluate(0.6)[0].position @ np.ones(3)


def test_jump_zero_drop_constant():
    ref = ctl.make_jump_reference(0.0, 0.2, _pose([0, 0, -0.4]), k=3)
    assert ref.kind == "constant"


# --- control laws -----------------------------------------------------------

def test_matched_inertia_cancels_wrench_feedback():
    # gantry with Lam_d = true diag(10): the f_int term vanishes and at rest
    # tau = g - J^T K e
    m = builtin_model("gantry3")
    params = ctl.ImpedanceParams(np.array([800.0] * 3), np.array([134.2] * 3),
                                 np.array([10.0] * 3))
    q = np.zeros(3)
    qd = np.zeros(3)
    x_d = _pose([0.4, 0.0, 0.0])
    ref_t = (x_d, np.zeros(3), np.zeros(3))
    f = np.array([5.0, -2.0, 1.0])
    out_f = ctl.control_with_inertia_shaping(m, q, qd, ref_t, params, f)
    out_0 = ctl.control_with_inertia_shaping(m, q, qd, ref_t, params, None)
    assert np.allclose(out_f.tau_act, out_0.tau_act, atol=1e-4)
    e = dyn.task_pose(m, q).position - x_d.position
    expect = dyn.gravity_vector(m, q) - dyn.geometric_jacobian(m, q).T @ (800.0 * e)
    assert np.allclose(out_0.tau_act, expect, atol=1e-3)


def test_pure_compensation_at_zero_error():
    m = builtin_model("arm6")
    q = np.array([0.1, 0.5, 0.9, -0.2, -0.8, 0.3])
    qd = np.array([0.3, -0.2, 0.4, 0.1, -0.3, 0.2])
    x = dyn.task_pose(m, q)
    tsm = dyn.task_space_model(m, q, qd)
    xdot = tsm.jacobian @ qd
    ref_t = (x, xdot, np.zeros(6))  # e = 0, edot = 0
    out = ctl.control_with_inertia_shaping(m, q, qd, ref_t, ARM_IS, None)
    expect = dyn.gravity_vector(m, q) + tsm.jacobian.T @ (tsm.gamma @ xdot)
    assert np.allclose(out.tau_act, expect, atol=1e-9)


def test_quasi_static_rest_reduces_to_gravity():
    m = builtin_model("arm6")
    q = np.array([0.0, 0.6, 0.9, 0.1, -0.7, 0.0])
    x = dyn.task_pose(m, q)
    ref_t = (x, np.zeros(6), np.zeros(6))
    params = ctl.ImpedanceParams(ARM_IS.stiffness, ARM_IS.damping)
    out = ctl.control_without_inertia_shaping(m, q, np.zeros(6), ref_t, params)
    assert np.allclose(out.tau_act, dyn.gravity_vector(m, q), atol=1e-9)


def test_laws_coincide_under_matched_inertia():
    m = builtin_model("gantry3")
    q = np.array([0.2, -0.1, 0.3])
    qd = np.array([0.5, 0.2, -0.4])
    ref_t = (_pose([0.5, 0.1, 0.2]), np.array([0.1, 0.0, -0.2]),
             np.array([0.3, -0.1, 0.0]))
    matched = ctl.ImpedanceParams(np.array([800.0] * 3), np.array([134.2] * 3),
                                  np.array([10.0] * 3))
    plain = ctl.ImpedanceParams(np.array([800.0] * 3), np.array([134.2] * 3))
    a = ctl.control_with_inertia_shaping(m, q, qd, ref_t, matched, None)
    b = ctl.control_without_inertia_shaping(m, q, qd, ref_t, plain)
    assert np.allclose(a.tau_act, b.tau_act, atol=1e-4)


def test_wrong_params_for_law_raise():
    m = builtin_model("gantry3")
    ref_t = (_pose([0, 0, 0]), np.zeros(3), np.zeros(3))
    no_is = ctl.ImpedanceParams(np.ones(3), np.ones(3))
    with_is = ctl.ImpedanceParams(np.ones(3), np.ones(3), np.ones(3))
    with pytest.raises(ValueError):
        ctl.control_with_inertia_shaping(m, np.zeros(3), np.zeros(3), ref_t, no_is)
    with pytest.raises(ValueError):
        ctl.control_without_inertia_shaping(m, np.zeros(3), np.zeros(3), ref_t, with_is)


def test_linearity_in_error_and_wrench():
    # outputs are affine in (e, edot, f_int) at fixed (q, qd): superposition
    m = builtin_model("arm6")
    rng = np.random.default_rng(21)
    q = np.array([0.1, 0.5, 0.9, -0.2, -0.8, 0.3])
    qd = rng.uniform(-0.5, 0.5, 6)
    x = dyn.task_pose(m, q)

    def tau_of(dx, xdot_d, f):
        pose = dyn.CartesianState(position=x.position - dx,
                                  orientation=x.orientation)
        out = ctl.control_with_inertia_shaping(
            m, q, qd, (pose, xdot_d, np.zeros(6)), ARM_IS, f)
        return out.tau_act

    base = tau_of(np.zeros(3), np.zeros(6), np.zeros(6))
    d1 = rng.uniform(-0.1, 0.1, 3)
    d2 = rng.uniform(-0.1, 0.1, 3)
    v1 = rng.uniform(-0.5, 0.5, 6)
    f1 = rng.uniform(-5, 5, 6)
    lhs = tau_of(d1 + d2, v1, f1) - base
    rhs = (tau_of(d1, np.zeros(6), np.zeros(6)) - base) \
        + (tau_of(d2, np.zeros(6), np.zeros(6)) - base) \
        + (tau_of(np.zeros(3), v1, np.zeros(6)) - base) \
        + (tau_of(np.zeros(3), np.zeros(6), f1) - base)
    assert np.allclose(lhs, rhs, atol=1e-9)


def _term_by_term_is(model, q, qd, ref_t, params, f_int):
    """Independent recomposition of the shaping law from dense pieces."""
    x_d, xdot_d, xddot_d = ref_t
    M = dyn.mass_matrix(model, q)
    C = dyn.coriolis_matrix(model, q, qd)
    J = dyn.geometric_jacobian(model, q)
    Jd = dyn.jacobian_dot(model, q, qd)
    Ji = np.linalg.inv(J)
    lam = Ji.T @ M @ Ji
    gamma = Ji.T @ (C - M @ Ji @ Jd) @ Ji
    x = dyn.task_pose(model, q)
    k = model.k
    rows = list(model.task.translation_rows)
    e_lin = (x.position - x_d.position)[rows]
    if model.task.kind == "pose":
        e = np.concatenate([e_lin, dyn.rotation_vector(
            x_d.orientation.T @ x.orientation)])
    else:
        e = e_lin
    xdot = J @ qd
    edot = xdot - xdot_d
    K = np.diag(params.stiffness)
    D = np.diag(params.damping)
    lam_d_inv = np.diag(1.0 / params.inertia)
    F = (lam @ xddot_d + gamma @ xdot
         - lam @ lam_d_inv @ (D @ edot + K @ e)
         + (lam @ lam_d_inv - np.eye(k)) @ f_int)
    return dyn.gravity_vector(model, q) + J.T @ F


def test_is_law_term_by_term_oracle():
    m = builtin_model("arm6")
    rng = np.random.default_rng(22)
    for _ in range(5):
        q = np.array([0.1, 0.5, 0.9, -0.2, -0.8, 0.3]) + rng.uniform(-0.2, 0.2, 6)
        qd = rng.uniform(-0.8, 0.8, 6)
        x_d = dyn.CartesianState(
            position=dyn.task_pose(m, q).position + rng.uniform(-0.1, 0.1, 3),
            orientation=dyn.task_pose(m, q).orientation)
        ref_t = (x_d, rng.uniform(-0.3, 0.3, 6), rng.uniform(-0.5, 0.5, 6))
        f = rng.uniform(-10, 10, 6)
        out = ctl.control_with_inertia_shaping(m, q, qd, ref_t, ARM_IS, f)
        ref_tau = _term_by_term_is(m, q, qd, ref_t, ARM_IS, f)
        assert np.allclose(out.tau_act, ref_tau, atol=1e-10 * max(
            1.0, np.max(np.abs(ref_tau))))


def test_no_is_law_term_by_term_oracle():
    m = builtin_model("leg3")
    rng = np.random.default_rng(23)
    free = np.array([False, True, True, True])
    for _ in range(5):
        q = np.array([0.0, 0.05, 0.8, -1.5]) + rng.uniform(-0.1, 0.1, 4)
        q[0] = 0.0
        qd = rng.uniform(-0.6, 0.6, 4)
        qd[0] = 0.0
        x_d = dyn.CartesianState(
            position=dyn.task_pose(m, q).position + rng.uniform(-0.05, 0.05, 3),
            orientation=np.eye(3))
        ref_t = (x_d, rng.uniform(-0.2, 0.2, 3), rng.uniform(-0.3, 0.3, 3))
        out = ctl.control_without_inertia_shaping(m, q, qd, ref_t, LEG, free=free)
        # independent reduced-model recomposition
        idx = [1, 2, 3]
        M = dyn.mass_matrix(m, q)[np.ix_(idx, idx)]
        C = dyn.coriolis_matrix(m, q, qd)[np.ix_(idx, idx)]
        J = dyn.geometric_jacobian(m, q)[:, idx]
        Jd = dyn.jacobian_dot(m, q, qd)[:, idx]
        Ji = np.linalg.inv(J)
        lam = Ji.T @ M @ Ji
        gamma = Ji.T @ (C - M @ Ji @ Jd) @ Ji
        e = dyn.task_pose(m, q).position - x_d.position
        xdot = J @ qd[idx]
        edot = xdot - ref_t[1]
        F = (lam @ ref_t[2] + gamma @ xdot - np.diag(LEG.damping) @ edot
             - np.diag(LEG.stiffness) @ e)
        ref_tau = dyn.gravity_vector(m, q)
        ref_tau[idx] += J.T @ F
        assert np.allclose(out.tau_act[idx], ref_tau[idx], atol=1e-10 * max(
            1.0, np.max(np.abs(ref_tau))))
