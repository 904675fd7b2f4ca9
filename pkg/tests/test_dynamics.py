import numpy as np
import pytest
from dataclasses import replace

from phbench import dynamics as dyn
from phbench.errors import SingularConfiguration
from phbench.model import builtin_model


def planar2_closed_forms(q, qd):
    """Independent textbook forms: two unit links, unit point masses at tips."""
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


# --- forward kinematics -----------------------------------------------------

def test_fk_planar2_stretched():
    m = builtin_model("planar2")
    x = dyn.forward_kinematics(m, np.array([0.0, 0.0]))
    assert np.allclose(x.position, [2.0, 0.0, 0.0], atol=1e-12)
    x.validate()


def test_fk_planar2_up():
    m = builtin_model("planar2")
    x = dyn.forward_kinematics(m, np.array([np.pi / 2, 0.0]))
    assert np.allclose(x.position, [0.0, 2.0, 0.0], atol=1e-12)


def test_fk_gantry_identity():
    m = builtin_model("gantry3")
    q = np.array([0.7, -0.3, 0.2])
    assert np.allclose(dyn.forward_kinematics(m, q).position, q, atol=1e-14)


# --- mass matrix ------------------------------------------------------------

def test_mass_matrix_planar2_values():
    m = builtin_model("planar2")
    assert np.allclose(dyn.mass_matrix(m, np.array([0.0, 0.0])),
                       [[5.0, 2.0], [2.0, 1.0]], atol=1e-12)
    assert np.allclose(dyn.mass_matrix(m, np.array([0.0, np.pi / 2])),
                       [[3.0, 1.0], [1.0, 1.0]], atol=1e-12)


def test_mass_matrix_spd_property():
    rng = np.random.default_rng(1)
    for name in ("planar2", "arm6", "leg3"):
        m = builtin_model(name)
        for _ in range(10):
            M = dyn.mass_matrix(m, rng.uniform(-np.pi, np.pi, m.n))
            assert np.max(np.abs(M - M.T)) < 1e-12
            assert np.linalg.eigvalsh(M)[0] > 0.0


def test_mass_matrix_crba_equals_rnea_columns():
    rng = np.random.default_rng(2)
    for name in ("arm6", "leg3"):
        m = builtin_model(name)
        q = rng.uniform(-1.0, 1.0, m.n)
        g = dyn.gravity_vector(m, q)
        cols = np.column_stack([
            dyn.inverse_dynamics(m, q, np.zeros(m.n), e) - g for e in np.eye(m.n)])
        assert np.allclose(dyn.mass_matrix(m, q), cols, atol=1e-10)


# --- gravity ----------------------------------------------------------------

def test_gravity_planar2_values():
    m = builtin_model("planar2")
    assert np.allclose(dyn.gravity_vector(m, np.array([0.0, 0.0])),
                       [29.43, 9.81], atol=1e-12)
    assert np.allclose(dyn.gravity_vector(m, np.array([np.pi / 2, 0.0])),
                       [0.0, 0.0], atol=1e-9)


def test_gravity_gantry_vertical_axis():
    m = builtin_model("gantry3")
    assert np.allclose(dyn.gravity_vector(m, np.zeros(3)), [0.0, 0.0, 98.1],
                       atol=1e-4)


def test_gravity_equals_potential_gradient():
    rng = np.random.default_rng(4)
    eps = 1e-6
    for name in ("planar2", "arm6", "leg3"):
        m = builtin_model(name)
        q = rng.uniform(-1.0, 1.0, m.n)
        g = dyn.gravity_vector(m, q)
        for i in range(m.n):
            dq = np.zeros(m.n)
            dq[i] = eps
            num = (dyn.potential_energy(m, q + dq)
                   - dyn.potential_energy(m, q - dq)) / (2 * eps)
            assert g[i] == pytest.approx(num, abs=1e-6)


# --- coriolis ---------------------------------------------------------------

def test_coriolis_zero_cases():
    m = builtin_model("planar2")
    # straight arm: the single coupling term h = -sin(q2) vanishes
    assert np.allclose(dyn.coriolis_matrix(m, np.array([0.3, 0.0]),
                                           np.array([1.0, 2.0])), 0.0, atol=1e-12)
    a6 = builtin_model("arm6")
    assert np.allclose(dyn.coriolis_matrix(a6, np.full(6, 0.4), np.zeros(6)),
                       0.0, atol=1e-12)


def test_coriolis_closed_form():
    m = builtin_model("planar2")
    C = dyn.coriolis_matrix(m, np.array([0.0, np.pi / 2]), np.array([1.0, 0.0]))
    assert np.allclose(C, [[0.0, -1.0], [1.0, 0.0]], atol=1e-12)


def test_coriolis_matches_textbook_everywhere():
    m = builtin_model("planar2")
    rng = np.random.default_rng(5)
    for _ in range(20):
        q = rng.uniform(-np.pi, np.pi, 2)
        qd = rng.uniform(-2, 2, 2)
        _, _, C_ref, _, _ = planar2_closed_forms(q, qd)
        assert np.allclose(dyn.coriolis_matrix(m, q, qd), C_ref, atol=1e-12)


def test_skew_symmetry_property():
    rng = np.random.default_rng(6)
    eps = 1e-5  # optimal central-difference step: truncation ~ roundoff
    for name in ("arm6", "leg3"):
        m = builtin_model(name)
        for _ in range(20):
            q = rng.uniform(-1.5, 1.5, m.n)
            qd = rng.uniform(-1.0, 1.0, m.n)
            C = dyn.coriolis_matrix(m, q, qd)
            Mdot = (dyn.mass_matrix(m, q + eps * qd)
                    - dyn.mass_matrix(m, q - eps * qd)) / (2 * eps)
            assert abs(qd @ (Mdot - 2 * C) @ qd) < 1e-9


# --- jacobians --------------------------------------------------------------

def test_jacobian_planar2_value():
    m = builtin_model("planar2")
    assert np.allclose(dyn.geometric_jacobian(m, np.array([0.0, 0.0])),
                       [[0.0, 0.0], [2.0, 1.0]], atol=1e-12)


def test_jacobian_gantry_identity():
    m = builtin_model("gantry3")
    rng = np.random.default_rng(7)
    for _ in range(3):
        J = dyn.geometric_jacobian(m, rng.uniform(-1, 1, 3))
        assert np.allclose(J, np.eye(3), atol=1e-14)


def test_jacobian_finite_difference_oracle():
    rng = np.random.default_rng(8)
    eps = 1e-7
    for name in ("planar2", "arm6"):
        m = builtin_model(name)
        rows = list(m.task.translation_rows)
        for _ in range(10):
            q = rng.uniform(-1.2, 1.2, m.n)
            qd = rng.uniform(-1.0, 1.0, m.n)
            lin = (dyn.geometric_jacobian(m, q) @ qd)[:len(rows)]
            num = (dyn.forward_kinematics(m, q + eps * qd).position
                   - dyn.forward_kinematics(m, q - eps * qd).position) / (2 * eps)
            assert np.allclose(lin, num[rows], atol=1e-6)


def test_jacobian_dot_trivial_cases():
    a6 = builtin_model("arm6")
    assert np.allclose(dyn.jacobian_dot(a6, np.full(6, 0.3), np.zeros(6)), 0.0,
                       atol=1e-14)
    g3 = builtin_model("gantry3")
    assert np.allclose(dyn.jacobian_dot(g3, np.zeros(3), np.ones(3)), 0.0,
                       atol=1e-14)


def test_jacobian_dot_finite_difference_oracle():
    rng = np.random.default_rng(9)
    eps = 1e-6
    for name in ("planar2", "arm6", "leg3"):
        m = builtin_model(name)
        for _ in range(5):
            q = rng.uniform(-1.0, 1.0, m.n)
            qd = rng.uniform(-1.0, 1.0, m.n)
            Jd = dyn.jacobian_dot(m, q, qd)
            num = (dyn.geometric_jacobian(m, q + eps * qd)
                   - dyn.geometric_jacobian(m, q - eps * qd)) / (2 * eps)
            assert np.allclose(Jd, num, atol=1e-6)
    # planar2 value from the spec example grid
    m = builtin_model("planar2")
    q = np.array([0.0, 0.0])
    qd = np.array([1.0, 1.0])
    num = (dyn.geometric_jacobian(m, q + eps * qd)
           - dyn.geometric_jacobian(m, q - eps * qd)) / (2 * eps)
    assert np.allclose(dyn.jacobian_dot(m, q, qd), num, atol=1e-6)


# --- task-space model -------------------------------------------------------

def test_task_space_gantry():
    m = builtin_model("gantry3")
    tsm = dyn.task_space_model(m, np.zeros(3), np.array([0.3, 0.1, -0.2]))
    assert np.allclose(tsm.lam, np.diag([10.0, 10.0, 10.0]), atol=1e-5)
    assert np.allclose(tsm.gamma, 0.0, atol=1e-5)


def test_task_space_singular_raises():
    m = builtin_model("planar2")
    with pytest.raises(SingularConfiguration):
        dyn.task_space_model(m, np.array([0.3, 0.0]), np.zeros(2))


def test_task_space_dense_linear_algebra_oracle():
    m = builtin_model("planar2")
    q = np.array([0.3, 1.2])
    qd = np.zeros(2)
    tsm = dyn.task_space_model(m, q, qd)
    J = dyn.geometric_jacobian(m, q)
    lam_ref = np.linalg.solve(J.T, dyn.mass_matrix(m, q)) @ np.linalg.inv(J)
    assert np.allclose(tsm.lam, lam_ref, atol=1e-9)
    assert np.max(np.abs(tsm.lam - tsm.lam.T)) < 1e-9


def test_task_space_gamma_oracle():
    m = builtin_model("planar2")
    rng = np.random.default_rng(10)
    q = rng.uniform(0.2, 1.2, 2)
    qd = rng.uniform(-1.0, 1.0, 2)
    tsm = dyn.task_space_model(m, q, qd)
    J = dyn.geometric_jacobian(m, q)
    Ji = np.linalg.inv(J)
    gamma_ref = Ji.T @ (dyn.coriolis_matrix(m, q, qd)
                        - dyn.mass_matrix(m, q) @ Ji @ dyn.jacobian_dot(m, q, qd)) @ Ji
    assert np.allclose(tsm.gamma, gamma_ref, atol=1e-9)


def test_task_space_locked_joint_matches_reduced_model():
    m = builtin_model("leg3")
    q = np.array([0.3, 0.1, 0.8, -1.4])
    qd = np.array([0.0, 0.2, -0.5, 0.7])
    free = np.array([False, True, True, True])
    tsm = dyn.task_space_model(m, q, qd, free=free)
    J = dyn.geometric_jacobian(m, q)[:, 1:]
    M = dyn.mass_matrix(m, q)[1:, 1:]
    lam_ref = np.linalg.inv(J @ np.linalg.solve(M, J.T))
    assert np.allclose(tsm.lam, lam_ref, atol=1e-9)
    assert np.allclose(tsm.jacobian[:, 0], 0.0)


# --- forward dynamics -------------------------------------------------------

def test_forward_dynamics_f_ma():
    m = replace(builtin_model("gantry3"), gravity=np.zeros(3))
    qdd = dyn.forward_dynamics(m, np.zeros(3), np.zeros(3), np.array([10.0, 0, 0]))
    assert np.allclose(qdd, [1.0, 0.0, 0.0], atol=1e-6)


def test_forward_dynamics_gravity_compensation():
    m = builtin_model("planar2")
    q = np.array([0.4, -0.7])
    qdd = dyn.forward_dynamics(m, q, np.zeros(2), dyn.gravity_vector(m, q))
    assert np.allclose(qdd, 0.0, atol=1e-10)


def test_forward_dynamics_plugback_residual():
    rng = np.random.default_rng(11)
    for name in ("planar2", "arm6", "leg3"):
        m = builtin_model(name)
        for _ in range(10):
            q = rng.uniform(-1.2, 1.2, m.n)
            qd = rng.uniform(-1.5, 1.5, m.n)
            tau = rng.uniform(-30, 30, m.n)
            qdd = dyn.forward_dynamics(m, q, qd, tau)
            res = dyn.inverse_dynamics(m, q, qd, qdd) - tau
            assert np.max(np.abs(res)) < 1e-10


def test_forward_dynamics_external_wrench():
    m = builtin_model("planar2")
    q = np.array([0.4, 0.9])
    qd = np.array([0.1, -0.2])
    f = np.array([3.0, -1.0])
    tau = np.array([1.0, 0.5])
    with_f = dyn.forward_dynamics(m, q, qd, tau, f_ext=f)
    J = dyn.geometric_jacobian(m, q)
    equivalent = dyn.forward_dynamics(m, q, qd, tau + J.T @ f)
    assert np.allclose(with_f, equivalent, atol=1e-12)


def test_rotation_vector_roundtrip():
    from phbench._kernels import _rot_axis
    rng = np.random.default_rng(12)
    for _ in range(20):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = rng.uniform(-3.0, 3.0)
        R = _rot_axis(axis, angle)
        rv = dyn.rotation_vector(R)
        assert np.allclose(rv, axis * angle, atol=1e-9)
