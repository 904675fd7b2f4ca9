"""Kinematics and dynamics of serial-chain robots.

Thin vectorized API over the compiled kernels: mass matrix (composite rigid
body), gravity and bias terms (Newton-Euler sweeps), Christoffel-consistent
Coriolis matrix, geometric Jacobian and its time derivative, task-space
inertia/Coriolis, and forward dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels as K
from .errors import SingularConfiguration
from .model import RobotModel

SIGMA_MIN_DEFAULT = 1e-4


@dataclass(frozen=True, eq=False)
class JointState:
    q: np.ndarray    # rad or m
    qd: np.ndarray   # rad/s or m/s

    def __post_init__(self):
        if self.q.shape != self.qd.shape:
            raise ValueError("q and qd dimensions differ")


@dataclass(frozen=True, eq=False)
class CartesianState:
    position: np.ndarray            # 3-vector, m
    orientation: np.ndarray         # 3x3 rotation
    twist: np.ndarray | None = None  # k-vector (m/s, rad/s)

    def validate(self) -> "CartesianState":
        R = self.orientation
        if np.max(np.abs(R @ R.T - np.eye(3))) > 1e-9 or np.linalg.det(R) < 0.0:
            raise ValueError("orientation is not a proper rotation")
        return self


@dataclass(frozen=True, eq=False)
class TaskSpaceModel:
    lam: np.ndarray           # k x k task-space inertia
    gamma: np.ndarray         # k x k task-space Coriolis
    jacobian: np.ndarray      # k x n
    jacobian_dot: np.ndarray  # k x n


class _Packed:
    """Plain-array mirror of a RobotModel for the compiled kernels."""

    def __init__(self, m: RobotModel):
        n = m.n
        self.jtype = np.array([K.PRISMATIC if j.is_prismatic else K.REVOLUTE
                               for j in m.joints], dtype=np.int64)
        self.axis = np.array([j.axis for j in m.joints], dtype=float)
        self.R0 = np.array([j.origin_rotation for j in m.joints], dtype=float)
        self.p0 = np.array([j.origin_xyz for j in m.joints], dtype=float)
        self.mass = np.array([l.mass for l in m.links], dtype=float)
        self.com = np.array([l.com for l in m.links], dtype=float)
        self.inertia = np.array([l.inertia for l in m.links], dtype=float)
        self.gravity = np.asarray(m.gravity, dtype=float)
        self.zero_gravity = np.zeros(3)
        self.ee_link = int(m.end_effector_link)
        self.ee_offset = np.asarray(m.ee_offset, dtype=float)
        self.rel_link = -1 if m.task.relative_to_link is None else int(m.task.relative_to_link)
        self.rows = np.asarray(m.task.translation_rows + ((3, 4, 5) if m.task.kind == "pose"
                                                          else ()), dtype=np.int64)
        self.n = n
        self.k = m.k


@lru_cache(maxsize=128)
def _packed(model: RobotModel) -> _Packed:
    return _Packed(model)


def _q(model, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n,):
        raise ValueError(f"expected a {model.n}-vector, got shape {q.shape}")
    return q


def forward_kinematics(model: RobotModel, q) -> CartesianState:
    """Absolute end-effector pose via chained joint transforms."""
    p = _packed(model)
    R, pos = K.ee_pose(p.jtype, p.axis, p.R0, p.p0, _q(model, q), p.ee_link, p.ee_offset)
    return CartesianState(position=pos, orientation=R)


def task_position(model: RobotModel, q) -> np.ndarray:
    """Task-frame tool position: relative to the configured base link if set."""
    p = _packed(model)
    q = _q(model, q)
    Rw, pw, _ = K.fk_links(p.jtype, p.axis, p.R0, p.p0, q)
    pos = pw[p.ee_link] + Rw[p.ee_link] @ p.ee_offset
    if p.rel_link >= 0:
        pos = pos - pw[p.rel_link]
    return pos


def task_pose(model: RobotModel, q) -> CartesianState:
    """Task-frame pose (position possibly base-relative, EE orientation)."""
    p = _packed(model)
    q = _q(model, q)
    Rw, pw, _ = K.fk_links(p.jtype, p.axis, p.R0, p.p0, q)
    pos = pw[p.ee_link] + Rw[p.ee_link] @ p.ee_offset
    if p.rel_link >= 0:
        pos = pos - pw[p.rel_link]
    return CartesianState(position=pos, orientation=Rw[p.ee_link].copy())


def mass_matrix(model: RobotModel, q) -> np.ndarray:
    p = _packed(model)
    return K.crba(p.jtype, p.axis, p.R0, p.p0, p.mass, p.com, p.inertia, _q(model, q))


def inverse_dynamics(model: RobotModel, q, qd, qdd) -> np.ndarray:
    """tau = M qdd + C qd + g (recursive Newton-Euler)."""
    p = _packed(model)
    return K.rnea(p.jtype, p.axis, p.R0, p.p0, p.mass, p.com, p.inertia,
                  p.gravity, _q(model, q), np.asarray(qd, float), np.asarray(qdd, float))


def gravity_vector(model: RobotModel, q) -> np.ndarray:
    p = _packed(model)
    z = np.zeros(model.n)
    return K.rnea(p.jtype, p.axis, p.R0, p.p0, p.mass, p.com, p.inertia,
                  p.gravity, _q(model, q), z, z)


def potential_energy(model: RobotModel, q) -> float:
    """Gravitational potential, absolute datum: U = -sum_i m_i g . c_i(q)."""
    p = _packed(model)
    Rw, pw, _ = K.fk_links(p.jtype, p.axis, p.R0, p.p0, _q(model, q))
    U = 0.0
    for i in range(p.n):
        c = pw[i] + Rw[i] @ p.com[i]
        U -= p.mass[i] * (p.gravity @ c)
    return U


def coriolis_matrix(model: RobotModel, q, qd) -> np.ndarray:
    """Christoffel-consistent Coriolis matrix (so that Mdot - 2C is skew).

    The quadratic velocity force c(q, v) is exactly bilinear in v, so the
    Christoffel matrix C(q, qd) e_j follows from the exact polarization
    identity, with no differentiation of M.
    """
    p = _packed(model)
    return K.coriolis_mat(p.jtype, p.axis, p.R0, p.p0, p.mass, p.com, p.inertia,
                          _q(model, q), np.asarray(qd, dtype=float))


def mechanical_energy(model: RobotModel, q, qd) -> tuple:
    """(kinetic, absolute potential) of the chain in one fused sweep."""
    p = _packed(model)
    return K.mechanical_energy(p.jtype, p.axis, p.R0, p.p0, p.mass, p.com,
                               p.inertia, p.gravity, _q(model, q),
                               np.asarray(qd, dtype=float))


def bias_forces(model: RobotModel, q, qd) -> np.ndarray:
    """C(q, qd) qd + g(q) in one Newton-Euler sweep."""
    p = _packed(model)
    return K.rnea(p.jtype, p.axis, p.R0, p.p0, p.mass, p.com, p.inertia,
                  p.gravity, _q(model, q), np.asarray(qd, float), np.zeros(model.n))


def geometric_jacobian(model: RobotModel, q) -> np.ndarray:
    """Task Jacobian (k x n): maps qd to the task twist."""
    p = _packed(model)
    J6 = K.jac6(p.jtype, p.axis, p.R0, p.p0, _q(model, q), p.ee_link, p.ee_offset, p.rel_link)
    return J6[p.rows]


def jacobian_dot(model: RobotModel, q, qd) -> np.ndarray:
    p = _packed(model)
    J6d = K.jac6_dot(p.jtype, p.axis, p.R0, p.p0, _q(model, q), np.asarray(qd, float),
                     p.ee_link, p.ee_offset, p.rel_link)
    return J6d[p.rows]


def task_velocity(model: RobotModel, q, qd) -> np.ndarray:
    return geometric_jacobian(model, q) @ np.asarray(qd, dtype=float)


def task_space_model(model: RobotModel, q, qd,
                     sigma_min_threshold: float = SIGMA_MIN_DEFAULT,
                     free=None) -> TaskSpaceModel:
    """Task-space inertia and Coriolis: Lambda = (J M^-1 J^T)^-1 reflected model.

    For square J this equals J^-T M J^-1 exactly; for k < n the M-weighted
    pseudoinverse Jbar = M^-1 J^T Lambda replaces J^-1.  An optional boolean
    `free` mask restricts the reflection to the unlocked joints (locked
    joints are kinematic constraints, e.g. a clamped trunk slider); the
    returned Jacobians keep full width with zero columns on locked joints.
    Raises SingularConfiguration when the smallest singular value of J drops
    below the threshold.
    """
    q = _q(model, q)
    qd = np.asarray(qd, dtype=float)
    J_full = geometric_jacobian(model, q)
    Jd_full = jacobian_dot(model, q, qd)
    M = mass_matrix(model, q)
    C = coriolis_matrix(model, q, qd)
    if free is not None and not np.all(free):
        idx = np.flatnonzero(free)
        J = J_full[:, idx]
        Jd = Jd_full[:, idx]
        M = M[np.ix_(idx, idx)]
        C = C[np.ix_(idx, idx)]
    else:
        idx = None
        J = J_full
        Jd = Jd_full
    smin = np.linalg.svd(J, compute_uv=False)[-1]
    if smin < sigma_min_threshold:
        raise SingularConfiguration(
            f"Jacobian near-singular: sigma_min = {smin:.3e} < {sigma_min_threshold:.3e}")
    k, n = J.shape
    if k == n:
        Ji = np.linalg.inv(J)
        lam = Ji.T @ M @ Ji
    else:
        lam = np.linalg.inv(J @ np.linalg.solve(M, J.T))
        Ji = np.linalg.solve(M, J.T) @ lam  # dynamically-consistent inverse
    lam = 0.5 * (lam + lam.T)
    gamma = Ji.T @ (C - M @ Ji @ Jd) @ Ji
    if idx is not None:
        J_out = np.zeros_like(J_full)
        Jd_out = np.zeros_like(Jd_full)
        J_out[:, idx] = J
        Jd_out[:, idx] = Jd
        return TaskSpaceModel(lam=lam, gamma=gamma, jacobian=J_out, jacobian_dot=Jd_out)
    return TaskSpaceModel(lam=lam, gamma=gamma, jacobian=J, jacobian_dot=Jd)


def forward_dynamics(model: RobotModel, q, qd, tau, f_ext=None) -> np.ndarray:
    """qdd = M^-1 (tau + J^T f_ext - C qd - g); f_ext is a task wrench."""
    q = _q(model, q)
    qd = np.asarray(qd, dtype=float)
    rhs = np.asarray(tau, dtype=float) - bias_forces(model, q, qd)
    if f_ext is not None:
        rhs = rhs + geometric_jacobian(model, q).T @ np.asarray(f_ext, dtype=float)
    return np.linalg.solve(mass_matrix(model, q), rhs)


# ---------------------------------------------------------------------------
# Rotation chart for pose tasks
# ---------------------------------------------------------------------------

def rotation_vector(R: np.ndarray) -> np.ndarray:
    """Rotation vector (axis * angle) of a rotation matrix, smooth near I."""
    tr = np.trace(R)
    cos_t = max(-1.0, min(1.0, 0.5 * (tr - 1.0)))
    theta = np.arccos(cos_t)
    w = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-8:
        return w  # first-order: 0.5 vee(R - R^T) ~ axis*angle
    if np.pi - theta < 1e-6:
        # near pi the skew part degenerates; recover the axis from R + I
        A = 0.5 * (R + np.eye(3))
        axis = np.sqrt(np.maximum(np.diag(A), 0.0))
        axis *= np.sign(np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0],
                                  R[1, 0] - R[0, 1]]) + 1e-300)
        return theta * axis / np.linalg.norm(axis)
    return w * (theta / np.sin(theta))


def pose_error(model: RobotModel, x: CartesianState, x_d: CartesianState) -> np.ndarray:
    """Task error e = x - x_d; rotational part is the log of R_d^T R."""
    rows = model.task.translation_rows
    e_lin = (x.position - x_d.position)[list(rows)]
    if model.task.kind != "pose":
        return e_lin
    e_rot = rotation_vector(x_d.orientation.T @ x.orientation)
    return np.concatenate([e_lin, e_rot])
