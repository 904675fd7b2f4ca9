"""Cartesian impedance control laws and reference-signal generators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dynamics as dyn
from ._kernels import _rot_axis
from .model import RobotModel


@dataclass(frozen=True, eq=False)
class ImpedanceParams:
    """Diagonal task-space impedance: stiffness/damping always, inertia only
    when shaping is on (inertia=None means "render the robot's own Lambda(x)").
    """
    stiffness: np.ndarray          # k diagonal entries [N/m, N m/rad]
    damping: np.ndarray            # k diagonal entries [N s/m, N m s/rad]
    inertia: np.ndarray | None = None  # k diagonal entries [kg, kg m^2]

    def __post_init__(self):
        ks = np.asarray(self.stiffness, dtype=float)
        ds = np.asarray(self.damping, dtype=float)
        object.__setattr__(self, "stiffness", ks)
        object.__setattr__(self, "damping", ds)
        if ks.shape != ds.shape or ks.ndim != 1:
            raise ValueError("stiffness and damping must be equal-length vectors")
        if np.any(ks <= 0.0) or np.any(ds <= 0.0):
            raise ValueError("impedance gains must be positive")
        if self.inertia is not None:
            li = np.asarray(self.inertia, dtype=float)
            object.__setattr__(self, "inertia", li)
            if li.shape != ks.shape or np.any(li <= 0.0):
                raise ValueError("desired inertia must be positive and match k")

    @property
    def k(self) -> int:
        return self.stiffness.shape[0]

    @property
    def inertia_shaping(self) -> bool:
        return self.inertia is not None


@dataclass(frozen=True, eq=False)
class ControlOutput:
    tau_act: np.ndarray              # joint torques/forces
    cartesian_force_cmd: np.ndarray  # bracketed Cartesian term before J^T


class ReferenceSignal:
    """Time-parameterized desired pose with analytic velocity/acceleration.

    evaluate(t) -> (x_d: CartesianState, xdot_d: k-vector, xddot_d: k-vector)
    """

    kind = "constant"
    quasi_static = True

    def __init__(self, base_pose: dyn.CartesianState, k: int):
        self.base = base_pose
        self.k = k

    def evaluate(self, t: float):
        z = np.zeros(self.k)
        return self.base, z, z

    def as_quasi_static(self) -> "ReferenceSignal":
        """View of this reference with zeroed velocity/acceleration (the pose
        sequence is followed as a chain of holds, like a sampled setpoint)."""
        if self.quasi_static:
            return self
        return _QuasiStaticView(self)


class _QuasiStaticView(ReferenceSignal):
    quasi_static = True

    def __init__(self, inner: ReferenceSignal):
        super().__init__(inner.base, inner.k)
        self.kind = inner.kind
        self._inner = inner

    def evaluate(self, t: float):
        pose, _, _ = self._inner.evaluate(t)
        z = np.zeros(self.k)
        return pose, z, z


def _offset_pose(base: dyn.CartesianState, axis: int, delta: float) -> dyn.CartesianState:
    """Shift a pose along a task axis: translation for axis < 3, else rotation."""
    if axis < 3:
        pos = base.position.copy()
        pos[axis] += delta
        return dyn.CartesianState(position=pos, orientation=base.orientation)
    unit = np.zeros(3)
    unit[axis - 3] = 1.0
    return dyn.CartesianState(position=base.position,
                              orientation=base.orientation @ _rot_axis(unit, delta))


class StepReference(ReferenceSignal):
    kind = "step"
    quasi_static = True

    def __init__(self, axis: int, amplitude: float, base_pose, k: int, step_time: float = 0.0):
        super().__init__(base_pose, k)
        if axis >= k:
            raise ValueError(f"step axis {axis} out of range for k={k}")
        self.axis = axis
        self.amplitude = amplitude
        self.step_time = step_time
        self._after = _offset_pose(base_pose, axis, amplitude)

    def evaluate(self, t: float):
        z = np.zeros(self.k)
        return (self._after if t >= self.step_time else self.base), z, z


class GaitReference(ReferenceSignal):
    """Periodic foot trajectory: linear stance sweep, cycloidal swing arc.

    Forward motion on task axis 0, arc height on axis 2.  Stance occupies the
    first half of the period.  Position is continuous; velocity jumps at the
    stance/swing hand-off (the arc starts and ends at rest).
    """

    kind = "gait"
    quasi_static = False

    def __init__(self, step_length: float, period: float, step_height: float,
                 base_pose, k: int, phase0: float = 0.0):
        if period <= 0.0:
            raise ValueError("gait period must be positive")
        super().__init__(base_pose, k)
        self.step_length = step_length
        self.period = period
        self.step_height = step_height
        self.phase0 = phase0  # 0.25 starts mid-stance at the sweep center

    def evaluate(self, t: float):
        L, T, h = self.step_length, self.period, self.step_height
        phase = (t / T + self.phase0) % 1.0
        xdot = np.zeros(self.k)
        xddot = np.zeros(self.k)
        if phase <= 0.5:
            s = phase / 0.5
            fwd = 0.5 * L - L * s
            height = 0.0
            xdot[0] = -2.0 * L / T
        else:
            s = (phase - 0.5) / 0.5
            sdot = 2.0 / T
            two_pi_s = 2.0 * np.pi * s
            fwd = -0.5 * L + L * (s - np.sin(two_pi_s) / (2.0 * np.pi))
            height = 0.5 * h * (1.0 - np.cos(two_pi_s))
            xdot[0] = L * (1.0 - np.cos(two_pi_s)) * sdot
            xddot[0] = L * 2.0 * np.pi * np.sin(two_pi_s) * sdot ** 2
            xdot[2] = h * np.pi * np.sin(two_pi_s) * sdot
            xddot[2] = h * 2.0 * np.pi ** 2 * np.cos(two_pi_s) * sdot ** 2
        pos = self.base.position.copy()
        pos[0] += fwd
        pos[2] += height
        pose = dyn.CartesianState(position=pos, orientation=self.base.orientation)
        return pose, xdot, xddot


class JumpReference(ReferenceSignal):
    """Vertical step-down of `drop` at start_time, step back up return_delay
    later; quasi-static between and after the steps."""

    kind = "jump_sequence"
    quasi_static = True

    def __init__(self, drop: float, return_delay: float, rest_pose, k: int,
                 start_time: float = 0.5):
        if drop < 0.0 or return_delay <= 0.0:
            raise ValueError("drop must be >= 0 and return_delay > 0")
        super().__init__(rest_pose, k)
        self.drop = drop
        self.return_delay = return_delay
        self.start_time = start_time
        self._down = _offset_pose(rest_pose, 2, -drop)

    def evaluate(self, t: float):
        z = np.zeros(self.k)
        if self.start_time <= t < self.start_time + self.return_delay:
            return self._down, z, z
        return self.base, z, z


def make_step_reference(axis: int, amplitude: float, base_pose, k: int | None = None,
                        step_time: float = 0.0) -> ReferenceSignal:
    k = 3 if k is None else k
    if amplitude == 0.0:
        return ReferenceSignal(base_pose, k)
    return StepReference(axis, amplitude, base_pose, k, step_time)


def make_gait_reference(step_length: float, period: float, step_height: float,
                        base_pose, k: int = 3, phase0: float = 0.0) -> GaitReference:
    return GaitReference(step_length, period, step_height, base_pose, k, phase0)


def make_jump_reference(drop: float, return_delay: float, rest_pose, k: int = 3,
                        start_time: float = 0.5) -> ReferenceSignal:
    if drop == 0.0:
        return ReferenceSignal(rest_pose, k)
    return JumpReference(drop, return_delay, rest_pose, k, start_time)


# ---------------------------------------------------------------------------
# Control laws
# ---------------------------------------------------------------------------

def _law_from_tsm(model: RobotModel, tsm, q, qd, ref_at_t,
                  params: ImpedanceParams, f_int, x_pose=None) -> ControlOutput:
    """Shared core of both laws given a precomputed task-space model."""
    x_d, xdot_d, xddot_d = ref_at_t
    x = dyn.task_pose(model, q) if x_pose is None else x_pose
    e = dyn.pose_error(model, x, x_d)
    xdot = tsm.jacobian @ np.asarray(qd, dtype=float)
    edot = xdot - xdot_d
    if params.inertia_shaping:
        f = np.zeros(params.k) if f_int is None else np.asarray(f_int, dtype=float)
        lam_ratio = tsm.lam / params.inertia[None, :]  # Lam @ diag(1/Lam_d)
        F = (tsm.lam @ xddot_d + tsm.gamma @ xdot
             - lam_ratio @ (params.damping * edot + params.stiffness * e)
             + (lam_ratio - np.eye(params.k)) @ f)
    else:
        F = (tsm.lam @ xddot_d + tsm.gamma @ xdot
             - params.damping * edot - params.stiffness * e)
    tau = dyn.gravity_vector(model, q) + tsm.jacobian.T @ F
    return ControlOutput(tau_act=tau, cartesian_force_cmd=F)


def control_with_inertia_shaping(model: RobotModel, q, qd, ref_at_t,
                                 params: ImpedanceParams, f_int=None,
                                 free=None) -> ControlOutput:
    """Classical impedance law rendering a chosen desired inertia.

    tau = g + J^T [Lam xddot_d + Gamma xdot - Lam Lam_d^-1 (D edot + K e)
                   + (Lam Lam_d^-1 - I) f_int]
    """
    if not params.inertia_shaping:
        raise ValueError("params request no inertia shaping; use the no-IS law")
    tsm = dyn.task_space_model(model, q, qd, free=free)
    return _law_from_tsm(model, tsm, q, qd, ref_at_t, params, f_int)


def control_without_inertia_shaping(model: RobotModel, q, qd, ref_at_t,
                                    params: ImpedanceParams,
                                    free=None) -> ControlOutput:
    """Impedance law keeping the robot's natural task inertia; needs no
    interaction wrench measurement.

    tau = g + J^T [Lam xddot_d + Gamma xdot - D edot - K e]
    """
    if params.inertia_shaping:
        raise ValueError("params request inertia shaping; use the IS law")
    tsm = dyn.task_space_model(model, q, qd, free=free)
    return _law_from_tsm(model, tsm, q, qd, ref_at_t, params, None)
