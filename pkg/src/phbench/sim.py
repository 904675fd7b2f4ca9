"""Fixed-step closed-loop simulation.

Controller evaluated at the control rate with zero-order hold on the torque,
plant integrated with RK4 substeps, penalty ground contact on the tool/foot
point, per-tick metrics logging.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from . import control as ctl
from . import dynamics as dyn
from . import metrics as mx
from .errors import NumericalDivergence
from .model import RobotModel, builtin_model

DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class ContactParams:
    ground_height: float = 0.0          # m, plane normal +z
    normal_stiffness: float = 1e5       # N/m
    normal_damping: float = 1e3         # N s/m
    tangential_viscous: float = 200.0   # N s/m

    def __post_init__(self):
        if self.normal_stiffness <= 0.0:
            raise ValueError("contact stiffness must be positive")
        if self.normal_damping < 0.0 or self.tangential_viscous < 0.0:
            raise ValueError("contact dampings must be nonnegative")


@dataclass(frozen=True)
class SimConfig:
    control_dt: float = 1e-3
    physics_substeps: int = 10
    duration: float = 2.0
    contact: ContactParams | None = None
    model_error_scale: float | tuple = 1.0  # per-link controller mass multiplier
    joint_limit_stiffness: float = 2e4      # N m/rad penalty at hard stops
    joint_limit_damping: float = 100.0
    torque_limit: float | None = None       # actuator saturation, N m / N
    rms_window: tuple = (0.0, 0.25)

    def __post_init__(self):
        if self.control_dt <= 0.0 or self.duration <= 0.0:
            raise ValueError("control_dt and duration must be positive")
        if self.physics_substeps < 1:
            raise ValueError("physics_substeps must be >= 1")


def contact_force(foot_state: dyn.CartesianState, params: ContactParams) -> np.ndarray:
    """Penalty ground reaction at a point: zero above ground, else clamped
    normal spring-damper plus viscous tangential drag."""
    v = foot_state.twist if foot_state.twist is not None else np.zeros(3)
    return K.contact_force(np.asarray(foot_state.position, dtype=float),
                           np.asarray(v[:3], dtype=float),
                           params.ground_height, params.normal_stiffness,
                           params.normal_damping, params.tangential_viscous)


@dataclass(eq=False)
class SimTrajectory:
    """Uniform-grid log of a closed-loop run, metrics included."""
    model: RobotModel
    params: ctl.ImpedanceParams
    config: SimConfig
    t: np.ndarray          # (N,)
    q: np.ndarray          # (N,n)
    qd: np.ndarray         # (N,n)
    tau: np.ndarray        # (N,n) torque held over [t_k, t_k+1)
    x: np.ndarray          # (N,k) task coordinates
    xd_ref: np.ndarray     # (N,k)
    xdot: np.ndarray       # (N,k)
    xdot_d: np.ndarray     # (N,k)
    f_int: np.ndarray      # (N,k) interaction wrench (contact + injected)
    H_q: np.ndarray
    H_omega: np.ndarray
    P_cmd: np.ndarray
    int_P_cmd: np.ndarray
    gap: np.ndarray
    margin_qs: np.ndarray
    margin_gen: np.ndarray
    P_x: np.ndarray
    P_step_ref: np.ndarray
    e_step: np.ndarray
    ref_kind: str = "constant"
    quasi_static: bool = True
    step_axis: int | None = None
    step_amplitude: float = 0.0
    step_time: float = 0.0
    step_mass: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.q.shape[1]

    @property
    def k(self) -> int:
        return self.x.shape[1]

    def summary(self) -> dict:
        w0, w1 = self.config.rms_window
        t_hi = float(self.t[-1])
        w1 = min(w1, t_hi)
        rms = mx.rms_over_window(self.t, self.e_step, w0, w1) if w1 > w0 else 0.0
        return {
            "rms_e_step_W": rms,
            "rms_window_s": (w0, w1),
            "min_margin_qs_J": float(np.min(self.margin_qs)),
            "peak_H_omega_J": float(np.max(self.H_omega)),
        }


def _task_chart(model: RobotModel, q, base_R: np.ndarray) -> np.ndarray:
    """Task coordinates as a plain vector: translation rows, plus the
    rotation vector of base_R^T R for pose tasks."""
    pose = dyn.task_pose(model, q)
    rows = list(model.task.translation_rows)
    lin = pose.position[rows]
    if model.task.kind != "pose":
        return lin
    return np.concatenate([lin, dyn.rotation_vector(base_R.T @ pose.orientation)])


def _pose_chart(model: RobotModel, pose: dyn.CartesianState, base_R: np.ndarray) -> np.ndarray:
    rows = list(model.task.translation_rows)
    lin = pose.position[rows]
    if model.task.kind != "pose":
        return lin
    return np.concatenate([lin, dyn.rotation_vector(base_R.T @ pose.orientation)])


class Simulation:
    """One closed-loop run; owns its mutable state."""

    def __init__(self, model: RobotModel, params: ctl.ImpedanceParams,
                 ref: ctl.ReferenceSignal, config: SimConfig, q0, qd0=None, *,
                 fixed_joints=(), unactuated_joints=(), external_wrench=None,
                 step_axis=None, step_amplitude=0.0, step_time=0.0):
        self.model = model
        self.params = params
        self.ref = ref
        self.config = config
        self.q = np.asarray(q0, dtype=float).copy()
        self.qd = (np.zeros(model.n) if qd0 is None
                   else np.asarray(qd0, dtype=float).copy())
        self.t = 0.0
        self.free = np.ones(model.n, dtype=np.bool_)
        for i in fixed_joints:
            self.free[i] = False
        self.qd[~self.free] = 0.0
        self.actuated = np.ones(model.n, dtype=bool)
        for i in unactuated_joints:
            self.actuated[i] = False
        self.external_wrench = external_wrench
        self.step_axis = step_axis
        self.step_amplitude = step_amplitude
        self.step_time = step_time

        scale = config.model_error_scale
        self.ctrl_model = (model if np.all(np.asarray(scale) == 1.0)
                           else model.with_scaled_masses(scale))

        self._p = dyn._packed(model)
        self._base_R = ref.base.orientation
        self._q_datum = self.q.copy()
        self._U0 = dyn.potential_energy(model, self.q)
        lim_on = np.zeros(model.n, dtype=np.bool_)
        lim_lo = np.zeros(model.n)
        lim_hi = np.zeros(model.n)
        for i, j in enumerate(model.joints):
            if j.position_limits is not None:
                lim_on[i] = True
                lim_lo[i], lim_hi[i] = j.position_limits
        self._lim = (lim_on, lim_lo, lim_hi)

        # reference mass on the stepped axis for the fidelity metric: the
        # commanded inertia with shaping, the initial task inertia without
        self.step_mass = 0.0
        if step_axis is not None:
            if params.inertia_shaping:
                self.step_mass = float(params.inertia[step_axis])
            else:
                tsm0 = dyn.task_space_model(model, self.q, self.qd,
                                            free=self.free)
                self.step_mass = float(tsm0.lam[step_axis, step_axis])

    # -- one control tick ---------------------------------------------------

    def _interaction(self):
        """Interaction wrench in task coordinates at the current state."""
        k = self.params.k
        f = np.zeros(k)
        if self.config.contact is not None:
            p_ee, v_ee = K.ee_point_state(self._p.jtype, self._p.axis, self._p.R0,
                                          self._p.p0, self.q, self.qd,
                                          self._p.ee_link, self._p.ee_offset)
            c = self.config.contact
            fc = K.contact_force(p_ee, v_ee, c.ground_height, c.normal_stiffness,
                                 c.normal_damping, c.tangential_viscous)
            rows = self.model.task.translation_rows
            for out_i, row in enumerate(rows):
                f[out_i] += fc[row]
        if self.external_wrench is not None:
            f = f + np.asarray(self.external_wrench(self.t), dtype=float)
        return f

    def controller(self, f_int):
        """Evaluate the impedance law at the current state."""
        ref_t = self.ref.evaluate(self.t)
        pose = dyn.task_pose(self.ctrl_model, self.q)
        tsm = dyn.task_space_model(self.ctrl_model, self.q, self.qd, free=self.free)
        out = ctl._law_from_tsm(self.ctrl_model, tsm, self.q, self.qd, ref_t,
                                self.params,
                                f_int if self.params.inertia_shaping else None,
                                x_pose=pose)
        tau = out.tau_act.copy()
        tau[~self.actuated] = 0.0
        tau[~self.free] = 0.0  # locked joints are mounts, not actuators
        lim = self.config.torque_limit
        if lim is not None:
            np.clip(tau, -lim, lim, out=tau)
        return tau, tsm, ref_t, pose

    def _sample(self, tau, tsm, ref_t, f_int, pose):
        """Metrics at the current state with the just-commanded torque.

        Metric evaluation always uses the true plant model (tsm and pose are
        reused when the controller model is not deliberately detuned)."""
        if self.ctrl_model is not self.model:
            tsm = dyn.task_space_model(self.model, self.q, self.qd, free=self.free)
            pose = dyn.task_pose(self.model, self.q)
        x_d_pose, xdot_d, _ = ref_t
        x = _pose_chart(self.model, pose, self._base_R)
        x_d = _pose_chart(self.model, x_d_pose, self._base_R)
        xdot = tsm.jacobian @ self.qd
        kin, pot = dyn.mechanical_energy(self.model, self.q, self.qd)
        H_q = kin + pot - self._U0
        lam = None if self.params.inertia_shaping else tsm.lam
        H_om = mx.impedance_hamiltonian(x, x_d, xdot, xdot_d, self.params, lam=lam)
        P_cmd = float(self.qd @ tau)
        P_x = mx.cartesian_power(x, x_d, xdot, self.params)
        if self.step_axis is not None and self.t >= self.step_time:
            P_ref = float(mx.step_power_reference(
                self.params.stiffness[self.step_axis],
                self.params.damping[self.step_axis],
                self.step_mass, self.step_amplitude, self.t - self.step_time))
        else:
            P_ref = 0.0
        e_step = P_ref - P_x if self.step_axis is not None else 0.0
        return dict(t=self.t, q=self.q.copy(), qd=self.qd.copy(), tau=tau,
                    x=x, xd_ref=x_d, xdot=xdot, xdot_d=xdot_d, f_int=f_int,
                    H_q=H_q, H_omega=H_om, P_cmd=P_cmd, P_x=P_x,
                    P_step_ref=P_ref, e_step=e_step)

    def step(self):
        """Advance one control tick; returns the logged sample for this tick."""
        f_int = self._interaction()
        tau, tsm, ref_t, pose = self.controller(f_int)
        sample = self._sample(tau, tsm, ref_t, f_int, pose)

        cfg = self.config
        c = cfg.contact
        wrench6 = np.zeros(6)
        if self.external_wrench is not None:
            fx = np.asarray(self.external_wrench(self.t), dtype=float)
            rows = list(self.model.task.translation_rows)
            if self.model.task.kind == "pose":
                rows = rows + [3, 4, 5]
            for out_i, row in enumerate(rows):
                wrench6[row] += fx[out_i]
        lim_on, lim_lo, lim_hi = self._lim
        h = cfg.control_dt / cfg.physics_substeps
        p = self._p
        q_new, qd_new, ok = K.integrate_tick(
            p.jtype, p.axis, p.R0, p.p0, p.mass, p.com, p.inertia, p.gravity,
            self.q, self.qd, tau, self.free, lim_on, lim_lo, lim_hi,
            cfg.joint_limit_stiffness, cfg.joint_limit_damping,
            c is not None,
            c.ground_height if c else 0.0, c.normal_stiffness if c else 0.0,
            c.normal_damping if c else 0.0, c.tangential_viscous if c else 0.0,
            wrench6, p.ee_link, p.ee_offset, h, cfg.physics_substeps)
        if not ok:
            raise NumericalDivergence(
                f"state magnitude exceeded {DIVERGENCE_LIMIT:g} at t={self.t:.4f}")
        self.q = q_new
        self.qd = qd_new
        self.t += cfg.control_dt
        return sample

    def run(self) -> SimTrajectory:
        cfg = self.config
        n_ticks = int(round(cfg.duration / cfg.control_dt))
        samples = []
        for _ in range(n_ticks):
            samples.append(self.step())
        # terminal sample: metrics at the final state with a final controller
        # evaluation (torque logged but not applied)
        f_int = self._interaction()
        tau, tsm, ref_t, pose = self.controller(f_int)
        samples.append(self._sample(tau, tsm, ref_t, f_int, pose))
        return self._assemble(samples)

    def _assemble(self, samples) -> SimTrajectory:
        def col(name):
            return np.array([s[name] for s in samples])

        t = col("t")
        q = col("q")
        qd = col("qd")
        tau = col("tau")
        H_q = col("H_q")
        H_om = col("H_omega")
        xdot = col("xdot")
        xdot_d = col("xdot_d")
        f_int = col("f_int")
        int_p = mx.command_work(q, tau)
        gap = mx.hamiltonian_gap(H_q, H_om)
        margin_qs = int_p - gap
        # supply integral for the general margin (held interaction per tick)
        ed = xdot - xdot_d
        sup = np.einsum("ij,ij->i", 0.5 * (ed[:-1] + ed[1:]), f_int[:-1])
        supply = np.zeros(t.shape[0])
        np.cumsum(sup * np.diff(t), out=supply[1:])
        margin_gen = supply - (H_om - H_om[0])
        return SimTrajectory(
            model=self.model, params=self.params, config=self.config,
            t=t, q=q, qd=qd, tau=tau, x=col("x"), xd_ref=col("xd_ref"),
            xdot=xdot, xdot_d=xdot_d, f_int=f_int,
            H_q=H_q, H_omega=H_om, P_cmd=col("P_cmd"), int_P_cmd=int_p,
            gap=gap, margin_qs=margin_qs, margin_gen=margin_gen,
            P_x=col("P_x"), P_step_ref=col("P_step_ref"), e_step=col("e_step"),
            ref_kind=self.ref.kind, quasi_static=self.ref.quasi_static,
            step_axis=self.step_axis, step_amplitude=self.step_amplitude,
            step_time=self.step_time, step_mass=self.step_mass)


def step_sim(simulation: Simulation):
    """Advance one control tick; returns the sample logged for the tick."""
    return simulation.step()


def simulate_passive(model: RobotModel, q0, qd0, config: SimConfig,
                     gravity_on: bool = True):
    """Integrate the unforced plant (tau = 0); returns (t, q, qd, H_q).

    Used by the energy-conservation audits: H_q must be conserved to the
    integrator's order for contact-free, torque-free motion.
    """
    from dataclasses import replace as _replace

    mdl = model
    if not gravity_on:
        mdl = _replace(model, gravity=np.zeros(3))
    p = dyn._packed(mdl)
    n = mdl.n
    n_ticks = int(round(config.duration / config.control_dt))
    h = config.control_dt / config.physics_substeps
    free = np.ones(n, dtype=np.bool_)
    lim_on = np.zeros(n, dtype=np.bool_)
    zeros = np.zeros(n)
    w6 = np.zeros(6)
    t = np.arange(n_ticks + 1) * config.control_dt
    q_log = np.empty((n_ticks + 1, n))
    qd_log = np.empty((n_ticks + 1, n))
    H = np.empty(n_ticks + 1)
    q = np.asarray(q0, dtype=float).copy()
    qd = np.asarray(qd0, dtype=float).copy()
    U0 = dyn.potential_energy(mdl, q)
    for k in range(n_ticks + 1):
        q_log[k] = q
        qd_log[k] = qd
        kin, pot = dyn.mechanical_energy(mdl, q, qd)
        H[k] = kin + pot - U0
        if k == n_ticks:
            break
        q, qd, ok = K.integrate_tick(
            p.jtype, p.axis, p.R0, p.p0, p.mass, p.com, p.inertia, p.gravity,
            q, qd, zeros, free, lim_on, zeros, zeros, 0.0, 0.0,
            False, 0.0, 0.0, 0.0, 0.0, w6, p.ee_link, p.ee_offset,
            h, config.physics_substeps)
        if not ok:
            raise NumericalDivergence(f"passive simulation diverged at t={t[k]:.4f}")
    return t, q_log, qd_log, H


# ---------------------------------------------------------------------------
# Benchmark scenarios
# ---------------------------------------------------------------------------

ARM6_HOME = np.array([0.0, 0.55, 0.85, 0.0, -0.9, 0.0])
LEG3_CROUCH = np.array([0.0, 0.0, 0.4, -0.8])
# deeper crouch for gait tracking: keeps the +-0.2 m sweep well inside reach
LEG3_GAIT_CROUCH = np.array([0.0, 0.0, 0.8, -1.6])

TABLE_ARM_IS = ctl.ImpedanceParams(
    stiffness=np.array([800.0, 800.0, 800.0, 120.0, 120.0, 120.0]),
    damping=np.array([134.2, 134.2, 134.2, 13.96, 13.96, 13.96]),
    inertia=np.array([10.0, 10.0, 10.0, 0.722, 0.722, 0.722]))

TABLE_ARM_NO_IS = ctl.ImpedanceParams(
    stiffness=np.array([400.0, 400.0, 400.0, 70.0, 70.0, 40.0]),
    damping=np.array([134.2, 134.2, 134.2, 15.08, 15.08, 15.08]))

TABLE_LEG = ctl.ImpedanceParams(
    stiffness=np.array([400.0, 400.0, 800.0]),
    damping=np.array([43.0, 43.0, 90.0]))


def _standing_trunk_height(model: RobotModel, crouch_q) -> float:
    """Trunk height placing the foot exactly on the ground plane z=0."""
    q = np.asarray(crouch_q, dtype=float).copy()
    q[0] = 0.0
    foot_rel_z = dyn.task_position(model, q)[2]
    return -foot_rel_z


def run_scenario(name: str, config: SimConfig | None = None,
                 params: ctl.ImpedanceParams | None = None,
                 model: RobotModel | None = None, **kwargs) -> SimTrajectory:
    """Assemble and run one of the benchmark scenarios.

    step_arm   6-DoF arm at rest, single-axis Cartesian step (default 0.4 m).
    cpg_leg    suspended leg (trunk joint fixed) tracking a periodic gait,
               treated quasi-statically by the controller.
    jump_leg   leg with free, unactuated trunk slider over penalty ground;
               step-down/step-up reference sequence induces a jump.
    custom     caller supplies model/params/reference via kwargs.
    """
    if name == "step_arm":
        model = model or builtin_model("arm6")
        params = params or TABLE_ARM_IS
        config = config or SimConfig(duration=2.0)
        q0 = kwargs.get("q0", ARM6_HOME if model.name == "arm6" else np.zeros(model.n))
        # vertical step by default: the reflected vertical inertia keeps the
        # no-shaping step reference underdamped for the bundled arm
        axis = kwargs.get("axis", 2)
        amplitude = kwargs.get("amplitude", 0.4)
        step_time = kwargs.get("step_time", config.control_dt)
        base = dyn.task_pose(model, q0)
        ref = ctl.make_step_reference(axis, amplitude, base, k=model.k,
                                      step_time=step_time)
        sim = Simulation(model, params, ref, config, q0,
                         step_axis=axis, step_amplitude=amplitude,
                         step_time=step_time,
                         external_wrench=kwargs.get("external_wrench"))
        return sim.run()

    if name == "cpg_leg":
        model = model or builtin_model("leg3")
        params = params or TABLE_LEG
        config = config or SimConfig(duration=10.0, torque_limit=150.0)
        q0 = kwargs.get("q0", LEG3_GAIT_CROUCH)
        base = dyn.task_pose(model, q0)
        # phase 0.25 starts mid-stance at the sweep center: zero initial error
        gait = ctl.make_gait_reference(kwargs.get("step_length", 0.40),
                                       kwargs.get("period", 0.7),
                                       kwargs.get("step_height", 0.08),
                                       base, k=model.k, phase0=0.25)
        sim = Simulation(model, params, gait.as_quasi_static(), config, q0,
                         fixed_joints=(0,))
        return sim.run()

    if name == "jump_leg":
        model = model or builtin_model("leg3")
        params = params or TABLE_LEG
        config = config or SimConfig(duration=3.0, contact=ContactParams(),
                                     torque_limit=150.0)
        if config.contact is None:
            raise ValueError("jump_leg needs contact parameters")
        q0 = np.asarray(kwargs.get("q0", LEG3_CROUCH), dtype=float).copy()
        q0[0] = _standing_trunk_height(model, q0) + config.contact.ground_height
        rest = dyn.task_pose(model, q0)
        ref = ctl.make_jump_reference(kwargs.get("drop", 1.0),
                                      kwargs.get("return_delay", 0.2),
                                      rest, k=model.k,
                                      start_time=kwargs.get("start_time", 0.75))
        sim = Simulation(model, params, ref, config, q0,
                         unactuated_joints=(0,))
        return sim.run()

    if name == "custom":
        if model is None or params is None or "ref" not in kwargs:
            raise ValueError("custom scenario needs model, params, and ref")
        config = config or SimConfig()
        sim = Simulation(model, params, kwargs.pop("ref"), config,
                         kwargs.pop("q0"), **kwargs)
        return sim.run()

    raise ValueError(f"unknown scenario {name!r}")
