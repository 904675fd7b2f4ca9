"""Scenario configuration files: one TOML file fully determines a run.

    [scenario]
    name = "step_arm"              # step_arm | cpg_leg | jump_leg
    model = "arm6"                 # built-in name or path to a model file
    output = "step_arm.csv"

    [impedance]
    stiffness = [800.0, ...]       # k entries
    damping = [134.2, ...]
    inertia = [10.0, ...]          # omit to disable inertia shaping

    [reference]                    # fields depend on scenario
    axis = 2                       # step_arm
    amplitude_m = 0.4
    step_length_m = 0.4            # cpg_leg
    period_s = 0.7
    step_height_m = 0.08
    drop_m = 1.0                   # jump_leg
    return_delay_s = 0.2
    start_time_s = 0.75

    [sim]
    duration_s = 2.0
    control_dt_s = 0.001
    physics_substeps = 10
    model_error_scale = 1.0
    torque_limit_Nm = 150.0        # optional
    rms_window_s = [0.0, 0.25]

    [sim.contact]                  # optional; jump_leg enables by default
    ground_height_m = 0.0
    normal_stiffness_Npm = 1.0e5
    normal_damping_Nspm = 1.0e3
    tangential_viscous_Nspm = 200.0

    [initial]
    q = [...]                      # optional start configuration
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from importlib import resources

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import control as ctl
from . import dynamics as dyn
from . import metrics as mx
from . import sim as sm
from .errors import ModelSemanticError, ModelSyntaxError, SchemaError
from .model import RobotModel, builtin_model, parse_model

BUILTIN_CONFIGS = ("step_arm", "step_arm_no_is", "cpg_leg", "jump_leg", "gantry_step")


@dataclass(eq=False)
class ScenarioConfig:
    name: str
    model: RobotModel
    params: ctl.ImpedanceParams
    sim: sm.SimConfig
    reference: dict
    output: str
    q0: np.ndarray | None = None

    def run(self) -> sm.SimTrajectory:
        kwargs = dict(self.reference)
        if self.q0 is not None:
            kwargs["q0"] = self.q0
        return sm.run_scenario(self.name, config=self.sim, params=self.params,
                               model=self.model, **kwargs)


def resolve_config_path(name_or_path: str) -> str:
    """Accept a filesystem path or the name of a bundled config."""
    if os.path.exists(name_or_path):
        return name_or_path
    stem = name_or_path.removesuffix(".toml")
    if stem in BUILTIN_CONFIGS:
        return str(resources.files("phbench").joinpath(f"configs/{stem}.toml"))
    raise FileNotFoundError(f"no such config file or bundled config: {name_or_path!r}")


def load_scenario(path: str) -> ScenarioConfig:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ModelSyntaxError(f"config syntax error: {exc}") from None

    sc = data.get("scenario", {})
    name = sc.get("name")
    if name not in ("step_arm", "cpg_leg", "jump_leg"):
        raise ModelSemanticError(f"unknown or missing scenario name: {name!r}")
    model_ref = sc.get("model", "")
    if model_ref in ("planar2", "gantry3", "arm6", "leg3"):
        model = builtin_model(model_ref)
    elif os.path.exists(model_ref):
        with open(model_ref) as fh:
            model = parse_model(fh.read())
    else:
        raise ModelSemanticError(f"model {model_ref!r} is neither built-in nor a file")

    imp = data.get("impedance", {})
    if "stiffness" not in imp or "damping" not in imp:
        raise ModelSemanticError("config needs impedance stiffness and damping")
    params = ctl.ImpedanceParams(
        stiffness=np.asarray(imp["stiffness"], dtype=float),
        damping=np.asarray(imp["damping"], dtype=float),
        inertia=(np.asarray(imp["inertia"], dtype=float)
                 if "inertia" in imp else None))
    if params.k != model.k:
        raise ModelSemanticError(
            f"impedance dimension {params.k} does not match task dimension {model.k}")

    st = data.get("sim", {})
    contact = None
    if "contact" in st:
        c = st["contact"]
        contact = sm.ContactParams(
            ground_height=float(c.get("ground_height_m", 0.0)),
            normal_stiffness=float(c.get("normal_stiffness_Npm", 1e5)),
            normal_damping=float(c.get("normal_damping_Nspm", 1e3)),
            tangential_viscous=float(c.get("tangential_viscous_Nspm", 200.0)))
    elif name == "jump_leg":
        contact = sm.ContactParams()
    window = st.get("rms_window_s", [0.0, 0.25])
    sim_cfg = sm.SimConfig(
        control_dt=float(st.get("control_dt_s", 1e-3)),
        physics_substeps=int(st.get("physics_substeps", 10)),
        duration=float(st.get("duration_s", 2.0)),
        contact=contact,
        model_error_scale=st.get("model_error_scale", 1.0),
        torque_limit=(float(st["torque_limit_Nm"]) if "torque_limit_Nm" in st
                      else None),
        rms_window=(float(window[0]), float(window[1])))

    rf = data.get("reference", {})
    reference = {}
    if name == "step_arm":
        reference["axis"] = int(rf.get("axis", 2))
        reference["amplitude"] = float(rf.get("amplitude_m", 0.4))
        if "step_time_s" in rf:
            reference["step_time"] = float(rf["step_time_s"])
    elif name == "cpg_leg":
        reference["step_length"] = float(rf.get("step_length_m", 0.40))
        reference["period"] = float(rf.get("period_s", 0.7))
        reference["step_height"] = float(rf.get("step_height_m", 0.08))
    elif name == "jump_leg":
        reference["drop"] = float(rf.get("drop_m", 1.0))
        reference["return_delay"] = float(rf.get("return_delay_s", 0.2))
        reference["start_time"] = float(rf.get("start_time_s", 0.75))

    init = data.get("initial", {})
    q0 = np.asarray(init["q"], dtype=float) if "q" in init else None

    return ScenarioConfig(name=name, model=model, params=params, sim=sim_cfg,
                          reference=reference, output=sc.get("output", f"{name}.csv"),
                          q0=q0)


# ---------------------------------------------------------------------------
# Offline metric recomputation from a log (model-based, no force data needed
# for the quasi-static margin)
# ---------------------------------------------------------------------------

def recompute_metrics(log, config: ScenarioConfig) -> dict:
    """Recompute every metric column from state logs alone.

    Needs q, qd, tau, x, xd_ref; fint columns additionally enable the
    general passivity margin.  Interaction-free quantities reproduce the
    simulator's inline values exactly (same model, same code paths).
    """
    from .csvio import expect_sim_log

    model = config.model
    params = config.params
    expect_sim_log(log, model)
    t = log.t
    q = np.atleast_2d(log.vector("q"))
    qd = np.atleast_2d(log.vector("qd"))
    tau = np.atleast_2d(log.vector("tau"))
    x = np.atleast_2d(log.vector("x"))
    xd_ref = np.atleast_2d(log.vector("xd_ref"))
    n_rows = t.shape[0]

    free = np.ones(model.n, dtype=bool)
    if config.name == "cpg_leg":
        free[0] = False

    is_step = config.name == "step_arm"
    if is_step:
        axis = config.reference.get("axis", 2)
        amplitude = config.reference.get("amplitude", 0.4)
        step_time = config.reference.get("step_time", config.sim.control_dt)
        if params.inertia_shaping:
            m_d = float(params.inertia[axis])
        else:
            tsm0 = dyn.task_space_model(model, q[0], qd[0], free=free)
            m_d = float(tsm0.lam[axis, axis])

    U0 = dyn.potential_energy(model, q[0])
    H_q = np.empty(n_rows)
    H_om = np.empty(n_rows)
    P_cmd = np.empty(n_rows)
    P_x = np.empty(n_rows)
    P_ref = np.zeros(n_rows)
    e_step = np.zeros(n_rows)
    xdot_all = np.empty_like(x)
    for i in range(n_rows):
        kin, pot = dyn.mechanical_energy(model, q[i], qd[i])
        H_q[i] = kin + pot - U0
        tsm = dyn.task_space_model(model, q[i], qd[i], free=free)
        xdot = tsm.jacobian @ qd[i]
        xdot_all[i] = xdot
        lam = None if params.inertia_shaping else tsm.lam
        zero = np.zeros(model.k)
        H_om[i] = mx.impedance_hamiltonian(x[i], xd_ref[i], xdot, zero, params, lam=lam)
        P_cmd[i] = qd[i] @ tau[i]
        P_x[i] = mx.cartesian_power(x[i], xd_ref[i], xdot, params)
        if is_step:
            if t[i] >= step_time:
                P_ref[i] = mx.step_power_reference(params.stiffness[axis],
                                                   params.damping[axis], m_d,
                                                   amplitude, t[i] - step_time)
            e_step[i] = P_ref[i] - P_x[i]

    int_p = mx.command_work(q, tau)
    gap = mx.hamiltonian_gap(H_q, H_om)
    margin_qs = int_p - gap
    out = {
        "t_s": t, "H_q_J": H_q, "H_Omega_J": H_om, "P_cmd_W": P_cmd,
        "int_P_cmd_J": int_p, "gap_J": gap, "margin_qs_J": margin_qs,
        "P_x_W": P_x, "P_step_ref_W": P_ref, "e_step_W": e_step,
    }
    if log.has("fint"):
        f_int = np.atleast_2d(log.vector("fint"))
        ed = xdot_all  # quasi-static reference: xdot_d = 0
        sup = np.einsum("ij,ij->i", 0.5 * (ed[:-1] + ed[1:]), f_int[:-1])
        supply = np.zeros(n_rows)
        np.cumsum(sup * np.diff(t), out=supply[1:])
        out["margin_gen_J"] = supply - (H_om - H_om[0])
    return out


def write_metrics_csv(path, metrics: dict) -> None:
    names = list(metrics)
    data = np.column_stack([metrics[k] for k in names])
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
