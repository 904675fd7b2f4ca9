"""Self-describing CSV logs.

Fixed column order:
    t, q_0..q_{n-1}, qd_0.., tau_0.., x_0..x_{k-1}, xd_ref_0.., fint_0..,
    H_q, H_Omega, P_cmd, int_P_cmd, gap, margin_qs, margin_gen, P_x,
    P_step_ref, e_step

Every column name carries a units suffix (q_0_rad, tau_2_Nm, H_q_J, ...).
Cells are full-precision decimal (shortest round-trip repr), so reading a
log back reproduces the exact simulated floats.
"""

from __future__ import annotations

import re

import numpy as np

from .errors import SchemaError
from .model import RobotModel

METRIC_COLUMNS = ("H_q_J", "H_Omega_J", "P_cmd_W", "int_P_cmd_J", "gap_J",
                  "margin_qs_J", "margin_gen_J", "P_x_W", "P_step_ref_W",
                  "e_step_W")


def _joint_units(model: RobotModel):
    pos, vel, eff = [], [], []
    for j in model.joints:
        if j.is_prismatic:
            pos.append("m")
            vel.append("mps")
            eff.append("N")
        else:
            pos.append("rad")
            vel.append("radps")
            eff.append("Nm")
    return pos, vel, eff


def _task_units(model: RobotModel):
    k = model.k
    n_trans = len(model.task.translation_rows)
    return ["m"] * n_trans + ["rad"] * (k - n_trans)


def header(model: RobotModel) -> list:
    pos_u, vel_u, eff_u = _joint_units(model)
    task_u = _task_units(model)
    force_u = ["N" if u == "m" else "Nm" for u in task_u]
    cols = ["t_s"]
    cols += [f"q_{i}_{u}" for i, u in enumerate(pos_u)]
    cols += [f"qd_{i}_{u}" for i, u in enumerate(vel_u)]
    cols += [f"tau_{i}_{u}" for i, u in enumerate(eff_u)]
    cols += [f"x_{i}_{u}" for i, u in enumerate(task_u)]
    cols += [f"xd_ref_{i}_{u}" for i, u in enumerate(task_u)]
    cols += [f"fint_{i}_{u}" for i, u in enumerate(force_u)]
    cols += list(METRIC_COLUMNS)
    return cols


def write_trajectory(path, traj) -> None:
    cols = header(traj.model)
    blocks = [traj.t[:, None], traj.q, traj.qd, traj.tau, traj.x, traj.xd_ref,
              traj.f_int,
              traj.H_q[:, None], traj.H_omega[:, None], traj.P_cmd[:, None],
              traj.int_P_cmd[:, None], traj.gap[:, None],
              traj.margin_qs[:, None], traj.margin_gen[:, None],
              traj.P_x[:, None], traj.P_step_ref[:, None], traj.e_step[:, None]]
    data = np.hstack(blocks)
    if data.shape[1] != len(cols):
        raise SchemaError(f"internal: {data.shape[1]} data columns vs "
                          f"{len(cols)} header names")
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


_GROUP_RE = re.compile(r"^(t|q|qd|tau|x|xd_ref|fint)_?(\d+)?_[A-Za-z]+$")


class LogData:
    """Parsed CSV log with columns grouped by meaning."""

    def __init__(self, names, data):
        self.names = names
        self.data = data
        self.groups = {}
        metric_names = set(METRIC_COLUMNS)
        for idx, name in enumerate(names):
            if name in metric_names:
                self.groups.setdefault(name, []).append(idx)
                continue
            if name == "t_s":
                self.groups.setdefault("t", []).append(idx)
                continue
            m = _GROUP_RE.match(name)
            if not m:
                raise SchemaError(f"unrecognized column {name!r}")
            self.groups.setdefault(m.group(1), []).append(idx)

    def vector(self, group) -> np.ndarray:
        idx = self.groups.get(group)
        if not idx:
            raise SchemaError(f"log is missing the {group!r} columns")
        if len(idx) == 1:
            return self.data[:, idx[0]]
        return self.data[:, idx]

    def has(self, group) -> bool:
        return group in self.groups

    @property
    def t(self) -> np.ndarray:
        return self.vector("t")


def read_log(path) -> LogData:
    """Parse a CSV log; raises SchemaError on malformed/truncated content."""
    with open(path) as fh:
        head = fh.readline().strip()
        if not head:
            raise SchemaError("empty CSV file")
        names = head.split(",")
        try:
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise SchemaError(f"malformed CSV body: {exc}") from None
    if data.size == 0:
        raise SchemaError("CSV has a header but no data rows")
    if data.shape[1] != len(names):
        raise SchemaError(f"header names {len(names)} columns, "
                          f"rows carry {data.shape[1]}")
    return LogData(names, data)


def expect_sim_log(log: LogData, model: RobotModel | None = None) -> None:
    """Check that the log carries the state columns cmd_metrics needs."""
    for group in ("t", "q", "qd", "tau", "x", "xd_ref"):
        if not log.has(group):
            raise SchemaError(f"log is missing the {group!r} columns")
    if model is not None:
        if len(log.groups["q"]) != model.n:
            raise SchemaError(f"log has {len(log.groups['q'])} q columns, "
                              f"model {model.name!r} has n={model.n}")
        if len(log.groups["x"]) != model.k:
            raise SchemaError(f"log has {len(log.groups['x'])} x columns, "
                              f"model task dimension is k={model.k}")
