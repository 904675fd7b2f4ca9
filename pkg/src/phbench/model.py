"""Robot description data model, file parsing, and built-in benchmark robots.

Model file grammar (TOML):

    [robot]
    name = "planar2"
    gravity_mps2 = [0.0, -9.81, 0.0]
    end_effector_link = 1          # index into the link list
    ee_offset_m = [1.0, 0.0, 0.0]  # tool point in the end-effector link frame

    [task]                          # optional, defaults to "xyz" in world
    kind = "xy"                     # xy | xyz | pose
    relative_to_link = 0            # optional: task coords relative to this link

    [[joint]]
    kind = "revolute"               # revolute | prismatic
    axis = [0.0, 0.0, 1.0]          # unit vector, joint frame
    origin_xyz_m = [0.0, 0.0, 0.0]  # transform from parent link frame
    origin_rpy_rad = [0.0, 0.0, 0.0]
    position_limits = [-3.1, 3.1]   # optional [lo, hi], rad or m

    [[link]]
    mass_kg = 1.0
    com_m = [1.0, 0.0, 0.0]
    inertia_kgm2 = [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]

Link i is the child of joint i; the link frame coincides with the joint
frame after joint motion. All quantities are SI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .errors import ModelSemanticError, ModelSyntaxError

TASK_KINDS = ("xy", "xyz", "pose")
AXIS_UNIT_TOL = 1e-12


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a.flags.writeable = False
    return a


def rpy_to_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Rotation matrix from roll-pitch-yaw (X, then Y, then Z, fixed axes)."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return rz @ ry @ rx


@dataclass(frozen=True, eq=False)
class JointSpec:
    kind: str                      # "revolute" | "prismatic"
    axis: np.ndarray               # unit 3-vector in joint frame
    origin_rpy: tuple              # (roll, pitch, yaw) of the fixed transform
    origin_xyz: np.ndarray         # translation of the fixed transform [m]
    position_limits: tuple | None = None   # (lo, hi) rad or m

    @property
    def origin_rotation(self) -> np.ndarray:
        return rpy_to_matrix(*self.origin_rpy)

    @property
    def is_prismatic(self) -> bool:
        return self.kind == "prismatic"


@dataclass(frozen=True, eq=False)
class LinkSpec:
    mass: float                    # kg
    com: np.ndarray                # 3-vector, link frame [m]
    inertia: np.ndarray            # 3x3 tensor about the com, link frame [kg m^2]


@dataclass(frozen=True)
class TaskSpec:
    kind: str = "xyz"              # xy | xyz | pose
    relative_to_link: int | None = None

    @property
    def k(self) -> int:
        return {"xy": 2, "xyz": 3, "pose": 6}[self.kind]

    @property
    def translation_rows(self) -> tuple:
        return (0, 1) if self.kind == "xy" else (0, 1, 2)


@dataclass(frozen=True, eq=False)
class RobotModel:
    name: str
    gravity: np.ndarray            # world-frame gravitational acceleration [m/s^2]
    joints: tuple                  # ordered JointSpec, joint i parents link i
    links: tuple                   # ordered LinkSpec, link i child of joint i
    end_effector_link: int
    ee_offset: np.ndarray = field(default_factory=lambda: _freeze(np.zeros(3)))
    task: TaskSpec = TaskSpec()

    @property
    def n(self) -> int:
        return len(self.joints)

    @property
    def k(self) -> int:
        return self.task.k

    def validate(self) -> "RobotModel":
        """Check all structural invariants, raising ModelSemanticError."""
        if len(self.joints) != len(self.links) or len(self.joints) == 0:
            raise ModelSemanticError(
                f"model '{self.name}': need equal, nonzero joint and link counts "
                f"(got {len(self.joints)} joints, {len(self.links)} links)")
        g = np.asarray(self.gravity, dtype=float)
        if g.shape != (3,):
            raise ModelSemanticError(f"model '{self.name}': gravity must be a 3-vector")
        if not 0 <= self.end_effector_link < len(self.links):
            raise ModelSemanticError(
                f"model '{self.name}': end_effector_link {self.end_effector_link} out of range")
        if self.task.kind not in TASK_KINDS:
            raise ModelSemanticError(f"model '{self.name}': unknown task kind {self.task.kind!r}")
        if self.task.relative_to_link is not None:
            if not 0 <= self.task.relative_to_link < len(self.links):
                raise ModelSemanticError(f"model '{self.name}': task relative_to_link out of range")
            if self.task.kind == "pose":
                raise ModelSemanticError(
                    f"model '{self.name}': relative tasks support translation only")
        for i, j in enumerate(self.joints):
            if j.kind not in ("revolute", "prismatic"):
                raise ModelSemanticError(f"joint {i}: unknown kind {j.kind!r}")
            if abs(np.linalg.norm(j.axis) - 1.0) > AXIS_UNIT_TOL:
                raise ModelSemanticError(
                    f"joint {i}: axis norm {np.linalg.norm(j.axis):.15g} is not 1")
            if j.position_limits is not None and not j.position_limits[0] < j.position_limits[1]:
                raise ModelSemanticError(f"joint {i}: position limits must satisfy lo < hi")
        for i, l in enumerate(self.links):
            if not l.mass > 0.0:
                raise ModelSemanticError(f"link {i}: mass must be > 0 (got {l.mass})")
            inertia = np.asarray(l.inertia, dtype=float)
            if inertia.shape != (3, 3):
                raise ModelSemanticError(f"link {i}: inertia must be 3x3")
            if np.max(np.abs(inertia - inertia.T)) > 1e-9:
                raise ModelSemanticError(f"link {i}: inertia tensor not symmetric")
            eig = np.linalg.eigvalsh(0.5 * (inertia + inertia.T))
            if eig[0] < -1e-12:
                raise ModelSemanticError(f"link {i}: inertia not positive semidefinite")
            # principal moments must be physically realizable
            if eig[2] > eig[0] + eig[1] + 1e-9 * max(1.0, eig[2]):
                raise ModelSemanticError(f"link {i}: principal moments violate triangle inequality")
        return self

    def with_scaled_masses(self, scale) -> "RobotModel":
        """Copy with per-link mass (and inertia) multipliers; scalar broadcasts."""
        factors = np.broadcast_to(np.asarray(scale, dtype=float), (self.n,))
        links = tuple(
            replace(l, mass=l.mass * f, inertia=_freeze(np.asarray(l.inertia) * f))
            for l, f in zip(self.links, factors))
        return replace(self, links=links)


# ---------------------------------------------------------------------------
# Parsing / serialization
# ---------------------------------------------------------------------------

def _vec(table: dict, key: str, size: int, where: str) -> np.ndarray:
    try:
        v = np.asarray(table[key], dtype=float)
    except KeyError:
        raise ModelSemanticError(f"{where}: missing required field '{key}'") from None
    except (TypeError, ValueError):
        raise ModelSemanticError(f"{where}: field '{key}' is not numeric") from None
    if v.shape != (size,):
        raise ModelSemanticError(f"{where}: field '{key}' must have {size} entries")
    return _freeze(v)


def parse_model(file_text: str) -> RobotModel:
    """Parse a model file; raises ModelSyntaxError / ModelSemanticError."""
    try:
        data = tomllib.loads(file_text)
    except tomllib.TOMLDecodeError as exc:  # message carries line/column
        raise ModelSyntaxError(f"model file syntax error: {exc}") from None

    robot = data.get("robot")
    if not isinstance(robot, dict):
        raise ModelSemanticError("model file: missing [robot] section")
    name = robot.get("name", "unnamed")
    gravity = _vec(robot, "gravity_mps2", 3, "[robot]")
    ee_link = int(robot.get("end_effector_link", len(data.get("link", [])) - 1))
    ee_offset = (_vec(robot, "ee_offset_m", 3, "[robot]")
                 if "ee_offset_m" in robot else _freeze(np.zeros(3)))

    task_tbl = data.get("task", {})
    task = TaskSpec(kind=task_tbl.get("kind", "xyz"),
                    relative_to_link=task_tbl.get("relative_to_link"))

    joints = []
    for i, jt in enumerate(data.get("joint", [])):
        kind = jt.get("kind")
        limits = jt.get("position_limits")
        joints.append(JointSpec(
            kind=kind,
            axis=_vec(jt, "axis", 3, f"joint {i}"),
            origin_rpy=tuple(_vec(jt, "origin_rpy_rad", 3, f"joint {i}"))
            if "origin_rpy_rad" in jt else (0.0, 0.0, 0.0),
            origin_xyz=_vec(jt, "origin_xyz_m", 3, f"joint {i}")
            if "origin_xyz_m" in jt else _freeze(np.zeros(3)),
            position_limits=tuple(float(x) for x in limits) if limits is not None else None,
        ))

    links = []
    for i, lt in enumerate(data.get("link", [])):
        if "mass_kg" not in lt:
            raise ModelSemanticError(f"link {i}: missing required field 'mass_kg'")
        inertia = np.asarray(lt.get("inertia_kgm2", np.zeros((3, 3))), dtype=float)
        if inertia.shape != (3, 3):
            raise ModelSemanticError(f"link {i}: inertia_kgm2 must be a 3x3 array")
        links.append(LinkSpec(
            mass=float(lt["mass_kg"]),
            com=_vec(lt, "com_m", 3, f"link {i}") if "com_m" in lt else _freeze(np.zeros(3)),
            inertia=_freeze(inertia),
        ))

    model = RobotModel(name=name, gravity=gravity, joints=tuple(joints),
                       links=tuple(links), end_effector_link=ee_link,
                       ee_offset=ee_offset, task=task)
    return model.validate()


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _fmt_list(v) -> str:
    return "[" + ", ".join(_fmt(float(x)) for x in v) + "]"


def serialize_model(model: RobotModel) -> str:
    """Emit model file text such that parse_model round-trips exactly."""
    out = ["[robot]"]
    out.append(f'name = "{model.name}"')
    out.append(f"gravity_mps2 = {_fmt_list(model.gravity)}")
    out.append(f"end_effector_link = {model.end_effector_link}")
    out.append(f"ee_offset_m = {_fmt_list(model.ee_offset)}")
    out.append("")
    out.append("[task]")
    out.append(f'kind = "{model.task.kind}"')
    if model.task.relative_to_link is not None:
        out.append(f"relative_to_link = {model.task.relative_to_link}")
    for j in model.joints:
        out.append("")
        out.append("[[joint]]")
        out.append(f'kind = "{j.kind}"')
        out.append(f"axis = {_fmt_list(j.axis)}")
        out.append(f"origin_xyz_m = {_fmt_list(j.origin_xyz)}")
        out.append(f"origin_rpy_rad = {_fmt_list(j.origin_rpy)}")
        if j.position_limits is not None:
            out.append(f"position_limits = {_fmt_list(j.position_limits)}")
    for l in model.links:
        out.append("")
        out.append("[[link]]")
        out.append(f"mass_kg = {_fmt(float(l.mass))}")
        out.append(f"com_m = {_fmt_list(l.com)}")
        rows = ", ".join(_fmt_list(row) for row in np.asarray(l.inertia))
        out.append(f"inertia_kgm2 = [{rows}]")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Built-in benchmark robots
# ---------------------------------------------------------------------------

def _revolute(axis, xyz=(0.0, 0.0, 0.0), rpy=(0.0, 0.0, 0.0), limits=None) -> JointSpec:
    return JointSpec("revolute", _freeze(np.asarray(axis, float)), tuple(rpy),
                     _freeze(np.asarray(xyz, float)), limits)


def _prismatic(axis, xyz=(0.0, 0.0, 0.0), rpy=(0.0, 0.0, 0.0), limits=None) -> JointSpec:
    return JointSpec("prismatic", _freeze(np.asarray(axis, float)), tuple(rpy),
                     _freeze(np.asarray(xyz, float)), limits)


def _link(mass, com, inertia) -> LinkSpec:
    return LinkSpec(float(mass), _freeze(np.asarray(com, float)),
                    _freeze(np.asarray(inertia, float)))


def _rod_inertia(mass: float, length: float, radius: float, along: str) -> np.ndarray:
    """Solid cylinder about its com, long axis 'along' ('x' or 'z')."""
    i_axis = 0.5 * mass * radius ** 2
    i_perp = mass * (3.0 * radius ** 2 + length ** 2) / 12.0
    d = {"x": (i_axis, i_perp, i_perp), "z": (i_perp, i_perp, i_axis)}[along]
    return np.diag(d)


def _planar2() -> RobotModel:
    # Two-link planar arm, unit lengths, unit point masses at the link tips.
    # This is the analytic-oracle model: closed-form M, C, g, J are known.
    z = np.zeros((3, 3))
    return RobotModel(
        name="planar2",
        gravity=_freeze([0.0, -9.81, 0.0]),
        joints=(_revolute([0, 0, 1]), _revolute([0, 0, 1], xyz=[1.0, 0, 0])),
        links=(_link(1.0, [1.0, 0, 0], z), _link(1.0, [1.0, 0, 0], z)),
        end_effector_link=1,
        ee_offset=_freeze([1.0, 0.0, 0.0]),
        task=TaskSpec("xy"),
    )


def _gantry3() -> RobotModel:
    # Three orthogonal prismatic axes carrying a 10 kg platform.  The two
    # upstream carriages get token masses so that M(q) = diag(10,10,10) up to
    # 2e-6, which makes the robot a perfect-rendering oracle for the
    # matched-inertia impedance law.
    z = np.zeros((3, 3))
    eps = 1e-6
    return RobotModel(
        name="gantry3",
        gravity=_freeze([0.0, 0.0, -9.81]),
        joints=(_prismatic([1, 0, 0]), _prismatic([0, 1, 0]), _prismatic([0, 0, 1])),
        links=(_link(eps, [0, 0, 0], z), _link(eps, [0, 0, 0], z),
               _link(10.0, [0, 0, 0], np.diag([0.05, 0.05, 0.05]))),
        end_effector_link=2,
        task=TaskSpec("xyz"),
    )


def _arm6() -> RobotModel:
    # 6R arm with anthropomorphic proportions; total mass 20 kg.
    # Chain: base yaw, shoulder pitch, elbow pitch, wrist roll/pitch/roll.
    return RobotModel(
        name="arm6",
        gravity=_freeze([0.0, 0.0, -9.81]),
        joints=(
            _revolute([0, 0, 1]),
            _revolute([0, 1, 0], xyz=[0.0, 0.0, 0.3]),
            _revolute([0, 1, 0], xyz=[0.3, 0.0, 0.0]),
            _revolute([1, 0, 0], xyz=[0.25, 0.0, 0.0]),
            _revolute([0, 1, 0], xyz=[0.1, 0.0, 0.0]),
            _revolute([1, 0, 0], xyz=[0.1, 0.0, 0.0]),
        ),
        links=(
            _link(3.5, [0, 0, 0.15], _rod_inertia(3.5, 0.3, 0.06, "z")),
            _link(5.5, [0.15, 0, 0], _rod_inertia(5.5, 0.3, 0.05, "x")),
            _link(4.0, [0.125, 0, 0], _rod_inertia(4.0, 0.25, 0.045, "x")),
            _link(2.5, [0.05, 0, 0], _rod_inertia(2.5, 0.1, 0.04, "x")),
            _link(2.0, [0.05, 0, 0], _rod_inertia(2.0, 0.1, 0.04, "x")),
            _link(2.5, [0.025, 0, 0], _rod_inertia(2.5, 0.05, 0.04, "x")),
        ),
        end_effector_link=5,
        ee_offset=_freeze([0.05, 0.0, 0.0]),
        task=TaskSpec("pose"),
    )


def _leg3() -> RobotModel:
    # Quadruped leg: vertical prismatic trunk slider + hip roll, hip pitch,
    # knee.  Thigh and shank are 0.25 m each, so the fully extended foot sits
    # 0.5 m below the trunk.  Scenarios either fix the trunk joint
    # (suspended leg) or leave it free and unactuated (jumping).
    return RobotModel(
        name="leg3",
        gravity=_freeze([0.0, 0.0, -9.81]),
        joints=(
            _prismatic([0, 0, 1]),
            _revolute([1, 0, 0], xyz=[0.0, 0.08, 0.0], limits=(-1.0, 1.0)),
            _revolute([0, 1, 0], limits=(-1.6, 1.6)),
            # knee stop short of the straight leg keeps the task-space
            # inertia bounded; full extension puts the foot near -0.5 m
            _revolute([0, 1, 0], xyz=[0.0, 0.0, -0.25], limits=(-2.4, -0.25)),
        ),
        links=(
            _link(10.0, [0, 0, 0], np.diag([0.15, 0.15, 0.1])),
            _link(2.5, [0, 0, 0], np.diag([0.01, 0.01, 0.01])),
            _link(5.0, [0, 0, -0.125], _rod_inertia(5.0, 0.25, 0.05, "z")),
            _link(2.5, [0, 0, -0.125], _rod_inertia(2.5, 0.25, 0.04, "z")),
        ),
        end_effector_link=3,
        ee_offset=_freeze([0.0, 0.0, -0.25]),
        task=TaskSpec("xyz", relative_to_link=0),
    )


_BUILTINS = {"planar2": _planar2, "gantry3": _gantry3, "arm6": _arm6, "leg3": _leg3}


def builtin_model(name: str) -> RobotModel:
    """Return one of the built-in benchmark robots."""
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise ModelSemanticError(
            f"unknown built-in model {name!r}; expected one of {sorted(_BUILTINS)}") from None
    return factory().validate()


def models_equal(a: RobotModel, b: RobotModel) -> bool:
    """Field-wise equality, used by the serialization round-trip tests."""
    if (a.name != b.name or a.n != b.n or a.end_effector_link != b.end_effector_link
            or a.task != b.task):
        return False
    if not (np.array_equal(a.gravity, b.gravity) and np.array_equal(a.ee_offset, b.ee_offset)):
        return False
    for ja, jb in zip(a.joints, b.joints):
        if (ja.kind != jb.kind or not np.array_equal(ja.axis, jb.axis)
                or ja.origin_rpy != jb.origin_rpy
                or not np.array_equal(ja.origin_xyz, jb.origin_xyz)
                or ja.position_limits != jb.position_limits):
            return False
    for la, lb in zip(a.links, b.links):
        if (la.mass != lb.mass or not np.array_equal(la.com, lb.com)
                or not np.array_equal(la.inertia, lb.inertia)):
            return False
    return True
