import numpy as np
import pytest

from phbench import dynamics as dyn
from phbench.errors import ModelSemanticError, ModelSyntaxError
from phbench.model import (builtin_model, models_equal, parse_model,
                           serialize_model)


def test_planar2_construction():
    m = builtin_model("planar2")
    assert m.n == 2
    assert m.k == 2
    assert np.allclose(m.gravity, [0.0, -9.81, 0.0])
    assert all(j.kind == "revolute" for j in m.joints)


def test_gantry3_mass_matrix_diagonal():
    # token carriage masses keep the chain valid while M stays diag(10,10,10)
    m = builtin_model("gantry3")
    rng = np.random.default_rng(3)
    for _ in range(5):
        M = dyn.mass_matrix(m, rng.uniform(-1, 1, 3))
        assert np.allclose(M, np.diag([10.0, 10.0, 10.0]), atol=1e-5)


def test_arm6_total_mass_about_half_of_double_the_desired():
    m = builtin_model("arm6")
    total = sum(l.mass for l in m.links)
    assert 18.0 <= total <= 22.0


def test_leg3_geometry():
    m = builtin_model("leg3")
    assert m.n == 4
    assert m.joints[0].is_prismatic
    # near full extension the foot sits about half a meter below the trunk
    q = np.array([0.0, 0.0, 0.125, -0.25])
    foot = dyn.task_position(m, q)
    assert foot[2] == pytest.approx(-0.5, abs=0.01)


@pytest.mark.parametrize("name", ["planar2", "gantry3", "arm6", "leg3"])
def test_builtins_validate_and_roundtrip(name):
    m = builtin_model(name)
    m.validate()
    text = serialize_model(m)
    again = parse_model(text)
    assert models_equal(m, again)
    # reparse of a reserialization is also identical (fixed point)
    assert models_equal(again, parse_model(serialize_model(again)))


def test_unknown_builtin():
    with pytest.raises(ModelSemanticError):
        builtin_model("hexapod")


def test_serialize_preserves_joint_order():
    m = builtin_model("arm6")
    text = serialize_model(m)
    again = parse_model(text)
    for j1, j2 in zip(m.joints, again.joints):
        assert np.array_equal(j1.axis, j2.axis)
        assert np.array_equal(j1.origin_xyz, j2.origin_xyz)


def test_parse_syntax_error_carries_line():
    with pytest.raises(ModelSyntaxError) as err:
        parse_model("[robot\nname = 'x'")
    assert "line" in str(err.value)


def _minimal_model_text(mass="1.0", axis="[0.0, 0.0, 1.0]"):
    return f"""
[robot]
name = "tiny"
gravity_mps2 = [0.0, 0.0, -9.81]
end_effector_link = 0

[[joint]]
kind = "revolute"
axis = {axis}

[[link]]
mass_kg = {mass}
com_m = [0.5, 0.0, 0.0]
"""


def test_parse_zero_mass_rejected():
    with pytest.raises(ModelSemanticError):
        parse_model(_minimal_model_text(mass="0.0"))


def test_parse_non_unit_axis_rejected():
    with pytest.raises(ModelSemanticError):
        parse_model(_minimal_model_text(axis="[0.0, 0.0, 1.1]"))


def test_parse_non_serial_chain_rejected():
    text = _minimal_model_text() + """
[[link]]
mass_kg = 1.0
"""
    with pytest.raises(ModelSemanticError):
        parse_model(text)


def test_inertia_invariants():
    base = _minimal_model_text()
    asym = base + "inertia_kgm2 = [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]\n"
    with pytest.raises(ModelSemanticError):
        parse_model(asym)
    # principal moments (1, 0.1, 2): 2 > 1 + 0.1 violates realizability
    tri = base + ("inertia_kgm2 = [[1.0, 0.0, 0.0], [0.0, 0.1, 0.0], "
                  "[0.0, 0.0, 2.0]]\n")
    with pytest.raises(ModelSemanticError):
        parse_model(tri)


def test_models_are_immutable():
    m = builtin_model("planar2")
    with pytest.raises(ValueError):
        m.gravity[1] = 0.0
    with pytest.raises(ValueError):
        m.links[0].com[0] = 2.0


def test_mass_scaling_helper():
    m = builtin_model("planar2")
    scaled = m.with_scaled_masses(1.1)
    assert scaled.links[0].mass == pytest.approx(1.1)
    assert np.allclose(np.asarray(scaled.links[0].inertia),
                       1.1 * np.asarray(m.links[0].inertia))
    per_link = m.with_scaled_masses([1.0, 2.0])
    assert per_link.links[1].mass == pytest.approx(2.0)
