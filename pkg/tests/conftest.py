import time

import numpy as np
import pytest

from phbench import sim as sm
from phbench.model import builtin_model


@pytest.fixture(scope="session")
def warm_kernels():
    """Pay the JIT cost once so timed tests measure steady-state speed."""
    sm.run_scenario("cpg_leg", config=sm.SimConfig(duration=0.01, torque_limit=150.0))
    sm.run_scenario("step_arm", config=sm.SimConfig(duration=0.01))
    return True


@pytest.fixture(scope="session")
def step_arm_is(warm_kernels):
    return sm.run_scenario("step_arm")


@pytest.fixture(scope="session")
def step_arm_no_is(warm_kernels):
    return sm.run_scenario("step_arm", params=sm.TABLE_ARM_NO_IS)


@pytest.fixture(scope="session")
def cpg_timed(warm_kernels):
    """Full 10 s gait scenario plus its wall-clock time."""
    t0 = time.time()
    traj = sm.run_scenario("cpg_leg")
    return traj, time.time() - t0


@pytest.fixture(scope="session")
def jump(warm_kernels):
    return sm.run_scenario("jump_leg")


@pytest.fixture(scope="session")
def gantry_step(warm_kernels):
    """Perfect-rendering run: matched inertia on the orthogonal gantry."""
    import phbench.control as ctl

    params = ctl.ImpedanceParams(np.array([800.0] * 3), np.array([134.2] * 3),
                                 np.array([10.0] * 3))
    return sm.run_scenario("step_arm", model=builtin_model("gantry3"),
                           params=params, q0=np.zeros(3), axis=0, amplitude=0.4)
