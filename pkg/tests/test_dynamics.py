import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfn_racing.dynamics import (ControlCommand, DynamicsConfig, DynamicsError, VehicleState,
                                 normalize_angle, reset_to, step)

CFG = DynamicsConfig()


def rest(yaw=0.0):
    return VehicleState.at([0.0, 0.0, 0.0], yaw)


def test_zero_command_is_fixed_point():
    s = step(rest(0.3), ControlCommand(), CFG)
    assert s.yaw == 0.3
    np.testing.assert_array_equal(s.velocity, 0.0)
    np.testing.assert_array_equal(s.position, 0.0)


def test_single_pitch_step_by_hand():
    # v = c_xy * dt = 20/60, p = v * dt
    s = step(rest(), ControlCommand(E=1.0), CFG)
    np.testing.assert_allclose(s.velocity, [1 / 3, 0, 0], atol=1e-12)
    np.testing.assert_allclose(s.position, [1 / 180, 0, 0], atol=1e-12)
    assert s.velocity[0] == pytest.approx(0.33333, abs=1e-5)
    assert s.position[0] == pytest.approx(0.0055556, abs=1e-7)


def test_terminal_speed_matches_drag_equilibrium():
    s = rest()
    for _ in range(600):
        s = step(s, ControlCommand(E=1.0), CFG)
    assert CFG.top_speed == pytest.approx(30.03, abs=0.01)
    assert s.speed == pytest.approx(CFG.top_speed, rel=0.01)


def test_reset_to_pose():
    moving = VehicleState.at([3, 4, 5], 1.0, velocity=[9, 9, 9])
    assert moving.speed > 0
    s = reset_to([0, 0, 5], 0.0)
    np.testing.assert_array_equal(s.position, [0, 0, 5])
    np.testing.assert_array_equal(s.velocity, 0.0)
    assert s.yaw == 0.0
    s2 = step(s, ControlCommand(), CFG)
    np.testing.assert_array_equal(s2.position, [0, 0, 5])


def test_yaw_rotates_thrust_into_world_frame():
    s = step(rest(math.pi / 2), ControlCommand(E=1.0), CFG)
    assert s.velocity[1] > 0
    assert abs(s.velocity[0]) < 1e-12


def test_commands_are_clamped():
    a = step(rest(), ControlCommand(T=5, A=-7, E=3, R=2), CFG)
    b = step(rest(), ControlCommand(T=1, A=-1, E=1, R=1), CFG)
    np.testing.assert_array_equal(a.velocity, b.velocity)
    assert a.yaw == b.yaw


def test_non_finite_state_rejected():
    bad = VehicleState(np.array([0.0, np.nan, 0.0]), np.zeros(3), 0.0)
    with pytest.raises(DynamicsError):
        step(bad, ControlCommand(), CFG)


def test_invalid_config_rejected():
    with pytest.raises(ValueError):
        DynamicsConfig(dt=0.0)
    with pytest.raises(ValueError):
        DynamicsConfig(k_d=-1.0)


@pytest.mark.parametrize("a", [math.pi, -math.pi, 3 * math.pi, -3 * math.pi, 0.0, 7.0, -7.0])
def test_normalize_angle_half_open(a):
    r = normalize_angle(a)
    assert -math.pi < r <= math.pi
    assert math.isclose(math.cos(r), math.cos(a), abs_tol=1e-12)
    assert math.isclose(math.sin(r), math.sin(a), abs_tol=1e-12)


commands = st.lists(st.tuples(*[st.floats(-1.5, 1.5)] * 4), min_size=1, max_size=400)


@settings(max_examples=40, deadline=None)
@given(commands)
def test_yaw_stays_normalized_and_deterministic(cmds):
    a = b = rest()
    for c in cmds:
        a = step(a, ControlCommand(*c), CFG)
        b = step(b, ControlCommand(*c), CFG)
        assert -math.pi < a.yaw <= math.pi
    assert a.yaw == b.yaw
    assert np.array_equal(a.position, b.position) and np.array_equal(a.velocity, b.velocity)


def test_speed_bound_under_random_commands():
    rng = np.random.default_rng(3)
    s = VehicleState.at([0, 0, 0], 0.0, velocity=[50, 0, 0])
    bound = max(50.0, CFG.speed_bound)
    for i in range(6000):
        s = step(s, ControlCommand(*rng.uniform(-1, 1, 4)), CFG)
        assert s.speed <= bound + 1e-9
    # once transients have died out the generic bound applies
    assert s.speed <= CFG.speed_bound
