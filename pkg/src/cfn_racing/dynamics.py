"""Fixed-timestep quadrotor model.

The vehicle is altitude-stabilised: the four stick channels command
body-frame accelerations (pitch/elevator -> forward, roll/aileron -> left,
throttle -> up) and a yaw rate, against linear drag.  Integration is
semi-implicit Euler::

    yaw' = yaw + c_yaw * R * dt
    a    = Rz(yaw') @ (c_xy * E, c_xy * A, c_z * T) - k_d * v
    v'   = v + a * dt
    p'   = p + v' * dt
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class DynamicsError(ValueError):
    """Raised when the simulator is handed a non-finite state."""


class ControlCommand(NamedTuple):
    """Stick command, every channel in [-1, 1]."""

    T: float = 0.0  # throttle
    A: float = 0.0  # roll / aileron
    E: float = 0.0  # pitch / elevator
    R: float = 0.0  # yaw / rudder

    def clamped(self) -> "ControlCommand":
        return ControlCommand(*(min(1.0, max(-1.0, float(c))) for c in self))

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)

    def is_finite(self) -> bool:
        return all(math.isfinite(c) for c in self)


HOVER = ControlCommand()


@dataclass(frozen=True)
class VehicleState:
    position: np.ndarray
    velocity: np.ndarray
    yaw: float = 0.0

    @classmethod
    def at(cls, position, yaw: float = 0.0, velocity=None) -> "VehicleState":
        p = np.asarray(position, dtype=float).reshape(3).copy()
        v = np.zeros(3) if velocity is None else np.asarray(velocity, dtype=float).reshape(3).copy()
        return cls(p, v, normalize_angle(float(yaw)))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.velocity))
                    and math.isfinite(self.yaw))

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.velocity))

    def body_velocity(self) -> np.ndarray:
        """Velocity expressed in the body frame (x forward, y left, z up)."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        vx, vy, vz = self.velocity
        return np.array([c * vx + s * vy, -s * vx + c * vy, vz])


@dataclass(frozen=True)
class DynamicsConfig:
    dt: float = 1.0 / 60.0
    c_xy: float = 20.0
    c_z: float = 8.0
    c_yaw: float = math.pi
    k_d: float = 0.666

    def __post_init__(self):
        for name in ("dt", "c_xy", "c_z", "c_yaw", "k_d"):
            if not getattr(self, name) > 0:
                raise ValueError(f"dynamics.{name} must be positive, got {getattr(self, name)!r}")

    @property
    def top_speed(self) -> float:
        """Drag equilibrium for a single saturated planar channel."""
        return self.c_xy / self.k_d

    @property
    def speed_bound(self) -> float:
        return math.sqrt(2 * self.c_xy ** 2 + self.c_z ** 2) / self.k_d


def normalize_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    if -math.pi < a <= math.pi:
        return a
    return math.pi - (math.pi - a) % (2.0 * math.pi)


def step(state: VehicleState, cmd: ControlCommand, cfg: DynamicsConfig = DynamicsConfig()) -> VehicleState:
    if not state.is_finite():
        raise DynamicsError(f"non-finite vehicle state: {state!r}")
    T, A, E, R = ControlCommand(*cmd).clamped()
    dt = cfg.dt
    yaw = normalize_angle(state.yaw + cfg.c_yaw * R * dt)
    c, s = math.cos(yaw), math.sin(yaw)
    fwd, left = cfg.c_xy * E, cfg.c_xy * A
    vx, vy, vz = state.velocity
    ax = c * fwd - s * left - cfg.k_d * vx
    ay = s * fwd + c * left - cfg.k_d * vy
    az = cfg.c_z * T - cfg.k_d * vz
    v = np.array([vx + ax * dt, vy + ay * dt, vz + az * dt])
    return VehicleState(state.position + v * dt, v, yaw)


def reset_to(position, yaw: float) -> VehicleState:
    """Place the vehicle at rest on a pose."""
    return VehicleState.at(position, yaw)
