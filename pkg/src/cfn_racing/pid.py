"""PID primitives and the two demonstrator controllers.

``conservative()`` chases the first waypoint at low speed and slows further
when that waypoint swings off the nose.  ``aggressive()`` chases the fourth
waypoint at near top speed and overshoots tight bends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import ControlCommand, VehicleState
from .oracle import WaypointSet


@dataclass(frozen=True)
class PidState:
    kp: float = 0.0
    ki: float = 0.0
    kd: float = 0.0
    integral_limit: float = 1.0
    integral: float = 0.0
    prev_error: float = 0.0

    def reset(self) -> "PidState":
        return replace(self, integral=0.0, prev_error=0.0)


def pid_update(pid: PidState, error: float, dt: float) -> tuple[float, PidState]:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    lim = pid.integral_limit
    integral = min(lim, max(-lim, pid.integral + error * dt))
    out = pid.kp * error + pid.ki * integral + pid.kd * (error - pid.prev_error) / dt
    return out, replace(pid, integral=integral, prev_error=error)


@dataclass(frozen=True)
class PidControllerConfig:
    target_wp_index: int
    target_speed: float
    yaw: PidState
    roll: PidState
    pitch: PidState
    throttle: PidState
    damping: float = 1.0
    # speed-target shaping: v_ref *= max(min_speed_fraction, 1 - turn_slowdown * |bearing|)
    turn_slowdown: float = 0.0
    min_speed_fraction: float = 0.3
    # "cross_track": offset of the path through the target; "target": target.y
    lateral_error: str = "cross_track"
    dt: float = 1.0 / 60.0

    def __post_init__(self):
        if self.target_wp_index < 1:
            raise ValueError(f"target_wp_index must be >= 1, got {self.target_wp_index}")
        if not self.target_speed > 0:
            raise ValueError(f"target_speed must be positive, got {self.target_speed}")
        if self.lateral_error not in ("cross_track", "target"):
            raise ValueError(f"unknown lateral_error {self.lateral_error!r}")


def conservative(**overrides) -> PidControllerConfig:
    cfg = PidControllerConfig(
        target_wp_index=1,
        target_speed=7.0,
        yaw=PidState(kp=1.5, kd=0.05),
        roll=PidState(kp=0.6, kd=0.25),
        pitch=PidState(kp=0.3, ki=0.05),
        throttle=PidState(kp=1.0, kd=0.3),
        turn_slowdown=1.5,
    )
    return replace(cfg, **overrides)


def aggressive(**overrides) -> PidControllerConfig:
    cfg = PidControllerConfig(
        target_wp_index=4,
        target_speed=25.0,
        yaw=PidState(kp=1.5, kd=0.05),
        roll=PidState(kp=0.6, kd=0.25),
        pitch=PidState(kp=0.3, ki=0.05),
        throttle=PidState(kp=1.0, kd=0.3),
    )
    return replace(cfg, **overrides)


def cross_track(points: np.ndarray, i: int) -> float:
    """Signed lateral distance from the vehicle to the path through the waypoints
    around index ``i`` (positive: path lies to the left).

    The three waypoints define a circle (or a line when nearly straight) that is
    extrapolated back to the body origin.
    """
    j = min(max(i, 1), len(points) - 2)
    a, b, c = points[j - 1, :2], points[j, :2], points[j + 1, :2]
    ab, bc, ac = b - a, c - b, c - a
    cross = ab[0] * bc[1] - ab[1] * bc[0]
    den = math.sqrt((ab @ ab) * (bc @ bc) * (ac @ ac))
    kappa = 2.0 * cross / den if den > 1e-12 else 0.0
    if abs(kappa) < 1e-4:
        n = np.array([-ac[1], ac[0]]) / max(math.sqrt(ac @ ac), 1e-12)
        return float(a @ n)
    # circumcenter of a, b, c
    d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]))
    aa, bb, cc = a @ a, b @ b, c @ c
    center = np.array([aa * (b[1] - c[1]) + bb * (c[1] - a[1]) + cc * (a[1] - b[1]),
                       aa * (c[0] - b[0]) + bb * (a[0] - c[0]) + cc * (b[0] - a[0])]) / d
    return (math.hypot(*center) - 1.0 / abs(kappa)) * (1.0 if kappa > 0 else -1.0)


def _clamp(x: float) -> float:
    return min(1.0, max(-1.0, x))


class PidController:
    """Stateful demonstrator; call ``reset()`` at the start of every episode."""

    def __init__(self, cfg: PidControllerConfig, name: str = "pid"):
        self.cfg = cfg
        self.name = name
        self.reset()

    def reset(self):
        c = self.cfg
        self.pids = [c.throttle.reset(), c.roll.reset(), c.pitch.reset(), c.yaw.reset()]

    def errors(self, wps: WaypointSet, state: VehicleState) -> tuple[float, float, float, float]:
        """Per-channel errors in (T, A, E, R) order."""
        c = self.cfg
        i = c.target_wp_index - 1
        tx, ty, tz = wps.points[i]
        lateral = cross_track(wps.points, i) if c.lateral_error == "cross_track" else ty
        bearing = math.atan2(ty, tx)
        dist = math.sqrt(tx * tx + ty * ty + tz * tz)
        v_ref = c.target_speed * min(1.0, dist / wps.spacing * c.damping)
        if c.turn_slowdown:
            v_ref *= max(c.min_speed_fraction, 1.0 - c.turn_slowdown * abs(bearing))
        v_fwd = math.cos(state.yaw) * state.velocity[0] + math.sin(state.yaw) * state.velocity[1]
        return tz, lateral, v_ref - v_fwd, bearing

    def __call__(self, wps: WaypointSet, state: VehicleState, last_cmd=None) -> ControlCommand:
        out = []
        for i, e in enumerate(self.errors(wps, state)):
            u, self.pids[i] = pid_update(self.pids[i], e, self.cfg.dt)
            out.append(_clamp(u))
        return ControlCommand(*out)


def pid_policy(cfg: PidControllerConfig, wps: WaypointSet, state: VehicleState) -> ControlCommand:
    """One-shot evaluation with freshly zeroed PID states."""
    return PidController(cfg)(wps, state)
