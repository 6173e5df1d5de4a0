"""Geometric stand-in for the perception network: local waypoints ahead on the centerline."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import VehicleState
from .track import Track, TrackProjection, project


@dataclass(frozen=True)
class OracleConfig:
    n: int = 5
    spacing: float = 5.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"oracle.n must be >= 2, got {self.n}")
        if not self.spacing > 0:
            raise ValueError(f"oracle.spacing must be positive, got {self.spacing}")
        if not self.noise_sigma >= 0:
            raise ValueError(f"oracle.noise_sigma must be >= 0, got {self.noise_sigma}")


@dataclass(frozen=True)
class WaypointSet:
    points: np.ndarray  # (n, 3), body frame: x forward, y left, z up
    spacing: float

    def __len__(self):
        return len(self.points)

    def mirrored(self) -> "WaypointSet":
        """Reflect about the body x-z plane."""
        return WaypointSet(self.points * np.array([1.0, -1.0, 1.0]), self.spacing)


def to_body(points: np.ndarray, position: np.ndarray, yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    d = points - position
    return np.column_stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1], d[:, 2]])


def local_waypoints(track: Track, state: VehicleState, cfg: OracleConfig = OracleConfig(),
                    rng: np.random.Generator | None = None,
                    projection: TrackProjection | None = None) -> WaypointSet:
    """The next ``cfg.n`` centerline points, ``cfg.spacing`` apart, in the body frame.

    Noise is only drawn when ``cfg.noise_sigma > 0``; pass a dedicated ``rng``
    per episode so runs stay reproducible.
    """
    pr = projection if projection is not None else project(track, state.position)
    s = pr.arc_length + cfg.spacing * np.arange(1, cfg.n + 1)
    pts = to_body(track.points_at(s), state.position, state.yaw)
    if cfg.noise_sigma > 0:
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        pts = pts + rng.normal(0.0, cfg.noise_sigma, size=pts.shape)
    return WaypointSet(pts, cfg.spacing)
