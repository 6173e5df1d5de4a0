"""Closed race tracks: centripetal Catmull-Rom centerline, corridor, gates."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .seeding import substream

DS = 0.5  # centerline resampling step, metres
DENSE_PER_SEGMENT = 200


class TrackError(ValueError):
    pass


@dataclass(frozen=True)
class Gate:
    index: int
    arc_length: float
    center: np.ndarray
    normal: np.ndarray
    half_width: float = 1.5
    half_height: float = 1.25

    @property
    def lateral_axis(self) -> np.ndarray:
        u = np.array([-self.normal[1], self.normal[0], 0.0])
        n = np.linalg.norm(u)
        return u / n if n > 1e-12 else np.array([0.0, 1.0, 0.0])

    @property
    def heading(self) -> float:
        return math.atan2(self.normal[1], self.normal[0])


class TrackProjection(NamedTuple):
    arc_length: float
    lateral_offset: float  # positive = left of travel direction
    vertical_offset: float
    index: int  # nearest centerline sample


@dataclass(frozen=True, eq=False)
class Track:
    name: str
    control_points: np.ndarray
    width: float
    height: float
    gate_count: int
    samples: np.ndarray
    tangents: np.ndarray
    total_length: float
    gates: tuple = field(default_factory=tuple)

    @property
    def ds(self) -> float:
        return self.total_length / len(self.samples)

    def point_at(self, s: float) -> np.ndarray:
        """Centerline point at arc length ``s`` (wrapped), linear between samples."""
        n = len(self.samples)
        x = (s % self.total_length) / self.ds
        i = int(x) % n
        f = x - int(x)
        return self.samples[i] + f * (self.samples[(i + 1) % n] - self.samples[i])

    def points_at(self, s: np.ndarray) -> np.ndarray:
        n = len(self.samples)
        x = (np.asarray(s, dtype=float) % self.total_length) / self.ds
        i = np.floor(x).astype(int)
        f = (x - i)[:, None]
        i %= n
        return self.samples[i] + f * (self.samples[(i + 1) % n] - self.samples[i])

    def tangent_at(self, s: float) -> np.ndarray:
        n = len(self.samples)
        x = (s % self.total_length) / self.ds
        i = int(x) % n
        f = x - int(x)
        t = (1 - f) * self.tangents[i] + f * self.tangents[(i + 1) % n]
        return t / np.linalg.norm(t)

    def pose_at(self, s: float) -> tuple[np.ndarray, float]:
        t = self.tangent_at(s)
        return self.point_at(s), math.atan2(t[1], t[0])

    def next_gate_ahead(self, s: float) -> Gate:
        """First gate strictly ahead of arc length ``s``."""
        s = s % self.total_length
        for g in self.gates:
            if g.arc_length > s + 1e-9:
                return g
        return self.gates[0]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "width_m": self.width,
            "height_m": self.height,
            "closed": True,
            "control_points": [[float(c) for c in p] for p in self.control_points],
            "gate_count": self.gate_count,
        }


# -- spline -----------------------------------------------------------------

def _knots(p0, p1, p2, p3, alpha=0.5):
    t1 = np.linalg.norm(p1 - p0, axis=-1) ** alpha
    t2 = t1 + np.linalg.norm(p2 - p1, axis=-1) ** alpha
    t3 = t2 + np.linalg.norm(p3 - p2, axis=-1) ** alpha
    return 0.0 * t1, t1, t2, t3


def _segment_tangents(cp: np.ndarray):
    """Hermite end tangents (per unit segment parameter) of every closed-loop segment."""
    p0 = np.roll(cp, 1, axis=0)
    p1 = cp
    p2 = np.roll(cp, -1, axis=0)
    p3 = np.roll(cp, -2, axis=0)
    t0, t1, t2, t3 = (k[:, None] for k in _knots(p0, p1, p2, p3))
    h = t2 - t1
    m1 = h * ((p1 - p0) / (t1 - t0) - (p2 - p0) / (t2 - t0) + (p2 - p1) / (t2 - t1))
    m2 = h * ((p2 - p1) / (t2 - t1) - (p3 - p1) / (t3 - t1) + (p3 - p2) / (t3 - t2))
    return p1, p2, m1, m2


def catmull_rom(cp: np.ndarray, g: np.ndarray, derivative: bool = False) -> np.ndarray:
    """Evaluate the closed centripetal Catmull-Rom curve at global parameters ``g``.

    ``g`` runs over [0, n); the integer part selects the segment from control
    point ``i`` to ``i + 1``.
    """
    p1, p2, m1, m2 = _segment_tangents(cp)
    n = len(cp)
    g = np.asarray(g, dtype=float) % n
    seg = np.minimum(np.floor(g).astype(int), n - 1)
    u = (g - seg)[:, None]
    a, b, ma, mb = p1[seg], p2[seg], m1[seg], m2[seg]
    if derivative:
        return ((6 * u**2 - 6 * u) * a + (3 * u**2 - 4 * u + 1) * ma
                + (-6 * u**2 + 6 * u) * b + (3 * u**2 - 2 * u) * mb)
    return ((2 * u**3 - 3 * u**2 + 1) * a + (u**3 - 2 * u**2 + u) * ma
            + (-2 * u**3 + 3 * u**2) * b + (u**3 - u**2) * mb)


def _validate_points(cp: np.ndarray):
    if cp.ndim != 2 or cp.shape[1] != 3:
        raise TrackError(f"control points must be an (n, 3) array, got shape {cp.shape}")
    if len(cp) < 4:
        raise TrackError(f"need at least 4 control points, got {len(cp)}")
    if not np.all(np.isfinite(cp)):
        raise TrackError("control points must be finite")
    gaps = np.linalg.norm(np.roll(cp, -1, axis=0) - cp, axis=1)
    if np.any(gaps < 1e-9):
        i = int(np.argmin(gaps))
        raise TrackError(f"duplicate consecutive control points at index {i}")
    xy = cp[:, :2] - cp[:, :2].mean(axis=0)
    sv = np.linalg.svd(xy, compute_uv=False)
    if sv[-1] < 1e-9 * max(sv[0], 1.0):
        raise TrackError("control points are collinear; the loop is degenerate")


def build_track(control_points, width: float, gate_count: int, *, name: str = "track",
                height: float = 5.0, gate_half_width: float = 1.5, gate_half_height: float = 1.25,
                ds: float = DS) -> Track:
    cp = np.asarray(control_points, dtype=float)
    _validate_points(cp)
    if not width > 0:
        raise TrackError(f"width must be positive, got {width!r}")
    if not height > 0:
        raise TrackError(f"height must be positive, got {height!r}")
    if int(gate_count) < 1:
        raise TrackError(f"gate_count must be >= 1, got {gate_count!r}")
    n = len(cp)

    g_dense = np.linspace(0.0, n, n * DENSE_PER_SEGMENT + 1)
    dense = catmull_rom(cp, g_dense[:-1])
    dense = np.vstack([dense, dense[:1]])
    seg_len = np.linalg.norm(np.diff(dense, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = float(cum[-1])

    count = max(int(round(total / ds)), 8)
    s = np.arange(count) * (total / count)
    g = np.interp(s, cum, g_dense)
    samples = catmull_rom(cp, g)
    tangents = catmull_rom(cp, g, derivative=True)
    tangents /= np.linalg.norm(tangents, axis=1, keepdims=True)

    track = Track(name=name, control_points=cp, width=float(width), height=float(height),
                  gate_count=int(gate_count), samples=samples, tangents=tangents,
                  total_length=total)
    gates = []
    for k in range(int(gate_count)):
        sg = k * total / gate_count
        gates.append(Gate(k, sg, track.point_at(sg), track.tangent_at(sg),
                          gate_half_width, gate_half_height))
    object.__setattr__(track, "gates", tuple(gates))
    _warn_if_pinched(track)
    return track


def _warn_if_pinched(track: Track):
    pts = track.samples[:, :2]
    n = len(pts)
    sep = int(math.ceil(2 * track.width / track.ds))
    if n <= 2 * sep:
        return
    idx = np.arange(n)
    for start in range(0, n, 256):
        block = pts[start:start + 256]
        d = np.linalg.norm(block[:, None, :] - pts[None, :, :], axis=2)
        gap = np.abs(idx[start:start + 256, None] - idx[None, :])
        gap = np.minimum(gap, n - gap)
        if np.any((gap > sep) & (d < track.width)):
            warnings.warn(f"track {track.name!r}: corridor may self-intersect "
                          f"(non-adjacent centerline samples closer than width {track.width})",
                          stacklevel=3)
            return


# -- predicates --------------------------------------------------------------

def project(track: Track, position) -> TrackProjection:
    p = np.asarray(position, dtype=float)
    pts = track.samples
    n = len(pts)
    d2 = np.einsum("ij,ij->i", pts - p, pts - p)
    i = int(np.argmin(d2))
    ds = track.ds
    best = None
    for j in (i - 1, i):
        a = pts[j % n]
        b = pts[(j + 1) % n]
        ab = b - a
        t = min(1.0, max(0.0, float(np.dot(p - a, ab) / np.dot(ab, ab))))
        foot = a + t * ab
        dist2 = float(np.dot(p - foot, p - foot))
        if best is None or dist2 < best[0]:
            best = (dist2, j, t, foot, ab)
    _, j, t, foot, ab = best
    s = ((j % n) + t) * ds % track.total_length
    d = p - foot
    tx, ty = ab[0], ab[1]
    planar = math.hypot(d[0], d[1])
    side = -ty * d[0] + tx * d[1]
    lateral = planar if side >= 0 else -planar
    return TrackProjection(s, lateral, float(d[2]), i)


def is_on_track(track: Track, position, projection: TrackProjection | None = None) -> bool:
    pr = projection if projection is not None else project(track, position)
    return abs(pr.lateral_offset) <= track.width / 2 and abs(pr.vertical_offset) <= track.height / 2


def gate_crossed(gate: Gate, p_prev, p_next) -> bool:
    """Forward crossing of the gate plane inside the gate rectangle."""
    c, n = gate.center, gate.normal
    d0 = float(np.dot(np.asarray(p_prev) - c, n))
    d1 = float(np.dot(np.asarray(p_next) - c, n))
    if not (d0 < 0.0 <= d1):
        return False
    frac = d0 / (d0 - d1)
    x = np.asarray(p_prev) + frac * (np.asarray(p_next) - np.asarray(p_prev)) - c
    u = gate.lateral_axis
    w = np.cross(n, u)
    return abs(float(np.dot(x, u))) <= gate.half_width and abs(float(np.dot(x, w))) <= gate.half_height


# -- files -------------------------------------------------------------------

TRACK_FIELDS = {"name", "width_m", "height_m", "closed", "control_points", "gate_count"}


def track_from_dict(d: dict, **gate_kw) -> Track:
    unknown = set(d) - TRACK_FIELDS
    if unknown:
        raise TrackError(f"unknown track field(s): {sorted(unknown)}")
    missing = TRACK_FIELDS - set(d)
    if missing:
        raise TrackError(f"missing track field(s): {sorted(missing)}")
    if d["closed"] is not True:
        raise TrackError("only closed tracks are supported ('closed' must be true)")
    if not isinstance(d["gate_count"], int) or isinstance(d["gate_count"], bool):
        raise TrackError("'gate_count' must be an integer")
    return build_track(d["control_points"], d["width_m"], d["gate_count"], name=str(d["name"]),
                       height=d["height_m"], **gate_kw)


def dumps_track(track: Track) -> str:
    return json.dumps(track.to_dict(), indent=2) + "\n"


def loads_track(text: str, **gate_kw) -> Track:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise TrackError(f"track file is not valid JSON: {e}") from None
    if not isinstance(d, dict):
        raise TrackError("track file must hold a JSON object")
    return track_from_dict(d, **gate_kw)


def save_track(track: Track, path) -> None:
    Path(path).write_text(dumps_track(track), encoding="utf-8")


def load_track(path, **gate_kw) -> Track:
    return loads_track(Path(path).read_text(encoding="utf-8"), **gate_kw)


def load_track_dir(path, **gate_kw) -> list[Track]:
    files = sorted(Path(path).glob("*.json"))
    return [load_track(f, **gate_kw) for f in files]


# -- generation ----------------------------------------------------------------

def random_loop(rng: np.random.Generator, *, n_points: int = 12, radius: float = 60.0,
                harmonics: int = 3, amplitude: float = 0.3, altitude: float = 5.0,
                altitude_amplitude: float = 0.0) -> np.ndarray:
    """Smooth closed loop: a circle with a random low-order radial perturbation."""
    theta = np.arange(n_points) * 2 * math.pi / n_points
    r = np.ones(n_points)
    for k in range(2, 2 + harmonics):
        a = rng.uniform(-amplitude, amplitude) / (k - 1)
        phase = rng.uniform(0, 2 * math.pi)
        r += a * np.cos(k * theta + phase)
    r *= radius
    z = altitude + altitude_amplitude * np.sin(theta + rng.uniform(0, 2 * math.pi))
    return np.column_stack([r * np.cos(theta), r * np.sin(theta), z])


def min_turn_radius(track: Track, window: float = 5.0) -> float:
    """Smallest radius of curvature, estimated from heading change over ``window`` metres."""
    k = max(1, int(round(window / track.ds)))
    t = track.tangents[:, :2]
    h = np.arctan2(t[:, 1], t[:, 0])
    dh = np.abs(np.angle(np.exp(1j * (np.roll(h, -k) - h))))
    return float(k * track.ds / max(dh.max(), 1e-12))


def generate_track(seed: int, *, width: float = 10.0, gate_count: int = 10, name: str | None = None,
                   n_points: int = 12, radius: float = 60.0, harmonics: int = 3, amplitude: float = 0.35,
                   altitude: float = 5.0, min_radius: float = 20.0, max_tries: int = 1000, **build_kw) -> Track:
    """Random loop from ``seed``, redrawn until every bend is at least ``min_radius`` wide."""
    rng = substream(seed, "track-gen")
    for _ in range(max_tries):
        cp = random_loop(rng, n_points=n_points, radius=radius, harmonics=harmonics,
                         amplitude=amplitude, altitude=altitude)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            tr = build_track(np.round(cp, 6), width, gate_count, name=name or f"seed{seed}", **build_kw)
        if min_turn_radius(tr) >= min_radius:
            return tr
    raise TrackError(f"no loop with turn radius >= {min_radius} m after {max_tries} draws (seed {seed})")


def polygon_loop(rng: np.random.Generator, *, corners: int = 10, edge: float = 40.0, spread: float = 0.8,
                 segment: float = 20.0, altitude: float = 5.0) -> tuple[np.ndarray, np.ndarray]:
    """Closed equilateral polygon with random turn angles, as densely spaced control points.

    Returns ``(points, turns)``.  The headings are nudged by Newton steps until the
    edges close exactly.  The point list starts mid-edge, so ``corners`` uniformly
    spaced gates sit mid-edge with every bend between two gates.
    """
    t = 1 + spread * rng.uniform(-1, 1, corners)
    th = np.cumsum(2 * math.pi * t / t.sum())
    for _ in range(50):
        r = np.array([np.cos(th).sum(), np.sin(th).sum()])
        if np.linalg.norm(r) < 1e-12:
            break
        jac = np.vstack([-np.sin(th), np.cos(th)])
        th = th - jac.T @ np.linalg.solve(jac @ jac.T, r)
    steps = np.vstack([np.cos(th), np.sin(th)]).T * edge
    verts = np.vstack([np.zeros(2), np.cumsum(steps, axis=0)[:-1]])
    m = max(2, int(round(edge / segment)))
    m += m % 2
    frac = np.arange(m)[:, None] / m
    pts = np.vstack([verts[i] + (verts[(i + 1) % corners] - verts[i]) * frac for i in range(corners)])
    pts = np.roll(pts, -(m // 2), axis=0)
    turns = (np.diff(np.concatenate([th, th[:1] + 2 * math.pi])) + math.pi) % (2 * math.pi) - math.pi
    return np.column_stack([pts, np.full(len(pts), altitude)]), turns


def generate_polygon_track(seed: int, *, width: float = 6.0, corners: int = 10, name: str | None = None,
                           edge: float = 40.0, spread: float = 0.8, segment: float = 20.0,
                           altitude: float = 5.0, max_turn_deg: float = 120.0, max_tries: int = 1000,
                           **build_kw) -> Track:
    """Polygon circuit from ``seed`` with one gate per edge, redrawn until no bend
    exceeds ``max_turn_deg`` and the corridor is nowhere pinched."""
    rng = substream(seed, "track-gen")
    for _ in range(max_tries):
        cp, turns = polygon_loop(rng, corners=corners, edge=edge, spread=spread, segment=segment,
                                 altitude=altitude)
        if abs(turns.sum() - 2 * math.pi) > 1e-6 or np.abs(turns).max() > math.radians(max_turn_deg):
            continue
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            tr = build_track(np.round(cp, 6), width, corners, name=name or f"poly{seed}", **build_kw)
        if not caught:
            return tr
    raise TrackError(f"no polygon with turns <= {max_turn_deg} deg after {max_tries} draws (seed {seed})")


def shipped_tracks(split: str) -> list[Track]:
    """The packaged ``"train"`` or ``"test"`` suite."""
    if split not in ("train", "test"):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    return load_track_dir(shipped_track_dir(split))


def shipped_track_dir(split: str) -> Path:
    return Path(__file__).parent / "data" / "tracks" / split
