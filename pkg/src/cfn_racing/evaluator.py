"""Two-lap race protocol: gate score, completion time and timeout resets."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .dynamics import HOVER, ControlCommand, DynamicsConfig, VehicleState, reset_to, step
from .oracle import OracleConfig, WaypointSet, local_waypoints
from .track import Track, gate_crossed, is_on_track, project

LOG_COLUMNS = ("t", "x", "y", "z", "vx", "vy", "vz", "yaw", "T", "A", "E", "R",
               "on_track", "next_gate", "reset")


class Policy(Protocol):
    def __call__(self, wps: WaypointSet, state: VehicleState, last_cmd: ControlCommand) -> ControlCommand: ...


@dataclass
class EpisodeResult:
    track: str
    policy: str
    gates_passed: int
    gates_total: int
    time: float
    resets: int
    steps: int
    aborted: bool = False
    error: str | None = None
    log: np.ndarray = field(default=None, repr=False)

    @property
    def score(self) -> float:
        return self.gates_passed / self.gates_total if self.gates_total else 0.0

    def summary(self) -> dict:
        return {"name": self.track, "gates_passed": self.gates_passed, "gates_total": self.gates_total,
                "time_s": self.time, "resets": self.resets}


class CourseProgress:
    """Expected-gate bookkeeping shared by evaluation and training."""

    def __init__(self, track: Track, laps: int, start_gate: int = 0):
        self.track = track
        self.gate_count = len(track.gates)
        self.total = laps * self.gate_count
        self.start_gate = start_gate
        self.done_count = 0  # gates passed or missed

    @property
    def next_gate(self) -> int:
        return (self.start_gate + 1 + self.done_count) % self.gate_count

    @property
    def finished(self) -> bool:
        return self.done_count >= self.total

    def check(self, p_prev, p_next) -> bool:
        if self.finished:
            return False
        if gate_crossed(self.track.gates[self.next_gate], p_prev, p_next):
            self.done_count += 1
            return True
        return False

    def skip(self) -> int:
        """Give up on the expected gate; returns its index."""
        g = self.next_gate
        self.done_count += 1
        return g

    def skip_to(self, gate_index: int):
        """Treat every gate up to and including ``gate_index`` as done."""
        self.done_count = min(self.total, self.done_count + (gate_index - self.next_gate) % self.gate_count + 1)


def _row(t, s: VehicleState, cmd, on_track, next_gate, reset):
    p, v = s.position, s.velocity
    return (t, p[0], p[1], p[2], v[0], v[1], v[2], s.yaw, cmd[0], cmd[1], cmd[2], cmd[3],
            float(on_track), float(next_gate), float(reset))


def evaluate(track: Track, policy: Policy, *, laps: int = 2, gate_timeout: float = 10.0,
             dyn: DynamicsConfig = DynamicsConfig(), oracle: OracleConfig = OracleConfig(),
             rng: np.random.Generator | None = None, name: str | None = None) -> EpisodeResult:
    if hasattr(policy, "reset"):
        policy.reset()
    if oracle.noise_sigma > 0 and rng is None:
        rng = np.random.default_rng(oracle.seed)
    dt = dyn.dt
    timeout_steps = int(round(gate_timeout / dt))
    course = CourseProgress(track, laps)
    cap_steps = course.total * timeout_steps

    gate0 = track.gates[0]
    state = reset_to(gate0.center, gate0.heading)
    cmd = HOVER
    rows = [_row(0.0, state, cmd, True, course.next_gate, False)]
    steps = since_gate = passed = resets = 0
    aborted, error = False, None
    pname = name or getattr(policy, "name", type(policy).__name__)

    while not course.finished and steps < cap_steps:
        pr = project(track, state.position)
        wps = local_waypoints(track, state, oracle, rng, projection=pr)
        raw = policy(wps, state, cmd)
        if not all(math.isfinite(c) for c in raw):
            aborted, error = True, f"non-finite command {tuple(raw)} at step {steps}"
            break
        cmd = ControlCommand(*raw).clamped()
        new = step(state, cmd, dyn)
        steps += 1
        since_gate += 1
        was_reset = False
        if course.check(state.position, new.position):
            passed += 1
            since_gate = 0
        elif since_gate >= timeout_steps:
            g = track.gates[course.skip()]
            new = reset_to(g.center, g.heading)
            resets += 1
            since_gate = 0
            was_reset = True
            if hasattr(policy, "reset"):
                policy.reset()
        state = new
        rows.append(_row(steps * dt, state, cmd, is_on_track(track, state.position),
                         course.next_gate, was_reset))
        if was_reset:
            cmd = HOVER

    return EpisodeResult(track.name, pname, passed, course.total, steps * dt, resets, steps,
                         aborted, error, np.array(rows))


# -- suites ------------------------------------------------------------------

@dataclass
class SuiteResult:
    policies: list[str]
    tracks: list[str]
    cells: dict  # (track, policy) -> EpisodeResult | Exception

    def column(self, policy: str) -> list:
        return [self.cells[(t, policy)] for t in self.tracks]

    def summary(self, policy: str) -> dict:
        return summarize([c for c in self.column(policy) if isinstance(c, EpisodeResult)])


def summarize(results: Sequence[EpisodeResult]) -> dict:
    """Table convention: score pooled over gates, time and resets averaged per track."""
    if not results:
        return {"score": float("nan"), "time_s": float("nan"), "resets": float("nan")}
    passed = sum(r.gates_passed for r in results)
    total = sum(r.gates_total for r in results)
    return {
        "score": passed / total if total else 0.0,
        "gates_passed": passed,
        "gates_total": total,
        "time_s": sum(r.time for r in results) / len(results),
        "resets": sum(r.resets for r in results) / len(results),
    }


def _run_cell(args):
    track, policy_factory, kw = args
    try:
        return evaluate(track, policy_factory(), **kw)
    except Exception as e:  # a failed cell never aborts the suite
        return e


def evaluate_suite(tracks: Sequence[Track], policies: dict[str, Callable[[], Policy]], *,
                   jobs: int = 1, **kw) -> SuiteResult:
    """Evaluate every (track, policy) pair.

    ``policies`` maps a column name to a zero-argument factory so every cell
    gets a fresh controller.
    """
    if not tracks or not policies:
        raise ValueError("evaluate_suite needs at least one track and one policy")
    jobs_list = []
    keys = []
    for pname, factory in policies.items():
        for t in tracks:
            keys.append((t.name, pname))
            jobs_list.append((t, factory, dict(kw, name=pname)))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            out = list(ex.map(_run_cell, jobs_list))
    else:
        out = [_run_cell(j) for j in jobs_list]
    return SuiteResult(list(policies), [t.name for t in tracks], dict(zip(keys, out)))


def results_json(suite: SuiteResult, policy: str) -> dict:
    cells = suite.column(policy)
    tracks = []
    for name, c in zip(suite.tracks, cells):
        if isinstance(c, EpisodeResult):
            tracks.append(c.summary())
        else:
            tracks.append({"name": name, "error": str(c)})
    return {"policy": policy, "tracks": tracks, "avg": suite.summary(policy)}


# -- trajectory logs -------------------------------------------------------------

_INT_COLUMNS = {"on_track", "next_gate", "reset"}


def dumps_log(log: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    for row in log:
        w.writerow([str(int(x)) if c in _INT_COLUMNS else repr(float(x)) for c, x in zip(LOG_COLUMNS, row)])
    return buf.getvalue()


class LogFormatError(ValueError):
    pass


def loads_log(text: str) -> np.ndarray:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise LogFormatError("empty trajectory log (missing header)") from None
    if tuple(header) != LOG_COLUMNS:
        raise LogFormatError(f"bad header {header!r}; expected {','.join(LOG_COLUMNS)}")
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if len(rec) != len(LOG_COLUMNS):
            raise LogFormatError(f"row {lineno}: expected {len(LOG_COLUMNS)} fields, got {len(rec)}")
        try:
            rows.append([float(x) for x in rec])
        except ValueError as e:
            raise LogFormatError(f"row {lineno}: {e}") from None
    return np.array(rows, dtype=float).reshape(-1, len(LOG_COLUMNS))


# -- results files -----------------------------------------------------------------

RESULT_KEYS = ("policy", "tracks", "avg")


def dumps_results(results: dict) -> str:
    return json.dumps(results, indent=2) + "\n"


def loads_results(text: str) -> dict:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValueError(f"results file is not valid JSON: {e}") from None
    if not isinstance(d, dict) or set(d) != set(RESULT_KEYS):
        raise ValueError(f"results file must hold exactly the keys {RESULT_KEYS}")
    return d
