"""Controller fusion training: demonstrators fly, temporary buffers filter, the net learns online.

Each demonstrator owns a FIFO buffer of horizon ``k``.  A demonstration only
reaches the training database once the vehicle has stayed on the track for
``k`` further steps; leaving the track flushes the buffer.  After every
simulation step one Adam update is taken on a mini-batch drawn from the
database.
"""

from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .dynamics import HOVER, ControlCommand, DynamicsConfig, VehicleState, reset_to, step
from .evaluator import CourseProgress
from .neural import (DEFAULT_LOSS_WEIGHTS, AdamState, OuNoise, PolicyNet, adam_step, forward,
                     init_net, loss_and_grad)
from .oracle import OracleConfig, WaypointSet, local_waypoints
from .pid import PidController, PidControllerConfig, aggressive, conservative
from .seeding import substream
from .track import Track, is_on_track, project

log = logging.getLogger(__name__)

STATE_SIZE = 19


class TrainingError(RuntimeError):
    def __init__(self, msg: str, snapshot: dict | None = None):
        super().__init__(msg)
        self.snapshot = snapshot or {}


class Demonstration(NamedTuple):
    state_vec: np.ndarray
    action: ControlCommand
    step_index: int


class TemporaryBuffer:
    def __init__(self, capacity: int):
        if capacity < 0:
            raise ValueError(f"buffer capacity must be >= 0, got {capacity}")
        self.capacity = capacity
        self.entries: deque[Demonstration] = deque()
        self.last_index: int | None = None
        self.committed = 0
        self.discarded = 0

    def __len__(self):
        return len(self.entries)

    def clear(self) -> int:
        n = len(self.entries)
        self.entries.clear()
        self.discarded += n
        return n


class TrainingDatabase:
    """Append-only store of surviving demonstrations (optionally a ring)."""

    def __init__(self, capacity: int | None = None, size: int = STATE_SIZE):
        self.capacity = capacity
        self._x = np.empty((1024 if capacity is None else capacity, size))
        self._y = np.empty((len(self._x), 4))
        self.indices: list[int] = []
        self.n = 0  # valid rows
        self.total_added = 0

    def __len__(self):
        return self.n

    def add(self, d: Demonstration):
        if self.capacity is None:
            if self.n == len(self._x):
                self._x = np.vstack([self._x, np.empty_like(self._x)])
                self._y = np.vstack([self._y, np.empty_like(self._y)])
            row = self.n
            self.n += 1
        else:
            row = self.total_added % self.capacity
            self.n = min(self.n + 1, self.capacity)
        self._x[row] = d.state_vec
        self._y[row] = d.action
        self.indices.append(d.step_index)
        self.total_added += 1

    @property
    def states(self) -> np.ndarray:
        return self._x[:self.n]

    @property
    def actions(self) -> np.ndarray:
        return self._y[:self.n]

    def sample(self, batch: int, rng: np.random.Generator):
        idx = rng.integers(0, self.n, size=batch)
        return self._x[idx], self._y[idx]


def buffer_step(buf: TemporaryBuffer, entry: Demonstration, on_track_after_step: bool,
                db: TrainingDatabase) -> int:
    """Push one demonstration through the filter; returns how many reached ``db``."""
    if buf.last_index is not None and entry.step_index <= buf.last_index:
        raise ValueError(f"out-of-order demonstration: step {entry.step_index} after {buf.last_index}")
    buf.last_index = entry.step_index
    buf.entries.append(entry)
    if not on_track_after_step:
        buf.clear()
        return 0
    moved = 0
    while len(buf.entries) > buf.capacity:
        db.add(buf.entries.popleft())
        moved += 1
    buf.committed += moved
    return moved


def assemble_state(wps: WaypointSet, state: VehicleState, last_cmd: ControlCommand,
                   c_yaw: float = DynamicsConfig.c_yaw) -> np.ndarray:
    """Policy input: five body-frame waypoints, body velocity, last commanded yaw rate."""
    out = np.empty(STATE_SIZE)
    out[:15] = wps.points.ravel()
    out[15:18] = state.body_velocity()
    out[18] = c_yaw * last_cmd[3]
    return out


def act(net: PolicyNet, wps: WaypointSet, state: VehicleState, last_cmd: ControlCommand = HOVER,
        c_yaw: float = DynamicsConfig.c_yaw) -> ControlCommand:
    y, _ = forward(net, assemble_state(wps, state, last_cmd, c_yaw))
    return ControlCommand(*(float(v) for v in y))


class CfnPolicy:
    """Evaluation wrapper around a frozen network."""

    def __init__(self, net: PolicyNet, name: str = "cfn", c_yaw: float = DynamicsConfig.c_yaw):
        self.net = net
        self.name = name
        self.c_yaw = c_yaw

    def __call__(self, wps, state, last_cmd=HOVER):
        return act(self.net, wps, state, last_cmd, self.c_yaw)


@dataclass(frozen=True)
class TrainerConfig:
    episodes: int = 40  # M, per controller
    max_steps: int = 600  # T, per episode
    explore_steps: int = 2000
    batch_size: int = 32
    buffer_sizes: tuple = (1, 50)
    laps: int = 2
    updates_per_step: int = 1
    db_capacity: int | None = None
    loss_weights: tuple = DEFAULT_LOSS_WEIGHTS
    lr: float = 1e-3
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    hidden_activation: str = "tanh"
    dropout: float = 0.5
    random_start: bool = True
    start_speed_max: float = 25.0  # initial forward speed drawn from U(0, max)
    start_offset_max: float = 0.8  # lateral start offset, fraction of the corridor half width
    start_yaw_max: float = 1.0  # heading error at start, radians
    seed: int = 0
    log_every: int = 500

    def __post_init__(self):
        for name in ("max_steps", "batch_size", "laps", "updates_per_step"):
            if getattr(self, name) < 1:
                raise ValueError(f"trainer.{name} must be >= 1")
        if self.episodes < 0 or self.explore_steps < 0:
            raise ValueError("trainer.episodes and trainer.explore_steps must be >= 0")
        if any(k < 0 for k in self.buffer_sizes):
            raise ValueError("buffer sizes must be >= 0")


@dataclass
class ControllerStats:
    name: str
    episodes: int = 0
    steps: int = 0
    committed: int = 0
    discarded: int = 0
    leftover_discarded: int = 0
    off_track_events: int = 0


@dataclass
class TrainingReport:
    steps: int = 0
    explore_steps: int = 0
    updates: int = 0
    db_size: int = 0
    db_growth: list = field(default_factory=list)  # [step, |D|]
    loss_curve: list = field(default_factory=list)  # [step, mean loss since last point]
    controllers: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


class _Trainer:
    def __init__(self, tracks, cfg: TrainerConfig, dyn: DynamicsConfig, oracle: OracleConfig,
                 controllers: Sequence[PidControllerConfig], net: PolicyNet | None):
        if not tracks:
            raise ValueError("train needs at least one track")
        if len(cfg.buffer_sizes) != len(controllers):
            raise ValueError(f"{len(controllers)} controllers but {len(cfg.buffer_sizes)} buffer sizes")
        self.tracks = list(tracks)
        self.cfg, self.dyn, self.oracle = cfg, dyn, oracle
        self.ctrls = [PidController(c, name=f"mu{i + 1}") for i, c in enumerate(controllers)]
        self.buffers = [TemporaryBuffer(k) for k in cfg.buffer_sizes]
        self.db = TrainingDatabase(cfg.db_capacity)
        self.rng_init = substream(cfg.seed, "init")
        self.rng_dropout = substream(cfg.seed, "dropout")
        self.rng_sampler = substream(cfg.seed, "sampler")
        self.rng_env = substream(cfg.seed, "environment")
        self.rng_oracle = substream(cfg.seed, "oracle-noise")
        self.ou = OuNoise(substream(cfg.seed, "ou"), theta=cfg.ou_theta, sigma=cfg.ou_sigma, dt=dyn.dt)
        self.net = net if net is not None else init_net(self.rng_init, hidden_activation=cfg.hidden_activation,
                                                         dropout_rate=cfg.dropout)
        self.opt = AdamState.for_params(self.net.params, lr=cfg.lr)
        self.report = TrainingReport(controllers=[asdict(ControllerStats(c.name)) for c in self.ctrls])
        self.stats = [ControllerStats(c.name) for c in self.ctrls]
        self.step_index = 0
        self._loss_acc = 0.0
        self._loss_n = 0

    # one SGD update per simulation step once D holds a batch
    def _sgd(self):
        cfg = self.cfg
        if len(self.db) < cfg.batch_size:
            return
        for _ in range(cfg.updates_per_step):
            x, y = self.db.sample(cfg.batch_size, self.rng_sampler)
            loss, grads = loss_and_grad(self.net, x, y, cfg.loss_weights, train=True, rng=self.rng_dropout)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at step {self.step_index}",
                                    {"step": self.step_index, "db_size": len(self.db),
                                     "batch_states": x.tolist(), "batch_actions": y.tolist()})
            adam_step(self.net.params, grads, self.opt)
            self.report.updates += 1
            self._loss_acc += loss
            self._loss_n += 1

    def _log_progress(self):
        if self.step_index % self.cfg.log_every == 0:
            self.report.db_growth.append([self.step_index, len(self.db)])
            if self._loss_n:
                self.report.loss_curve.append([self.step_index, self._loss_acc / self._loss_n])
                self._loss_acc, self._loss_n = 0.0, 0

    def episode(self, track: Track, driver: int | None, budget: int):
        """Fly one episode. ``driver`` is a controller index, or None for the exploring net."""
        cfg, dyn = self.cfg, self.dyn
        start = int(self.rng_env.integers(len(track.gates))) if cfg.random_start else 0
        gate = track.gates[start]
        state = reset_to(gate.center, gate.heading)
        if cfg.random_start:
            v0 = float(self.rng_env.uniform(0.0, cfg.start_speed_max))
            off = float(self.rng_env.uniform(-1.0, 1.0)) * cfg.start_offset_max * track.width / 2
            dyaw = float(self.rng_env.uniform(-1.0, 1.0)) * cfg.start_yaw_max
            yaw = gate.heading + dyaw
            vel = v0 * np.array([math.cos(yaw), math.sin(yaw), 0.0])
            state = VehicleState(gate.center + off * gate.lateral_axis, vel, yaw)
        course = CourseProgress(track, cfg.laps, start_gate=start)
        labeller_i = 0 if driver is None else driver
        ctrl = self.ctrls[labeller_i]
        ctrl.reset()
        buf = self.buffers[labeller_i]
        st = self.stats[labeller_i]
        if driver is None:
            self.ou.reset()
        else:
            st.episodes += 1
        last_cmd = HOVER
        steps = 0
        while steps < budget and not course.finished:
            pr = project(track, state.position)
            wps = local_waypoints(track, state, self.oracle, self.rng_oracle, projection=pr)
            s_vec = assemble_state(wps, state, last_cmd, dyn.c_yaw)
            label = ctrl(wps, state, last_cmd)
            if driver is None:
                y, _ = forward(self.net, s_vec)
                cmd = ControlCommand(*(y + self.ou.sample())).clamped()
            else:
                cmd = label
            new = step(state, cmd, dyn)
            course.check(state.position, new.position)
            on = is_on_track(track, new.position)
            self.step_index += 1
            steps += 1
            before = buf.discarded
            st.committed += buffer_step(buf, Demonstration(s_vec, label, self.step_index), on, self.db)
            st.discarded += buf.discarded - before
            if not on:
                st.off_track_events += 1
                g = track.next_gate_ahead(project(track, new.position).arc_length)
                course.skip_to(g.index)
                new = reset_to(g.center, g.heading)
                ctrl.reset()
                last_cmd = HOVER
            else:
                last_cmd = cmd
            state = new
            self._sgd()
            self._log_progress()
        if driver is not None:
            st.steps += steps
        st.leftover_discarded += buf.clear()
        st.discarded = buf.discarded
        return steps

    def run(self):
        cfg = self.cfg
        n_tracks = len(self.tracks)
        if cfg.episodes > 0:
            done, ep = 0, 0
            while done < cfg.explore_steps:
                done += self.episode(self.tracks[ep % n_tracks], None,
                                     min(cfg.max_steps, cfg.explore_steps - done))
                ep += 1
            self.report.explore_steps = done
        n_ctrl = len(self.ctrls)
        for ep in range(cfg.episodes * n_ctrl):
            track = self.tracks[(ep // n_ctrl) % n_tracks]
            self.episode(track, ep % n_ctrl, cfg.max_steps)
            log.info("episode %d (%s on %s): |D|=%d", ep, self.ctrls[ep % n_ctrl].name, track.name, len(self.db))
        self.report.steps = self.step_index
        self.report.db_size = len(self.db)
        self.report.controllers = [asdict(s) for s in self.stats]
        return self.net, self.report


def train(tracks: Sequence[Track], cfg: TrainerConfig = TrainerConfig(), *,
          dyn: DynamicsConfig = DynamicsConfig(), oracle: OracleConfig = OracleConfig(),
          controllers: Sequence[PidControllerConfig] | None = None,
          net: PolicyNet | None = None, return_db: bool = False):
    """Run the full training loop; returns ``(net, report)`` (plus the database if asked)."""
    if controllers is None:
        controllers = (conservative(), aggressive())
    t = _Trainer(tracks, cfg, dyn, oracle, controllers, net)
    net, report = t.run()
    return (net, report, t.db) if return_db else (net, report)
