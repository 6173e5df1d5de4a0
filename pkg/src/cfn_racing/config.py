"""Single INI run configuration: every tunable default in one place, one global seed."""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .dynamics import DynamicsConfig
from .oracle import OracleConfig
from .pid import PidControllerConfig, PidState, aggressive, conservative
from .report import RenderSpec
from .trainer import TrainerConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrackDefaults:
    shape: str = "polygon"  # "polygon" (one gate per edge) or "loop" (perturbed circle)
    width: float = 6.0
    height: float = 5.0
    gates: int = 10
    gate_half_width: float = 1.5
    gate_half_height: float = 1.25
    edge: float = 40.0
    spread: float = 0.8
    segment: float = 20.0
    max_turn_deg: float = 120.0
    n_points: int = 12
    radius: float = 60.0
    harmonics: int = 3
    amplitude: float = 0.35
    altitude: float = 5.0
    min_turn_radius: float = 20.0

    def __post_init__(self):
        if self.shape not in ("polygon", "loop"):
            raise ValueError(f"track.shape must be 'polygon' or 'loop', got {self.shape!r}")


@dataclass(frozen=True)
class EvaluatorConfig:
    laps: int = 2
    gate_timeout: float = 10.0
    jobs: int = 1


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    dynamics: DynamicsConfig = DynamicsConfig()
    track: TrackDefaults = TrackDefaults()
    oracle: OracleConfig = OracleConfig()
    conservative: PidControllerConfig = field(default_factory=conservative)
    aggressive: PidControllerConfig = field(default_factory=aggressive)
    trainer: TrainerConfig = TrainerConfig()
    evaluator: EvaluatorConfig = EvaluatorConfig()
    report: RenderSpec = RenderSpec()

    @property
    def controllers(self) -> tuple:
        return (self.conservative, self.aggressive)


# -- value codecs ------------------------------------------------------------------

def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _optional(conv):
    def parse(s):
        return None if s.strip().lower() in ("", "none") else conv(s)
    return parse


def _tuple(conv):
    def parse(s):
        return tuple(conv(x) for x in s.split(",") if x.strip())
    return parse


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


_PID_CHANNELS = ("yaw", "roll", "pitch", "throttle")
_PID_KEYS = {"target_wp_index": int, "target_speed": float, "damping": float, "turn_slowdown": float,
             "min_speed_fraction": float, "integral_limit": float, "lateral_error": str}
_PID_KEYS.update({f"{c}_{g}": float for c in _PID_CHANNELS for g in ("kp", "ki", "kd")})

# section -> key -> parser
SCHEMA = {
    "run": {"seed": int},
    "dynamics": {f.name: float for f in fields(DynamicsConfig)},
    "track": {f.name: {"int": int, "str": str}.get(f.type, float) for f in fields(TrackDefaults)},
    "oracle": {"n": int, "spacing": float, "noise_sigma": float},
    "pid.conservative": _PID_KEYS,
    "pid.aggressive": _PID_KEYS,
    "neural": {"hidden_activation": str, "dropout": float, "lr": float, "loss_weights": _tuple(float),
               "ou_theta": float, "ou_sigma": float},
    "trainer": {"episodes": int, "max_steps": int, "explore_steps": int, "batch_size": int,
                "buffer_sizes": _tuple(int), "laps": int, "updates_per_step": int,
                "db_capacity": _optional(int), "random_start": _bool, "start_speed_max": float,
                "start_offset_max": float, "start_yaw_max": float, "log_every": int},
    "evaluator": {"laps": int, "gate_timeout": float, "jobs": int},
    "report": {"width": int, "height": int, "speed_min": _optional(float), "speed_max": _optional(float)},
}


def _pid_values(c: PidControllerConfig) -> dict:
    v = {k: getattr(c, k) for k in ("target_wp_index", "target_speed", "damping", "turn_slowdown",
                                    "min_speed_fraction", "lateral_error")}
    v["integral_limit"] = c.yaw.integral_limit
    for ch in _PID_CHANNELS:
        st = getattr(c, ch)
        for g in ("kp", "ki", "kd"):
            v[f"{ch}_{g}"] = getattr(st, g)
    return v


def to_sections(cfg: RunConfig) -> dict:
    """Flat ``{section: {key: value}}`` view of a config."""
    t = cfg.trainer
    lo, hi = cfg.report.speed_range if cfg.report.speed_range else (None, None)
    return {
        "run": {"seed": cfg.seed},
        "dynamics": {f.name: getattr(cfg.dynamics, f.name) for f in fields(DynamicsConfig)},
        "track": {f.name: getattr(cfg.track, f.name) for f in fields(TrackDefaults)},
        "oracle": {k: getattr(cfg.oracle, k) for k in SCHEMA["oracle"]},
        "pid.conservative": _pid_values(cfg.conservative),
        "pid.aggressive": _pid_values(cfg.aggressive),
        "neural": {"hidden_activation": t.hidden_activation, "dropout": t.dropout, "lr": t.lr,
                   "loss_weights": tuple(t.loss_weights), "ou_theta": t.ou_theta, "ou_sigma": t.ou_sigma},
        "trainer": {k: getattr(t, k) for k in SCHEMA["trainer"]},
        "evaluator": {k: getattr(cfg.evaluator, k) for k in SCHEMA["evaluator"]},
        "report": {"width": cfg.report.width, "height": cfg.report.height, "speed_min": lo, "speed_max": hi},
    }


def _pid_from(values: dict, base: PidControllerConfig) -> PidControllerConfig:
    lim = values["integral_limit"]
    chans = {ch: PidState(kp=values[f"{ch}_kp"], ki=values[f"{ch}_ki"], kd=values[f"{ch}_kd"], integral_limit=lim)
             for ch in _PID_CHANNELS}
    return replace(base, target_wp_index=values["target_wp_index"], target_speed=values["target_speed"],
                   damping=values["damping"], turn_slowdown=values["turn_slowdown"],
                   min_speed_fraction=values["min_speed_fraction"], lateral_error=values["lateral_error"],
                   **chans)


def from_sections(sec: dict) -> RunConfig:
    seed = sec["run"]["seed"]
    n, t, r = sec["neural"], sec["trainer"], sec["report"]
    lo, hi = r["speed_min"], r["speed_max"]
    if (lo is None) != (hi is None):
        raise ConfigError("report.speed_min and report.speed_max must be set together")
    dyn = DynamicsConfig(**sec["dynamics"])
    base_c, base_a = conservative(), aggressive()
    return RunConfig(
        seed=seed,
        dynamics=dyn,
        track=TrackDefaults(**sec["track"]),
        oracle=OracleConfig(seed=seed, **sec["oracle"]),
        conservative=_pid_from(sec["pid.conservative"], replace(base_c, dt=dyn.dt)),
        aggressive=_pid_from(sec["pid.aggressive"], replace(base_a, dt=dyn.dt)),
        trainer=TrainerConfig(seed=seed, **t, **n),
        evaluator=EvaluatorConfig(**sec["evaluator"]),
        report=replace(RenderSpec(), width=r["width"], height=r["height"],
                       speed_range=None if lo is None else (lo, hi)),
    )


def _line_of(text: str, section: str, key: str | None = None) -> int:
    cur = None
    for i, ln in enumerate(text.splitlines(), start=1):
        s = ln.strip()
        m = re.match(r"^\[(.+)\]$", s)
        if m:
            cur = m.group(1).strip()
            if key is None and cur == section:
                return i
            continue
        if key is not None and cur == section and re.match(rf"^{re.escape(key)}\s*[=:]", s, re.IGNORECASE):
            return i
    return 0


def loads_config(text: str) -> RunConfig:
    """Parse INI text; unknown sections or keys are errors naming the line."""
    cp = configparser.ConfigParser(interpolation=None, default_section="__unused__")
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"config syntax error: {e}") from None
    sec = to_sections(RunConfig())
    for name in cp.sections():
        if name not in SCHEMA:
            raise ConfigError(f"line {_line_of(text, name)}: unknown section [{name}]")
        for key, raw in cp.items(name):
            line = _line_of(text, name, key)
            if key not in SCHEMA[name]:
                raise ConfigError(f"line {line}: unknown key {key!r} in [{name}]")
            try:
                sec[name][key] = SCHEMA[name][key](raw)
            except ValueError as e:
                raise ConfigError(f"line {line}: bad value for {name}.{key}: {e}") from None
    try:
        return from_sections(sec)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from None


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    return loads_config(Path(path).read_text(encoding="utf-8"))


def dumps_config(cfg: RunConfig) -> str:
    """Fully resolved config as INI text; ``loads_config`` of the result gives ``cfg`` back."""
    out = []
    for name, values in to_sections(cfg).items():
        out.append(f"[{name}]")
        out += [f"{k} = {_fmt(v)}" for k, v in values.items()]
        out.append("")
    return "\n".join(out)

