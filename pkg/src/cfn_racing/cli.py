"""Command line: ``track gen``, ``train``, ``eval`` and ``plot``.

Relative output paths are placed under ``$CFN_RACING_OUTPUT_DIR`` when it is set.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, RunConfig, dumps_config, load_config
from .evaluator import (EpisodeResult, dumps_log, dumps_results, evaluate_suite, loads_log,
                        results_json)
from .neural import ModelFormatError, load_model, save_model
from .oracle import OracleConfig
from .pid import PidController
from .report import render_table, render_trajectory, suite_columns
from .track import (TrackError, build_track, dumps_track, generate_polygon_track, generate_track, load_track, load_track_dir,
                    shipped_track_dir)
from .trainer import CfnPolicy, train

OUTPUT_ENV = "CFN_RACING_OUTPUT_DIR"
log = logging.getLogger("cfn_racing")


class CliError(Exception):
    pass


def _out(path) -> Path:
    p = Path(path)
    root = os.environ.get(OUTPUT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    return p


def _write(path: Path, data) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, bytes):
        path.write_bytes(data)
    else:
        path.write_text(data, encoding="utf-8")
    return path


def _tracks(track_dir, split: str, cfg: RunConfig):
    d = Path(track_dir) if track_dir else shipped_track_dir(split)
    gate_kw = dict(gate_half_width=cfg.track.gate_half_width, gate_half_height=cfg.track.gate_half_height)
    tracks = load_track_dir(d, **gate_kw)
    if not tracks:
        raise CliError(f"no *.json track files in {d}")
    return tracks


# -- commands ----------------------------------------------------------------------

def cmd_track_gen(args, cfg: RunConfig) -> list[Path]:
    t = cfg.track
    width = args.width if args.width is not None else t.width
    gates = args.gates if args.gates is not None else t.gates
    build_kw = dict(height=t.height, gate_half_width=t.gate_half_width, gate_half_height=t.gate_half_height)
    if args.points:
        raw = json.loads(Path(args.points).read_text(encoding="utf-8"))
        cp = raw["control_points"] if isinstance(raw, dict) else raw
        track = build_track(cp, width, gates, name=args.name or Path(args.points).stem, **build_kw)
    elif (args.shape or t.shape) == "polygon":
        track = generate_polygon_track(args.seed, width=width, corners=gates, name=args.name, edge=t.edge,
                                       spread=t.spread, segment=t.segment, altitude=t.altitude,
                                       max_turn_deg=t.max_turn_deg, **build_kw)
    else:
        track = generate_track(args.seed, width=width, gate_count=gates, name=args.name,
                               n_points=t.n_points, radius=t.radius, harmonics=t.harmonics,
                               amplitude=t.amplitude, altitude=t.altitude, min_radius=t.min_turn_radius,
                               **build_kw)
    return [_write(_out(args.out), dumps_track(track))]


def cmd_train(args, cfg: RunConfig) -> list[Path]:
    tcfg = cfg.trainer
    if args.no_buffer:
        tcfg = replace(tcfg, buffer_sizes=(0,) * len(tcfg.buffer_sizes))
    tracks = _tracks(args.track_dir, "train", cfg)
    net, report = train(tracks, tcfg, dyn=cfg.dynamics, oracle=cfg.oracle, controllers=cfg.controllers)
    report_dir = _out(args.report_dir)
    resolved = replace(cfg, trainer=tcfg)
    return [_write(_out(args.out_model), save_model(net)),
            _write(report_dir / "training_report.json", report.to_json()),
            _write(report_dir / "config.ini", dumps_config(resolved))]


def _policy_factory(args, cfg: RunConfig):
    if args.policy == "pid1":
        c = cfg.conservative
        return lambda: PidController(c, name="pid1")
    if args.policy == "pid2":
        c = cfg.aggressive
        return lambda: PidController(c, name="pid2")
    if not args.model:
        raise CliError(f"--policy {args.policy} needs --model")
    net = load_model(Path(args.model).read_bytes())
    name = args.policy
    c_yaw = cfg.dynamics.c_yaw
    return lambda: CfnPolicy(net, name=name, c_yaw=c_yaw)


def cmd_eval(args, cfg: RunConfig) -> list[Path]:
    tracks = _tracks(args.track_dir, "test", cfg)
    factory = _policy_factory(args, cfg)
    oracle = cfg.oracle
    if args.perception_noise is not None:
        oracle = replace(oracle, noise_sigma=args.perception_noise)
    laps = args.laps if args.laps is not None else cfg.evaluator.laps
    jobs = args.jobs if args.jobs is not None else cfg.evaluator.jobs
    suite = evaluate_suite(tracks, {args.policy: factory}, jobs=jobs, laps=laps,
                           gate_timeout=cfg.evaluator.gate_timeout, dyn=cfg.dynamics, oracle=oracle)
    out = _out(args.out)
    spec = cfg.report
    if args.fixed_scale:
        spec = replace(spec, speed_range=(0.0, cfg.dynamics.top_speed))
    written = [_write(out / "results.json", dumps_results(results_json(suite, args.policy))),
               _write(out / "table.md", render_table(suite_columns(suite), suite.tracks)),
               _write(out / "config.ini", dumps_config(replace(cfg, oracle=oracle)))]
    failed = []
    for track, cell in zip(tracks, suite.column(args.policy)):
        if not isinstance(cell, EpisodeResult):
            failed.append(f"{track.name}: {cell}")
            continue
        if cell.aborted:
            failed.append(f"{track.name}: {cell.error}")
        written.append(_write(out / "logs" / f"{track.name}.csv", dumps_log(cell.log)))
        written.append(_write(out / "plots" / f"{track.name}.svg",
                              render_trajectory(track, cell.log, spec, title=f"{args.policy} on {track.name}")))
    if failed:
        raise CliError("evaluation failed on " + "; ".join(failed))
    return written


def cmd_plot(args, cfg: RunConfig) -> list[Path]:
    track = load_track(args.track)
    rows = loads_log(Path(args.log).read_text(encoding="utf-8"))
    spec = cfg.report
    if args.fixed_scale:
        spec = replace(spec, speed_range=(0.0, cfg.dynamics.top_speed))
    return [_write(_out(args.out), render_trajectory(track, rows, spec))]


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cfn-racing", description="Drone racing simulator and controller fusion training.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI run configuration (defaults apply for missing keys)")

    track = sub.add_parser("track", help="track utilities")
    tsub = track.add_subparsers(dest="track_command", required=True)
    gen = tsub.add_parser("gen", help="generate a track file")
    common(gen)
    src = gen.add_mutually_exclusive_group(required=True)
    src.add_argument("--seed", type=int, help="random closed track from this seed")
    src.add_argument("--points", help="JSON list of control points (or a track-like object)")
    gen.add_argument("--shape", choices=("polygon", "loop"), help="generator for --seed (default from config)")
    gen.add_argument("--width", type=float, help="corridor width in metres")
    gen.add_argument("--gates", type=int, help="gates per lap")
    gen.add_argument("--name", help="track name (default: from seed or file)")
    gen.add_argument("--out", required=True, help="output track JSON")
    gen.set_defaults(func=cmd_track_gen)

    tr = sub.add_parser("train", help="train a fusion network")
    common(tr)
    tr.add_argument("--track-dir", help="directory of training tracks (default: shipped training suite)")
    tr.add_argument("--out-model", required=True, help="output model JSON")
    tr.add_argument("--report-dir", required=True, help="directory for the training report and resolved config")
    tr.add_argument("--no-buffer", action="store_true", help="ablation: zero-length temporary buffers")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="race a policy over a track suite")
    common(ev)
    ev.add_argument("--policy", choices=("model", "cfn", "pid1", "pid2"), required=True)
    ev.add_argument("--model", help="model JSON for --policy model/cfn")
    ev.add_argument("--track-dir", help="directory of test tracks (default: shipped test suite)")
    ev.add_argument("--laps", type=int)
    ev.add_argument("--out", required=True, help="output directory")
    ev.add_argument("--perception-noise", type=float, help="waypoint noise sigma in metres")
    ev.add_argument("--jobs", type=int, help="parallel worker processes")
    ev.add_argument("--fixed-scale", action="store_true", help="colour speed on 0..top speed instead of per figure")
    ev.set_defaults(func=cmd_eval)

    pl = sub.add_parser("plot", help="render a trajectory log as SVG")
    common(pl)
    pl.add_argument("--log", required=True, help="trajectory CSV")
    pl.add_argument("--track", required=True, help="track JSON")
    pl.add_argument("--out", required=True, help="output SVG")
    pl.add_argument("--fixed-scale", action="store_true")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        for path in args.func(args, cfg):
            print(path)
    except (CliError, ConfigError, TrackError, ModelFormatError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0
