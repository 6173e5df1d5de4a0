"""Static artifacts: top-down SVG trajectory renders and Markdown result tables."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .evaluator import LOG_COLUMNS, EpisodeResult, LogFormatError, SuiteResult, loads_log
from .track import Track

_COL = {c: i for i, c in enumerate(LOG_COLUMNS)}


@dataclass(frozen=True)
class RenderSpec:
    width: int = 800  # canvas, px
    height: int = 800
    margin: int = 30
    track_stroke: str = "#9a9a9a"
    track_stroke_width: float = 1.0
    slow_color: tuple = (0, 0, 255)  # minimum speed
    fast_color: tuple = (255, 0, 0)  # maximum speed
    gate_color: str = "#e00000"
    gate_stroke_width: float = 3.0
    trajectory_stroke_width: float = 2.0
    speed_range: tuple | None = None  # fixed (vmin, vmax) instead of per-figure

    def __post_init__(self):
        if self.width <= 2 * self.margin or self.height <= 2 * self.margin:
            raise ValueError("canvas must be larger than twice the margin")


def speed_color(speed: float, vmin: float, vmax: float, spec: RenderSpec = RenderSpec()) -> str:
    """Linear blend from ``slow_color`` at ``vmin`` to ``fast_color`` at ``vmax``."""
    f = 0.0 if vmax <= vmin else min(1.0, max(0.0, (speed - vmin) / (vmax - vmin)))
    rgb = [round(a + (b - a) * f) for a, b in zip(spec.slow_color, spec.fast_color)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def _check_log(log) -> np.ndarray:
    if log is None:
        return np.empty((0, len(LOG_COLUMNS)))
    if isinstance(log, str):
        return loads_log(log)
    arr = np.asarray(log, dtype=float)
    if arr.size == 0:
        return arr.reshape(0, len(LOG_COLUMNS))
    if arr.ndim != 2 or arr.shape[1] != len(LOG_COLUMNS):
        raise LogFormatError(f"expected {len(LOG_COLUMNS)} columns, got array of shape {arr.shape}")
    bad = np.flatnonzero(~np.all(np.isfinite(arr), axis=1))
    if len(bad):
        # +2: header is line 1
        raise LogFormatError(f"row {bad[0] + 2}: non-finite value")
    return arr


def _outline(track: Track):
    n = np.column_stack([-track.tangents[:, 1], track.tangents[:, 0]])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    half = track.width / 2
    xy = track.samples[:, :2]
    return xy + half * n, xy - half * n


def _polyline(pts, fmt, **attrs) -> str:
    coords = " ".join(f"{fmt(x)},{fmt(y)}" for x, y in pts)
    extra = "".join(f' {k.replace("_", "-")}="{v}"' for k, v in attrs.items())
    return f'<polyline points="{coords}" fill="none"{extra}/>'


def render_trajectory(track: Track, log=None, spec: RenderSpec = RenderSpec(), title: str | None = None) -> str:
    """Top-down SVG of the corridor, gates and a speed-coloured flight path.

    ``log`` is a trajectory array or CSV text in the evaluator's column order.
    Rows flagged as resets start a new stroke; the teleport is drawn dashed.
    """
    rows = _check_log(log)
    left, right = _outline(track)
    xy = np.vstack([left, right] + ([rows[:, 1:3]] if len(rows) else []))
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    scale = min((spec.width - 2 * spec.margin) / span[0], (spec.height - 2 * spec.margin) / span[1])
    ox = spec.margin + (spec.width - 2 * spec.margin - scale * span[0]) / 2
    oy = spec.margin + (spec.height - 2 * spec.margin - scale * span[1]) / 2

    def px(p):
        # y axis flipped so the plot reads like a map
        return ox + (p[0] - lo[0]) * scale, spec.height - (oy + (p[1] - lo[1]) * scale)

    fmt = lambda v: f"{v:.2f}"
    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{spec.width}" '
           f'height="{spec.height}" viewBox="0 0 {spec.width} {spec.height}">']
    out.append(f"<title>{escape(title or track.name)}</title>")
    out.append(f'<rect x="0" y="0" width="{spec.width}" height="{spec.height}" fill="#ffffff"/>')
    out.append('<g id="track">')
    for edge in (left, right):
        pts = [px(p) for p in np.vstack([edge, edge[:1]])]
        out.append(_polyline(pts, fmt, stroke=spec.track_stroke, stroke_width=spec.track_stroke_width))
    out.append("</g>")

    out.append('<g id="gates">')
    for g in track.gates:
        a = px(g.center[:2] - g.half_width * g.lateral_axis[:2])
        b = px(g.center[:2] + g.half_width * g.lateral_axis[:2])
        out.append(f'<line x1="{fmt(a[0])}" y1="{fmt(a[1])}" x2="{fmt(b[0])}" y2="{fmt(b[1])}" '
                   f'stroke="{spec.gate_color}" stroke-width="{spec.gate_stroke_width}"/>')
    out.append("</g>")

    out.append('<g id="trajectory">')
    if len(rows) > 1:
        speed = np.linalg.norm(rows[:, 4:7], axis=1)
        vmin, vmax = spec.speed_range if spec.speed_range else (float(speed.min()), float(speed.max()))
        for i in range(1, len(rows)):
            a, b = px(rows[i - 1, 1:3]), px(rows[i, 1:3])
            seg = f'x1="{fmt(a[0])}" y1="{fmt(a[1])}" x2="{fmt(b[0])}" y2="{fmt(b[1])}"'
            if rows[i, _COL["reset"]]:
                out.append(f'<line class="reset" {seg} stroke="#606060" stroke-width="1" stroke-dasharray="4 4"/>')
                continue
            c = speed_color(0.5 * (speed[i - 1] + speed[i]), vmin, vmax, spec)
            out.append(f'<line class="flight" {seg} stroke="{c}" '
                       f'stroke-width="{spec.trajectory_stroke_width}" stroke-linecap="round"/>')
        out.append("</g>")
        out.append(f'<text x="{spec.margin}" y="{spec.height - 8}" font-size="12" font-family="sans-serif">'
                   f'speed {vmin:.1f} m/s (blue) to {vmax:.1f} m/s (red)</text>')
    else:
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


# -- tables ----------------------------------------------------------------------

def suite_columns(suite: SuiteResult) -> dict:
    """``{policy: [cell dict | None]}`` with ``None`` for failed cells."""
    cols = {}
    for p in suite.policies:
        cols[p] = [c.summary() if isinstance(c, EpisodeResult) else None for c in suite.column(p)]
    return cols


def _avg(cells):
    ok = [c for c in cells if c is not None]
    if not ok:
        return None
    total = sum(c["gates_total"] for c in ok)
    return {"score": sum(c["gates_passed"] for c in ok) / total if total else 0.0,
            "time_s": sum(c["time_s"] for c in ok) / len(ok),
            "resets": sum(c["resets"] for c in ok) / len(ok)}


TIME_FOOTNOTE = "Time includes the seconds spent before each gate timeout; Resets counts timeouts."


def render_table(columns: dict, tracks: list | None = None, footnote: str | None = TIME_FOOTNOTE) -> str:
    """Markdown table: a Score/Time/Resets triple per policy, one row per track, then ``Avg.``.

    ``columns`` maps policy name to per-track cell dicts with ``name``,
    ``gates_passed``, ``gates_total``, ``time_s`` and ``resets`` (``None`` marks a failed cell).
    """
    if not columns:
        raise ValueError("render_table needs at least one policy column")
    policies = list(columns)
    n = len(columns[policies[0]])
    if any(len(columns[p]) != n for p in policies):
        raise ValueError("every policy column needs one cell per track")
    if tracks is None:
        tracks = []
        for i in range(n):
            names = [columns[p][i]["name"] for p in policies if columns[p][i] is not None]
            tracks.append(names[0] if names else f"track {i + 1}")
    head = ["Track"] + [f"{p} {h}" for p in policies for h in ("Score", "Time", "Resets")]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for i, name in enumerate(tracks):
        row = [name]
        for p in policies:
            c = columns[p][i]
            if c is None:
                row += ["error", "-", "-"]
            else:
                row += [f"{c['gates_passed']}/{c['gates_total']}", f"{c['time_s']:.2f}", str(int(c["resets"]))]
        lines.append("| " + " | ".join(row) + " |")
    row = ["Avg."]
    for p in policies:
        a = _avg(columns[p])
        row += ["-", "-", "-"] if a is None else [f"{100 * a['score']:.2f}%", f"{a['time_s']:.2f}", f"{a['resets']:.2f}"]
    lines.append("| " + " | ".join(row) + " |")
    if footnote:
        lines += ["", footnote]
    return "\n".join(lines) + "\n"


class TableFormatError(ValueError):
    pass


_SCORE = re.compile(r"^(\d+)/(\d+)$")


def parse_table(text: str) -> dict:
    """Inverse of :func:`render_table` for the per-track cells (the ``Avg.`` row is checked, not returned)."""
    lines = [ln.strip() for ln in text.strip().split("\n\n")[0].splitlines()]
    if len(lines) < 3:
        raise TableFormatError("table needs a header, a separator and at least one row")
    split = lambda ln: [c.strip() for c in ln.strip("|").split("|")]
    head = split(lines[0])
    if head[0] != "Track" or (len(head) - 1) % 3:
        raise TableFormatError(f"unexpected header {lines[0]!r}")
    policies = []
    for j in range(1, len(head), 3):
        p = head[j].rsplit(" ", 1)[0]
        if [head[j], head[j + 1], head[j + 2]] != [f"{p} Score", f"{p} Time", f"{p} Resets"]:
            raise TableFormatError(f"unexpected header cells {head[j:j + 3]!r}")
        policies.append(p)
    cols = {p: [] for p in policies}
    body = lines[2:]
    if not body or split(body[-1])[0] != "Avg.":
        raise TableFormatError("missing Avg. row")
    for lineno, ln in enumerate(body[:-1], start=3):
        cells = split(ln)
        if len(cells) != len(head):
            raise TableFormatError(f"line {lineno}: expected {len(head)} cells, got {len(cells)}")
        for k, p in enumerate(policies):
            score, t, r = cells[1 + 3 * k: 4 + 3 * k]
            if score == "error":
                cols[p].append(None)
                continue
            m = _SCORE.match(score)
            if not m:
                raise TableFormatError(f"line {lineno}: bad score {score!r}")
            try:
                cols[p].append({"name": cells[0], "gates_passed": int(m.group(1)), "gates_total": int(m.group(2)),
                                "time_s": float(t), "resets": int(r)})
            except ValueError:
                raise TableFormatError(f"line {lineno}: bad time or resets {t!r}, {r!r}") from None
    return cols


def format_summary(avg: dict) -> str:
    """``98.51% / 137.61 / 0.29`` style one-liner."""
    if avg is None or any(isinstance(v, float) and math.isnan(v) for v in avg.values()):
        return "-"
    return f"{100 * avg['score']:.2f}% / {avg['time_s']:.2f} / {avg['resets']:.2f}"
