"""
Tracks and the two demonstrators
================================

Generate a polygon circuit, fly both PID demonstrators over it and render
the flights as speed-coloured SVGs.
"""

import os
from pathlib import Path

import numpy as np

from cfn_racing.evaluator import evaluate
from cfn_racing.pid import PidController, aggressive, conservative
from cfn_racing.report import render_trajectory
from cfn_racing.track import generate_polygon_track

out = Path(os.environ.get("CFN_RACING_OUTPUT_DIR", "demo_output"))
out.mkdir(parents=True, exist_ok=True)

# one gate sits in the middle of every edge, so every bend lies between two gates
track = generate_polygon_track(7)
print(f"{track.name}: {track.total_length:.0f} m, {len(track.gates)} gates, corridor {track.width} m")

# the conservative controller chases the nearest waypoint and brakes into bends;
# the aggressive one aims four waypoints ahead at full speed
for name, cfg in [("pid1", conservative()), ("pid2", aggressive())]:
    res = evaluate(track, PidController(cfg, name=name))
    speed = np.linalg.norm(res.log[:, 4:7], axis=1)
    print(f"{name}: {res.gates_passed}/{res.gates_total} gates in {res.time:.1f} s, "
          f"{res.resets} resets, mean speed {speed.mean():.1f} m/s")
    (out / f"{name}_{track.name}.svg").write_text(render_trajectory(track, res.log, title=name))

print(f"figures written to {out}/")
