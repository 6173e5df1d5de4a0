"""
Training the fusion network and racing it
=========================================

Train on five training tracks with and without the temporary buffers,
then race all four policies on three unseen test tracks.
Takes a few minutes on one core.
"""

import os
import time
from pathlib import Path

from cfn_racing.evaluator import evaluate_suite
from cfn_racing.pid import PidController, aggressive, conservative
from cfn_racing.report import format_summary, render_table, suite_columns
from cfn_racing.track import shipped_tracks
from cfn_racing.trainer import CfnPolicy, TrainerConfig, train

out = Path(os.environ.get("CFN_RACING_OUTPUT_DIR", "demo_output"))
out.mkdir(parents=True, exist_ok=True)
train_tracks = shipped_tracks("train")[:5]
test_tracks = shipped_tracks("test")[:3]

t0 = time.perf_counter()
net, report = train(train_tracks, TrainerConfig())
print(f"buffered: |D|={report.db_size} after {report.steps} steps ({time.perf_counter() - t0:.0f} s)")
for c in report.controllers:
    print(f"  {c['name']}: committed {c['committed']}, discarded {c['discarded']}, "
          f"left the track {c['off_track_events']} times")

net_nb, report_nb = train(train_tracks, TrainerConfig(buffer_sizes=(0, 0)))
print(f"no buffer: |D|={report_nb.db_size}")

policies = {
    "PID1": lambda: PidController(conservative(), name="PID1"),
    "PID2": lambda: PidController(aggressive(), name="PID2"),
    "NoBuffer": lambda: CfnPolicy(net_nb, name="NoBuffer"),
    "CFN": lambda: CfnPolicy(net, name="CFN"),
}
suite = evaluate_suite(test_tracks, policies)
table = render_table(suite_columns(suite), suite.tracks)
print(table)
for p in policies:
    print(f"{p:9s} {format_summary(suite.summary(p))}")
(out / "table.md").write_text(table)
