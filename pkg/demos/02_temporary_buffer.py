"""
Filtering demonstrations with a temporary buffer
================================================

A demonstration only reaches the training database once the controller
has stayed on the track for the next ``k`` steps.  Leaving the track
discards everything still waiting in the buffer.
"""

import numpy as np

from cfn_racing.dynamics import HOVER
from cfn_racing.trainer import Demonstration, TemporaryBuffer, TrainingDatabase, buffer_step

# on-track flags for twelve steps: the flight leaves the corridor at step 8
flags = [True] * 7 + [False] + [True] * 4

for k in (0, 1, 3):
    buf, db = TemporaryBuffer(k), TrainingDatabase()
    for t, on in enumerate(flags, start=1):
        buffer_step(buf, Demonstration(np.zeros(19), HOVER, t), on, db)
    kept = db.indices
    print(f"k={k}: kept steps {kept}, still pending {[d.step_index for d in buf.entries]}")

# k=0 only drops the off-track step itself; larger k also drops the steps
# leading into the mistake, which is what keeps crash approaches out of the data
