"""Independent reference implementations used as test oracles."""

import numpy as np

from cfn_racing.evaluator import LOG_COLUMNS

_C = {c: i for i, c in enumerate(LOG_COLUMNS)}


def survivors(flags, k):
    """Step t (1-based) survives iff steps t..t+k were all on track and t+k has happened."""
    n = len(flags)
    return [t for t in range(1, n + 1) if t + k <= n and all(flags[u - 1] for u in range(t, t + k + 1))]


def _through(gate, a, b):
    n = gate.normal / np.linalg.norm(gate.normal)
    sa, sb = (a - gate.center) @ n, (b - gate.center) @ n
    if not (sa < 0 <= sb):
        return False
    hit = a + (b - a) * (sa / (sa - sb)) - gate.center
    side = np.array([-n[1], n[0], 0.0])
    side /= np.linalg.norm(side)
    up = np.cross(n, side)
    return abs(hit @ side) <= gate.half_width and abs(hit @ up) <= gate.half_height


def rescan(track, log, laps=2):
    """Recount ``(gates_passed, resets)`` from logged positions and reset flags alone."""
    n_gates = len(track.gates)
    total = laps * n_gates
    expected, done, passed, resets = 1 % n_gates, 0, 0, 0
    pos = log[:, [_C["x"], _C["y"], _C["z"]]]
    for i in range(1, len(log)):
        if done >= total:
            break
        if log[i, _C["reset"]]:
            resets += 1
        elif _through(track.gates[expected], pos[i - 1], pos[i]):
            passed += 1
        else:
            continue
        done += 1
        expected = (expected + 1) % n_gates
    return passed, resets


def mean_speed(log):
    return float(np.linalg.norm(log[:, [_C["vx"], _C["vy"], _C["vz"]]], axis=1).mean())
