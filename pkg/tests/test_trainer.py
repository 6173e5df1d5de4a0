import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfn_racing.dynamics import HOVER, ControlCommand, VehicleState
from cfn_racing.neural import init_net, save_model, zero_net
from cfn_racing.oracle import WaypointSet
from cfn_racing.track import build_track
from cfn_racing.trainer import (Demonstration, TemporaryBuffer, TrainerConfig, TrainingDatabase, act,
                                assemble_state, buffer_step, train)
from oracles import survivors


def demo(t):
    return Demonstration(np.full(19, float(t)), HOVER, t)


def run_filter(flags, k):
    """Feed steps 1..n through one buffer; returns committed step indices."""
    buf, db = TemporaryBuffer(k), TrainingDatabase()
    for t, on in enumerate(flags, start=1):
        buffer_step(buf, demo(t), on, db)
        assert len(buf) <= k
        if not on:
            assert len(buf) == 0
    return db.indices


def test_k1_commits_one_step_later():
    buf, db = TemporaryBuffer(1), TrainingDatabase()
    assert buffer_step(buf, demo(1), True, db) == 0
    assert buffer_step(buf, demo(2), True, db) == 1 and db.indices == [1]
    assert buffer_step(buf, demo(3), True, db) == 1 and db.indices == [1, 2]


def test_k3_off_track_discards_everything_pending():
    assert run_filter([True, True, True, False], 3) == []


def test_k0_discards_only_the_off_track_entry():
    assert run_filter([True, False, True], 0) == [1, 3]


@pytest.mark.parametrize("k", [0, 1, 3])
def test_filter_matches_brute_force_exhaustively(k):
    for n in range(1, 11):
        for flags in itertools.product([True, False], repeat=n):
            assert run_filter(flags, k) == survivors(flags, k)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=200), st.integers(0, 60))
def test_filter_matches_brute_force_random(flags, k):
    assert run_filter(flags, k) == survivors(flags, k)


def test_out_of_order_rejected():
    buf, db = TemporaryBuffer(2), TrainingDatabase()
    buffer_step(buf, demo(5), True, db)
    with pytest.raises(ValueError):
        buffer_step(buf, demo(5), True, db)


def test_ring_database_keeps_latest():
    db = TrainingDatabase(capacity=3)
    for t in range(1, 6):
        db.add(demo(t))
    assert len(db) == 3
    assert sorted(db.states[:, 0]) == [3.0, 4.0, 5.0]


def test_assemble_state_on_straight_at_rest():
    wps = WaypointSet(np.column_stack([5.0 * np.arange(1, 6), np.zeros(5), np.zeros(5)]), 5.0)
    v = assemble_state(wps, VehicleState.at([0, 0, 0], 0.0), HOVER)
    expected = [5, 0, 0, 10, 0, 0, 15, 0, 0, 20, 0, 0, 25, 0, 0, 0, 0, 0, 0]
    np.testing.assert_array_equal(v, expected)
    swapped = WaypointSet(wps.points[::-1].copy(), 5.0)
    assert not np.array_equal(assemble_state(swapped, VehicleState.at([0, 0, 0], 0.0), HOVER), v)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=15, max_size=15), st.floats(-3, 3),
       st.tuples(st.floats(-20, 20), st.floats(-20, 20), st.floats(-5, 5)), st.floats(-1, 1))
def test_assemble_state_reassembly(pts, yaw, vel, r):
    wps = WaypointSet(np.array(pts).reshape(5, 3), 5.0)
    s = VehicleState.at([1, 2, 3], yaw, velocity=vel)
    c, sn = np.cos(s.yaw), np.sin(s.yaw)
    body = [c * vel[0] + sn * vel[1], -sn * vel[0] + c * vel[1], vel[2]]
    ref = np.concatenate([np.array(pts), body, [np.pi * r]])
    np.testing.assert_allclose(assemble_state(wps, s, ControlCommand(R=r)), ref, atol=1e-9)


def test_zero_net_acts_as_hover():
    wps = WaypointSet(np.ones((5, 3)), 5.0)
    assert act(zero_net(), wps, VehicleState.at([0, 0, 0])) == HOVER


@pytest.fixture(scope="module")
def square():
    return build_track([[0, 0, 5], [100, 0, 5], [100, 100, 5], [0, 100, 5]], 10.0, 4, name="square")


def small_cfg(**kw):
    base = dict(episodes=1, max_steps=300, explore_steps=200, log_every=100)
    base.update(kw)
    return TrainerConfig(**base)


def test_zero_episodes_returns_initial_net(square):
    net0 = init_net(np.random.default_rng(0))
    before = save_model(net0)
    net, rep, db = train([square], small_cfg(episodes=0), net=net0, return_db=True)
    assert save_model(net) == before
    assert rep.db_size == 0 and len(db) == 0 and rep.updates == 0


def test_adversarial_second_controller_fully_filtered(square, monkeypatch):
    from cfn_racing import trainer as tr_mod

    class Crasher:
        def __init__(self, cfg, name="pid"):
            self.name = name

        def reset(self):
            pass

        def __call__(self, wps, state, last_cmd=None):
            return ControlCommand(0.0, -1.0, 0.0, 0.0)  # slide right into the wall

    real = tr_mod.PidController

    def factory(cfg, name="pid"):
        return Crasher(cfg, name) if name == "mu2" else real(cfg, name)

    monkeypatch.setattr(tr_mod, "PidController", factory)
    cfg = small_cfg(episodes=2, max_steps=400, explore_steps=0, random_start=False)
    _, rep, db = train([square], cfg, return_db=True)
    mu1, mu2 = rep.controllers
    assert mu2["committed"] == 0 and mu2["off_track_events"] > 0
    assert mu1["committed"] == len(db)
    # every stored label is a conservative-PID label, never the crasher's (0, -1, 0, 0)
    assert not np.any(np.all(db.actions == [0.0, -1.0, 0.0, 0.0], axis=1))


def test_no_buffer_keeps_at_least_as_many_samples(square):
    cfg = small_cfg(episodes=2, max_steps=600)
    _, rep_b = train([square], cfg)
    _, rep_n = train([square], TrainerConfig(**{**cfg.__dict__, "buffer_sizes": (0, 0)}))
    assert rep_n.db_size >= rep_b.db_size


def test_training_is_deterministic(square):
    cfg = small_cfg()
    a, ra = train([square], cfg)
    b, rb = train([square], cfg)
    assert save_model(a) == save_model(b)
    assert ra.to_json() == rb.to_json()
    c, _ = train([square], TrainerConfig(**{**cfg.__dict__, "seed": 1}))
    assert save_model(c) != save_model(a)


def test_report_counters_add_up(square):
    _, rep = train([square], small_cfg(episodes=2, max_steps=500))
    total = sum(c["committed"] for c in rep.controllers)
    assert total == rep.db_size
    assert rep.updates > 0 and rep.loss_curve
    assert rep.explore_steps == 200
    assert sum(c["steps"] for c in rep.controllers) + rep.explore_steps == rep.steps


def test_bad_trainer_config():
    with pytest.raises(ValueError):
        TrainerConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainerConfig(buffer_sizes=(1, -1))
    with pytest.raises(ValueError):
        train([], TrainerConfig())
