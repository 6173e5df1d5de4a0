import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfn_racing.dynamics import HOVER, ControlCommand, DynamicsConfig
from cfn_racing.evaluator import (LOG_COLUMNS, CourseProgress, EpisodeResult, LogFormatError, dumps_log,
                                  dumps_results, evaluate, evaluate_suite, loads_log, loads_results,
                                  results_json, summarize)
from cfn_racing.pid import PidController, conservative
from cfn_racing.track import build_track
from oracles import rescan

DT = DynamicsConfig().dt


@pytest.fixture(scope="module")
def square():
    return build_track([[0, 0, 5], [30, 0, 5], [30, 30, 5], [0, 30, 5]], 10.0, 4, name="square")


def hover(wps, state, last_cmd):
    return HOVER


def test_hover_times_out_at_every_gate(square):
    res = evaluate(square, hover)
    assert res.gates_passed == 0
    assert res.resets == res.gates_total == 8
    assert res.time == pytest.approx(8 * 10.0)  # laps * gates * timeout
    assert rescan(square, res.log) == (0, 8)


def test_time_equals_logged_steps(square):
    res = evaluate(square, PidController(conservative()))
    assert len(res.log) == res.steps + 1
    assert res.time == pytest.approx(DT * (len(res.log) - 1))
    assert res.log.shape[1] == len(LOG_COLUMNS)


def test_pid_run_rescans_to_live_counts(square):
    res = evaluate(square, PidController(conservative()))
    assert res.gates_passed == res.gates_total and res.resets == 0
    assert rescan(square, res.log) == (res.gates_passed, res.resets)


def test_single_lap(square):
    res = evaluate(square, PidController(conservative()), laps=1)
    assert res.gates_total == 4 and res.gates_passed == 4


def test_non_finite_command_aborts(square):
    res = evaluate(square, lambda w, s, c: ControlCommand(float("nan"), 0, 0, 0))
    assert res.aborted and "non-finite" in res.error


def test_course_progress_skip_to_wraps(square):
    c = CourseProgress(square, 2)
    assert c.next_gate == 1
    c.skip_to(3)
    assert c.done_count == 3 and c.next_gate == 0
    c.skip_to(1)
    assert c.done_count == 5 and c.next_gate == 2


def cell(name, passed, total, t, resets):
    return EpisodeResult(name, "p", passed, total, t, resets, int(t / DT))


def test_summary_by_hand():
    rs = [cell("a", 10, 10, 50.0, 0), cell("b", 7, 10, 80.0, 3), cell("c", 20, 20, 65.0, 0)]
    s = summarize(rs)
    assert s["score"] == pytest.approx(37 / 40)
    assert s["time_s"] == pytest.approx(65.0)
    assert s["resets"] == pytest.approx(1.0)


def test_one_by_one_suite(square):
    suite = evaluate_suite([square], {"hover": lambda: hover})
    res = results_json(suite, "hover")
    assert res["policy"] == "hover"
    assert res["tracks"] == [{"name": "square", "gates_passed": 0, "gates_total": 8, "time_s": pytest.approx(80.0),
                              "resets": 8}]
    assert res["avg"]["score"] == 0.0


def test_failing_cell_does_not_abort_suite(square):
    def broken():
        raise RuntimeError("boom")
    suite = evaluate_suite([square], {"hover": lambda: hover, "broken": broken})
    assert isinstance(suite.cells[("square", "broken")], RuntimeError)
    assert results_json(suite, "broken")["tracks"][0]["error"] == "boom"
    assert isinstance(suite.cells[("square", "hover")], EpisodeResult)


def test_empty_suite_rejected(square):
    with pytest.raises(ValueError):
        evaluate_suite([], {"hover": lambda: hover})


@settings(max_examples=30, deadline=None)
@given(st.lists(st.lists(st.floats(-1e6, 1e6), min_size=12, max_size=12), max_size=20),
       st.lists(st.integers(0, 40), min_size=3, max_size=3))
def test_log_round_trip(rows, ints):
    log = np.array([r + ints for r in rows]).reshape(-1, len(LOG_COLUMNS))
    text = dumps_log(log)
    back = loads_log(text)
    np.testing.assert_array_equal(back, log)
    assert dumps_log(back) == text


def test_log_bad_row_named():
    text = dumps_log(np.zeros((3, len(LOG_COLUMNS))))
    lines = text.splitlines()
    lines[3] = lines[3].replace("0.0", "x", 1)
    with pytest.raises(LogFormatError, match="row 4"):
        loads_log("\n".join(lines) + "\n")
    with pytest.raises(LogFormatError, match="row 2"):
        loads_log(lines[0] + "\n1,2\n")
    with pytest.raises(LogFormatError):
        loads_log("")


def test_results_round_trip(square):
    res = results_json(evaluate_suite([square], {"hover": lambda: hover}), "hover")
    text = dumps_results(res)
    assert dumps_results(loads_results(text)) == text
    with pytest.raises(ValueError):
        loads_results(json.dumps({"policy": "x"}))
    with pytest.raises(ValueError):
        loads_results("{")
