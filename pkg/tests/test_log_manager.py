import json

import numpy as np
import pytest

from src.lbsdc.core.errors import ConfigError, NotConverged
from src.lbsdc.core.log_manager import LogManager, log_mgr
from src.lbsdc.utils.safe_exec import EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_OK, exit_code, safe_call


@pytest.fixture
def mgr(tmp_path):
    return LogManager(tmp_path / "logs")


def read_entries(path):
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line]


def daily_entries(mgr):
    files = sorted(mgr.logs_dir.glob("*.jsonl"))
    return read_entries(files[-1]) if files else []


def test_entries_go_to_a_daily_jsonl_file(mgr):
    mgr.log("relax", "iteration 1", extra={"energy": -16.5})
    mgr.log("relax", "done", level="OK")
    entries = daily_entries(mgr)
    assert [e["message"] for e in entries] == ["iteration 1", "done"]
    assert entries[0]["extra"] == {"energy": -16.5}
    assert entries[0]["source"] == "relax"
    assert entries[1]["level"] == "ok"
    assert len(list(mgr.logs_dir.glob("*.jsonl"))) == 1


def test_unknown_level_is_info(mgr):
    mgr.log("config", "x", level="debug")
    assert daily_entries(mgr)[-1]["level"] == "info"


def test_disabled_manager_writes_nothing(mgr):
    mgr.enabled = False
    mgr.log("relax", "quiet")
    assert daily_entries(mgr) == []


def test_subscribers_and_dead_callbacks(mgr):
    seen = []

    def broken(entry):
        raise RuntimeError("boom")

    mgr.subscribe(seen.append)
    mgr.subscribe(broken)
    mgr.log("phases", "first")
    mgr.log("phases", "second")
    assert [e["message"] for e in seen] == ["first", "second"]
    assert broken not in mgr._subscribers
    mgr.unsubscribe(seen.append)
    mgr.log("phases", "third")
    assert len(seen) == 2


def test_tee_copies_entries_inside_the_block(mgr, tmp_path):
    mgr.log("relax", "before")
    with mgr.tee(tmp_path / "run" / "events.jsonl") as path:
        mgr.log("relax", "iteration 1", extra={"gap": np.float64(0.25)})
        mgr.log("relax", "done", level="ok")
    mgr.log("relax", "after")
    entries = read_entries(path)
    assert [e["message"] for e in entries] == ["iteration 1", "done"]
    assert entries[0]["extra"] == {"gap": 0.25}
    assert mgr._subscribers == []


def test_tee_works_with_the_daily_file_disabled(mgr, tmp_path):
    mgr.enabled = False
    with mgr.tee(tmp_path / "events.jsonl") as path:
        mgr.log("converge", "row")
    assert [e["source"] for e in read_entries(path)] == ["converge"]
    assert daily_entries(mgr) == []


def test_bubble_reaches_the_status_handler(mgr):
    got = []
    mgr.set_status_handler(lambda level, msg: got.append((level, msg)))
    mgr.log("relax", "quiet")
    mgr.log("relax", "loud", level="warn", bubble=True)
    assert got == [("warn", "relax: loud")]


def test_numpy_scalars_in_extra_are_serialised(mgr):
    mgr.log("relax", "np", extra={"e": np.float64(1.5), "n": np.int64(3)})
    assert daily_entries(mgr)[-1]["extra"] == {"e": 1.5, "n": 3.0}


# -------------------------------------------------
# safe_call
# -------------------------------------------------
def test_safe_call_success():
    ok, msg, payload = safe_call("relax", lambda x: x + 1, 1)
    assert ok and payload == 2
    assert exit_code(ok, payload) == EXIT_OK


def test_safe_call_maps_failures():
    def not_converged():
        raise NotConverged("lamellar: stop rule not met")

    def bad_config():
        raise ConfigError("unknown key 'nn'")

    ok, msg, payload = safe_call("relax", not_converged)
    assert not ok and "did not converge" in msg
    assert exit_code(ok, payload) == EXIT_NOT_CONVERGED

    ok, msg, payload = safe_call("config", bad_config)
    assert not ok and "ConfigError" in msg
    assert exit_code(ok, payload) == EXIT_CONFIG

    ok, msg, payload = safe_call("snapshot", open, "/nonexistent/dir/file.lbfield")
    assert not ok and isinstance(payload, OSError)
    assert exit_code(ok, payload) == EXIT_CONFIG


def test_safe_call_bubbles_failures():
    got = []
    log_mgr.set_status_handler(lambda level, msg: got.append(level))

    def fail():
        raise NotConverged("x")

    safe_call("relax", fail)
    assert got == ["warn"]


@pytest.mark.parametrize("error", [ZeroDivisionError("division by zero"), FloatingPointError("overflow"), MemoryError()])
def test_safe_call_contains_unexpected_errors(error):
    got = []
    log_mgr.set_status_handler(lambda level, msg: got.append(level))

    def fail():
        raise error

    ok, msg, payload = safe_call("relax", fail)
    assert not ok
    assert payload is error
    assert type(error).__name__ in msg
    assert exit_code(ok, payload) == EXIT_CONFIG
    assert got == ["error"]
