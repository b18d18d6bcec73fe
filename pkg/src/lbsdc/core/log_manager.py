# src/lbsdc/core/log_manager.py

from __future__ import annotations

import json
import threading
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional

from .paths import logs_dir as default_logs_dir

Entry = Dict[str, Any]
Subscriber = Callable[[Entry], None]


class LogManager:
    """
    Event log shared by the solver, the phase builders and the CLI.

    Every entry is one JSON object {ts, source, level, message, extra}:
      - appended to <logs_dir>/YYYY-MM-DD.jsonl (the per-user history)
      - handed to live subscribers, e.g. the per-run events.jsonl of tee()
      - optionally 'bubbled' to a status handler (the CLI prints to stderr)

    Typical usage:

        from src.lbsdc.core.log_manager import log_mgr

        log_mgr.log("relax", "iteration 12", extra={"energy": -16.53})
        with log_mgr.tee(out / "events.jsonl"):
            ...
    """

    LEVELS = ("info", "ok", "warn", "error")

    def __init__(self, logs_dir: Optional[Path] = None) -> None:
        self._logs_dir = Path(logs_dir) if logs_dir is not None else None
        self.enabled = True

        self._lock = threading.Lock()
        self._subscribers: List[Subscriber] = []
        self._status_handler: Optional[Callable[[str, str], None]] = None

    @property
    def logs_dir(self) -> Path:
        return self._logs_dir if self._logs_dir is not None else default_logs_dir()

    def set_logs_dir(self, path: Optional[Path]) -> None:
        """Redirect the daily files; None restores the per-user default."""
        with self._lock:
            self._logs_dir = Path(path) if path is not None else None

    def set_status_handler(self, handler: Optional[Callable[[str, str], None]]) -> None:
        """handler(level, message) receives every entry logged with bubble=True."""
        self._status_handler = handler

    # -------------------------------------------------
    # Subscribers
    # -------------------------------------------------
    def subscribe(self, callback: Subscriber) -> None:
        with self._lock:
            if callback not in self._subscribers:
                self._subscribers.append(callback)

    def unsubscribe(self, callback: Subscriber) -> None:
        with self._lock:
            if callback in self._subscribers:
                self._subscribers.remove(callback)

    @contextmanager
    def tee(self, path: Path) -> Iterator[Path]:
        """Copy every entry logged inside the block to path (JSONL, appended)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a", encoding="utf-8") as f:

            def write(entry: Entry) -> None:
                f.write(_encode(entry) + "\n")

            self.subscribe(write)
            try:
                yield path
            finally:
                self.unsubscribe(write)

    # -------------------------------------------------
    # Logging
    # -------------------------------------------------
    def log(
        self,
        source: str,
        message: str,
        level: str = "info",
        *,
        extra: Optional[Dict[str, Any]] = None,
        bubble: bool = False,
    ) -> None:
        """
        Args:
            source: "relax", "phases", "converge", "energy-ref", "config", ...
            level: one of LEVELS; anything else is logged as "info"
            extra: JSON-serialisable payload; numpy scalars are written as floats
            bubble: also forward "<source>: <message>" to the status handler
        """
        level = str(level).lower()
        entry: Entry = {
            "ts": time.time(),
            "source": str(source),
            "level": level if level in self.LEVELS else "info",
            "message": str(message),
            "extra": extra or {},
        }

        with self._lock:
            if self.enabled:
                try:
                    path = self._current_log_file()
                    path.parent.mkdir(parents=True, exist_ok=True)
                    with path.open("a", encoding="utf-8") as f:
                        f.write(_encode(entry) + "\n")
                except Exception:
                    # file errors never reach the caller
                    pass

            dead = []
            for cb in self._subscribers:
                try:
                    cb(entry)
                except Exception:
                    dead.append(cb)
            for cb in dead:
                self._subscribers.remove(cb)

        if bubble and self._status_handler is not None:
            try:
                self._status_handler(entry["level"], f"{entry['source']}: {entry['message']}")
            except Exception:
                pass

    def _current_log_file(self) -> Path:
        return self.logs_dir / f"{time.strftime('%Y-%m-%d')}.jsonl"


def _encode(entry: Entry) -> str:
    return json.dumps(entry, ensure_ascii=False, default=float)


# Global singleton used across the package
log_mgr = LogManager()
