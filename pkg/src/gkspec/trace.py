"""JSON-lines execution traces.

Layout: a header line, an ``init`` line holding the initial state snapshot,
one line per action event, and a footer counting the events. A file without
the footer was truncated and is rejected as corrupt.
"""

from __future__ import annotations

import io
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

from .errors import CorruptTrace, TraceVersionMismatch
from .state import encode_value, snapshot_from_obj, snapshot_to_obj

TRACE_VERSION = 1


def dumps(obj) -> str:
    """Compact JSON preserving the insertion order of every object."""
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=True)


def encode_args(args):
    return [encode_value(a) for a in args]


class TraceWriter:
    """Thread-safe line writer. ``sink`` is a path, a text stream or None (in memory)."""

    def __init__(self, sink=None):
        self._own = False
        if sink is None:
            self.stream = io.StringIO()
        elif isinstance(sink, (str, Path)):
            self.stream = open(sink, "w", encoding="utf-8")
            self._own = True
        else:
            self.stream = sink
        self.lock = threading.Lock()
        self.events = 0
        self.closed = False

    def _line(self, obj):
        self.stream.write(dumps(obj) + "\n")

    def header(self, model, policy: str, snapshot):
        with self.lock:
            self._line({"version": TRACE_VERSION, "model": model.name, "model_hash": model.hash,
                        "policy": policy})
            self._line({"init": snapshot_to_obj(snapshot)})

    def event(self, ev: dict):
        with self.lock:
            self._line(ev)
            self.events += 1

    def close(self):
        with self.lock:
            if self.closed:
                return
            self._line({"end": True, "events": self.events})
            self.closed = True
            self.stream.flush()
            if self._own:
                self.stream.close()

    def getvalue(self) -> str:
        return self.stream.getvalue()


@dataclass
class Trace:
    header: dict
    init: dict
    events: List[dict] = field(default_factory=list)


def parse_trace(text: str, model=None) -> Trace:
    """Parse trace text; checks structure and, if ``model`` is given, compatibility."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    objs = []
    for i, ln in enumerate(lines, 1):
        try:
            obj = json.loads(ln)
        except json.JSONDecodeError as e:
            raise CorruptTrace(f"line {i}: {e.msg}") from None
        if not isinstance(obj, dict):
            raise CorruptTrace(f"line {i}: expected an object")
        objs.append(obj)
    if len(objs) < 3:
        raise CorruptTrace("trace is missing its header, init or footer line")
    head, init, *events, foot = objs
    if "version" not in head:
        raise CorruptTrace("first line is not a trace header")
    if head["version"] != TRACE_VERSION:
        raise TraceVersionMismatch(f"trace version {head['version']}, expected {TRACE_VERSION}")
    if model is not None and (head.get("model_hash") != model.hash):
        raise TraceVersionMismatch(
            f"trace was recorded with model {head.get('model')}@{head.get('model_hash')}, "
            f"loaded {model.name}@{model.hash}")
    if "init" not in init:
        raise CorruptTrace("second line is not an init event")
    if foot.get("end") is not True or foot.get("events") != len(events):
        raise CorruptTrace("trace is truncated (footer missing or event count mismatch)")
    for ev in events:
        for k in ("seq", "action", "args", "extern", "verdict"):
            if k not in ev:
                raise CorruptTrace(f"event is missing {k!r}")
    return Trace(head, init["init"], events)


def read_trace(path, model=None) -> Trace:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise CorruptTrace(str(e)) from None
    return parse_trace(text, model)


def init_snapshot(trace: Trace) -> Optional[dict]:
    return snapshot_from_obj(trace.init)
