"""Abstract-map runtime: named maps of key tuple -> record, one lock per map."""

from __future__ import annotations

import json
import threading
from contextlib import contextmanager

from .errors import IntegerRange, KeyArityMismatch, StateTypeMismatch, UnknownField, UnknownMap
from .gktypes import BOOL, STRING, ArrayType, IntType, zero_value


def value_checker(t):
    """Return a function validating a runtime value against GkType ``t``."""
    if isinstance(t, IntType):
        lo, hi = t.lo, t.hi

        def check(v):
            if type(v) is not int:
                raise StateTypeMismatch(f"expected {t}, got {type(v).__name__}")
            if v < lo or v > hi:
                raise IntegerRange(f"{v} out of range for {t}")
        return check
    if t == STRING:
        def check(v):
            if not isinstance(v, str):
                raise StateTypeMismatch(f"expected string, got {type(v).__name__}")
        return check
    if t == BOOL:
        def check(v):
            if not isinstance(v, bool):
                raise StateTypeMismatch(f"expected bool, got {type(v).__name__}")
        return check
    if isinstance(t, ArrayType):
        want = bytes if t.is_bytes else tuple

        def check(v):
            if not isinstance(v, want):
                raise StateTypeMismatch(f"expected {t}, got {type(v).__name__}")
        return check
    return lambda v: None


class MapInstance:
    def __init__(self, name, key_types, field_types):
        self.name = name
        self.key_types = tuple(key_types)
        self.field_types = dict(field_types)
        self.zero = {f: zero_value(t) for f, t in self.field_types.items()}
        self.checkers = {f: value_checker(t) for f, t in self.field_types.items()}
        self.key_checkers = [value_checker(t) for t in self.key_types]
        self.entries = {}
        self.cond = threading.Condition(threading.RLock())
        self.waiters = 0

    def check_key(self, key):
        if len(key) != len(self.key_types):
            raise KeyArityMismatch(f"{self.name} takes {len(self.key_types)} key(s), got {len(key)}")

    def notify(self):
        if self.waiters:
            with self.cond:
                self.cond.notify_all()


class StateStore:
    """Per-map associative arrays. Absent entries read as ``None`` (NULL).

    Records returned by :meth:`get` are live and must be treated read-only.
    """

    def __init__(self, typed_program=None, seed: int = 0):
        self.maps = {}
        self.seed = seed
        if typed_program is not None:
            for name, info in typed_program.maps.items():
                self.maps[name] = MapInstance(name, info.key_types, info.field_types)

    def _map(self, name) -> MapInstance:
        try:
            return self.maps[name]
        except KeyError:
            raise UnknownMap(name) from None

    def get(self, name, key):
        m = self.maps.get(name)
        if m is None:
            raise UnknownMap(name)
        if len(key) != len(m.key_types):
            m.check_key(key)
        return m.entries.get(key)

    def record(self, name, key):
        r = self.get(name, tuple(key))
        return None if r is None else dict(r)

    def set(self, name, key, field, value):
        m = self.maps.get(name)
        if m is None:
            raise UnknownMap(name)
        chk = m.checkers.get(field)
        if chk is None:
            raise UnknownField(f"{name} has no field {field!r}")
        m.check_key(key)
        chk(value)
        ent = m.entries.get(key)
        if ent is None:
            for kc, k in zip(m.key_checkers, key):
                kc(k)
            ent = dict(m.zero)
            m.entries[key] = ent
        ent[field] = value
        m.notify()

    def delete(self, name, key):
        m = self._map(name)
        if m.entries.pop(key, None) is not None:
            m.notify()

    def keys(self, name):
        return sorted(self._map(name).entries)

    def lock(self, name):
        return self._map(name).cond

    # -- snapshots ----------------------------------------------------------

    def snapshot(self):
        return {name: {k: dict(v) for k, v in m.entries.items()} for name, m in self.maps.items()}

    def restore(self, snap):
        for name, m in self.maps.items():
            m.entries = {k: dict(v) for k, v in snap.get(name, {}).items()}
            m.notify()

    def to_json(self) -> str:
        return snapshot_to_json(self.snapshot())

    def __eq__(self, other):
        if not isinstance(other, StateStore):
            return NotImplemented
        return self.snapshot() == other.snapshot()


class StateOverlay:
    """Copy-on-write view over a store; writes never reach the base.

    Used for what-if execution (fuzz duality checks) without deep copies.
    """

    def __init__(self, base):
        self.base = base
        self.maps = base.maps
        self.written = {}

    def get(self, name, key):
        w = self.written.get(name)
        if w is not None and key in w:
            return w[key]
        return self.base.get(name, key)

    def set(self, name, key, field, value):
        m = self.base._map(name) if hasattr(self.base, "_map") else self.maps[name]
        chk = m.checkers.get(field)
        if chk is None:
            raise UnknownField(f"{name} has no field {field!r}")
        m.check_key(key)
        chk(value)
        cur = self.get(name, key)
        ent = dict(m.zero) if cur is None else dict(cur)
        ent[field] = value
        self.written.setdefault(name, {})[key] = ent

    def delete(self, name, key):
        self.written.setdefault(name, {})[key] = None

    def keys(self, name):
        ks = set(self.base.keys(name))
        for k, v in self.written.get(name, {}).items():
            if v is None:
                ks.discard(k)
            else:
                ks.add(k)
        return sorted(ks)

    @contextmanager
    def _nolock(self):
        yield

    def lock(self, name):
        return self._nolock()


def with_entry_lock(store, name, body):
    """Run ``body()`` holding ``name``'s map lock; released on every exit."""
    with store.lock(name):
        return body()


def encode_value(v):
    """JSON-friendly encoding of a runtime value."""
    if isinstance(v, bytes):
        return {"hex": v.hex()}
    if isinstance(v, tuple):
        return {"tuple": [encode_value(x) for x in v]}
    if isinstance(v, dict):
        return {"record": {k: encode_value(x) for k, x in v.items()}}
    return v


def decode_value(v):
    if isinstance(v, dict):
        if "hex" in v:
            return bytes.fromhex(v["hex"])
        if "tuple" in v:
            return tuple(decode_value(x) for x in v["tuple"])
        if "record" in v:
            return {k: decode_value(x) for k, x in v["record"].items()}
    if isinstance(v, list):
        return tuple(decode_value(x) for x in v)
    return v


def snapshot_to_obj(snap):
    out = {}
    for name in sorted(snap):
        rows = []
        for key in sorted(snap[name]):
            rec = snap[name][key]
            rows.append([[encode_value(k) for k in key],
                         {f: encode_value(rec[f]) for f in sorted(rec)}])
        out[name] = rows
    return out


def snapshot_to_json(snap) -> str:
    return json.dumps(snapshot_to_obj(snap), sort_keys=True, separators=(",", ":"))


def snapshot_from_obj(obj):
    snap = {}
    for name, rows in obj.items():
        snap[name] = {tuple(decode_value(k) for k in key): {f: decode_value(v) for f, v in rec.items()}
                      for key, rec in rows}
    return snap
