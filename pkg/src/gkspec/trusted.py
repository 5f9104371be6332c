"""Trusted runtime library: host routines models may call with ``extern call``.

Names not starting with ``untrusted_`` resolve here. These run inside the
trusted boundary and are never mocked or fuzzed.
"""

from __future__ import annotations

import threading

from .errors import InvalidPath
from .gktypes import INT, STRING


def canonicalize(cwd: str, path: str) -> str:
    """Lexically normalize ``path`` against ``cwd``.

    >>> canonicalize("/", "spec/../f.txt")
    '/f.txt'
    """
    if not path:
        raise InvalidPath("empty path")
    full = path if path.startswith("/") else cwd.rstrip("/") + "/" + path
    parts = []
    for comp in full.split("/"):
        if comp in ("", "."):
            continue
        if comp == "..":
            if not parts:
                raise InvalidPath(f"{path!r} escapes the root")
            parts.pop()
            continue
        parts.append(comp)
    return "/" + "/".join(parts)


def dirname(path: str) -> str:
    if path == "/":
        return "/"
    head = path.rsplit("/", 1)[0]
    return head or "/"


# Thread identities: small stable integers so they fit the model's int kind.

_tid_lock = threading.Lock()
_tid_next = [1]
_local = threading.local()


def current_tid() -> int:
    tid = getattr(_local, "override", None)
    if tid is not None:
        return tid
    tid = getattr(_local, "tid", None)
    if tid is None:
        with _tid_lock:
            _tid_next[0] += 1
            tid = _tid_next[0] + 1000
        _local.tid = tid
    return tid


class as_tid:
    """Context manager pinning the calling thread's model tid."""

    def __init__(self, tid: int):
        self.tid = tid

    def __enter__(self):
        self.prev = getattr(_local, "override", None)
        _local.override = self.tid
        return self

    def __exit__(self, *exc):
        _local.override = self.prev
        return False


def _canon_extern(cwd, path):
    try:
        return canonicalize(cwd, path)
    except InvalidPath:
        return ""


# name -> (python routine, parameter types, return type)
LIBRARY = {
    "trusted_canonicalize": (_canon_extern, (STRING, STRING), STRING),
    "trusted_dirname": (dirname, (STRING,), STRING),
    "trusted_gettid": (current_tid, (), INT),
}


def call(name, args):
    return LIBRARY[name][0](*args)
