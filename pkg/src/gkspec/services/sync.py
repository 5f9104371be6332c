"""Host mutex/futex service with real blocking semantics.

Callers are identified by the trusted runtime's thread id, so scripted tests
can impersonate threads with :func:`gkspec.trusted.as_tid`.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from ..constants import CONSTANTS as C
from ..trusted import current_tid
from .base import ServiceBinding

NORMAL, ERRCHECK, RECURSIVE = C["MUTEX_NORMAL"], C["MUTEX_ERRCHECK"], C["MUTEX_RECURSIVE"]


@dataclass
class Mutex:
    kind: int
    owner: int = 0
    count: int = 0
    cond: threading.Condition = field(default_factory=threading.Condition)


@dataclass
class Futex:
    val: int
    sleepers: int = 0
    tokens: int = 0
    cond: threading.Condition = field(default_factory=threading.Condition)


class SyncHost:
    def __init__(self):
        self.table_lock = threading.Lock()
        self.mutexes = {}
        self.futexes = {}

    # -- mutexes ----------------------------------------------------------------

    def mutex_init(self, mid, kind):
        with self.table_lock:
            if kind not in (NORMAL, ERRCHECK, RECURSIVE):
                return -C["EINVAL"]
            if mid in self.mutexes:
                return -C["EBUSY"]
            self.mutexes[mid] = Mutex(kind)
            return 0

    def mutex_destroy(self, mid):
        with self.table_lock:
            m = self.mutexes.get(mid)
            if m is None:
                return -C["EINVAL"]
            if m.count:
                return -C["EBUSY"]
            del self.mutexes[mid]
            return 0

    def mutex_lock(self, mid):
        m = self.mutexes.get(mid)
        if m is None:
            return -C["EINVAL"]
        tid = current_tid()
        with m.cond:
            if m.count and m.owner == tid:
                if m.kind == RECURSIVE:
                    m.count += 1
                    return 0
                # a NORMAL self-deadlock would hang forever; report it instead
                return -C["EDEADLK"]
            while m.count:
                m.cond.wait()
            m.owner, m.count = tid, 1
            return 0

    def mutex_trylock(self, mid):
        m = self.mutexes.get(mid)
        if m is None:
            return -C["EINVAL"]
        tid = current_tid()
        with m.cond:
            if m.count:
                if m.kind == RECURSIVE and m.owner == tid:
                    m.count += 1
                    return 0
                return -C["EBUSY"]
            m.owner, m.count = tid, 1
            return 0

    def mutex_unlock(self, mid):
        m = self.mutexes.get(mid)
        if m is None:
            return -C["EINVAL"]
        with m.cond:
            if not m.count or m.owner != current_tid():
                return -C["EPERM"]
            m.count -= 1
            if not m.count:
                m.owner = 0
                m.cond.notify()
            return 0

    # -- futexes ----------------------------------------------------------------

    def futex_init(self, fid, val):
        with self.table_lock:
            if val < 0:
                return -C["EINVAL"]
            if fid in self.futexes:
                return -C["EBUSY"]
            self.futexes[fid] = Futex(val)
            return 0

    def futex_destroy(self, fid):
        with self.table_lock:
            f = self.futexes.get(fid)
            if f is None:
                return -C["EINVAL"]
            if f.sleepers or f.tokens:
                return -C["EBUSY"]
            del self.futexes[fid]
            return 0

    def futex_cmpxchg(self, fid, old, new):
        f = self.futexes.get(fid)
        if f is None or old < 0 or new < 0:
            return -C["EINVAL"]
        with f.cond:
            prev = f.val
            if prev == old:
                f.val = new
            return prev

    def futex_wait(self, fid, expected):
        f = self.futexes.get(fid)
        if f is None:
            return -C["EINVAL"]
        with f.cond:
            if f.val != expected:
                return -C["EAGAIN"]
            f.sleepers += 1
            while not f.tokens:
                f.cond.wait()
            f.tokens -= 1
            return 0

    def futex_wake(self, fid, n):
        f = self.futexes.get(fid)
        if f is None or n < 0:
            return -C["EINVAL"]
        with f.cond:
            k = min(n, f.sleepers)
            f.sleepers -= k
            f.tokens += k
            if k:
                f.cond.notify(k)
            return k


SYNC_EXTERNS = ("mutex_init", "mutex_lock", "mutex_trylock", "mutex_unlock", "mutex_destroy",
                "futex_init", "futex_destroy", "futex_cmpxchg", "futex_wait", "futex_wake")


class SyncService(ServiceBinding):
    name = "correct_sync"

    def __init__(self, host: SyncHost = None):
        self.host = host or SyncHost()
        super().__init__({f"untrusted_{n}": getattr(self.host, n) for n in SYNC_EXTERNS})


def correct_sync() -> SyncService:
    """Fresh mutex/futex host with no objects."""
    return SyncService()
