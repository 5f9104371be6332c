"""A deliberately buggy trusted program for raw fuzzing.

It fronts a file service the way an enclave file-protection layer would:
per-descriptor handles live in a fixed-size shadow table indexed by the
descriptor the untrusted service returned. The seeded bug is that ``open``
never checks whether that slot is already taken, so a service that hands out
a live descriptor twice makes two files share one handle; closing either one
frees the slot the other still uses.

Every table access is guard-checked, so memory misuse surfaces as a
:class:`TargetFault` instead of silent corruption.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import GkError
from .base import ServiceBinding

TABLE_SIZE = 64


class TargetFault(GkError):
    def __init__(self, kind: str, detail: str):
        super().__init__(f"{kind}: {detail}")
        self.kind = kind


@dataclass
class Handle:
    path: str
    off: int = 0


class DemoTarget:
    """Trusted code under test. Supports open, close, read, write and lseek."""

    ACTIONS = ("open", "close", "read", "write", "lseek")

    def __init__(self, service: ServiceBinding):
        self.svc = service
        self.table = [None] * TABLE_SIZE
        self.buffers = {}

    def _slot(self, fd, what):
        if not 0 <= fd < TABLE_SIZE:
            raise TargetFault("shadow-index-out-of-range", f"{what}: fd {fd}")
        return fd

    def _handle(self, fd, what):
        h = self.table[self._slot(fd, what)]
        if h is None:
            raise TargetFault("use-after-close", f"{what}: fd {fd} has no live handle")
        return h

    def _call(self, name, args):
        return self.svc.call(f"untrusted_os_{name}", args)

    def invoke(self, action, args):
        if action not in self.ACTIONS:
            raise KeyError(action)
        return getattr(self, action)(*args)

    def open(self, path, flags, mode):
        fd = self._call("open", [path, flags, mode]).ret
        if fd < 0:
            return fd
        # bug: a live slot is overwritten instead of being rejected
        self.table[self._slot(fd, "open")] = Handle(path)
        return fd

    def close(self, fd):
        self._handle(fd, "close")
        r = self._call("close", [fd]).ret
        if r == 0:
            self.table[fd] = None
        return r

    def read(self, fd, buf, cnt):
        h = self._handle(fd, "read")
        r = self._call("read", [fd, buf, cnt])
        n = r.ret
        if n < 0:
            return n
        out = r.outs.get(1, buf)
        if n > len(buf):
            raise TargetFault("read-copy-overflow", f"service reported {n} bytes into a {len(buf)}-byte buffer")
        self.buffers[fd] = out[:n]
        h.off += n
        return n

    def write(self, fd, buf, cnt):
        h = self._handle(fd, "write")
        n = self._call("write", [fd, buf, cnt]).ret
        if n < 0:
            return n
        if n > cnt:
            raise TargetFault("write-count-overflow", f"service acknowledged {n} of {cnt} bytes")
        h.off += n
        return n

    def lseek(self, fd, off, whence):
        h = self._handle(fd, "lseek")
        r = self._call("lseek", [fd, off, whence]).ret
        if r >= 0:
            h.off = r
        return r

    def live_fds(self):
        return {i for i, h in enumerate(self.table) if h is not None}
