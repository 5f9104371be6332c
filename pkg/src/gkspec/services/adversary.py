"""Adversarial service variants: a correct binding that lies at trigger points.

Each variant ships a canonical attack script and the index of the step at
which the lie becomes observable to the model. For most variants that is the
attacked call itself; a write that silently drops data (PHANTOM_SUCCESS) and
a rename that leaves the old name behind (RENAME_ALIAS) only show up at the
next call that observes the affected state. The DOUBLE_LOCK_GRANT script
is an attack script only: on a correct service its attack step blocks.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable

from ..errors import UnknownVariant
from ..trusted import canonicalize, current_tid
from .base import ExternResult, ServiceBinding


@dataclass(frozen=True)
class AdversaryVariant:
    id: str
    description: str
    model: str
    trigger: Callable  # (binding, fn, args) -> bool
    mutation: Callable  # (binding, fn, args) -> ExternResult
    script: dict
    attack_step: int


class AdversaryBinding(ServiceBinding):
    def __init__(self, base: ServiceBinding, variant: AdversaryVariant):
        super().__init__(base.table, f"{base.name}+{variant.id}")
        self.base = base
        self.variant = variant
        self.open_fds = []
        self.fired = 0
        self._lock = threading.Lock()

    def call(self, fn, args):
        v = self.variant
        if v.trigger(self, fn, args):
            with self._lock:
                self.fired += 1
            r = v.mutation(self, fn, args)
        else:
            r = self.base.call(fn, args)
        self._track(fn, args, r)
        return r

    def _track(self, fn, args, r):
        if fn == "untrusted_os_open" and isinstance(r.ret, int) and r.ret >= 0:
            self.open_fds.append(r.ret)
        elif fn == "untrusted_os_close" and r.ret == 0 and args[0] in self.open_fds:
            self.open_fds.remove(args[0])


# -- FS variants --------------------------------------------------------------


def _fd_confusion_trigger(b, fn, args):
    return fn == "untrusted_os_open" and bool(b.open_fds)


def _fd_confusion(b, fn, args):
    r = b.base.call(fn, args)
    if isinstance(r.ret, int) and r.ret >= 0:
        return ExternResult(b.open_fds[0])
    return r


def _read_ok(b, fn, args):
    return fn == "untrusted_os_read"


def _short_read_lie(b, fn, args):
    r = b.base.call(fn, args)
    if isinstance(r.ret, int) and r.ret >= 0:
        return ExternResult(r.ret + 16, r.outs)
    return r


def _wrong_data(b, fn, args):
    r = b.base.call(fn, args)
    if isinstance(r.ret, int) and r.ret > 0:
        buf = r.outs[1]
        return ExternResult(r.ret, {1: bytes([buf[0] ^ 0x5A]) + buf[1:]})
    return r


def _phantom_trigger(b, fn, args):
    return fn == "untrusted_os_write"


def _phantom_success(b, fn, args):
    fs = b.base.fs
    f = fs.fds.get(args[0])
    if f is None:
        return b.base.call(fn, args)
    return ExternResult(args[2])


def _rename_trigger(b, fn, args):
    return fn == "untrusted_os_rename"


def _rename_alias(b, fn, args):
    fs = b.base.fs
    old = canonicalize(fs.cwd, args[0])
    ino = fs.paths.get(old)
    r = b.base.call(fn, args)
    if r.ret == 0 and ino is not None:
        fs.paths[old] = ino
    return r


# -- sync variants ------------------------------------------------------------


def _double_lock_trigger(b, fn, args):
    if fn != "untrusted_mutex_lock":
        return False
    m = b.base.host.mutexes.get(args[0])
    return m is not None and m.count > 0 and m.owner != current_tid()


def _double_lock_grant(b, fn, args):
    return ExternResult(0)


def _wake_trigger(b, fn, args):
    return fn == "untrusted_futex_wake"


def _over_wake(b, fn, args):
    r = b.base.call(fn, args)
    if isinstance(r.ret, int) and r.ret >= 0:
        return ExternResult(r.ret + 1)
    return r


def _s(action, *args, **kw):
    step = {"action": action, "args": list(args)}
    step.update(kw)
    return step


_FOO = [
    _s("open", "/foo", "O_CREAT|O_RDWR", "0644", bind="fd", expect=">= 0"),
    _s("write", "$fd", "repeat(0xff,100)", 100, expect="== 100"),
    _s("lseek", "$fd", 0, "SEEK_SET", expect="== 0"),
]

VARIANTS = {v.id: v for v in [
    AdversaryVariant(
        "FD_CONFUSION", "a second open returns a descriptor that is already in use", "fs",
        _fd_confusion_trigger, _fd_confusion,
        {"name": "attack_fd_confusion", "steps": [
            _s("open", "/foo", "O_CREAT|O_RDWR", "0644", bind="fd1", expect=">= 0"),
            _s("open", "/foo2", "O_CREAT|O_RDWR", "0644", bind="fd2", expect=">= 0"),
        ]}, 1),
    AdversaryVariant(
        "SHORT_READ_LIE", "read reports more bytes than it copied", "fs",
        _read_ok, _short_read_lie,
        {"name": "attack_short_read_lie", "steps": _FOO + [
            _s("read", "$fd", "zeros(200)", 50, expect="== 50"),
        ]}, 3),
    AdversaryVariant(
        "WRONG_DATA", "read returns tampered file contents", "fs",
        _read_ok, _wrong_data,
        {"name": "attack_wrong_data", "steps": _FOO + [
            _s("read", "$fd", "zeros(100)", 100, expect="== 100", expect_buf="repeat(0xff,100)"),
        ]}, 3),
    AdversaryVariant(
        "PHANTOM_SUCCESS", "write reports success but stores nothing", "fs",
        _phantom_trigger, _phantom_success,
        {"name": "attack_phantom_success", "steps": _FOO + [
            _s("read", "$fd", "zeros(100)", 100, expect="== 100", expect_buf="repeat(0xff,100)"),
        ]}, 3),
    AdversaryVariant(
        "RENAME_ALIAS", "rename leaves the old name resolving to the file", "fs",
        _rename_trigger, _rename_alias,
        {"name": "attack_rename_alias", "steps": [
            _s("open", "/a", "O_CREAT|O_RDWR", "0644", bind="fd", expect=">= 0"),
            _s("close", "$fd", expect="== 0"),
            _s("rename", "/a", "/b", expect="== 0"),
            _s("open", "/a", "O_RDONLY", 0, expect="== -ENOENT"),
        ]}, 3),
    AdversaryVariant(
        "DOUBLE_LOCK_GRANT", "lock returns success while another thread holds the mutex", "sync",
        _double_lock_trigger, _double_lock_grant,
        {"name": "attack_double_lock_grant", "steps": [
            _s("mutex_init", 7, "MUTEX_NORMAL", expect="== 0"),
            _s("mutex_lock", 7, tid=1, expect="== 0"),
            _s("mutex_lock", 7, tid=2, expect="== 0"),
        ]}, 2),
    AdversaryVariant(
        "OVER_WAKE", "futex wake reports more woken threads than were asleep", "sync",
        _wake_trigger, _over_wake,
        {"name": "attack_over_wake", "steps": [
            _s("futex_init", 3, 0, expect="== 0"),
            _s("futex_wake", 3, 5, expect=">= 0"),
        ]}, 1),
]}


def adversary(base: ServiceBinding, variant_id: str) -> AdversaryBinding:
    """Wrap ``base`` so it misbehaves as described by ``variant_id``."""
    v = VARIANTS.get(variant_id)
    if v is None:
        raise UnknownVariant(f"unknown adversary variant {variant_id!r}")
    return AdversaryBinding(base, v)
