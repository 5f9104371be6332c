"""Random FS workload run in lockstep on validator+correct service and on the mock."""

import random

from gkspec.constants import CONSTANTS as C
from gkspec.mock import MockSession
from gkspec.services import correct_fs
from gkspec.validator import OK, init_session

OPS = ["open", "open", "close", "read", "write", "pread", "pwrite", "lseek", "unlink", "fstat",
       "lstat", "access", "mkdir", "truncate", "ftruncate", "chmod", "fchmod", "rename"]
PATHS = ["/a", "/b", "/a", "/b", "/d/x", "/a/y", "rel", "/d/../b"]


def _args(rng, op, rfd, mfd):
    """(args for the real run, args for the mock run)."""
    p, q = rng.choice(PATHS), rng.choice(PATHS)
    cnt = rng.choice([0, 1, 7, 64])
    buf = bytes(rng.randrange(256) for _ in range(cnt))
    if op == "open":
        fl = rng.choice([C["O_RDONLY"], C["O_WRONLY"], C["O_RDWR"], C["O_RDWR"]]) | rng.choice(
            [0, C["O_CREAT"], C["O_CREAT"], C["O_CREAT"] | C["O_EXCL"], C["O_TRUNC"], C["O_APPEND"]])
        a = [p, fl, rng.choice([0o644, 0o644, 0o400, 0o200])]
        return a, a
    if op in ("close", "fstat"):
        return [rfd], [mfd]
    if op in ("read", "write"):
        data = bytes(cnt) if op == "read" else buf
        return [rfd, data, cnt], [mfd, data, cnt]
    if op in ("pread", "pwrite"):
        pos = rng.randint(0, 80)
        data = bytes(cnt) if op == "pread" else buf
        return [rfd, data, cnt, pos], [mfd, data, cnt, pos]
    if op == "lseek":
        o, w = rng.randint(-5, 80), rng.randint(0, 3)
        return [rfd, o, w], [mfd, o, w]
    if op in ("unlink", "lstat"):
        return [p], [p]
    if op == "access":
        a = [p, rng.choice([0, 2, 4, 6])]
        return a, a
    if op == "mkdir":
        a = [rng.choice(["/d", "/d/sub", p]), 0o755]
        return a, a
    if op == "chmod":
        a = [p, rng.choice([0o644, 0o644, 0o600, 0o400])]
        return a, a
    if op == "truncate":
        a = [p, rng.randint(-1, 90)]
        return a, a
    if op == "ftruncate":
        n = rng.randint(-1, 90)
        return [rfd, n], [mfd, n]
    if op == "fchmod":
        return [rfd, 0o600], [mfd, 0o600]
    return [p, q], [p, q]


def run_workload(model, seed, n=1000):
    """Returns (mismatches, violations, successes by op)."""
    rng = random.Random(seed)
    real = init_session(model, correct_fs())
    mock = MockSession(model, seed)
    fdmap = {}
    mismatches, violations, ok = [], [], {}
    for i in range(n):
        op = rng.choice(OPS)
        if fdmap and rng.random() < 0.85:
            rfd = rng.choice(sorted(fdmap))
        else:
            rfd = rng.randint(0, 12)
        mfd = fdmap.get(rfd, 999)
        a, b = _args(rng, op, rfd, mfd)
        rv, mv = real.invoke(op, a), mock.invoke(op, b)
        if rv.outcome != OK:
            violations.append((i, op, rv.constraint))
            break
        if mv.outcome != OK:
            mismatches.append((i, op, "mock", mv.outcome, mv.constraint or mv.message))
            break
        if type(rv.value) is int and rv.value >= 0:
            ok[op] = ok.get(op, 0) + 1
        if op == "open" and rv.value >= 0 and mv.value >= 0:
            fdmap[rv.value] = mv.value
            continue
        if op == "close" and rv.value == 0:
            fdmap.pop(rfd, None)
        if rv.value != mv.value or (op in ("read", "pread") and rv.outs != mv.outs):
            mismatches.append((i, op, a, rv.value, mv.value))
    return mismatches, violations, ok
