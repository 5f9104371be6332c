"""Scripted conformance tests runnable against any invocation backend.

A script is JSON::

    {"name": "...", "seeds": 3,
     "steps": [{"action": "open", "args": ["/foo", "O_CREAT|O_RDWR", "0644"],
                "expect": ">= 0", "bind": "fd"}, ...]}

Arguments are converted by the parameter's type. Integer arguments may be
JSON numbers or expressions over constants and bound results (``"$fd"``,
``"O_CREAT|O_WRONLY"``, ``"-EBADF"``); byte buffers are patterns
(``"repeat(0xff,100)"``, ``"zeros(64)"``, a hex string). Optional step fields:
``bind`` stores the result, ``tid`` pins the caller's thread id, ``spawn``
runs the step on a background thread that a later ``{"join": name}`` step
waits for, and ``retry`` repeats the step until its expectation holds.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Dict, List, Optional

from .errors import ArgTypeMismatch, GkError, ScriptParseError, UnknownAction
from .gktypes import BOOL, STRING, ArrayType, IntType
from .interp import compile_expr
from .parser import parse_expr
from .trusted import as_tid

PASS, FAIL = "PASS", "FAIL"
EXPECTATION_FAILED = "ExpectationFailed"
VIOLATION = "Violation"
MODEL_UNSAT = "ModelUnsat"
MODEL_ERROR = "ModelError"
OVER_RESTRICTIVE = "OVER_RESTRICTIVE"
OVER_PERMISSIVE = "OVER_PERMISSIVE"

JOIN_TIMEOUT = 10.0
RETRY_WINDOW = 5.0

_STEP_KEYS = {"action", "args", "expect", "expect_buf", "bind", "tid", "spawn", "join", "retry"}


@dataclass
class Step:
    action: Optional[str]
    args: list = field(default_factory=list)
    expect: Optional[str] = None
    expect_buf: Optional[str] = None
    bind: Optional[str] = None
    tid: Optional[int] = None
    spawn: Optional[str] = None
    join: Optional[str] = None
    retry: bool = False


@dataclass
class TestScript:
    name: str
    steps: List[Step]
    seeds: int = 1
    source: str = ""


# -- parsing ------------------------------------------------------------------


def _step(obj, i, name) -> Step:
    where = f"{name}: step {i}"
    if not isinstance(obj, dict):
        raise ScriptParseError(f"{where}: expected an object")
    extra = set(obj) - _STEP_KEYS
    if extra:
        raise ScriptParseError(f"{where}: unknown field(s) {sorted(extra)}")
    if ("action" in obj) == ("join" in obj):
        raise ScriptParseError(f"{where}: needs exactly one of 'action' or 'join'")
    args = obj.get("args", [])
    if not isinstance(args, list):
        raise ScriptParseError(f"{where}: 'args' must be a list")
    for k in ("expect", "expect_buf", "bind", "spawn", "join"):
        if k in obj and not isinstance(obj[k], str):
            raise ScriptParseError(f"{where}: {k!r} must be a string")
    if "tid" in obj and type(obj["tid"]) is not int:
        raise ScriptParseError(f"{where}: 'tid' must be an integer")
    st = Step(obj.get("action"), args, obj.get("expect"), obj.get("expect_buf"), obj.get("bind"),
              obj.get("tid"), obj.get("spawn"), obj.get("join"), bool(obj.get("retry", False)))
    if st.expect is not None:
        parse_expect(st.expect)
    if st.expect_buf is not None:
        parse_pattern(st.expect_buf)
    return st


def load_script(src, source: str = "") -> TestScript:
    """Build a script from a dict, JSON text, or a path to a JSON file."""
    obj = src
    if isinstance(src, Path) or (isinstance(src, str) and not src.lstrip().startswith("{")):
        p = Path(src)
        source = source or str(p)
        try:
            obj = json.loads(p.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ScriptParseError(f"{p}: {e}") from None
    elif isinstance(src, str):
        try:
            obj = json.loads(src)
        except json.JSONDecodeError as e:
            raise ScriptParseError(f"{source or 'script'}: {e}") from None
    if not isinstance(obj, dict) or not isinstance(obj.get("name"), str):
        raise ScriptParseError(f"{source or 'script'}: needs a string 'name'")
    steps = obj.get("steps")
    if not isinstance(steps, list) or not steps:
        raise ScriptParseError(f"{obj['name']}: needs a non-empty 'steps' list")
    seeds = obj.get("seeds", 1)
    if type(seeds) is not int or seeds < 1:
        raise ScriptParseError(f"{obj['name']}: 'seeds' must be a positive integer")
    return TestScript(obj["name"], [_step(s, i, obj["name"]) for i, s in enumerate(steps)], seeds,
                      source)


def load_suite(where) -> List[TestScript]:
    """Scripts of a bundled suite ("fs", "sync"), one bundled script by name, a file, or
    every ``*.json`` in a directory."""
    suites = resources.files("gkspec").joinpath("suites")
    if where in ("fs", "sync"):
        d = suites.joinpath(where)
        files = sorted((f for f in d.iterdir() if f.name.endswith(".json")), key=lambda f: f.name)
        return [load_script(f.read_text(encoding="utf-8"), f.name) for f in files]
    if "/" not in str(where):
        for family in ("fs", "sync"):
            f = suites.joinpath(family, f"{where}.json")
            if f.is_file():
                return [load_script(f.read_text(encoding="utf-8"), f.name)]
    p = Path(where)
    if p.is_file():
        return [load_script(p)]
    if not p.is_dir():
        raise ScriptParseError(f"no suite at {where}")
    return [load_script(f) for f in sorted(p.glob("*.json"))]


def load_scenario(where) -> TestScript:
    """A bundled campaign scenario (e.g. "fs_campaign") or a script file."""
    f = resources.files("gkspec").joinpath("suites", "scenarios", f"{where}.json")
    if "/" not in str(where) and f.is_file():
        return load_script(f.read_text(encoding="utf-8"), f.name)
    if not Path(where).is_file():
        raise ScriptParseError(f"no scenario at {where}")
    return load_script(Path(where))


def check_script(script: TestScript, model):
    for i, st in enumerate(script.steps):
        if st.action is None:
            continue
        try:
            act = model.action(st.action)
        except UnknownAction as e:
            raise ScriptParseError(f"{script.name}: step {i}: {e}") from None
        if len(st.args) != len(act.params):
            raise ScriptParseError(f"{script.name}: step {i}: {st.action} takes "
                                   f"{len(act.params)} argument(s)")


# -- values -------------------------------------------------------------------

_PAT_REPEAT = re.compile(r"^\s*repeat\(\s*(0x[0-9a-fA-F]+|\d+)\s*,\s*(\d+)\s*\)\s*$")
_PAT_ZEROS = re.compile(r"^\s*zeros\(\s*(\d+)\s*\)\s*$")
_HEX = re.compile(r"^(?:[0-9a-fA-F]{2})*$")


def parse_pattern(p) -> bytes:
    """``repeat(0xff,100)``, ``zeros(n)``, a hex string or a list of byte values."""
    if isinstance(p, list):
        if all(type(x) is int and 0 <= x < 256 for x in p):
            return bytes(p)
        raise ScriptParseError(f"bad byte list {p!r}")
    if not isinstance(p, str):
        raise ScriptParseError(f"bad byte pattern {p!r}")
    m = _PAT_REPEAT.match(p)
    if m:
        b = int(m.group(1), 0)
        if b > 255:
            raise ScriptParseError(f"byte value {b} out of range")
        return bytes([b]) * int(m.group(2))
    m = _PAT_ZEROS.match(p)
    if m:
        return bytes(int(m.group(1)))
    s = p[4:] if p.startswith("hex:") else p
    if _HEX.match(s):
        return bytes.fromhex(s)
    raise ScriptParseError(f"bad byte pattern {p!r}")


_VAR = re.compile(r"\$([A-Za-z_]\w*)")


def eval_int(text, env) -> int:
    """Evaluate an integer expression over model constants and ``$var`` references."""
    def sub(m):
        name = m.group(1)
        if name not in env:
            raise ScriptParseError(f"unbound script variable ${name}")
        return f"({env[name]})"
    src = _VAR.sub(sub, text)
    try:
        v = compile_expr(parse_expr(src), frozenset())({}, None)
    except (GkError, AttributeError, TypeError) as e:
        raise ScriptParseError(f"bad integer expression {text!r}: {e}") from None
    if type(v) is not int:
        raise ScriptParseError(f"{text!r} is not an integer")
    return v


def resolve_arg(raw, t, env):
    if isinstance(t, IntType):
        if type(raw) is int:
            return raw
        if isinstance(raw, str):
            return eval_int(raw, env)
        raise ScriptParseError(f"expected an integer, got {raw!r}")
    if t == STRING:
        if isinstance(raw, str) and _VAR.fullmatch(raw):
            return env[raw[1:]]
        return raw
    if t == BOOL:
        return raw
    if isinstance(t, ArrayType):
        if isinstance(raw, str) and _VAR.fullmatch(raw):
            return env[raw[1:]]
        return parse_pattern(raw)
    return raw


_EXPECT = re.compile(r"^\s*(==|!=|>=|<=|>|<)\s*(.+?)\s*$")


def parse_expect(text):
    if text.strip() in ("any", ""):
        return None
    m = _EXPECT.match(text)
    if not m:
        raise ScriptParseError(f"bad expectation {text!r}")
    return m.group(1), m.group(2)


_OPS: Dict[str, Callable] = {
    "==": lambda a, b: a == b, "!=": lambda a, b: a != b, ">=": lambda a, b: a >= b,
    "<=": lambda a, b: a <= b, ">": lambda a, b: a > b, "<": lambda a, b: a < b,
}


def expectation_holds(text, value, env) -> bool:
    e = parse_expect(text)
    if e is None:
        return True
    op, rhs = e
    if type(value) is not int:
        return False
    return _OPS[op](value, eval_int(rhs, env))


# -- backends -----------------------------------------------------------------


class Backend:
    """Something that can run actions of ``model`` from a fresh initial state."""

    kind = "validator"
    classification: Optional[str] = None

    def __init__(self, model, name: str):
        self.model = model
        self.name = name

    def start(self, seed: int):
        """Return an object with ``invoke(action, args) -> Verdict``."""
        raise NotImplementedError

    def finish(self, runner):
        pass


class ValidatorBackend(Backend):
    """Validator bound to a fresh service per run.

    ``correct`` marks the service as a known-good implementation, which makes
    failures a sign of an over-restrictive model.
    """

    kind = "validator"

    def __init__(self, model, service_factory, name="validator", correct=False, trace_factory=None,
                 policy="ABORT"):
        super().__init__(model, name)
        self.service_factory = service_factory
        self.classification = OVER_RESTRICTIVE if correct else None
        self.trace_factory = trace_factory
        self.policy = policy

    def start(self, seed):
        from .validator import ValidatorSession
        trace = self.trace_factory(seed) if self.trace_factory else None
        return ValidatorSession(self.model, self.service_factory(), trace=trace, policy=self.policy)

    def finish(self, runner):
        runner.close()


class MockBackend(Backend):
    kind = "mock"
    classification = OVER_PERMISSIVE

    def __init__(self, model, name="mock", base_seed: int = 0):
        super().__init__(model, name)
        self.base_seed = base_seed

    def start(self, seed):
        from .mock import MockSession
        return MockSession(self.model, self.base_seed + seed)


# -- running ------------------------------------------------------------------


@dataclass
class ScriptResult:
    name: str
    seed: int
    status: str
    step: Optional[int] = None
    reason: Optional[str] = None
    detail: str = ""
    classification: Optional[str] = None

    def to_json(self):
        d = {"name": self.name, "seed": self.seed, "status": self.status}
        if self.status == FAIL:
            d.update(step=self.step, reason=self.reason, detail=self.detail)
            if self.classification:
                d["classification"] = self.classification
        return d


@dataclass
class SuiteReport:
    backend: str
    kind: str
    results: List[ScriptResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.status == PASS for r in self.results)

    @property
    def failures(self) -> List[ScriptResult]:
        return [r for r in self.results if r.status == FAIL]

    def to_json(self):
        return {"backend": self.backend, "kind": self.kind, "total": len(self.results),
                "passed": sum(r.status == PASS for r in self.results),
                "failed": len(self.failures), "results": [r.to_json() for r in self.results]}


class _Failure(Exception):
    def __init__(self, step, reason, detail):
        self.step, self.reason, self.detail = step, reason, detail


def _verdict_failure(i, v):
    from .validator import VIOLATION as V_VIOLATION
    if v.outcome == V_VIOLATION:
        return _Failure(i, VIOLATION, f"{v.action}#{v.seq}: {v.constraint}")
    reason = MODEL_UNSAT if v.kind == "ModelUnsat" else MODEL_ERROR
    return _Failure(i, reason, f"{v.action}#{v.seq}: {v.message}")


def _invoke(runner, step, args):
    if step.tid is None:
        return runner.invoke(step.action, args)
    with as_tid(step.tid):
        return runner.invoke(step.action, args)


def _check(i, step, v, env):
    if not v.ok:
        raise _verdict_failure(i, v)
    if step.expect is not None and not expectation_holds(step.expect, v.value, env):
        raise _Failure(i, EXPECTATION_FAILED, f"{step.action} returned {v.value!r}, "
                                              f"expected {step.expect}")
    if step.expect_buf is not None:
        want = parse_pattern(step.expect_buf)
        bufs = list(v.outs.values())
        got = bufs[0] if bufs else None
        if got is None or got[:len(want)] != want:
            raise _Failure(i, EXPECTATION_FAILED, f"{step.action} buffer does not match "
                                                  f"{step.expect_buf}")


def run_script(script: TestScript, backend: Backend, seed: int = 0) -> ScriptResult:
    """Run one script from a fresh initial state."""
    check_script(script, backend.model)
    runner = backend.start(seed)
    env: Dict[str, object] = {}
    spawned: Dict[str, tuple] = {}
    try:
        for i, step in enumerate(script.steps):
            if step.join is not None:
                th, box, sidx, sstep = spawned.pop(step.join, (None, None, None, None))
                if th is None:
                    raise ScriptParseError(f"{script.name}: step {i}: nothing spawned as {step.join!r}")
                th.join(JOIN_TIMEOUT)
                if th.is_alive():
                    raise _Failure(i, EXPECTATION_FAILED, f"{step.join} did not finish")
                if "error" in box:
                    raise box["error"]
                v = box["verdict"]
                merged = Step(sstep.action, sstep.args, step.expect or sstep.expect,
                              step.expect_buf or sstep.expect_buf)
                _check(sidx, merged, v, env)
                if step.bind or sstep.bind:
                    env[step.bind or sstep.bind] = v.value
                continue
            act = backend.model.action(step.action)
            try:
                args = [resolve_arg(a, t, env) for a, (_, t) in zip(step.args, act.params)]
            except (KeyError, ScriptParseError) as e:
                raise ScriptParseError(f"{script.name}: step {i}: {e}") from None
            if step.spawn is not None:
                box = {}

                def work(step=step, args=args, box=box):
                    try:
                        box["verdict"] = _invoke(runner, step, args)
                    except BaseException as e:  # surfaced at join
                        box["error"] = e
                th = threading.Thread(target=work, daemon=True)
                th.start()
                spawned[step.spawn] = (th, box, i, step)
                continue
            deadline = time.monotonic() + RETRY_WINDOW
            while True:
                try:
                    v = _invoke(runner, step, args)
                    _check(i, step, v, env)
                    break
                except _Failure:
                    if not step.retry or time.monotonic() > deadline:
                        raise
                    time.sleep(0.001)
            if step.bind:
                env[step.bind] = v.value
        if spawned:
            raise ScriptParseError(f"{script.name}: spawned step(s) never joined: {sorted(spawned)}")
        status = ScriptResult(script.name, seed, PASS)
    except _Failure as f:
        status = ScriptResult(script.name, seed, FAIL, f.step, f.reason, f.detail,
                              backend.classification)
    except ArgTypeMismatch as e:
        raise ScriptParseError(f"{script.name}: {e}") from None
    finally:
        backend.finish(runner)
    return status


def run_suite(scripts, backend: Backend, seeds: Optional[int] = None) -> SuiteReport:
    """Every script from a fresh state; on the mock, once per seed."""
    report = SuiteReport(backend.name, backend.kind)
    for sc in scripts:
        n = 1 if backend.kind != "mock" else (seeds if seeds is not None else sc.seeds)
        for seed in range(n):
            report.results.append(run_script(sc, backend, seed))
    return report
