"""Runtime validation of a real (possibly malicious) service against a model."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import List, Optional

from . import ast as A
from . import trusted as trusted_lib
from .errors import (CorruptTrace, EvalError, GkError, IagoViolation, InitTypeMismatch, ModelError,
                     ModelUnsat, SessionBusy)
from .interp import ExecContext, bind_outputs, eval_cond
from .parser import parse_init
from .printer import expr_str
from .services.base import ExternResult
from .state import decode_value, encode_value
from .trace import TraceWriter, encode_args, init_snapshot, parse_trace, read_trace

ABORT = "ABORT"
RECORD = "RECORD"

OK = "OK"
VIOLATION = "VIOLATION"
MODEL_ERROR = "MODEL_ERROR"


@dataclass
class Verdict:
    outcome: str
    action: str
    seq: int
    value: object = None
    constraint: str = ""
    bindings: dict = field(default_factory=dict)
    message: str = ""
    outs: dict = field(default_factory=dict)
    violations: List[str] = field(default_factory=list)
    kind: str = ""

    @property
    def ok(self) -> bool:
        return self.outcome == OK

    def unwrap(self):
        """The action's return value, or raise the matching error."""
        if self.outcome == OK:
            return self.value
        if self.outcome == VIOLATION:
            raise IagoViolation(self)
        if self.kind == "ModelUnsat":
            raise ModelUnsat(self.message)
        raise ModelError(self.message)

    def to_json(self) -> dict:
        d = {"outcome": self.outcome, "action": self.action, "seq": self.seq,
             "value": encode_value(self.value)}
        if self.outs:
            d["outs"] = {k: encode_value(v) for k, v in sorted(self.outs.items())}
        if self.outcome == VIOLATION:
            d["constraint"] = self.constraint
            d["bindings"] = {k: encode_value(v) for k, v in sorted(self.bindings.items())}
            if len(self.violations) > 1:
                d["violations"] = list(self.violations)
        if self.outcome == MODEL_ERROR:
            d["kind"] = self.kind
            d["message"] = self.message
        return d


class _Abort(Exception):
    pass


_SRC = {}


def stmt_src(stmt) -> str:
    ent = _SRC.get(id(stmt))
    if ent is not None and ent[0] is stmt:
        return ent[1]
    if isinstance(stmt, A.Requires):
        src = f"{'await ' if stmt.is_await else ''}requires ({expr_str(stmt.cond)})"
    elif isinstance(stmt, A.Return):
        src = f"return {expr_str(stmt.value)}" if stmt.value is not None else "return"
    else:
        src = type(stmt).__name__
    _SRC[id(stmt)] = (stmt, src)
    return src


class ValidatorContext(ExecContext):
    """Per-invocation hooks: dispatch to the service, assert, record."""

    def __init__(self, session: "ValidatorSession", action, seq, feed=None):
        super().__init__(session.state)
        self.session = session
        self.action = action
        self.seq = seq
        self.feed = list(feed) if feed is not None else None
        self.tracing = session.trace is not None
        self.externs = []
        self.asserts = []
        self.delta = []
        self.violations = []  # (src, bindings)

    # -- service dispatch ---------------------------------------------------

    def _next_recorded(self, fn):
        if not self.feed:
            raise CorruptTrace(f"seq {self.seq}: model calls {fn} but the trace has no result")
        rec = self.feed.pop(0)
        if rec.get("fn") != fn:
            raise CorruptTrace(f"seq {self.seq}: model calls {fn}, trace recorded {rec.get('fn')}")
        return rec

    def call_service(self, fn, args) -> ExternResult:
        if self.feed is not None:
            rec = self._next_recorded(fn)
            outs = {int(k): decode_value(v) for k, v in rec.get("outs", {}).items()}
            r = ExternResult(decode_value(rec["ret"]), outs)
        else:
            r = self.session.binding.call(fn, args)
        if self.tracing or self.feed is not None:
            ent = {"fn": fn, "args": encode_args(args), "ret": encode_value(r.ret)}
            if r.outs:
                ent["outs"] = {str(k): encode_value(v) for k, v in sorted(r.outs.items())}
            self.externs.append(ent)
        return r

    def untrusted(self, site, env):
        r = self.call_service(site.func, site.eval_args(env, self.st))
        for p in bind_outputs(site, env, r.ret, r.outs):
            self.violate(f"well-formed output: {p}", env)

    def pre_return(self, action, value, env, stmt=None):
        site = action.site
        try:
            args = site.eval_args(env, self.st)
        except EvalError:
            args = [env[n] for n, _ in action.params]
        r = self.call_service(site.func, args)
        bind_outputs(site, env, None, r.outs)
        if site.target is not None:
            env[site.target] = r.ret
        ok = type(r.ret) is int and r.ret == value
        src = stmt_src(stmt) if stmt is not None else f"return {value}"
        if self.tracing:
            self.asserts.append({"src": src, "ok": ok})
        if not ok:
            self.violate(src, env, extra={"ret": r.ret})

    def trusted(self, func, args):
        if self.feed is not None:
            rec = self._next_recorded(func)
            self.externs.append(rec)
            return decode_value(rec["ret"])
        r = trusted_lib.call(func, args)
        if self.tracing:
            self.externs.append({"fn": func, "args": encode_args(args), "ret": encode_value(r)})
        return r

    # -- assertions ---------------------------------------------------------

    def violate(self, src, env, extra=None):
        b = dict(env)
        if extra:
            b.update(extra)
        self.violations.append((src, b))
        if self.session.policy == ABORT:
            raise _Abort()

    def requires(self, stmt, fn, env):
        ok = eval_cond(fn, env, self.st)
        if self.tracing:
            self.asserts.append({"src": stmt_src(stmt), "ok": ok})
        if not ok:
            self.violate(stmt_src(stmt), env)

    def await_(self, stmt, fn, env, mapname):
        # the real service already blocked; one check after it returned
        self.requires(stmt, fn, env)

    # -- state --------------------------------------------------------------

    def write(self, mapname, key, fname, value):
        self.st.set(mapname, key, fname, value)
        if self.tracing:
            self.delta.append([mapname, encode_args(key), fname, encode_value(value)])

    def delete(self, mapname, key):
        self.st.delete(mapname, key)
        if self.tracing:
            self.delta.append([mapname, encode_args(key), None, None])


def parse_overrides(overrides):
    """Accept init assignments as text (``m(k).f := v; ...``) or parsed nodes."""
    if overrides is None:
        return []
    if isinstance(overrides, str):
        text = overrides.strip()
        if not text.startswith("init"):
            text = "init { " + text + " }"
        return list(parse_init(text).assigns)
    return list(overrides)


class ValidatorSession:
    """A model bound to a service; every invocation is checked against the model.

    Sessions over models without ``atomic`` guards refuse concurrent entry.
    """

    def __init__(self, model, binding, trace: Optional[TraceWriter] = None, policy: str = ABORT,
                 overrides=None):
        if policy not in (ABORT, RECORD):
            raise ValueError(f"unknown policy {policy!r}")
        if binding is not None:
            binding.require(model.externs())
        self.model = model
        self.binding = binding
        self.trace = trace
        self.policy = policy
        try:
            self.state = model.new_state(parse_overrides(overrides))
        except (GkError, TypeError) as e:
            if isinstance(e, InitTypeMismatch):
                raise
            raise InitTypeMismatch(str(e)) from None
        self._seq = 0
        self._seq_lock = threading.Lock()
        self._busy = threading.Lock()
        if trace is not None:
            trace.header(model, policy, self.state.snapshot())

    def _next_seq(self):
        with self._seq_lock:
            self._seq += 1
            return self._seq

    def invoke(self, action: str, args, *, _feed=None, _seq=None) -> Verdict:
        act = self.model.action(action)
        env = act.bind_args(list(args))
        bound = [env[n] for n, _ in act.params]
        exclusive = not self.model.concurrent
        if exclusive and not self._busy.acquire(blocking=False):
            raise SessionBusy(f"{self.model.name} sessions are single-threaded")
        try:
            seq = _seq if _seq is not None else self._next_seq()
            ctx = ValidatorContext(self, act, seq, _feed)
            verdict = self._run(act, ctx, env)
            if ctx.feed:
                raise CorruptTrace(f"seq {seq}: trace holds extra extern results")
            if self.trace is not None:
                ev = {"seq": seq, "action": action, "args": encode_args(bound),
                      "extern": ctx.externs, "asserts": ctx.asserts}
                if ctx.delta:
                    ev["state_delta"] = ctx.delta
                ev["verdict"] = verdict.to_json()
                self.trace.event(ev)
            return verdict
        finally:
            if exclusive:
                self._busy.release()

    def _run(self, act, ctx, env) -> Verdict:
        value, message, kind = None, "", ""
        try:
            value = act.run(ctx, env)
        except _Abort:
            pass
        except EvalError as e:
            if not ctx.violations:
                kind, message = type(e).__name__, str(e)
        except TypeError as e:
            # ill-typed service output that slipped past an earlier (recorded) violation
            if not ctx.violations:
                raise
            message = str(e)
        outs = {}
        if act.site is not None:
            outs = {n: env[n] for n in act.site.out_args.values() if n in env}
        if ctx.violations:
            src, b = ctx.violations[0]
            return Verdict(VIOLATION, act.name, ctx.seq, value, src, b, message, outs,
                           [v[0] for v in ctx.violations])
        if kind:
            return Verdict(MODEL_ERROR, act.name, ctx.seq, None, message=message, kind=kind)
        return Verdict(OK, act.name, ctx.seq, value, outs=outs)

    def close(self):
        if self.trace is not None:
            self.trace.close()


def init_session(model, binding, overrides=None, trace=None, policy=ABORT) -> ValidatorSession:
    return ValidatorSession(model, binding, trace, policy, overrides)


def invoke(session: ValidatorSession, action: str, args) -> Verdict:
    return session.invoke(action, args)


def replay(model, trace) -> List[Verdict]:
    """Re-run a recorded trace against the model, feeding recorded extern results."""
    if isinstance(trace, str) and "\n" in trace:
        tr = parse_trace(trace, model)
    else:
        tr = read_trace(trace, model)
    session = ValidatorSession(model, None, policy=tr.header.get("policy", ABORT))
    session.state.restore(init_snapshot(tr))
    out = []
    for ev in tr.events:
        model.action(ev["action"])
        args = [decode_value(a) for a in ev["args"]]
        out.append(session.invoke(ev["action"], args, _feed=ev["extern"], _seq=ev["seq"]))
    return out
