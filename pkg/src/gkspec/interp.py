"""Closure compiler for expressions and statements.

Every engine (validator, mock, fuzz trial, replay) runs the same compiled
action; they differ only in the execution context that handles the untrusted
call, ``requires``, ``await`` and pre-call returns.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

from . import ast as A
from . import trusted
from .constants import CONSTANTS
from .errors import (ArgTypeMismatch, DivisionByZero, EvalError, IntegerRange, NullDereference,
                     SliceOutOfRange, StateTypeMismatch, UnboundVariable)
from .gktypes import BOOL, STRING, ArrayType, IntType
from .state import value_checker

MAX_ARRAY = 1 << 20

Fn = Callable[[dict, object], object]


class ReturnSignal(Exception):
    def __init__(self, value):
        self.value = value


# -- value helpers ----------------------------------------------------------


def _zero_like(v, n):
    if isinstance(v, bytes):
        return b"\0" * n
    if isinstance(v, str):
        return "\0" * n
    return (0,) * n


def slice_read(v, i, j):
    if i < 0 or j < i or j - i > MAX_ARRAY:
        raise SliceOutOfRange(f"slice [{i}:{j}] is out of range")
    seg = v[i:j]
    short = (j - i) - len(seg)
    return seg + _zero_like(v, short) if short else seg


def slice_write(base, i, j, val):
    if i < 0 or j < i or j - i > MAX_ARRAY or j > MAX_ARRAY * 64:
        raise SliceOutOfRange(f"slice [{i}:{j}] is out of range")
    if len(val) != j - i:
        raise SliceOutOfRange(f"assigning {len(val)} element(s) to a slice of {j - i}")
    if len(base) < i:
        base = base + _zero_like(base, i - len(base))
    return base[:i] + val + base[j:]


def index_read(v, i):
    if i < 0:
        raise SliceOutOfRange(f"index {i} is negative")
    if i >= len(v):
        return "\0" if isinstance(v, str) else 0
    return v[i]


def _cdiv(a, b):
    if b == 0:
        raise DivisionByZero("division by zero")
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _cmod(a, b):
    return a - b * _cdiv(a, b)


def _shl(a, b):
    if not 0 <= b < 128:
        raise IntegerRange(f"shift count {b} out of range")
    return a << b


def _shr(a, b):
    if not 0 <= b < 128:
        raise IntegerRange(f"shift count {b} out of range")
    return a >> b


_ARITH = {
    "+": operator.add, "-": operator.sub, "*": operator.mul, "/": _cdiv, "%": _cmod,
    "<<": _shl, ">>": _shr, "&": operator.and_, "|": operator.or_, "^": operator.xor,
}

_CMP = {
    "<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge,
}


def _resize(a, n):
    if n < 0 or n > MAX_ARRAY:
        raise SliceOutOfRange(f"resize to {n}")
    return a[:n] + _zero_like(a, max(0, n - len(a)))


def coerce_value(v, t, what="value"):
    """Convert a host value (possibly decoded from JSON) to the runtime form of ``t``."""
    if isinstance(t, IntType):
        if type(v) is not int:
            raise ArgTypeMismatch(f"{what}: expected {t}, got {type(v).__name__}")
        if not t.contains(v):
            raise ArgTypeMismatch(f"{what}: {v} out of range for {t}")
        return v
    if t == STRING:
        if not isinstance(v, str):
            raise ArgTypeMismatch(f"{what}: expected string, got {type(v).__name__}")
        return v
    if t == BOOL:
        if not isinstance(v, bool):
            raise ArgTypeMismatch(f"{what}: expected bool")
        return v
    if isinstance(t, ArrayType):
        if t.is_bytes:
            if isinstance(v, (bytes, bytearray)):
                return bytes(v)
            if isinstance(v, (list, tuple)) and all(type(x) is int and 0 <= x < 256 for x in v):
                return bytes(v)
            raise ArgTypeMismatch(f"{what}: expected a byte array")
        if isinstance(v, (list, tuple)):
            return tuple(coerce_value(x, t.elem, what) for x in v)
        raise ArgTypeMismatch(f"{what}: expected {t}")
    raise ArgTypeMismatch(f"{what}: unsupported type {t}")


# -- expressions ------------------------------------------------------------


def compile_expr(e, varnames) -> Fn:
    """Compile ``e`` to ``f(env, state)``. ``varnames`` lists names bound in env."""
    if isinstance(e, (A.IntLit, A.CharLit, A.StrLit, A.BoolLit)):
        c = e.value
        return lambda env, st: c
    if isinstance(e, A.NullLit):
        return lambda env, st: None
    if isinstance(e, A.Name):
        n = e.id
        if n in varnames or n not in CONSTANTS:
            def name(env, st):
                try:
                    return env[n]
                except KeyError:
                    raise UnboundVariable(f"{n} is unbound") from None
            return name
        c = CONSTANTS[n]
        return lambda env, st: c
    if isinstance(e, A.Call):
        return _compile_call(e, varnames)
    if isinstance(e, A.Field):
        obj = compile_expr(e.obj, varnames)
        fname = e.name
        label = e.obj.func if isinstance(e.obj, A.Call) else "record"

        def fld(env, st):
            r = obj(env, st)
            if r is None:
                raise NullDereference(f"{label}(...).{fname} on NULL")
            return r[fname]
        return fld
    if isinstance(e, A.Index):
        obj = compile_expr(e.obj, varnames)
        idx = compile_expr(e.index, varnames)
        return lambda env, st: index_read(obj(env, st), idx(env, st))
    if isinstance(e, A.Slice):
        obj = compile_expr(e.obj, varnames)
        lo = compile_expr(e.lo, varnames)
        hi = compile_expr(e.hi, varnames)
        return lambda env, st: slice_read(obj(env, st), lo(env, st), hi(env, st))
    if isinstance(e, A.Unary):
        x = compile_expr(e.operand, varnames)
        if e.op == "not":
            return lambda env, st: not x(env, st)
        if e.op == "-":
            return lambda env, st: -x(env, st)
        return lambda env, st: ~x(env, st)
    if isinstance(e, A.Binary):
        return _compile_binary(e, varnames)
    if isinstance(e, A.Quant):
        return _compile_quant(e, varnames)
    raise TypeError(f"cannot compile {type(e).__name__}")


def _compile_call(e: A.Call, varnames) -> Fn:
    args = [compile_expr(a, varnames) for a in e.args]
    f = e.func
    if f == "len":
        a0 = args[0]
        return lambda env, st: len(a0(env, st))
    if f == "resize":
        a0, a1 = args
        return lambda env, st: _resize(a0(env, st), a1(env, st))
    if f == "min":
        a0, a1 = args
        return lambda env, st: min(a0(env, st), a1(env, st))
    if f == "max":
        a0, a1 = args
        return lambda env, st: max(a0(env, st), a1(env, st))
    if len(args) == 1:
        a0 = args[0]
        return lambda env, st: st.get(f, (a0(env, st),))
    return lambda env, st: st.get(f, tuple(a(env, st) for a in args))


def _compile_binary(e: A.Binary, varnames) -> Fn:
    left = compile_expr(e.left, varnames)
    right = compile_expr(e.right, varnames)
    op = e.op
    if op == "and":
        return lambda env, st: left(env, st) and right(env, st)
    if op == "or":
        return lambda env, st: left(env, st) or right(env, st)
    if op == "->":
        return lambda env, st: (not left(env, st)) or right(env, st)
    if op == "==":
        if isinstance(e.right, A.NullLit):
            return lambda env, st: left(env, st) is None
        if isinstance(e.left, A.NullLit):
            return lambda env, st: right(env, st) is None
        return lambda env, st: left(env, st) == right(env, st)
    if op == "!=":
        if isinstance(e.right, A.NullLit):
            return lambda env, st: left(env, st) is not None
        if isinstance(e.left, A.NullLit):
            return lambda env, st: right(env, st) is not None
        return lambda env, st: left(env, st) != right(env, st)
    if op in _CMP:
        fn = _CMP[op]
        return lambda env, st: fn(left(env, st), right(env, st))
    fn = _ARITH[op]
    return lambda env, st: fn(left(env, st), right(env, st))


def _compile_quant(e: A.Quant, varnames) -> Fn:
    inner = set(varnames) | set(e.vars)
    body = compile_expr(e.body, inner)
    vs = e.vars
    m = e.map
    want = e.kind == "forall"

    def quant(env, st):
        local = dict(env)
        for key in st.keys(m):
            for v, k in zip(vs, key):
                local[v] = k
            if bool(body(local, st)) != want:
                return not want
        return want
    return quant


def eval_cond(fn: Fn, env, st) -> bool:
    """Evaluate a compiled condition; out-of-range slices make it false."""
    try:
        return bool(fn(env, st))
    except SliceOutOfRange:
        return False


# -- statements -------------------------------------------------------------


@dataclass
class CallSite:
    """The action's untrusted call, pre-compiled."""

    stmt: A.ExternCall
    func: str
    arg_fns: List[Fn]
    target: Optional[str]
    target_type: object
    out_args: Dict[int, str]  # arg index -> array variable bound in env
    out_types: Dict[int, object]

    def eval_args(self, env, st):
        return [f(env, st) for f in self.arg_fns]


def bind_outputs(site: CallSite, env, ret, outs) -> List[str]:
    """Store a service result into ``env``; returns reasons the result is malformed."""
    problems = []
    if site.target is not None:
        t = site.target_type
        if isinstance(t, IntType) and (type(ret) is not int or not t.contains(ret)):
            problems.append(f"{site.target}={ret!r} is not a valid {t}")
        env[site.target] = ret
    for idx, val in (outs or {}).items():
        name = site.out_args.get(int(idx))
        if name is None:
            problems.append(f"service wrote to non-buffer argument {idx}")
            continue
        old = env.get(name)
        if isinstance(old, (bytes, tuple)) and (not isinstance(val, type(old)) or len(val) != len(old)):
            problems.append(f"service resized buffer {name}")
            continue
        env[name] = val
    return problems


class ExecContext:
    """Default semantics; engines override the hooks they care about."""

    def __init__(self, st):
        self.st = st
        self.called = False

    def requires(self, stmt, fn, env):
        if not eval_cond(fn, env, self.st):
            self.fail(stmt, env)

    def await_(self, stmt, fn, env, mapname):
        self.requires(stmt, fn, env)

    def fail(self, stmt, env):
        raise AssertionError(stmt)

    def untrusted(self, site: CallSite, env):
        raise NotImplementedError

    def pre_return(self, action, value, env, stmt=None):
        pass

    def trusted(self, func, args):
        return trusted.call(func, args)

    def atomic(self, mapname):
        return self.st.lock(mapname)

    def write(self, mapname, key, fname, value):
        self.st.set(mapname, key, fname, value)

    def delete(self, mapname, key):
        self.st.delete(mapname, key)


def action_var_types(info) -> Dict[str, object]:
    types = dict(info.param_types)
    if info.output is not None:
        types[info.output] = info.output_type
    for s in A.walk_stmts(info.decl.body):
        if isinstance(s, (A.Local, A.ExternCall)) and id(s) in info.local_types:
            name = s.name if isinstance(s, A.Local) else s.target
            types[name] = info.local_types[id(s)]
    return types


class CompiledAction:
    def __init__(self, info):
        self.info = info
        self.decl = info.decl
        self.name = info.decl.name
        self.output = info.output
        self.var_types = action_var_types(info)
        self.varnames = frozenset(self.var_types)
        self.checkers = {n: value_checker(t) for n, t in self.var_types.items()}
        self.params = [(p.name, info.param_types[p.name]) for p in info.decl.params]
        self.site: Optional[CallSite] = None
        self._atomic_stack: List[str] = []
        self.body = self._block(info.decl.body)

    def bind_args(self, args) -> dict:
        if len(args) != len(self.params):
            raise ArgTypeMismatch(f"{self.name} takes {len(self.params)} argument(s), got {len(args)}")
        return {n: coerce_value(v, t, f"{self.name}.{n}") for (n, t), v in zip(self.params, args)}

    def run(self, ctx: ExecContext, env: dict):
        try:
            self.body(env, ctx)
        except ReturnSignal as r:
            return r.value
        return env.get(self.output) if self.output else None

    # -- compilation --------------------------------------------------------

    def expr(self, e) -> Fn:
        return compile_expr(e, self.varnames)

    def _block(self, stmts):
        fns = [f for f in (self._stmt(s) for s in stmts) if f is not None]
        if len(fns) == 1:
            return fns[0]

        def block(env, ctx):
            for f in fns:
                f(env, ctx)
        return block

    def _store_var(self, name):
        chk = self.checkers[name]

        def store(env, v):
            chk(v)
            env[name] = v
        return store

    def _stmt(self, s):
        if isinstance(s, A.Local):
            init = self.expr(s.init)
            store = self._store_var(s.name)
            return lambda env, ctx: store(env, init(env, ctx.st))
        if isinstance(s, A.Assign):
            val = self.expr(s.value)
            setter = self._lvalue(s.target)
            return lambda env, ctx: setter(env, ctx, val(env, ctx.st))
        if isinstance(s, A.Requires):
            cond = self.expr(s.cond)
            if s.is_await:
                mapname = self._atomic_stack[-1]
                return lambda env, ctx: ctx.await_(s, cond, env, mapname)
            return lambda env, ctx: ctx.requires(s, cond, env)
        if isinstance(s, A.Atomic):
            mapname = s.target.func
            self._atomic_stack.append(mapname)
            body = self._block(s.body)
            self._atomic_stack.pop()

            def atomic(env, ctx):
                with ctx.atomic(mapname):
                    body(env, ctx)
            return atomic
        if isinstance(s, A.If):
            cond = self.expr(s.cond)
            then = self._block((s.then,))
            orelse = self._block((s.orelse,)) if s.orelse is not None else None

            def if_(env, ctx):
                if cond(env, ctx.st):
                    then(env, ctx)
                elif orelse is not None:
                    orelse(env, ctx)
            return if_
        if isinstance(s, A.Block):
            return self._block(s.body)
        if isinstance(s, A.Return):
            val = self.expr(s.value) if s.value is not None else (lambda env, st: None)
            has_call = self.info.untrusted is not None

            def ret(env, ctx):
                v = val(env, ctx.st)
                if has_call and not ctx.called:
                    ctx.pre_return(self, v, env, s)
                raise ReturnSignal(v)
            return ret
        if isinstance(s, A.ExternCall):
            return self._extern(s)
        if isinstance(s, A.Delete):
            keys = [self.expr(a) for a in s.target.args]
            mapname = s.target.func
            return lambda env, ctx: ctx.delete(mapname, tuple(k(env, ctx.st) for k in keys))
        if isinstance(s, A.Fuzz):
            return None
        raise TypeError(f"cannot compile {type(s).__name__}")

    def _extern(self, s: A.ExternCall):
        arg_fns = [self.expr(a) for a in s.args]
        store = self._store_var(s.target) if s.target is not None else None
        if not s.untrusted:
            func = s.func

            def call(env, ctx):
                r = ctx.trusted(func, [f(env, ctx.st) for f in arg_fns])
                if store is not None:
                    store(env, r)
            return call
        out_args, out_types = {}, {}
        for i, a in enumerate(s.args):
            if isinstance(a, A.Name) and isinstance(self.var_types.get(a.id), ArrayType):
                out_args[i] = a.id
                out_types[i] = self.var_types[a.id]
        site = CallSite(s, s.func, arg_fns, s.target,
                        self.var_types.get(s.target) if s.target else None, out_args, out_types)
        self.site = site

        def untrusted(env, ctx):
            ctx.untrusted(site, env)
            ctx.called = True
        return untrusted

    def _lvalue(self, e):
        """Return ``set(env, ctx, value)`` for an assignable expression."""
        if isinstance(e, A.Name):
            store = self._store_var(e.id)
            return lambda env, ctx, v: store(env, v)
        if isinstance(e, A.Field):
            call: A.Call = e.obj
            keys = [self.expr(a) for a in call.args]
            mapname, fname = call.func, e.name

            def set_field(env, ctx, v):
                ctx.write(mapname, tuple(k(env, ctx.st) for k in keys), fname, v)
            return set_field
        if isinstance(e, (A.Slice, A.Index)):
            read = self.expr(e.obj)
            parent = self._lvalue(e.obj)
            if isinstance(e, A.Slice):
                lo, hi = self.expr(e.lo), self.expr(e.hi)

                def set_slice(env, ctx, v):
                    st = ctx.st
                    base = _read_or_empty(read, env, st)
                    parent(env, ctx, slice_write(base, lo(env, st), hi(env, st), v))
                return set_slice
            idx = self.expr(e.index)

            def set_index(env, ctx, v):
                st = ctx.st
                base = _read_or_empty(read, env, st)
                i = idx(env, st)
                elem = bytes([v]) if isinstance(base, bytes) else (v,)
                parent(env, ctx, slice_write(base, i, i + 1, elem))
            return set_index
        raise TypeError("not assignable")


def _read_or_empty(read, env, st):
    try:
        return read(env, st)
    except NullDereference:
        return b""


def compile_program(tp) -> Dict[str, CompiledAction]:
    return {name: CompiledAction(info) for name, info in tp.actions.items()}


def run_init(tp, st, overrides=None):
    """Apply the init block, then ``overrides`` (same ``m(k).f := v`` form), in order."""
    assigns = list(tp.program.init) + list(overrides or [])
    for asg in assigns:
        t = asg.target
        keys = tuple(compile_expr(a, frozenset())({}, st) for a in t.obj.args)
        val = compile_expr(asg.value, frozenset())({}, st)
        info = tp.maps.get(t.obj.func)
        ftype = info.field_types.get(t.name) if info else None
        if isinstance(ftype, IntType) and isinstance(val, int) and not ftype.contains(val):
            raise StateTypeMismatch(f"{val} out of range for {t.obj.func}.{t.name}")
        st.set(t.obj.func, keys, t.name, val)


__all__ = [
    "CompiledAction", "CallSite", "ExecContext", "ReturnSignal", "EvalError", "bind_outputs",
    "coerce_value", "compile_expr", "compile_program", "eval_cond", "run_init", "slice_read",
    "slice_write", "MAX_ARRAY",
]
