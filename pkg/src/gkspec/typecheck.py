"""Type checker: resolves names, assigns a GkType to every expression and
enforces the structural rules (single untrusted call, requires placement,
await inside atomic, no re-entrant atomic)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

from . import ast as A
from . import trusted
from .constants import CONSTANTS
from .errors import Diagnostic, GkTypeError
from .gktypes import (BOOL, CHAR, INT, NULL, OFF_T, SCALARS, STRING, VOID, ArrayType,
                      IntType, LitIntType, RecordType, arith_result, arrays_compatible,
                      assignable, is_int, settle)

BUILTINS = ("len", "resize", "min", "max")


@dataclass
class MapInfo:
    decl: A.MapDecl
    key_types: tuple
    field_types: Dict[str, object]


@dataclass
class ActionInfo:
    decl: A.ActionDecl
    param_types: Dict[str, object]
    output: Optional[str]
    output_type: object
    untrusted: Optional[A.ExternCall]
    local_types: Dict[int, object] = field(default_factory=dict)

    @property
    def name(self):
        return self.decl.name


@dataclass
class TypedProgram:
    program: A.Program
    maps: Dict[str, MapInfo]
    actions: Dict[str, ActionInfo]
    types: Dict[int, object]

    @property
    def name(self):
        return self.program.name

    def type_of(self, e):
        return self.types[id(e)]


def resolve_type(t: A.TypeRef, allow_void=False):
    base = SCALARS.get(t.name)
    if base is None:
        raise _err("TypeMismatch", f"unknown type {t.name!r}", t)
    if base == VOID and t.dims == 0 and not allow_void:
        raise _err("TypeMismatch", "void is only valid as a return type or array element", t)
    for _ in range(t.dims):
        base = ArrayType(base)
    return base


def _err(kind, msg, node=None):
    pos = getattr(node, "pos", (0, 0)) if node is not None else (0, 0)
    return GkTypeError([Diagnostic(kind, msg, pos[0], pos[1])])


class _Scope:
    def __init__(self, parent=None):
        self.parent = parent
        self.vars = {}

    def lookup(self, name):
        s = self
        while s is not None:
            if name in s.vars:
                return s.vars[name]
            s = s.parent
        return None


class Checker:
    def __init__(self, prog: A.Program):
        self.prog = prog
        self.types: Dict[int, object] = {}
        self.maps: Dict[str, MapInfo] = {}

    def run(self) -> TypedProgram:
        for m in self.prog.maps:
            keys = tuple(resolve_type(k.type) for k in m.keys)
            for k, kt in zip(m.keys, keys):
                if isinstance(kt, ArrayType):
                    raise _err("TypeMismatch", "map keys must be scalar", k)
            fields = {f.name: resolve_type(f.type) for f in m.fields}
            self.maps[m.name] = MapInfo(m, keys, fields)
        actions = {}
        for a in self.prog.actions:
            actions[a.name] = self.action(a)
        for asg in self.prog.init:
            self.init_assign(asg)
        return TypedProgram(self.prog, self.maps, actions, self.types)

    # -- declarations -------------------------------------------------------

    def action(self, a: A.ActionDecl) -> ActionInfo:
        scope = _Scope()
        ptypes = {}
        for p in a.params:
            ptypes[p.name] = resolve_type(p.type)
            scope.vars[p.name] = ("var", ptypes[p.name])
        out_name, out_type = None, VOID
        if a.returns:
            out_name = a.returns[0].name
            out_type = resolve_type(a.returns[0].type, allow_void=True)
            if out_type != VOID:
                scope.vars[out_name] = ("output", out_type)
        untrusted = [s for s in A.walk_stmts(a.body) if isinstance(s, A.ExternCall) and s.untrusted]
        if len(untrusted) > 1:
            raise _err("DesignError", f"action {a.name} has more than one untrusted call", untrusted[1])
        self.cur = ActionInfo(a, ptypes, out_name if out_type != VOID else None, out_type,
                              untrusted[0] if untrusted else None)
        self.seen_call = False
        self.atomic_maps = []
        self.block(a.body, scope)
        return self.cur

    def init_assign(self, asg: A.InitAssign):
        scope = _Scope()
        t = asg.target
        if not (isinstance(t, A.Field) and isinstance(t.obj, A.Call) and t.obj.func in self.maps):
            raise _err("TypeMismatch", "init assigns map fields only: m(k).f := v", asg)
        tt = self.expr(t, scope)
        vt = self.expr(asg.value, scope)
        self.need_assignable(vt, tt, asg.value)

    # -- statements ---------------------------------------------------------

    def block(self, stmts, scope):
        inner = _Scope(scope)
        for s in stmts:
            self.stmt(s, inner)

    def declare(self, scope, name, t, node):
        if scope.lookup(name) is not None or name in CONSTANTS:
            raise _err("DuplicateName", f"{name!r} is already defined", node)
        scope.vars[name] = ("var", t)

    def stmt(self, s, scope):
        if isinstance(s, A.Local):
            t = resolve_type(s.type)
            vt = self.expr(s.init, scope)
            self.need_assignable(vt, t, s.init)
            self.declare(scope, s.name, t, s)
            self.cur.local_types[id(s)] = t
        elif isinstance(s, A.Assign):
            tt = self.lvalue(s.target, scope)
            vt = self.expr(s.value, scope)
            self.need_assignable(vt, tt, s.value)
        elif isinstance(s, A.Requires):
            if s.is_await and not self.atomic_maps:
                raise _err("DesignError", "await requires must sit inside an atomic block", s)
            self.placement(s.cond, s)
            self.need(self.expr(s.cond, scope), BOOL, s.cond)
        elif isinstance(s, A.Fuzz):
            self.need(self.expr(s.cond, scope), BOOL, s.cond)
        elif isinstance(s, A.Atomic):
            self.expr(s.target, scope)
            if s.target.func not in self.maps:
                raise _err("UnknownIdentifier", f"unknown map {s.target.func!r}", s.target)
            if s.target.func in self.atomic_maps:
                raise _err("DesignError", f"re-entrant atomic on {s.target.func}", s)
            self.atomic_maps.append(s.target.func)
            self.block(s.body, scope)
            self.atomic_maps.pop()
        elif isinstance(s, A.If):
            self.need(self.expr(s.cond, scope), BOOL, s.cond)
            self.block((s.then,), scope)
            if s.orelse is not None:
                self.block((s.orelse,), scope)
        elif isinstance(s, A.Block):
            self.block(s.body, scope)
        elif isinstance(s, A.Return):
            ot = self.cur.output_type
            if s.value is None:
                if ot != VOID:
                    raise _err("TypeMismatch", f"action {self.cur.name} must return {ot}", s)
            else:
                if ot == VOID:
                    raise _err("TypeMismatch", "void action returns a value", s)
                self.need_assignable(self.expr(s.value, scope), ot, s.value)
        elif isinstance(s, A.ExternCall):
            self.extern(s, scope)
        elif isinstance(s, A.Delete):
            self.expr(s.target, scope)
            if s.target.func not in self.maps:
                raise _err("UnknownIdentifier", f"unknown map {s.target.func!r}", s.target)
        else:
            raise _err("TypeMismatch", f"unsupported statement {type(s).__name__}", s)

    def placement(self, cond, stmt):
        if self.seen_call or self.cur.output is None:
            return
        for e in A.walk_expr(cond):
            if isinstance(e, A.Name) and e.id == self.cur.output:
                raise _err("IllegalRequiresPlacement",
                           f"requires references output {e.id!r} before the untrusted call", stmt)

    def extern(self, s: A.ExternCall, scope):
        argt = [self.expr(a, scope) for a in s.args]
        if s.untrusted:
            self.seen_call = True
            if s.target is None:
                return
            if s.decl_type is not None:
                t = resolve_type(s.decl_type)
                self.declare(scope, s.target, t, s)
                self.cur.local_types[id(s)] = t
            else:
                ent = scope.lookup(s.target)
                if ent is None:
                    raise _err("UnknownIdentifier", f"unknown variable {s.target!r}", s)
            return
        lib = trusted.LIBRARY.get(s.func)
        if lib is None:
            raise _err("UnknownIdentifier", f"unknown trusted extern {s.func!r}", s)
        _, ptypes, rtype = lib
        if len(ptypes) != len(argt):
            raise _err("ArityMismatch", f"{s.func} takes {len(ptypes)} arguments", s)
        for a, at, pt in zip(s.args, argt, ptypes):
            self.need_assignable(at, pt, a)
        if s.target is None:
            return
        if s.decl_type is not None:
            t = resolve_type(s.decl_type)
            self.declare(scope, s.target, t, s)
            self.cur.local_types[id(s)] = t
        else:
            ent = scope.lookup(s.target)
            if ent is None:
                raise _err("UnknownIdentifier", f"unknown variable {s.target!r}", s)
            t = ent[1]
        self.need_assignable(rtype, t, s)

    def lvalue(self, e, scope):
        if isinstance(e, A.Name):
            ent = scope.lookup(e.id)
            if ent is None:
                if e.id in CONSTANTS:
                    raise _err("TypeMismatch", f"cannot assign constant {e.id}", e)
                raise _err("UnknownIdentifier", f"unknown variable {e.id!r}", e)
            if ent[0] == "quant":
                raise _err("TypeMismatch", f"cannot assign bound variable {e.id}", e)
            return self.expr(e, scope)
        if isinstance(e, A.Field) and isinstance(e.obj, A.Call) and e.obj.func in self.maps:
            return self.expr(e, scope)
        if isinstance(e, (A.Slice, A.Index)):
            base = self.lvalue(e.obj, scope)
            if not isinstance(base, ArrayType):
                raise _err("TypeMismatch", "only arrays support element or slice assignment", e)
            return self.expr(e, scope)
        raise _err("TypeMismatch", "not assignable", e)

    # -- expressions --------------------------------------------------------

    def need(self, got, want, node):
        if got != want:
            raise _err("TypeMismatch", f"expected {want}, got {got}", node)

    def need_assignable(self, got, want, node):
        if not assignable(got, want):
            raise _err("TypeMismatch", f"cannot use {got} where {want} is expected", node)

    def need_int(self, t, node):
        if not is_int(t):
            raise _err("TypeMismatch", f"expected an integer, got {t}", node)

    def expr(self, e, scope):
        t = self._expr(e, scope)
        self.types[id(e)] = settle(t)
        return t

    def _expr(self, e, scope):
        if isinstance(e, A.IntLit):
            return LitIntType(e.value)
        if isinstance(e, A.CharLit):
            return CHAR
        if isinstance(e, A.StrLit):
            return STRING
        if isinstance(e, A.BoolLit):
            return BOOL
        if isinstance(e, A.NullLit):
            return NULL
        if isinstance(e, A.Name):
            ent = scope.lookup(e.id)
            if ent is not None:
                return ent[1]
            if e.id in CONSTANTS:
                return INT
            raise _err("UnknownIdentifier", f"unknown identifier {e.id!r}", e)
        if isinstance(e, A.Call):
            return self.call(e, scope)
        if isinstance(e, A.Field):
            ot = self.expr(e.obj, scope)
            if not isinstance(ot, RecordType):
                raise _err("TypeMismatch", f"field access on {ot}", e)
            ft = self.maps[ot.map].field_types.get(e.name)
            if ft is None:
                raise _err("UnknownIdentifier", f"map {ot.map} has no field {e.name!r}", e)
            return ft
        if isinstance(e, A.Index):
            ot = self.expr(e.obj, scope)
            self.need_int(self.expr(e.index, scope), e.index)
            if isinstance(ot, ArrayType):
                return CHAR if ot.is_bytes else ot.elem
            if ot == STRING:
                return CHAR
            raise _err("TypeMismatch", f"cannot index {ot}", e)
        if isinstance(e, A.Slice):
            ot = self.expr(e.obj, scope)
            self.need_int(self.expr(e.lo, scope), e.lo)
            self.need_int(self.expr(e.hi, scope), e.hi)
            if isinstance(ot, ArrayType) or ot == STRING:
                return ot
            raise _err("TypeMismatch", f"cannot slice {ot}", e)
        if isinstance(e, A.Unary):
            ot = self.expr(e.operand, scope)
            if e.op == "not":
                self.need(ot, BOOL, e.operand)
                return BOOL
            self.need_int(ot, e.operand)
            if isinstance(ot, LitIntType):
                return LitIntType(-ot.value if e.op == "-" else ~ot.value)
            return ot
        if isinstance(e, A.Binary):
            return self.binary(e, scope)
        if isinstance(e, A.Quant):
            m = self.maps.get(e.map)
            if m is None:
                raise _err("UnknownIdentifier", f"unknown map {e.map!r}", e)
            if len(e.vars) != len(m.key_types):
                raise _err("ArityMismatch", f"{e.map} has {len(m.key_types)} key(s)", e)
            inner = _Scope(scope)
            for v, kt in zip(e.vars, m.key_types):
                if scope.lookup(v) is not None:
                    raise _err("DuplicateName", f"{v!r} is already defined", e)
                inner.vars[v] = ("quant", kt)
            self.need(self.expr(e.body, inner), BOOL, e.body)
            return BOOL
        raise _err("TypeMismatch", f"unsupported expression {type(e).__name__}", e)

    def call(self, e: A.Call, scope):
        if e.func in self.maps:
            m = self.maps[e.func]
            if len(e.args) != len(m.key_types):
                raise _err("ArityMismatch", f"{e.func} takes {len(m.key_types)} key(s)", e)
            for a, kt in zip(e.args, m.key_types):
                self.need_assignable(self.expr(a, scope), kt, a)
            return RecordType(e.func)
        if e.func in BUILTINS:
            argt = [self.expr(a, scope) for a in e.args]
            want = 1 if e.func == "len" else 2
            if len(argt) != want:
                raise _err("ArityMismatch", f"{e.func} takes {want} argument(s)", e)
            if e.func == "len":
                if not (isinstance(argt[0], ArrayType) or argt[0] == STRING):
                    raise _err("TypeMismatch", "len needs an array or string", e)
                return OFF_T
            if e.func == "resize":
                if not isinstance(argt[0], ArrayType):
                    raise _err("TypeMismatch", "resize needs an array", e)
                self.need_int(argt[1], e.args[1])
                return argt[0]
            self.need_int(argt[0], e.args[0])
            self.need_int(argt[1], e.args[1])
            return arith_result(argt[0], argt[1])
        raise _err("UnknownIdentifier", f"unknown map or function {e.func!r}", e)

    def binary(self, e: A.Binary, scope):
        lt = self.expr(e.left, scope)
        rt = self.expr(e.right, scope)
        op = e.op
        if op in ("and", "or", "->"):
            self.need(lt, BOOL, e.left)
            self.need(rt, BOOL, e.right)
            return BOOL
        if op in ("==", "!="):
            if is_int(lt) and is_int(rt):
                return BOOL
            if isinstance(lt, ArrayType) and isinstance(rt, ArrayType) and arrays_compatible(lt, rt):
                return BOOL
            if {type(lt), type(rt)} <= {RecordType} and lt == rt:
                raise _err("TypeMismatch", "records compare only against NULL", e)
            if (isinstance(lt, RecordType) and rt == NULL) or (lt == NULL and isinstance(rt, RecordType)):
                return BOOL
            if lt == rt and lt in (STRING, BOOL):
                return BOOL
            raise _err("TypeMismatch", f"cannot compare {lt} with {rt}", e)
        if op in ("<", "<=", ">", ">="):
            self.need_int(lt, e.left)
            self.need_int(rt, e.right)
            return BOOL
        self.need_int(lt, e.left)
        self.need_int(rt, e.right)
        if isinstance(lt, LitIntType) and isinstance(rt, LitIntType):
            folded = _fold(op, lt.value, rt.value)
            if folded is not None:
                return LitIntType(folded)
        return arith_result(lt, rt)


def _fold(op, a, b):
    try:
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            return None if b == 0 else int(a / b) if abs(a) < 2**52 else None
        if op == "%":
            return None if b == 0 else a - b * int(a / b) if abs(a) < 2**52 else None
        if op == "<<":
            return a << b if 0 <= b < 64 else None
        if op == ">>":
            return a >> b if 0 <= b < 64 else None
        if op == "&":
            return a & b
        if op == "|":
            return a | b
        if op == "^":
            return a ^ b
    except (ValueError, OverflowError):
        return None
    return None


def typecheck(prog: A.Program) -> TypedProgram:
    """Type-check a parsed program; raises GkTypeError on the first problem."""
    return Checker(prog).run()
