"""Scoped-constraint collection.

Walks an action symbolically, substituting locals by their defining
expressions and turning branch guards into implication antecedents, so the
``requires`` that govern the untrusted call's outputs can be handed to the
solver as closed formulas over the call-point environment.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import List, Optional

from . import ast as A
from .printer import expr_str


@dataclass(frozen=True)
class Scoped:
    expr: A.Expr
    kind: str  # "path" | "pre" | "post"
    is_await: bool = False
    src: str = ""


@dataclass
class CallScope:
    """Continuation constraints of one untrusted call site."""

    constraints: List[Scoped]
    hints: List[A.Expr]
    unknowns: tuple
    dropped: int = 0

    def solvable(self):
        """Non-await constraints that mention at least one unknown."""
        from .solver import free_names
        names = set(self.unknowns)
        return [c for c in self.constraints if not c.is_await and free_names(c.expr) & names]


def substitute(e, mapping):
    if not mapping:
        return e
    if isinstance(e, A.Name):
        return mapping.get(e.id, e)
    if isinstance(e, (A.IntLit, A.CharLit, A.StrLit, A.BoolLit, A.NullLit)):
        return e
    if isinstance(e, A.Call):
        return dataclasses.replace(e, args=tuple(substitute(a, mapping) for a in e.args))
    if isinstance(e, A.Field):
        return dataclasses.replace(e, obj=substitute(e.obj, mapping))
    if isinstance(e, A.Index):
        return dataclasses.replace(e, obj=substitute(e.obj, mapping), index=substitute(e.index, mapping))
    if isinstance(e, A.Slice):
        return dataclasses.replace(e, obj=substitute(e.obj, mapping), lo=substitute(e.lo, mapping),
                                   hi=substitute(e.hi, mapping))
    if isinstance(e, A.Unary):
        return dataclasses.replace(e, operand=substitute(e.operand, mapping))
    if isinstance(e, A.Binary):
        return dataclasses.replace(e, left=substitute(e.left, mapping), right=substitute(e.right, mapping))
    if isinstance(e, A.Quant):
        inner = {k: v for k, v in mapping.items() if k not in e.vars}
        return dataclasses.replace(e, body=substitute(e.body, inner))
    raise TypeError(type(e).__name__)


def _names(e):
    return {n.id for n in A.walk_expr(e) if isinstance(n, A.Name)}


def implies(pc, e):
    if not pc:
        return e
    ante = pc[0]
    for c in pc[1:]:
        ante = A.Binary("and", ante, c)
    return A.Binary("->", ante, e)


def negate(e):
    return A.Unary("not", e)


@dataclass
class _Walker:
    kind: str
    subst: dict = field(default_factory=dict)
    opaque: set = field(default_factory=set)
    pc: tuple = ()
    blind: bool = False
    out: list = field(default_factory=list)
    hints: list = field(default_factory=list)
    assigned: set = field(default_factory=set)
    dropped: list = field(default_factory=lambda: [0])
    frozen: frozenset = frozenset()  # names never substituted (call outputs)

    def sub(self, e) -> Optional[A.Expr]:
        if _names(e) & self.opaque:
            return None
        return substitute(e, self.subst)

    def branch(self, extra) -> "_Walker":
        return _Walker(self.kind, dict(self.subst), set(self.opaque),
                       self.pc + ((extra,) if extra is not None else ()),
                       self.blind or extra is None, self.out, self.hints, set(), self.dropped,
                       self.frozen)

    def define(self, name, value):
        self.assigned.add(name)
        v = None if value is None or name in self.frozen else self.sub(value)
        if v is None:
            self.opaque.add(name)
            self.subst.pop(name, None)
        else:
            self.opaque.discard(name)
            self.subst[name] = v

    def emit(self, cond, src, is_await=False):
        e = self.sub(cond)
        if e is None or self.blind:
            self.dropped[0] += 1
            return
        self.out.append(Scoped(implies(self.pc, e), self.kind, is_await, src))

    def walk(self, stmts) -> bool:
        for s in stmts:
            if self.stmt(s):
                return True
        return False

    def stmt(self, s) -> bool:
        if isinstance(s, A.Local):
            self.define(s.name, s.init)
        elif isinstance(s, A.Assign):
            t = s.target
            if isinstance(t, A.Name):
                self.define(t.id, s.value)
            elif isinstance(t, (A.Slice, A.Index)):
                root = t
                while isinstance(root, (A.Slice, A.Index)):
                    root = root.obj
                if isinstance(root, A.Name):
                    self.define(root.id, None)
        elif isinstance(s, A.Requires):
            self.emit(s.cond, expr_str(s.cond), s.is_await)
        elif isinstance(s, A.Fuzz):
            e = self.sub(s.cond)
            if e is not None and not self.blind:
                self.hints.append(implies(self.pc, e))
        elif isinstance(s, (A.Atomic, A.Block)):
            return self.walk(s.body)
        elif isinstance(s, A.If):
            c = self.sub(s.cond)
            then = self.branch(c)
            t_term = then.walk((s.then,))
            e_term = False
            els = None
            if s.orelse is not None:
                els = self.branch(negate(c) if c is not None else None)
                e_term = els.walk((s.orelse,))
            for b in (then, els):
                if b is not None:
                    for n in b.assigned:
                        self.define(n, None)
            if t_term and e_term:
                return True
            if c is None:
                if t_term or e_term:
                    self.blind = True
            elif t_term:
                self.pc = self.pc + (negate(c),)
            elif e_term:
                self.pc = self.pc + (c,)
        elif isinstance(s, A.Return):
            return True
        elif isinstance(s, A.ExternCall):
            if s.target is None:
                pass
            elif self.kind == "pre" and not s.untrusted:
                # a trusted result before the call is a free symbol, like a parameter
                self.assigned.add(s.target)
                self.subst.pop(s.target, None)
                self.opaque.discard(s.target)
            else:
                self.define(s.target, None)
        return False


def _path_to(stmts, target):
    """Levels ``(stmts, index, guard)`` from the body down to ``target``."""
    for i, s in enumerate(stmts):
        if s is target:
            return [(stmts, i, None)]
        if isinstance(s, (A.Atomic, A.Block)):
            sub = _path_to(s.body, target)
            if sub:
                return [(stmts, i, None)] + sub
        elif isinstance(s, A.If):
            sub = _path_to((s.then,), target)
            if sub:
                return [(stmts, i, ("then", s.cond))] + sub
            if s.orelse is not None:
                sub = _path_to((s.orelse,), target)
                if sub:
                    return [(stmts, i, ("else", s.cond))] + sub
    return None


def _untrusted(decl: A.ActionDecl):
    for s in A.walk_stmts(decl.body):
        if isinstance(s, A.ExternCall) and s.untrusted:
            return s
    return None


def _walk_continuation(w: _Walker, path):
    for stmts, i, _ in reversed(path):
        if w.walk(stmts[i + 1:]):
            return


def collect_scoped_constraints(action: A.ActionDecl, path_condition=None) -> List[Scoped]:
    """Constraints governing the action along the path that reaches its untrusted call.

    The result lists the path conditions holding at the call (kind ``path``),
    the ``requires`` checked before it (``pre``), and every ``requires`` after it
    (``post``), with later branch guards folded in as implication antecedents.
    ``path_condition`` is an optional extra antecedent for every entry.
    """
    extra = tuple(path_condition or ())
    call = _untrusted(action)
    pre = _Walker("pre", pc=extra)
    if call is None:
        pre.walk(action.body)
        return list(pre.out)
    path = _path_to(action.body, call)
    for stmts, i, guard in path:
        if pre.walk(stmts[:i]):
            return list(pre.out)
        if guard is not None:
            c = pre.sub(guard[1])
            if c is None:
                pre.blind = True
            else:
                pre.pc = pre.pc + ((c if guard[0] == "then" else negate(c)),)
    result = list(pre.out)
    for c in pre.pc[len(extra):]:
        result.append(Scoped(implies(extra, c), "path", False, expr_str(c)))
    post = _Walker("post", dict(pre.subst), set(pre.opaque), extra, pre.blind,
                   frozen=frozenset(_call_unknowns(action, call)))
    if call.target is not None:
        post.subst.pop(call.target, None)
        post.opaque.discard(call.target)
    _walk_continuation(post, path)
    return result + post.out


def _call_unknowns(action: A.ActionDecl, call: A.ExternCall, array_names=None):
    names = [call.target] if call.target is not None else []
    for a in call.args:
        if isinstance(a, A.Name) and (array_names is None or a.id in array_names):
            names.append(a.id)
    return names


def call_scope(action: A.ActionDecl, array_names) -> Optional[CallScope]:
    """Continuation constraints for the runtime call site (pre-call locals stay concrete)."""
    call = _untrusted(action)
    if call is None:
        return None
    unknowns = tuple(_call_unknowns(action, call, array_names))
    w = _Walker("post", frozen=frozenset(unknowns))
    _walk_continuation(w, _path_to(action.body, call))
    return CallScope(list(w.out), list(w.hints), unknowns, w.dropped[0])
