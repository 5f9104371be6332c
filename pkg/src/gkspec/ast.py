"""AST for GKSpec models.

Nodes are frozen dataclasses so structural equality is plain ``==``.
Source positions are excluded from comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Optional, Tuple

Pos = Tuple[int, int]


def _pos():
    return field(default=(0, 0), compare=False, repr=False)


class Node:
    pass


class Expr(Node):
    pass


class Stmt(Node):
    pass


# -- types ------------------------------------------------------------------


@dataclass(frozen=True)
class TypeRef(Node):
    name: str
    dims: int = 0
    pos: Pos = _pos()


# -- expressions ------------------------------------------------------------


@dataclass(frozen=True)
class IntLit(Expr):
    value: int
    pos: Pos = _pos()


@dataclass(frozen=True)
class CharLit(Expr):
    value: int
    pos: Pos = _pos()


@dataclass(frozen=True)
class StrLit(Expr):
    value: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class BoolLit(Expr):
    value: bool
    pos: Pos = _pos()


@dataclass(frozen=True)
class NullLit(Expr):
    pos: Pos = _pos()


@dataclass(frozen=True)
class Name(Expr):
    id: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class Call(Expr):
    """Map lookup ``m(k...)`` or builtin call ``len(a)``."""

    func: str
    args: Tuple[Expr, ...]
    pos: Pos = _pos()


@dataclass(frozen=True)
class Field(Expr):
    obj: Expr
    name: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class Index(Expr):
    obj: Expr
    index: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class Slice(Expr):
    obj: Expr
    lo: Expr
    hi: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # "-", "~", "not"
    operand: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class Quant(Expr):
    kind: str  # "forall" | "exists"
    vars: Tuple[str, ...]
    map: str
    body: Expr
    pos: Pos = _pos()


# -- statements -------------------------------------------------------------


@dataclass(frozen=True)
class Local(Stmt):
    name: str
    type: TypeRef
    init: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class Assign(Stmt):
    target: Expr
    value: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class Requires(Stmt):
    cond: Expr
    is_await: bool = False
    pos: Pos = _pos()


@dataclass(frozen=True)
class Atomic(Stmt):
    target: Call
    body: Tuple[Stmt, ...]
    pos: Pos = _pos()


@dataclass(frozen=True)
class If(Stmt):
    cond: Expr
    then: Stmt
    orelse: Optional[Stmt] = None
    pos: Pos = _pos()


@dataclass(frozen=True)
class Block(Stmt):
    body: Tuple[Stmt, ...]
    pos: Pos = _pos()


@dataclass(frozen=True)
class Return(Stmt):
    value: Optional[Expr] = None
    pos: Pos = _pos()


@dataclass(frozen=True)
class ExternCall(Stmt):
    target: Optional[str]
    decl_type: Optional[TypeRef]
    func: str
    args: Tuple[Expr, ...]
    pos: Pos = _pos()

    @property
    def untrusted(self) -> bool:
        return self.func.startswith("untrusted_")


@dataclass(frozen=True)
class Delete(Stmt):
    target: Call
    pos: Pos = _pos()


@dataclass(frozen=True)
class Fuzz(Stmt):
    cond: Expr
    pos: Pos = _pos()


# -- declarations -----------------------------------------------------------


@dataclass(frozen=True)
class Param(Node):
    name: str
    type: TypeRef
    pos: Pos = _pos()


@dataclass(frozen=True)
class MapDecl(Node):
    name: str
    keys: Tuple[Param, ...]
    fields: Tuple[Param, ...]
    pos: Pos = _pos()

    def field_type(self, name):
        for f in self.fields:
            if f.name == name:
                return f.type
        return None


@dataclass(frozen=True)
class ActionDecl(Node):
    name: str
    params: Tuple[Param, ...]
    returns: Tuple[Param, ...]
    body: Tuple[Stmt, ...]
    pos: Pos = _pos()

    @property
    def output(self) -> Optional[Param]:
        return self.returns[0] if self.returns else None

    @property
    def fuzz_hints(self) -> Tuple[Expr, ...]:
        return tuple(s.cond for s in walk_stmts(self.body) if isinstance(s, Fuzz))


@dataclass(frozen=True)
class InitAssign(Node):
    target: Expr
    value: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class InitBlock(Node):
    assigns: Tuple[InitAssign, ...]
    pos: Pos = _pos()


@dataclass(frozen=True)
class Program(Node):
    items: Tuple[Node, ...]
    name: str = field(default="model", compare=False)

    @property
    def maps(self):
        return [i for i in self.items if isinstance(i, MapDecl)]

    @property
    def actions(self):
        return [i for i in self.items if isinstance(i, ActionDecl)]

    @property
    def init(self):
        return [a for i in self.items if isinstance(i, InitBlock) for a in i.assigns]

    def map(self, name) -> Optional[MapDecl]:
        for m in self.maps:
            if m.name == name:
                return m
        return None

    def action(self, name) -> Optional[ActionDecl]:
        for a in self.actions:
            if a.name == name:
                return a
        return None


def walk_stmts(stmts):
    """Yield every statement, depth first, in source order."""
    for s in stmts:
        yield s
        if isinstance(s, (Atomic, Block)):
            yield from walk_stmts(s.body)
        elif isinstance(s, If):
            yield from walk_stmts((s.then,))
            if s.orelse is not None:
                yield from walk_stmts((s.orelse,))


def walk_expr(e):
    yield e
    if isinstance(e, Call):
        for a in e.args:
            yield from walk_expr(a)
    elif isinstance(e, Field):
        yield from walk_expr(e.obj)
    elif isinstance(e, Index):
        yield from walk_expr(e.obj)
        yield from walk_expr(e.index)
    elif isinstance(e, Slice):
        yield from walk_expr(e.obj)
        yield from walk_expr(e.lo)
        yield from walk_expr(e.hi)
    elif isinstance(e, Unary):
        yield from walk_expr(e.operand)
    elif isinstance(e, Binary):
        yield from walk_expr(e.left)
        yield from walk_expr(e.right)
    elif isinstance(e, Quant):
        yield from walk_expr(e.body)


def dump(node):
    """Plain-data form of a node (positions dropped), for golden files."""
    if isinstance(node, Node):
        d = {"node": type(node).__name__}
        for f in fields(node):
            if f.compare:
                d[f.name] = dump(getattr(node, f.name))
        return d
    if isinstance(node, (tuple, list)):
        return [dump(x) for x in node]
    return node
