"""Recursive-descent parser producing :mod:`gkspec.ast` nodes."""

from __future__ import annotations

from . import ast as A
from .errors import Diagnostic, GkSyntaxError
from .lexer import tokenize

# Binary operator levels, loosest first. "->" and comparisons handled apart.
_BIN_LEVELS = [
    ("|",),
    ("^",),
    ("&",),
    ("<<", ">>"),
    ("+", "-"),
    ("*", "/", "%"),
]
_CMP = ("==", "!=", "<", "<=", ">", ">=")


class Parser:
    def __init__(self, src: str):
        self.toks = tokenize(src)
        self.i = 0

    # -- token helpers ------------------------------------------------------

    @property
    def tok(self):
        return self.toks[self.i]

    def peek(self, k=1):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text, kind=None):
        t = self.tok
        if kind is not None and t.kind != kind:
            return False
        return t.text == text and t.kind in ("PUNCT", "KW")

    def advance(self):
        t = self.tok
        if t.kind != "EOF":
            self.i += 1
        return t

    def error(self, msg, tok=None, kind="SyntaxError"):
        t = tok or self.tok
        where = repr(t.text) if t.kind != "EOF" else "end of input"
        raise GkSyntaxError([Diagnostic(kind, f"{msg} (at {where})", t.line, t.col)])

    def expect(self, text):
        if not self.at(text):
            self.error(f"expected {text!r}")
        return self.advance()

    def accept(self, text):
        if self.at(text):
            self.advance()
            return True
        return False

    def ident(self):
        t = self.tok
        if t.kind != "IDENT":
            self.error("expected identifier")
        self.advance()
        return t.text

    def pos(self):
        return (self.tok.line, self.tok.col)

    # -- top level ----------------------------------------------------------

    def program(self, name="model"):
        items = []
        while self.tok.kind != "EOF":
            if self.at("Map"):
                items.append(self.mapdecl())
            elif self.at("action"):
                items.append(self.action())
            elif self.at("init"):
                items.append(self.initblock())
            elif self.tok.kind == "IDENT":
                self.error(f"unknown keyword {self.tok.text!r}; expected Map, action or init",
                           kind="UnknownKeyword")
            else:
                self.error("expected Map, action or init")
        prog = A.Program(tuple(items), name=name)
        _check_duplicates(prog)
        return prog

    def params(self):
        self.expect("(")
        out = []
        if not self.at(")"):
            while True:
                p = self.pos()
                name = self.ident()
                self.expect(":")
                out.append(A.Param(name, self.typeref(), pos=p))
                if not self.accept(","):
                    break
        self.expect(")")
        return tuple(out)

    def typeref(self):
        p = self.pos()
        name = self.ident()
        dims = 0
        while self.at("[") and self.peek().text == "]":
            self.advance()
            self.advance()
            dims += 1
        return A.TypeRef(name, dims, pos=p)

    def mapdecl(self):
        p = self.pos()
        self.expect("Map")
        name = self.ident()
        keys_tok = self.tok
        keys = self.params()
        if not keys:
            self.error("map needs at least one key parameter", keys_tok)
        self.expect("returns")
        fields_tok = self.tok
        fields = self.params()
        if not fields:
            self.error("map needs at least one value field", fields_tok)
        self.accept(";")
        return A.MapDecl(name, keys, fields, pos=p)

    def action(self):
        p = self.pos()
        self.expect("action")
        name = self.ident()
        params = self.params()
        self.expect("returns")
        rt = self.tok
        returns = self.params()
        if len(returns) > 1:
            self.error("an action returns at most one value", rt)
        self.expect(":=")
        body = self.block_body()
        self.accept(";")
        return A.ActionDecl(name, params, returns, body, pos=p)

    def initblock(self):
        p = self.pos()
        self.expect("init")
        self.expect("{")
        assigns = []
        while not self.at("}"):
            if self.tok.kind == "EOF":
                self.error("unterminated init block")
            ap = self.pos()
            target = self.postfix()
            self.expect(":=")
            value = self.expr()
            self.expect(";")
            assigns.append(A.InitAssign(target, value, pos=ap))
        self.expect("}")
        self.accept(";")
        return A.InitBlock(tuple(assigns), pos=p)

    # -- statements ---------------------------------------------------------

    def block_body(self):
        self.expect("{")
        out = []
        while not self.at("}"):
            if self.tok.kind == "EOF":
                self.error("unterminated block")
            out.append(self.stmt())
        self.expect("}")
        return tuple(out)

    def stmt(self):
        p = self.pos()
        t = self.tok
        if self.at("requires"):
            self.advance()
            cond = self.paren_expr()
            self.expect(";")
            return A.Requires(cond, False, pos=p)
        if self.at("await"):
            self.advance()
            self.expect("requires")
            cond = self.paren_expr()
            self.expect(";")
            return A.Requires(cond, True, pos=p)
        if self.at("atomic"):
            self.advance()
            self.expect("(")
            target = self.postfix()
            if not isinstance(target, A.Call):
                self.error("atomic needs a map-entry designator", t)
            self.expect(")")
            body = self.block_body()
            self.accept(";")
            return A.Atomic(target, body, pos=p)
        if self.at("if"):
            self.advance()
            cond = self.paren_expr()
            then = self.stmt()
            orelse = None
            if self.accept("else"):
                orelse = self.stmt()
            return A.If(cond, then, orelse, pos=p)
        if self.at("{"):
            return A.Block(self.block_body(), pos=p)
        if self.at("return"):
            self.advance()
            value = None
            if not self.at(";"):
                value = self.expr()
            self.expect(";")
            return A.Return(value, pos=p)
        if self.at("delete"):
            self.advance()
            target = self.postfix()
            if not isinstance(target, A.Call):
                self.error("delete needs a map-entry designator", t)
            self.expect(";")
            return A.Delete(target, pos=p)
        if self.at("fuzz"):
            self.advance()
            self.expect("{")
            self.expect("requires")
            cond = self.paren_expr()
            self.expect(";")
            self.expect("}")
            self.accept(";")
            return A.Fuzz(cond, pos=p)
        if self.at("extern"):
            return self.extern_call(None, None, p)
        if t.kind == "IDENT" and self.peek().text == ":" and self.peek().kind == "PUNCT":
            name = self.ident()
            self.expect(":")
            ty = self.typeref()
            self.expect(":=")
            if self.at("extern"):
                return self.extern_call(name, ty, p)
            init = self.expr()
            self.expect(";")
            return A.Local(name, ty, init, pos=p)
        if t.kind == "IDENT":
            target = self.postfix()
            if not self.at(":="):
                self.error("expected ':=' in assignment")
            self.advance()
            if self.at("extern"):
                if not isinstance(target, A.Name):
                    self.error("extern call result must bind a plain variable", t)
                return self.extern_call(target.id, None, p)
            value = self.expr()
            self.expect(";")
            return A.Assign(target, value, pos=p)
        if t.kind == "KW":
            self.error(f"keyword {t.text!r} cannot start a statement")
        self.error("expected statement")

    def extern_call(self, target, decl_type, p):
        self.expect("extern")
        self.expect("call")
        func = self.ident()
        args = self.args()
        self.expect(";")
        return A.ExternCall(target, decl_type, func, args, pos=p)

    def args(self):
        self.expect("(")
        out = []
        if not self.at(")"):
            while True:
                out.append(self.expr())
                if not self.accept(","):
                    break
        self.expect(")")
        return tuple(out)

    def paren_expr(self):
        self.expect("(")
        e = self.expr()
        self.expect(")")
        return e

    # -- expressions --------------------------------------------------------

    def expr(self):
        return self.implies()

    def implies(self):
        p = self.pos()
        left = self.or_expr()
        if self.accept("->"):
            right = self.implies()
            return A.Binary("->", left, right, pos=p)
        return left

    def or_expr(self):
        p = self.pos()
        left = self.and_expr()
        while self.at("or") or self.at("||"):
            self.advance()
            left = A.Binary("or", left, self.and_expr(), pos=p)
        return left

    def and_expr(self):
        p = self.pos()
        left = self.not_expr()
        while self.at("and") or self.at("&&"):
            self.advance()
            left = A.Binary("and", left, self.not_expr(), pos=p)
        return left

    def not_expr(self):
        p = self.pos()
        if self.at("not") or self.at("!"):
            self.advance()
            return A.Unary("not", self.not_expr(), pos=p)
        if self.at("forall") or self.at("exists"):
            return self.quant()
        return self.cmp_expr()

    def quant(self):
        p = self.pos()
        kind = self.advance().text
        names = [self.ident()]
        while self.accept(","):
            names.append(self.ident())
        self.expect("in")
        m = self.ident()
        self.expect("::")
        body = self.expr()
        return A.Quant(kind, tuple(names), m, body, pos=p)

    def cmp_expr(self):
        p = self.pos()
        left = self.binary(0)
        if self.tok.kind == "PUNCT" and self.tok.text in _CMP:
            op = self.advance().text
            right = self.binary(0)
            left = A.Binary(op, left, right, pos=p)
            if self.tok.kind == "PUNCT" and self.tok.text in _CMP:
                self.error("comparisons do not chain; add parentheses")
        return left

    def binary(self, level):
        if level == len(_BIN_LEVELS):
            return self.unary()
        p = self.pos()
        left = self.binary(level + 1)
        ops = _BIN_LEVELS[level]
        while self.tok.kind == "PUNCT" and self.tok.text in ops:
            op = self.advance().text
            left = A.Binary(op, left, self.binary(level + 1), pos=p)
        return left

    def unary(self):
        p = self.pos()
        if self.at("-") or self.at("~"):
            op = self.advance().text
            return A.Unary(op, self.unary(), pos=p)
        return self.postfix()

    def postfix(self):
        e = self.primary()
        while True:
            p = self.pos()
            if self.accept("."):
                e = A.Field(e, self.ident(), pos=p)
            elif self.at("["):
                self.advance()
                lo = self.expr()
                if self.accept(":"):
                    hi = self.expr()
                    self.expect("]")
                    e = A.Slice(e, lo, hi, pos=p)
                else:
                    self.expect("]")
                    e = A.Index(e, lo, pos=p)
            else:
                return e

    def primary(self):
        t = self.tok
        p = (t.line, t.col)
        if t.kind == "INT":
            self.advance()
            return A.IntLit(t.value, pos=p)
        if t.kind == "CHAR":
            self.advance()
            return A.CharLit(t.value, pos=p)
        if t.kind == "STRING":
            self.advance()
            return A.StrLit(t.value, pos=p)
        if self.at("NULL"):
            self.advance()
            return A.NullLit(pos=p)
        if self.at("true") or self.at("false"):
            self.advance()
            return A.BoolLit(t.text == "true", pos=p)
        if t.kind == "IDENT":
            self.advance()
            if self.at("("):
                return A.Call(t.text, self.args(), pos=p)
            return A.Name(t.text, pos=p)
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        self.error("expected expression")


def _check_duplicates(prog: A.Program):
    diags = []
    seen = {}
    for item in prog.items:
        if isinstance(item, (A.MapDecl, A.ActionDecl)):
            if item.name in seen:
                diags.append(Diagnostic("DuplicateName", f"{item.name!r} declared twice", *item.pos))
            seen[item.name] = item
        if isinstance(item, A.MapDecl):
            groups = [item.keys + item.fields]
        elif isinstance(item, A.ActionDecl):
            groups = [item.params + item.returns]
        else:
            groups = []
        for g in groups:
            names = set()
            for prm in g:
                if prm.name in names:
                    diags.append(Diagnostic("DuplicateName",
                                            f"{prm.name!r} repeated in {item.name}", *prm.pos))
                names.add(prm.name)
    if diags:
        raise GkSyntaxError(diags)


def parse(source: str, name: str = "model") -> A.Program:
    """Parse GKSpec text. Raises GkSyntaxError with positioned diagnostics."""
    try:
        return Parser(source).program(name)
    except RecursionError:
        raise GkSyntaxError.single("SyntaxError", "expression nesting too deep") from None


def parse_init(source: str):
    """Parse a bare ``init { ... }`` block (used for session overrides)."""
    p = Parser(source)
    blk = p.initblock()
    if p.tok.kind != "EOF":
        p.error("trailing input after init block")
    return blk


def parse_expr(source: str) -> A.Expr:
    """Parse a standalone expression such as ``nread >= 0 and nread <= cnt``."""
    p = Parser(source)
    try:
        e = p.expr()
    except RecursionError:
        raise GkSyntaxError.single("SyntaxError", "expression nesting too deep") from None
    if p.tok.kind != "EOF":
        p.error("trailing input after expression")
    return e
