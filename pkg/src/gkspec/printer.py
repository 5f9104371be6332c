"""Canonical pretty-printer. ``parse(pretty_print(p)) == p`` for parsed programs."""

from __future__ import annotations

from . import ast as A

_PREC = {
    "->": 1, "or": 2, "and": 3,
    "==": 5, "!=": 5, "<": 5, "<=": 5, ">": 5, ">=": 5,
    "|": 6, "^": 7, "&": 8, "<<": 9, ">>": 9,
    "+": 10, "-": 10, "*": 11, "/": 11, "%": 11,
}
_CMP_PREC = 5

_REV_ESC = {"\n": "\\n", "\t": "\\t", "\r": "\\r", "\0": "\\0", "\\": "\\\\"}


def _quote(s: str, q: str) -> str:
    out = []
    for ch in s:
        if ch in _REV_ESC:
            out.append(_REV_ESC[ch])
        elif ch == q:
            out.append("\\" + q)
        elif ord(ch) < 32 or ord(ch) == 127 or ord(ch) > 255:
            if ord(ch) > 255:
                out.append(ch)
            else:
                out.append(f"\\x{ord(ch):02x}")
        else:
            out.append(ch)
    return q + "".join(out) + q


def _prec(e) -> int:
    if isinstance(e, A.Binary):
        return _PREC[e.op]
    if isinstance(e, A.Quant):
        return 0
    if isinstance(e, A.Unary):
        return 4 if e.op == "not" else 12
    if isinstance(e, (A.Field, A.Index, A.Slice)):
        return 13
    return 14


def expr_str(e, ctx: int = 0) -> str:
    s = _expr(e)
    return f"({s})" if _prec(e) < ctx else s


def _expr(e) -> str:
    if isinstance(e, A.IntLit):
        return str(e.value)
    if isinstance(e, A.CharLit):
        return _quote(chr(e.value), "'")
    if isinstance(e, A.StrLit):
        return _quote(e.value, '"')
    if isinstance(e, A.BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, A.NullLit):
        return "NULL"
    if isinstance(e, A.Name):
        return e.id
    if isinstance(e, A.Call):
        return f"{e.func}({', '.join(expr_str(a) for a in e.args)})"
    if isinstance(e, A.Field):
        return f"{expr_str(e.obj, 13)}.{e.name}"
    if isinstance(e, A.Index):
        return f"{expr_str(e.obj, 13)}[{expr_str(e.index)}]"
    if isinstance(e, A.Slice):
        return f"{expr_str(e.obj, 13)}[{expr_str(e.lo)}:{expr_str(e.hi)}]"
    if isinstance(e, A.Unary):
        if e.op == "not":
            return f"not {expr_str(e.operand, 4)}"
        return f"{e.op}{expr_str(e.operand, 12)}"
    if isinstance(e, A.Quant):
        return f"{e.kind} {', '.join(e.vars)} in {e.map} :: {expr_str(e.body, 1)}"
    if isinstance(e, A.Binary):
        p = _PREC[e.op]
        if e.op == "->":
            lp, rp = p + 1, p
        elif p == _CMP_PREC:
            lp, rp = p + 1, p + 1
        else:
            lp, rp = p, p + 1
        return f"{expr_str(e.left, lp)} {e.op} {expr_str(e.right, rp)}"
    raise TypeError(f"not an expression: {e!r}")


def type_str(t: A.TypeRef) -> str:
    return t.name + "[]" * t.dims


def _params(ps) -> str:
    return ", ".join(f"{p.name}: {type_str(p.type)}" for p in ps)


def _stmt(s, ind: str, out: list):
    nxt = ind + "  "
    if isinstance(s, A.Local):
        out.append(f"{ind}{s.name}: {type_str(s.type)} := {expr_str(s.init)};")
    elif isinstance(s, A.Assign):
        out.append(f"{ind}{expr_str(s.target)} := {expr_str(s.value)};")
    elif isinstance(s, A.Requires):
        kw = "await requires" if s.is_await else "requires"
        out.append(f"{ind}{kw} ({expr_str(s.cond)});")
    elif isinstance(s, A.Atomic):
        out.append(f"{ind}atomic ({expr_str(s.target)}) {{")
        for b in s.body:
            _stmt(b, nxt, out)
        out.append(f"{ind}}}")
    elif isinstance(s, A.Block):
        out.append(f"{ind}{{")
        for b in s.body:
            _stmt(b, nxt, out)
        out.append(f"{ind}}}")
    elif isinstance(s, A.If):
        _if(s, ind, ind, out)
    elif isinstance(s, A.Return):
        out.append(f"{ind}return;" if s.value is None else f"{ind}return {expr_str(s.value)};")
    elif isinstance(s, A.ExternCall):
        call = f"extern call {s.func}({', '.join(expr_str(a) for a in s.args)});"
        if s.target is None:
            out.append(f"{ind}{call}")
        elif s.decl_type is not None:
            out.append(f"{ind}{s.target}: {type_str(s.decl_type)} := {call}")
        else:
            out.append(f"{ind}{s.target} := {call}")
    elif isinstance(s, A.Delete):
        out.append(f"{ind}delete {expr_str(s.target)};")
    elif isinstance(s, A.Fuzz):
        out.append(f"{ind}fuzz {{ requires ({expr_str(s.cond)}); }}")
    else:
        raise TypeError(f"not a statement: {s!r}")


def _if(s: A.If, first: str, ind: str, out: list):
    head = f"{first}if ({expr_str(s.cond)}) "
    _branch(head, s.then, ind, out)
    if s.orelse is None:
        return
    if isinstance(s.orelse, A.If):
        out[-1] += " else "
        tail = out.pop()
        _if(s.orelse, tail, ind, out)
    else:
        out[-1] += " else "
        tail = out.pop()
        _branch(tail, s.orelse, ind, out)


def _branch(head: str, body, ind: str, out: list):
    if isinstance(body, A.Block):
        out.append(head + "{")
        for b in body.body:
            _stmt(b, ind + "  ", out)
        out.append(f"{ind}}}")
    else:
        tmp = []
        _stmt(body, "", tmp)
        if len(tmp) == 1:
            out.append(head + tmp[0])
        else:
            out.append(head + tmp[0])
            # re-indent nested multi-line statement
            for line in tmp[1:]:
                out.append(ind + "  " + line if line.strip() else line)


def pretty_print(prog: A.Program) -> str:
    out = []
    for item in prog.items:
        if out:
            out.append("")
        if isinstance(item, A.MapDecl):
            out.append(f"Map {item.name}({_params(item.keys)}) returns ({_params(item.fields)});")
        elif isinstance(item, A.ActionDecl):
            out.append(f"action {item.name}({_params(item.params)}) returns ({_params(item.returns)}) := {{")
            for s in item.body:
                _stmt(s, "  ", out)
            out.append("}")
        elif isinstance(item, A.InitBlock):
            out.append("init {")
            for a in item.assigns:
                out.append(f"  {expr_str(a.target)} := {expr_str(a.value)};")
            out.append("}")
    return "\n".join(out) + ("\n" if out else "")
