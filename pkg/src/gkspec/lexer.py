"""Tokenizer for GKSpec source text."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import GkSyntaxError

KEYWORDS = {
    "Map", "action", "returns", "init", "requires", "await", "atomic", "if",
    "else", "return", "extern", "call", "delete", "fuzz", "forall", "exists",
    "in", "and", "or", "not", "NULL", "true", "false",
}

# Longest first so that ":=" wins over ":".
PUNCT = [
    ":=", "::", "->", "==", "!=", "<=", ">=", "<<", ">>", "&&", "||",
    "(", ")", "{", "}", "[", "]", ",", ";", ":", ".", "<", ">", "+", "-",
    "*", "/", "%", "|", "&", "^", "~", "!",
]

_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "0": "\0", "\\": "\\", '"': '"', "'": "'"}


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT KW INT STRING CHAR PUNCT EOF
    text: str
    value: object
    line: int
    col: int


_INT_RE = re.compile(r"0[xX][0-9a-fA-F]+|0[oO][0-7]+|0[bB][01]+|[0-9]+")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def _int_value(text: str, line: int, col: int) -> int:
    low = text.lower()
    if low.startswith("0x"):
        return int(text[2:], 16)
    if low.startswith("0o"):
        return int(text[2:], 8)
    if low.startswith("0b"):
        return int(text[2:], 2)
    if len(text) > 1 and text[0] == "0":
        # C octal, e.g. 0644
        if any(c in "89" for c in text):
            raise GkSyntaxError.single("SyntaxError", f"bad octal literal {text}", line, col)
        return int(text, 8)
    return int(text)


def tokenize(src: str):
    toks = []
    i, line, col = 0, 1, 1
    n = len(src)
    while i < n:
        c = src[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r\f\v":
            i += 1
            col += 1
            continue
        if c == "#":
            while i < n and src[i] != "\n":
                i += 1
            continue
        start_col = col
        if c.isdigit():
            m = _INT_RE.match(src, i)
            text = m.group(0)
            end = m.end()
            if end < n and (src[end].isalnum() or src[end] == "_"):
                raise GkSyntaxError.single("SyntaxError", f"malformed number near {src[i:end + 1]!r}", line, col)
            toks.append(Token("INT", text, _int_value(text, line, col), line, start_col))
            col += end - i
            i = end
            continue
        if c.isalpha() or c == "_":
            m = _IDENT_RE.match(src, i)
            text = m.group(0)
            kind = "KW" if text in KEYWORDS else "IDENT"
            toks.append(Token(kind, text, text, line, start_col))
            col += len(text)
            i = m.end()
            continue
        if c == '"' or c == "'":
            quote = c
            j = i + 1
            out = []
            while True:
                if j >= n or src[j] == "\n":
                    raise GkSyntaxError.single("SyntaxError", "unterminated literal", line, start_col)
                ch = src[j]
                if ch == quote:
                    j += 1
                    break
                if ch == "\\":
                    if j + 1 >= n:
                        raise GkSyntaxError.single("SyntaxError", "unterminated literal", line, start_col)
                    e = src[j + 1]
                    if e == "x":
                        hexd = src[j + 2:j + 4]
                        if len(hexd) != 2 or not all(h in "0123456789abcdefABCDEF" for h in hexd):
                            raise GkSyntaxError.single("SyntaxError", "bad \\x escape", line, col + (j - i))
                        out.append(chr(int(hexd, 16)))
                        j += 4
                        continue
                    if e not in _ESCAPES:
                        raise GkSyntaxError.single("SyntaxError", f"unknown escape \\{e}", line, col + (j - i))
                    out.append(_ESCAPES[e])
                    j += 2
                    continue
                out.append(ch)
                j += 1
            text = src[i:j]
            if quote == "'":
                if len(out) != 1 or ord(out[0]) > 255:
                    raise GkSyntaxError.single("SyntaxError", "char literal must hold one byte", line, start_col)
                toks.append(Token("CHAR", text, ord(out[0]), line, start_col))
            else:
                toks.append(Token("STRING", text, "".join(out), line, start_col))
            col += j - i
            i = j
            continue
        for p in PUNCT:
            if src.startswith(p, i):
                toks.append(Token("PUNCT", p, p, line, start_col))
                i += len(p)
                col += len(p)
                break
        else:
            raise GkSyntaxError.single("SyntaxError", f"unexpected character {c!r}", line, col)
    toks.append(Token("EOF", "", None, line, col))
    return toks
