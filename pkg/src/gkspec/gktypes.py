"""GKSpec types: C-like integer kinds, strings, arrays and map-entry records."""

from __future__ import annotations

from dataclasses import dataclass


class GkType:
    pass


@dataclass(frozen=True)
class IntType(GkType):
    name: str
    bits: int
    signed: bool

    @property
    def lo(self) -> int:
        return -(1 << (self.bits - 1)) if self.signed else 0

    @property
    def hi(self) -> int:
        return (1 << (self.bits - 1)) - 1 if self.signed else (1 << self.bits) - 1

    def contains(self, v: int) -> bool:
        return self.lo <= v <= self.hi

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class _Named(GkType):
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class ArrayType(GkType):
    elem: GkType

    @property
    def is_bytes(self) -> bool:
        return self.elem in (CHAR, VOID)

    def __str__(self):
        return f"{self.elem}[]"


@dataclass(frozen=True)
class RecordType(GkType):
    map: str

    def __str__(self):
        return f"record<{self.map}>"


@dataclass(frozen=True)
class LitIntType(GkType):
    """Integer literal before it settles on a kind."""

    value: int

    def __str__(self):
        return "int-literal"


INT = IntType("int", 32, True)
OFF_T = IntType("off_t", 64, True)
SSIZE_T = IntType("ssize_t", 64, True)
SIZE_T = IntType("size_t", 64, False)
CHAR = IntType("char", 8, False)
STRING = _Named("string")
VOID = _Named("void")
BOOL = _Named("bool")
NULL = _Named("null")

SCALARS = {t.name: t for t in (INT, OFF_T, SSIZE_T, SIZE_T, CHAR, STRING, VOID, BOOL)}


def is_int(t) -> bool:
    return isinstance(t, (IntType, LitIntType))


def is_bytes_array(t) -> bool:
    return isinstance(t, ArrayType) and t.is_bytes


def widens(src: IntType, dst: IntType) -> bool:
    if src == dst:
        return True
    if src.bits == dst.bits and src.signed == dst.signed:
        return True
    if dst.bits > src.bits and (dst.signed or not src.signed):
        return True
    return False


def assignable(src: GkType, dst: GkType) -> bool:
    if isinstance(src, LitIntType):
        return isinstance(dst, IntType) and dst.contains(src.value)
    if isinstance(src, IntType) and isinstance(dst, IntType):
        return widens(src, dst)
    if isinstance(src, ArrayType) and isinstance(dst, ArrayType):
        return arrays_compatible(src, dst)
    if src == NULL and isinstance(dst, RecordType):
        return True
    return src == dst


def arrays_compatible(a: ArrayType, b: ArrayType) -> bool:
    if a.is_bytes and b.is_bytes:
        return True
    return a.elem == b.elem


def arith_result(a: GkType, b: GkType) -> GkType:
    """C-style usual arithmetic conversion, literals adapt to the other side."""
    if isinstance(a, LitIntType) and isinstance(b, LitIntType):
        return settle(a) if settle(a).bits >= settle(b).bits else settle(b)
    if isinstance(a, LitIntType):
        return b
    if isinstance(b, LitIntType):
        return a
    if a.bits != b.bits:
        return a if a.bits > b.bits else b
    if a.signed != b.signed:
        return a if not a.signed else b
    return a


def settle(t: GkType) -> GkType:
    if isinstance(t, LitIntType):
        return INT if INT.contains(t.value) else OFF_T
    return t


def zero_value(t: GkType):
    if isinstance(t, (IntType, LitIntType)):
        return 0
    if t == STRING:
        return ""
    if t == BOOL:
        return False
    if isinstance(t, ArrayType):
        return b"" if t.is_bytes else ()
    return None
