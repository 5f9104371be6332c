"""Service binding protocol: extern name -> host routine."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict

from ..errors import ServiceUnavailable


@dataclass
class ExternResult:
    ret: object
    outs: Dict[int, object] = field(default_factory=dict)  # argument index -> new buffer


class ServiceBinding:
    """Dispatches untrusted extern calls to host routines.

    Routines take the extern's arguments and return an ``int`` or an
    :class:`ExternResult` when they also write into buffer arguments.
    """

    name = "service"

    def __init__(self, table: Dict[str, Callable] = None, name: str = None):
        self.table = dict(table or {})
        if name:
            self.name = name
        self.calls = 0

    def externs(self):
        return set(self.table)

    def require(self, externs):
        missing = sorted(set(externs) - self.externs())
        if missing:
            raise ServiceUnavailable(f"{self.name} does not implement {', '.join(missing)}")

    def call(self, fn: str, args) -> ExternResult:
        routine = self.table.get(fn)
        if routine is None:
            raise ServiceUnavailable(f"{self.name} does not implement {fn}")
        self.calls += 1
        r = routine(*args)
        return r if isinstance(r, ExternResult) else ExternResult(r)
