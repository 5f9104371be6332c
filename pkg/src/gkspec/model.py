"""Loaded models: parsed, type-checked and compiled once, shared by every engine."""

from __future__ import annotations

import hashlib
import threading
from importlib import resources
from pathlib import Path

from . import ast as A
from .errors import UnknownModel
from .interp import compile_program, run_init
from .parser import parse
from .printer import pretty_print
from .scope import call_scope
from .state import StateStore
from .typecheck import TypedProgram, typecheck

BUNDLED = ("fs", "sync")


class Model:
    def __init__(self, typed: TypedProgram, source: str = ""):
        self.typed = typed
        self.program: A.Program = typed.program
        self.name = typed.program.name
        self.source = source
        self.actions = compile_program(typed)
        self.hash = hashlib.sha256(pretty_print(self.program).encode()).hexdigest()[:16]
        self._scopes = {}
        self._lock = threading.Lock()
        # a model is thread-safe only if every action guards its state in atomic blocks
        self.concurrent = bool(self.actions) and all(
            any(isinstance(s, A.Atomic) for s in A.walk_stmts(a.decl.body))
            for a in self.actions.values())

    def action(self, name):
        from .errors import UnknownAction
        try:
            return self.actions[name]
        except KeyError:
            raise UnknownAction(f"{self.name} has no action {name!r}") from None

    def scope(self, name):
        """Continuation constraints of an action's untrusted call (cached)."""
        sc = self._scopes.get(name)
        if sc is None:
            act = self.action(name)
            arrays = set(act.site.out_args.values()) if act.site else set()
            sc = call_scope(act.decl, arrays)
            with self._lock:
                self._scopes[name] = sc
        return sc

    def externs(self):
        return sorted({a.site.func for a in self.actions.values() if a.site is not None})

    def new_state(self, overrides=None, seed: int = 0) -> StateStore:
        st = StateStore(self.typed, seed)
        run_init(self.typed, st, overrides)
        return st


def load_model(source: str, name: str = "model") -> Model:
    """Parse, type-check and compile GKSpec text."""
    return Model(typecheck(parse(source, name)), source)


def load_model_file(path) -> Model:
    p = Path(path)
    return load_model(p.read_text(encoding="utf-8"), p.stem)


def bundled_source(name: str) -> str:
    if name not in BUNDLED:
        raise UnknownModel(f"no bundled model named {name!r} (have: {', '.join(BUNDLED)})")
    return resources.files("gkspec").joinpath("models", f"{name}.gk").read_text(encoding="utf-8")


_cache = {}


def load_bundled(name: str) -> Model:
    """Load one of the shipped models ("fs" or "sync")."""
    m = _cache.get(name)
    if m is None:
        m = _cache[name] = load_model(bundled_source(name), name)
    return m


def resolve_model(spec: str) -> Model:
    """A bundled name or a path to a .gk file."""
    if spec in BUNDLED:
        return load_bundled(spec)
    return load_model_file(spec)
