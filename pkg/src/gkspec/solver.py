"""Bounded-domain constraint solver.

Strategy:
  * every conjunct that mentions a single integer unknown and is built from
    linear comparisons, map-membership tests and boolean connectives is turned
    into an exact :class:`IntervalSet` of admissible values;
  * array unknowns are synthesized structurally from slice equalities;
  * when the remaining integer domain is small (<= 4096 tuples) it is
    enumerated in seeded random order, so the search is complete; otherwise
    candidates are sampled (seeded) with a bias toward boundary values.

Every returned assignment is re-checked against the constraints before it is
handed out, so results are self-validating.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

from . import ast as A
from .constants import CONSTANTS
from .errors import DomainExhausted, EvalError, SliceOutOfRange
from .gktypes import BOOL, STRING, ArrayType, IntType, LitIntType, zero_value
from .interp import compile_expr, eval_cond, slice_read, slice_write
from .intervals import EMPTY, IntervalSet
from .parser import parse_expr

SATISFY = "SATISFY"
VIOLATE = "VIOLATE"

DEFAULT_LO = -(1 << 31)
DEFAULT_HI = (1 << 31) - 1
ENUM_LIMIT = 1 << 12


@dataclass
class Unknown:
    name: str
    type: object
    lo: Optional[int] = None
    hi: Optional[int] = None
    base: object = None  # arrays: the caller's buffer; length is preserved

    def domain(self) -> IntervalSet:
        t = self.type
        lo = self.lo if self.lo is not None else max(t.lo, DEFAULT_LO)
        hi = self.hi if self.hi is not None else min(t.hi, DEFAULT_HI)
        return IntervalSet.of(lo, hi)


@dataclass
class SolveRequest:
    constraints: list
    unknowns: List[Unknown]
    bindings: Dict[str, object] = field(default_factory=dict)
    state: object = None
    seed: int = 0
    mode: str = SATISFY
    hints: list = field(default_factory=list)
    max_solutions: int = 1
    oracle: Optional[Callable[[dict], bool]] = None
    budget: int = 4000


@dataclass
class SolveResult:
    status: str  # "SAT" | "UNSAT" | "EXHAUSTED"
    solutions: List[dict]
    exact: bool = False

    @property
    def ok(self) -> bool:
        return self.status == "SAT"


class _NoState:
    def get(self, name, key):
        return None

    def keys(self, name):
        return []


# -- expression caches ------------------------------------------------------

_FN: Dict[int, tuple] = {}
_FREE: Dict[int, tuple] = {}


def fn_of(e):
    ent = _FN.get(id(e))
    if ent is not None and ent[0] is e:
        return ent[1]
    fn = compile_expr(e, frozenset())
    _FN[id(e)] = (e, fn)
    return fn


def free_names(e) -> frozenset:
    ent = _FREE.get(id(e))
    if ent is not None and ent[0] is e:
        return ent[1]
    names, bound = set(), set()
    for n in A.walk_expr(e):
        if isinstance(n, A.Name):
            names.add(n.id)
        elif isinstance(n, A.Quant):
            bound.update(n.vars)
    out = frozenset(n for n in names - bound if n not in CONSTANTS)
    _FREE[id(e)] = (e, out)
    return out


def as_expr(c):
    return parse_expr(c) if isinstance(c, str) else c


def conjuncts(e) -> list:
    if isinstance(e, A.Binary) and e.op == "and":
        return conjuncts(e.left) + conjuncts(e.right)
    return [e]


def _int_literals(e):
    for n in A.walk_expr(e):
        if isinstance(n, (A.IntLit, A.CharLit)):
            yield n.value
        elif isinstance(n, A.Name) and n.id in CONSTANTS:
            yield CONSTANTS[n.id]


def _is_int_type(t):
    return isinstance(t, (IntType, LitIntType))


# -- the solver ---------------------------------------------------------------


class _Problem:
    def __init__(self, req: SolveRequest):
        self.req = req
        self.cons = [as_expr(c) for c in req.constraints]
        self.hints = [as_expr(h) for h in req.hints]
        self.env = dict(req.bindings)
        self.st = req.state if req.state is not None else _NoState()
        self.rng = random.Random(req.seed)
        self.ints = [u for u in req.unknowns if _is_int_type(u.type)]
        self.arrays = [u for u in req.unknowns if isinstance(u.type, ArrayType)]
        self.finite = [u for u in req.unknowns if u.type in (BOOL, STRING)]
        self.names = frozenset(u.name for u in req.unknowns)
        self.array_names = frozenset(u.name for u in self.arrays)
        self.conj = [c for e in self.cons for c in conjuncts(e)]
        self.hint_conj = [c for e in self.hints for c in conjuncts(e)]
        for u in self.arrays:
            if u.base is None:
                u.base = zero_value(u.type)

        self.D = {u.name: u.domain() for u in self.ints}
        self.V = dict(self.D)
        self.const_false = False
        self.residual = False
        for c in self.conj:
            fv = free_names(c) & self.names
            if not fv:
                t = self._truth(c, self.env)
                if t is not True:
                    self.const_false = True
                continue
            x = next(iter(fv))
            if len(fv) == 1 and x in self.D:
                s = self.xset(c, x, self.D[x])
                if s is not None:
                    self.V[x] = self.V[x].intersect(s)
                    continue
            self.residual = True
        self.H = {}
        for c in self.hint_conj:
            fv = free_names(c) & self.names
            if len(fv) == 1:
                x = next(iter(fv))
                if x in self.D:
                    s = self.xset(c, x, self.D[x])
                    if s is not None:
                        self.H[x] = self.H.get(x, self.D[x]).intersect(s)
        self.finite_dom = {u.name: self._finite_domain(u) for u in self.finite}
        self._specials = None

    # -- exact analysis -------------------------------------------------------

    def _eval(self, e, env=None):
        return fn_of(e)(self.env if env is None else env, self.st)

    def _truth(self, c, env):
        try:
            return bool(fn_of(c)(env, self.st))
        except SliceOutOfRange:
            return False
        except EvalError:
            return None

    def lin(self, e, x):
        """Return (a, b) with e == a*x + b, or None if not linear in x."""
        if x not in free_names(e):
            try:
                v = self._eval(e)
            except EvalError:
                return None
            return (0, v) if type(v) is int else None
        if isinstance(e, A.Name):
            return (1, 0)
        if isinstance(e, A.Unary) and e.op == "-":
            r = self.lin(e.operand, x)
            return None if r is None else (-r[0], -r[1])
        if isinstance(e, A.Binary) and e.op in ("+", "-", "*"):
            left, right = self.lin(e.left, x), self.lin(e.right, x)
            if left is None or right is None:
                return None
            if e.op == "+":
                return (left[0] + right[0], left[1] + right[1])
            if e.op == "-":
                return (left[0] - right[0], left[1] - right[1])
            if left[0] == 0:
                return (left[1] * right[0], left[1] * right[1])
            if right[0] == 0:
                return (right[1] * left[0], right[1] * left[1])
        return None

    def xset(self, e, x, U: IntervalSet) -> Optional[IntervalSet]:
        """Exact set of x in U making boolean ``e`` true, or None."""
        fv = free_names(e) & self.names
        if not fv:
            t = self._truth(e, self.env)
            if t is None:
                return None
            return U if t else EMPTY
        if fv != {x}:
            return None
        if isinstance(e, A.Unary) and e.op == "not":
            s = self.xset(e.operand, x, U)
            return None if s is None else s.complement(U)
        if not isinstance(e, A.Binary):
            return None
        op = e.op
        if op in ("and", "or", "->"):
            left = self.xset(e.left, x, U)
            if left is None:
                return None
            right = self.xset(e.right, x, U)
            if right is None:
                return None
            if op == "and":
                return left.intersect(right)
            if op == "or":
                return left.union(right)
            return left.complement(U).union(right)
        if op in ("==", "!=") and (isinstance(e.left, A.NullLit) or isinstance(e.right, A.NullLit)):
            call = e.right if isinstance(e.left, A.NullLit) else e.left
            if not (isinstance(call, A.Call) and len(call.args) == 1
                    and isinstance(call.args[0], A.Name) and call.args[0].id == x):
                return None
            present = IntervalSet.points(k[0] for k in self.st.keys(call.func)
                                         if type(k[0]) is int).intersect(U)
            return present.complement(U) if op == "==" else present
        if op not in ("==", "!=", "<", "<=", ">", ">="):
            return None
        left, right = self.lin(e.left, x), self.lin(e.right, x)
        if left is None or right is None:
            return None
        return _solve_linear(left[0] - right[0], left[1] - right[1], op, U)

    def _finite_domain(self, u):
        if u.type == BOOL:
            return [False, True]
        vals = {""}
        for v in self.env.values():
            if isinstance(v, str):
                vals.add(v)
        for c in self.conj:
            for n in A.walk_expr(c):
                if isinstance(n, A.StrLit):
                    vals.add(n.value)
        return sorted(vals)

    # -- candidate construction -------------------------------------------------

    def specials(self):
        if self._specials is None:
            vals = {0, 1, -1}
            for v in self.env.values():
                if type(v) is int:
                    vals.update((v, v - 1, v + 1))
            for c in self.conj + self.hint_conj:
                for v in _int_literals(c):
                    vals.update((v, v - 1, v + 1, -v))
            for name in getattr(self.st, "maps", {}) or {}:
                for k in self.st.keys(name):
                    for part in k:
                        if type(part) is int:
                            vals.add(part)
            self._specials = sorted(vals)
        return self._specials

    def draw(self, S: IntervalSet):
        if self.rng.random() < 0.3:
            cands = [v for v in itertools.chain(self.specials(), S.edges()) if v in S]
            if cands:
                return cands[self.rng.randrange(len(cands))]
        return S.sample(self.rng)

    def eq_atoms(self, c, env):
        """Yield (array unknown, lo, hi, value) from slice equalities active under env."""
        if isinstance(c, A.Binary):
            if c.op == "and":
                yield from self.eq_atoms(c.left, env)
                yield from self.eq_atoms(c.right, env)
                return
            if c.op == "->":
                if self._truth(c.left, env) is True:
                    yield from self.eq_atoms(c.right, env)
                return
            if c.op == "==":
                for mine, other in ((c.left, c.right), (c.right, c.left)):
                    if free_names(other) & self.array_names:
                        continue
                    if isinstance(mine, A.Slice) and isinstance(mine.obj, A.Name) \
                            and mine.obj.id in self.array_names:
                        try:
                            lo = fn_of(mine.lo)(env, self.st)
                            hi = fn_of(mine.hi)(env, self.st)
                            val = fn_of(other)(env, self.st)
                        except EvalError:
                            return
                        yield mine.obj.id, lo, hi, val
                        return
                    if isinstance(mine, A.Name) and mine.id in self.array_names:
                        try:
                            val = fn_of(other)(env, self.st)
                        except EvalError:
                            return
                        yield mine.id, 0, len(val), val
                        return

    def synthesize(self, env):
        """Fill array unknowns in ``env`` from slice equalities; returns touched ranges."""
        ranges = {}
        for u in self.arrays:
            env[u.name] = u.base
        for c in self.conj:
            for name, lo, hi, val in self.eq_atoms(c, env):
                cur = env[name]
                if not (0 <= lo <= hi <= len(cur)) or not isinstance(val, type(cur)):
                    continue
                try:
                    env[name] = slice_write(cur, lo, hi, slice_read(val, 0, hi - lo))
                except SliceOutOfRange:
                    continue
                if hi > lo:
                    ranges.setdefault(name, []).append((lo, hi))
        return ranges

    def variants(self, int_cand: dict, violate: bool):
        """Yield full candidate assignments for one choice of scalar unknowns."""
        if not self.arrays:
            yield dict(int_cand)
            return
        env = dict(self.env)
        env.update(int_cand)
        ranges = self.synthesize(env)
        synth = {u.name: env[u.name] for u in self.arrays}
        out = dict(int_cand)
        out.update(synth)
        yield out
        if not violate:
            return
        base = dict(int_cand)
        base.update({u.name: u.base for u in self.arrays})
        if base != out:
            yield base
        for name, rs in sorted(ranges.items()):
            lo, hi = rs[self.rng.randrange(len(rs))]
            pos = self.rng.randrange(lo, hi)
            cur = synth[name]
            flip = (cur[pos] ^ (1 + self.rng.randrange(255))) & 0xFF
            tampered = dict(out)
            tampered[name] = cur[:pos] + bytes([flip]) + cur[pos + 1:] \
                if isinstance(cur, bytes) else cur[:pos] + (flip,) + cur[pos + 1:]
            yield tampered

    def check(self, cand) -> str:
        """'SAT' if every constraint holds, 'VIOL' if the first failing one is false."""
        env = dict(self.env)
        env.update(cand)
        for c in self.cons:
            t = self._truth(c, env)
            if t is None:
                return "ERR"
            if not t:
                return "VIOL"
        return "SAT"

    def hints_hold(self, cand) -> bool:
        if not self.hints:
            return True
        env = dict(self.env)
        env.update(cand)
        return all(self._truth(h, env) is True for h in self.hints)

    def key(self, cand):
        return tuple(cand[u.name] for u in self.req.unknowns)

    # -- drivers --------------------------------------------------------------------

    def scalar_names(self):
        return [u.name for u in self.ints] + [u.name for u in self.finite]

    def space(self, doms) -> Optional[int]:
        total = 1
        for u in self.ints:
            total *= doms[u.name].size()
            if total > ENUM_LIMIT:
                return None
        for u in self.finite:
            total *= len(self.finite_dom[u.name])
            if total > ENUM_LIMIT:
                return None
        return total

    def enumerate(self, doms):
        names = self.scalar_names()
        pools = [list(doms[u.name]) for u in self.ints] + [self.finite_dom[u.name] for u in self.finite]
        tuples = list(itertools.product(*pools))
        self.rng.shuffle(tuples)
        for t in tuples:
            yield dict(zip(names, t))

    def sample(self, doms_by_name, n):
        for _ in range(n):
            cand = {}
            for u in self.ints:
                regions = doms_by_name[u.name]
                S = regions[self.rng.randrange(len(regions))] if len(regions) > 1 else regions[0]
                cand[u.name] = self.draw(S)
            for u in self.finite:
                dom = self.finite_dom[u.name]
                cand[u.name] = dom[self.rng.randrange(len(dom))]
            yield cand

    def accept(self, cand, want, seen, out, need_hint):
        k = self.key(cand)
        if k in seen:
            return False
        if self.check(cand) != want:
            return False
        if need_hint and not self.hints_hold(cand):
            return False
        if self.req.oracle is not None and not self.req.oracle(cand):
            seen.add(k)
            return False
        seen.add(k)
        out.append(cand)
        return True

    def satisfy(self) -> SolveResult:
        req = self.req
        if self.const_false or any(not self.V[u.name] for u in self.ints):
            return SolveResult("UNSAT", [], exact=True)
        out, seen = [], set()
        total = self.space(self.V)
        if total is not None:
            cands = list(self.enumerate(self.V))
            ordered = cands
            if self.hints:
                first = [c for c in cands if self.hints_hold(self._with_arrays(c))]
                rest = [c for c in cands if not self.hints_hold(self._with_arrays(c))]
                ordered = first + rest
            for c in ordered:
                for full in self.variants(c, False):
                    self.accept(full, "SAT", seen, out, False)
                if len(out) >= req.max_solutions:
                    break
            return SolveResult("SAT" if out else "UNSAT", out, exact=not self.arrays)
        passes = []
        if self.hints:
            passes.append(({x: [self.V[x].intersect(self.H[x])] if x in self.H else [self.V[x]]
                            for x in self.V}, True))
        passes.append(({x: [self.V[x]] for x in self.V}, False))
        for doms, need_hint in passes:
            if any(not r[0] for r in doms.values()):
                continue
            attempts = req.budget // len(passes)
            for c in self.sample(doms, attempts):
                for full in self.variants(c, False):
                    self.accept(full, "SAT", seen, out, need_hint)
                if len(out) >= req.max_solutions:
                    return SolveResult("SAT", out)
        return SolveResult("SAT" if out else "UNSAT", out)

    def _with_arrays(self, c):
        if not self.arrays:
            return c
        return next(self.variants(c, False))

    def violate(self) -> SolveResult:
        req = self.req
        out, seen = [], set()
        if not self.cons:
            return SolveResult("EXHAUSTED", out, exact=True)
        complement = {u.name: self.V[u.name].complement(self.D[u.name]) for u in self.ints}
        no_violation_possible = (not self.const_false and not self.residual
                                 and not any(complement.values()))
        if no_violation_possible:
            return SolveResult("EXHAUSTED", out, exact=True)
        total = self.space(self.D)
        if total is not None:
            cands = list(self.enumerate(self.D))
            groups = [cands]
            if self.hints:
                groups = [[], []]
                for c in cands:
                    groups[0 if self.hints_hold(self._with_arrays(c)) else 1].append(c)
            for group in groups:
                for c in group:
                    for full in self.variants(c, True):
                        self.accept(full, "VIOL", seen, out, False)
                        if len(out) >= req.max_solutions:
                            return SolveResult("SAT", out)
            return SolveResult("SAT" if len(out) >= req.max_solutions else "EXHAUSTED", out,
                               exact=not self.arrays)
        passes = []

        def regions(x, restrict):
            rs = [r for r in (complement[x], self.V[x]) if r]
            if restrict is not None:
                rs = [r.intersect(restrict) for r in rs]
                rs = [r for r in rs if r]
            return rs

        if self.hints:
            passes.append(({x: regions(x, self.H.get(x)) for x in self.D}, True))
        passes.append(({x: regions(x, None) for x in self.D}, False))
        for doms, need_hint in passes:
            if any(not rs for rs in doms.values()):
                continue
            attempts = req.budget // len(passes)
            for c in self.sample(doms, attempts):
                for full in self.variants(c, True):
                    self.accept(full, "VIOL", seen, out, need_hint)
                    if len(out) >= req.max_solutions:
                        return SolveResult("SAT", out)
        return SolveResult("EXHAUSTED", out)


def _solve_linear(a, b, op, U: IntervalSet) -> IntervalSet:
    """Values of x in U with ``a*x + b op 0``."""
    if a == 0:
        holds = {"==": b == 0, "!=": b != 0, "<": b < 0, "<=": b <= 0, ">": b > 0, ">=": b >= 0}[op]
        return U if holds else EMPTY
    if op in (">=", ">"):
        a, b = -a, -b
        op = "<=" if op == ">=" else "<"
    if op == "<":
        b, op = b + 1, "<="
    ulo, uhi = U.spans[0][0], U.spans[-1][1]
    if op == "<=":
        if a > 0:
            bound = (-b) // a
            return U.intersect(IntervalSet.of(ulo, bound))
        bound = -((-b) // (-a))  # ceil(b / -a)
        return U.intersect(IntervalSet.of(bound, uhi))
    point = IntervalSet.of(-b // a, -b // a) if (-b) % a == 0 else EMPTY
    point = point.intersect(U)
    return point if op == "==" else point.complement(U)


def evaluate(c, state=None, bindings=None) -> bool:
    """Truth of one constraint (expression or source text) under concrete bindings."""
    return eval_cond(fn_of(as_expr(c)), dict(bindings or {}), state if state is not None else _NoState())


def solve(req: SolveRequest) -> SolveResult:
    """Find up to ``max_solutions`` distinct assignments (mode decides truth)."""
    if req.max_solutions <= 0:
        return SolveResult("SAT", [])
    p = _Problem(req)
    if req.mode == VIOLATE:
        return p.violate()
    if not req.unknowns:
        ok = p.check({}) == "SAT"
        return SolveResult("SAT" if ok else "UNSAT", [{}] if ok else [], exact=True)
    return p.satisfy()


def solve_violations(req: SolveRequest) -> SolveResult:
    """Assignments falsifying the conjunction; raises DomainExhausted on a shortfall."""
    req.mode = VIOLATE
    res = solve(req)
    if len(res.solutions) < req.max_solutions:
        raise DomainExhausted(f"only {len(res.solutions)} violating assignment(s) found",
                              res.solutions)
    return res


def check_assignment(req: SolveRequest, assignment: dict) -> str:
    """Re-evaluate constraints under an assignment: 'SAT', 'VIOL' or 'ERR'."""
    return _Problem(req).check(assignment)
