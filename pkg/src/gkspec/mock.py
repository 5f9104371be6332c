"""Service emulation from the model alone: outputs come from the constraint solver."""

from __future__ import annotations

import threading
from typing import Dict

from . import ast as A
from .errors import EvalError, ModelError, ModelUnsat, ServiceUnavailable, SessionBusy
from .gktypes import ArrayType, IntType
from .interp import ExecContext, eval_cond
from .services.base import ExternResult, ServiceBinding
from .solver import SATISFY, SolveRequest, Unknown, free_names, solve
from .validator import MODEL_ERROR, OK, VIOLATION, Verdict, parse_overrides, stmt_src

SEED_MASK = (1 << 64) - 1


class _PreconditionFailed(Exception):
    def __init__(self, src, env):
        self.src = src
        self.env = dict(env)


class _Plan:
    """Per-action solver inputs that do not depend on the call."""

    def __init__(self, model, act):
        scope = model.scope(act.name)
        self.constraints = [c.expr for c in scope.solvable()]
        self.unknowns = scope.unknowns
        self.types = {n: act.var_types[n] for n in scope.unknowns}
        t = act.site.target
        self.attempts = [self.constraints]
        if t is not None and isinstance(act.var_types.get(t), IntType):
            # success outputs first; an error only when no success output fits
            self.attempts.insert(0, self.constraints + [A.Binary(">=", A.Name(t), A.IntLit(0))])
        self.fixed = [self._fixed(c) for c in self.attempts]

    def _fixed(self, cons):
        """Precomputed outcome when ``cons`` mentions nothing but scalar unknowns.

        Returns ``(solution or None,)`` if the solution set is empty or a
        single point, else None (the call must be solved each time).
        """
        if any(isinstance(t, ArrayType) for t in self.types.values()):
            return None
        for c in cons:
            if not free_names(c) <= set(self.unknowns):
                return None
            if any(isinstance(n, (A.Call, A.Quant)) for n in A.walk_expr(c)):
                return None
        res = solve(SolveRequest(cons, [Unknown(n, t) for n, t in self.types.items()],
                                 max_solutions=2))
        if not res.exact or len(res.solutions) > 1:
            return None
        return (res.solutions[0] if res.solutions else None,)


class MockContext(ExecContext):
    def __init__(self, session: "MockSession", act, seq):
        super().__init__(session.state)
        self.session = session
        self.act = act
        self.seq = seq

    def untrusted(self, site, env):
        plan = self.session.plan(self.act)
        unknowns = []
        for n in plan.unknowns:
            t = plan.types[n]
            unknowns.append(Unknown(n, t, base=env.get(n)) if isinstance(t, ArrayType) else Unknown(n, t))
        bindings = {k: v for k, v in env.items() if k not in plan.types}
        seed = (self.session.seed ^ self.seq) & SEED_MASK
        for cons, fixed in zip(plan.attempts, plan.fixed):
            if fixed is not None:
                if fixed[0] is not None:
                    env.update(fixed[0])
                    return
                continue
            res = solve(SolveRequest(cons, unknowns, bindings, self.st, seed, SATISFY))
            if res.ok:
                env.update(res.solutions[0])
                return
        raise ModelUnsat(f"{self.act.name}: no output of {site.func} satisfies the model")

    def requires(self, stmt, fn, env):
        if eval_cond(fn, env, self.st):
            return
        if not self.called:
            raise _PreconditionFailed(stmt_src(stmt), env)
        raise ModelError(f"{self.act.name}: solved output breaks {stmt_src(stmt)}")

    def await_(self, stmt, fn, env, mapname):
        st = self.st
        if eval_cond(fn, env, st):
            return
        m = st.maps[mapname]
        poll = self.session.poll
        with m.cond:
            m.waiters += 1
            try:
                while not eval_cond(fn, env, st):
                    m.cond.wait(poll)
            finally:
                m.waiters -= 1


class MockSession:
    """The model acting as its own service.

    Equal model, seed and single-threaded call sequence give equal outputs.
    """

    def __init__(self, model, seed: int = 0, overrides=None, poll: float = 0.001):
        self.model = model
        self.seed = seed & SEED_MASK
        self.poll = poll
        self.state = model.new_state(parse_overrides(overrides), seed)
        self._plans: Dict[str, _Plan] = {}
        self._seq = 0
        self._seq_lock = threading.Lock()
        self._busy = threading.Lock()

    def plan(self, act) -> _Plan:
        p = self._plans.get(act.name)
        if p is None:
            p = self._plans[act.name] = _Plan(self.model, act)
        return p

    def invoke(self, action: str, args) -> Verdict:
        act = self.model.action(action)
        env = act.bind_args(list(args))
        exclusive = not self.model.concurrent
        if exclusive and not self._busy.acquire(blocking=False):
            raise SessionBusy(f"{self.model.name} sessions are single-threaded")
        try:
            with self._seq_lock:
                self._seq += 1
                seq = self._seq
            ctx = MockContext(self, act, seq)
            try:
                value = act.run(ctx, env)
            except _PreconditionFailed as p:
                return Verdict(VIOLATION, action, seq, None, p.src, p.env)
            except (ModelError, EvalError) as e:
                return Verdict(MODEL_ERROR, action, seq, message=str(e), kind=type(e).__name__)
            outs = {}
            if act.site is not None:
                outs = {n: env[n] for n in act.site.out_args.values() if n in env}
            return Verdict(OK, action, seq, value, outs=outs)
        finally:
            if exclusive:
                self._busy.release()


def mock_invoke(session: MockSession, action: str, args):
    """Return value of ``action``; raises ModelUnsat/ModelError or IagoViolation."""
    return session.invoke(action, args).unwrap()


# awaits block inside invoke already
mock_invoke_blocking = mock_invoke


class MockBinding(ServiceBinding):
    """Expose a mock session through the service interface, so a validator can run on it.

    An extern is served by the action that calls it with exactly its own
    parameters, in order.
    """

    def __init__(self, model, seed: int = 0, session: MockSession = None):
        self.session = session or MockSession(model, seed)
        table = {}
        self._routes = {}
        for act in model.actions.values():
            site = act.site
            if site is None:
                continue
            names = [a.id if isinstance(a, A.Name) else None for a in site.stmt.args]
            if names != [n for n, _ in act.params]:
                continue
            self._routes[site.func] = act
            table[site.func] = self._make(act)
        super().__init__(table, f"mock:{model.name}")

    def _make(self, act):
        out_idx = {name: idx for idx, name in act.site.out_args.items()}

        def call(*args):
            v = self.session.invoke(act.name, list(args))
            if v.outcome != OK:
                raise ServiceUnavailable(f"mock {act.name} failed: {v.constraint or v.message}")
            return ExternResult(v.value, {out_idx[n]: b for n, b in v.outs.items() if n in out_idx})
        return call


__all__ = ["MockSession", "MockBinding", "mock_invoke", "mock_invoke_blocking", "MockContext"]
