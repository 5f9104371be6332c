"""Model-guided fault injection.

For a call point, the fuzzer solves the negation of the call's scoped
constraints against the current model state, so every emitted output is one
the model forbids. A campaign replays a scenario once per (point, value),
substituting that output at the point. In SHIELDED mode the run goes through
the validator and must be caught there; in RAW mode it goes straight into a
target program to see whether the target survives it.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional

from . import ast as A
from .errors import DomainExhausted, EvalError, GkError, ScenarioError, ScriptParseError
from .gktypes import ArrayType
from .harness import TestScript, check_script, expectation_holds, parse_pattern, resolve_arg
from .interp import ExecContext, ReturnSignal
from .services.base import ExternResult, ServiceBinding
from .services.demo_target import DemoTarget, TargetFault
from .solver import SolveRequest, Unknown, free_names, solve_violations
from .state import StateOverlay, encode_value
from .validator import VIOLATION, ValidatorContext, _Abort

RAW = "RAW"
SHIELDED = "SHIELDED"
CLEAN = "CLEAN"
TARGET_FAULT = "TARGET_FAULT"
VALIDATOR_CAUGHT = "VALIDATOR_CAUGHT"

DEFAULT_BUDGET = 20


# -- call-point capture ---------------------------------------------------------


@dataclass
class CallPoint:
    """The environment an action has when it reaches its untrusted call."""

    action: object
    env: dict
    expected: Optional[int] = None  # set when the model returns before calling


class _Captured(Exception):
    def __init__(self, point):
        self.point = point


class _CaptureContext(ExecContext):
    def __init__(self, st, act):
        super().__init__(st)
        self.act = act

    def untrusted(self, site, env):
        raise _Captured(CallPoint(self.act, dict(env)))

    def pre_return(self, action, value, env, stmt=None):
        raise _Captured(CallPoint(self.act, dict(env), value))

    def requires(self, stmt, fn, env):
        if not fn(env, self.st):
            raise ScenarioError(f"{self.act.name}: precondition {stmt.cond} fails before the call")


def capture(model, state, action: str, args) -> Optional[CallPoint]:
    """Run ``action`` up to its untrusted call on a throwaway view of ``state``."""
    act = model.action(action)
    if act.site is None:
        return None
    env = act.bind_args(list(args))
    try:
        act.run(_CaptureContext(StateOverlay(state), act), env)
    except _Captured as c:
        return c.point
    except ReturnSignal:
        return None
    return None


# -- candidate generation -------------------------------------------------------


def _result_of(point: CallPoint, cand: dict) -> ExternResult:
    site = point.action.site
    outs = {i: cand[n] for i, n in site.out_args.items() if n in cand}
    return ExternResult(cand.get(site.target), outs)


class _FixedBinding(ServiceBinding):
    def __init__(self, result: ExternResult):
        super().__init__({}, "fixed")
        self.result = result

    def call(self, fn, args):
        self.calls += 1
        return self.result


class _TrialSession:
    def __init__(self, state, binding):
        self.state = state
        self.binding = binding
        self.trace = None
        self.policy = "ABORT"


def caught_by_validator(model, state, action: str, args, result: ExternResult) -> bool:
    """Would the validator flag ``result`` as this call's output? (state is not modified)"""
    act = model.action(action)
    env = act.bind_args(list(args))
    ctx = ValidatorContext(_TrialSession(StateOverlay(state), _FixedBinding(result)), act, 0)
    try:
        act.run(ctx, env)
    except _Abort:
        return True
    except (EvalError, TypeError):
        return bool(ctx.violations)
    return bool(ctx.violations)


def _request(model, point: CallPoint, seed: int, hints: bool, budget: int) -> SolveRequest:
    act = point.action
    site = act.site
    if point.expected is not None:
        t = site.target
        cons = [A.Binary("==", A.Name(t), A.IntLit(point.expected))]
        unknowns = [Unknown(t, act.var_types[t])]
        hint_exprs = []
    else:
        scope = model.scope(act.name)
        names = set(scope.unknowns)
        cons = [c.expr for c in scope.constraints if free_names(c.expr) & names]
        unknowns = []
        for n in scope.unknowns:
            t = act.var_types[n]
            unknowns.append(Unknown(n, t, base=point.env.get(n)) if isinstance(t, ArrayType)
                            else Unknown(n, t))
        hint_exprs = list(scope.hints) if hints else []
    bindings = {k: v for k, v in point.env.items() if k not in {u.name for u in unknowns}}
    return SolveRequest(cons, unknowns, bindings, None, seed, hints=hint_exprs, max_solutions=budget)


def generate_malicious(model, state, action: str, args, budget: int = DEFAULT_BUDGET,
                       seed: int = 0, hints: bool = True) -> List[dict]:
    """Up to ``budget`` distinct outputs of ``action``'s untrusted call that the model rejects.

    Each assignment maps the call's outputs (return variable and written
    buffers) to values. Every one is confirmed by running the validator on it
    against ``state``. Raises DomainExhausted (carrying the partial list) if
    fewer exist.
    """
    if budget <= 0:
        return []
    point = capture(model, state, action, args)
    if point is None:
        raise DomainExhausted(f"{action} does not reach its untrusted call", [])
    req = _request(model, point, seed, hints, budget)
    req.state = StateOverlay(state)
    req.oracle = lambda cand: caught_by_validator(model, state, action, args, _result_of(point, cand))
    return solve_violations(req).solutions


# -- campaigns -------------------------------------------------------------------


@dataclass
class FuzzPlan:
    model: object
    targets: Optional[List[str]] = None  # action names; None means every action
    budget: int = DEFAULT_BUDGET
    seed: int = 0
    hints: bool = True
    service_factory: Optional[Callable[[], ServiceBinding]] = None

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError("budget must be >= 0")
        if self.service_factory is None:
            from .services import correct_fs, correct_sync
            self.service_factory = {"fs": correct_fs, "sync": correct_sync}.get(self.model.name)
            if self.service_factory is None:
                raise ScenarioError(f"no default service for model {self.model.name!r}")

    def targets_action(self, name) -> bool:
        return self.targets is None or name in self.targets


@dataclass
class InjectionRecord:
    point: int
    step: int
    action: str
    seq: int
    values: dict
    outcome: str
    detail: str = ""
    signature: Optional[str] = None
    attribution: Optional[str] = None

    def to_json(self):
        d = {"point": self.point, "step": self.step, "action": self.action, "seq": self.seq,
             "values": {k: encode_value(v) for k, v in sorted(self.values.items())},
             "outcome": self.outcome}
        if self.detail:
            d["detail"] = self.detail
        if self.signature:
            d["signature"] = self.signature
        if self.attribution:
            d["attribution"] = self.attribution
        return d


@dataclass
class FuzzCampaignReport:
    mode: str
    model: str
    scenario: str
    budget: int
    seed: int
    hints: bool
    points: List[dict] = field(default_factory=list)
    records: List[InjectionRecord] = field(default_factory=list)

    @property
    def total(self) -> int:
        return len(self.records)

    def count(self, outcome) -> int:
        return sum(r.outcome == outcome for r in self.records)

    @property
    def signatures(self) -> List[str]:
        return sorted({r.signature for r in self.records if r.signature})

    def to_json(self):
        return {
            "mode": self.mode, "model": self.model, "scenario": self.scenario,
            "budget": self.budget, "seed": self.seed, "hints": self.hints,
            "total_injections": self.total,
            "outcomes": {o: self.count(o) for o in (CLEAN, TARGET_FAULT, VALIDATOR_CAUGHT)},
            "fault_signatures": self.signatures,
            "points": self.points,
            "records": [r.to_json() for r in self.records],
        }


class InjectingBinding(ServiceBinding):
    """Pass-through binding that overrides the result of the call made while armed."""

    def __init__(self, base: ServiceBinding):
        super().__init__(base.table, f"{base.name}+inject")
        self.base = base
        self.pending: Optional[ExternResult] = None

    def arm(self, result: ExternResult):
        self.pending = result

    def call(self, fn, args):
        r = self.base.call(fn, args)
        if self.pending is not None:
            inj, self.pending = self.pending, None
            outs = dict(r.outs)
            outs.update(inj.outs)
            return ExternResult(inj.ret, outs)
        return r


def _check_scenario(script: TestScript, model):
    check_script(script, model)
    for st in script.steps:
        if st.action is None or st.spawn is not None:
            raise ScenarioError(f"{script.name}: campaigns need a sequential scenario (no spawn/join)")


def _args(model, step, env):
    act = model.action(step.action)
    try:
        return [resolve_arg(a, t, env) for a, (_, t) in zip(step.args, act.params)]
    except (KeyError, ScriptParseError) as e:
        raise ScenarioError(f"step args: {e}") from None


def _clean_run(plan: FuzzPlan, script: TestScript):
    """Run the scenario on validator + correct service; returns per-step (args, state copy)."""
    from .validator import ValidatorSession
    model = plan.model
    sess = ValidatorSession(model, plan.service_factory())
    env, steps = {}, []
    for i, st in enumerate(script.steps):
        args = _args(model, st, env)
        snap = model.new_state()
        snap.restore(sess.state.snapshot())
        v = sess.invoke(st.action, args)
        if not v.ok:
            raise ScenarioError(f"{script.name}: clean run fails at step {i}: {v.constraint or v.message}")
        if st.expect is not None and not expectation_holds(st.expect, v.value, env):
            raise ScenarioError(f"{script.name}: clean run step {i} returned {v.value}, "
                                f"expected {st.expect}")
        if st.expect_buf is not None and v.outs:
            if list(v.outs.values())[0][:len(parse_pattern(st.expect_buf))] != parse_pattern(st.expect_buf):
                raise ScenarioError(f"{script.name}: clean run step {i} buffer mismatch")
        steps.append((args, snap, v.seq))
        if st.bind:
            env[st.bind] = v.value
    return steps


def _run_shielded(plan, script, point_step, result):
    from .validator import ValidatorSession
    model = plan.model
    binding = InjectingBinding(plan.service_factory())
    sess = ValidatorSession(model, binding)
    env = {}
    for i, st in enumerate(script.steps[:point_step + 1]):
        args = _args(model, st, env)
        if i == point_step:
            binding.arm(result)
        v = sess.invoke(st.action, args)
        if i == point_step:
            if v.outcome == VIOLATION:
                return VALIDATOR_CAUGHT, f"{v.action}#{v.seq}: {v.constraint}", None
            return CLEAN, "", None
        if st.bind:
            env[st.bind] = v.value
    return CLEAN, "", None


def _run_raw(plan, script, point_step, result, target_factory):
    binding = InjectingBinding(plan.service_factory())
    target = target_factory(binding)
    env = {}
    confusion = False
    for i, st in enumerate(script.steps):
        args = _args(plan.model, st, env)
        if i == point_step:
            live = target.live_fds() if hasattr(target, "live_fds") else set()
            confusion = st.action == "open" and result.ret in live
            binding.arm(result)
        try:
            value = target.invoke(st.action, args)
        except KeyError:
            raise ScenarioError(f"target does not implement {st.action}") from None
        except TargetFault as f:
            sig = f"{f.kind}@{st.action}"
            return TARGET_FAULT, f"step {i}: {f}", sig, ("fd_confusion" if confusion else None)
        except (GkError, TypeError, ValueError, IndexError) as e:
            sig = f"{type(e).__name__}@{st.action}"
            return TARGET_FAULT, f"step {i}: {e}", sig, ("fd_confusion" if confusion else None)
        if st.bind:
            env[st.bind] = value
    return CLEAN, "", None, None


def run_campaign(plan: FuzzPlan, scenario: TestScript, mode: str = SHIELDED,
                 target_factory: Callable = DemoTarget, jobs: int = 1) -> FuzzCampaignReport:
    """Inject up to ``plan.budget`` model-violating outputs at every targeted step."""
    mode = mode.upper()
    if mode not in (RAW, SHIELDED):
        raise ValueError(f"unknown mode {mode!r}")
    _check_scenario(scenario, plan.model)
    report = FuzzCampaignReport(mode, plan.model.name, scenario.name, plan.budget, plan.seed, plan.hints)
    if plan.budget == 0:
        return report
    steps = _clean_run(plan, scenario)
    tasks = []
    for i, st in enumerate(scenario.steps):
        if not plan.targets_action(st.action):
            continue
        args, snap, seq = steps[i]
        act = plan.model.action(st.action)
        if act.site is None:
            continue
        point = capture(plan.model, snap, st.action, args)
        if point is None:
            continue
        exhausted = False
        try:
            values = generate_malicious(plan.model, snap, st.action, args, plan.budget,
                                        (plan.seed ^ (i * 0x9E3779B97F4A7C15)) & ((1 << 64) - 1),
                                        plan.hints)
        except DomainExhausted as e:
            values, exhausted = e.solutions, True
        idx = len(report.points)
        report.points.append({"point": idx, "step": i, "action": st.action, "seq": seq,
                              "generated": len(values), "exhausted": exhausted})
        for cand in values:
            tasks.append((idx, i, st.action, seq, cand, _result_of(point, cand)))

    def work(task):
        idx, i, action, seq, cand, result = task
        if mode == SHIELDED:
            outcome, detail, sig = _run_shielded(plan, scenario, i, result)
            attribution = None
        else:
            outcome, detail, sig, attribution = _run_raw(plan, scenario, i, result, target_factory)
        return InjectionRecord(idx, i, action, seq, cand, outcome, detail, sig, attribution)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            report.records = list(ex.map(work, tasks))
    else:
        report.records = [work(t) for t in tasks]
    return report


__all__ = [
    "RAW", "SHIELDED", "CLEAN", "TARGET_FAULT", "VALIDATOR_CAUGHT", "FuzzPlan",
    "FuzzCampaignReport", "InjectionRecord", "InjectingBinding", "generate_malicious",
    "caught_by_validator", "capture", "run_campaign", "DEFAULT_BUDGET",
]
