"""Command-line entry point: ``gkspec check|validate|mock|fuzz|replay``.

Reports go to stdout (or ``--out``) as JSON; one-line summaries go to stderr.
Exit codes: 0 success, 1 findings or failures, 2 usage or I/O errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import FrontendError, GkError
from .fuzz import RAW, SHIELDED, TARGET_FAULT, VALIDATOR_CAUGHT, FuzzPlan, run_campaign
from .harness import MockBackend, ValidatorBackend, load_scenario, load_script, load_suite, run_suite
from .model import BUNDLED, resolve_model
from .mutations import MUTATIONS
from .services import VARIANTS, adversary, correct_fs, correct_sync
from .trace import TraceWriter
from .validator import ABORT, OK, RECORD, replay

EXIT_OK, EXIT_FINDINGS, EXIT_USAGE = 0, 1, 2

CORRECT = {"fs": correct_fs, "sync": correct_sync}


class UsageError(Exception):
    pass


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("GK_SEED")
    if env is None:
        return 0
    try:
        return int(env, 0)
    except ValueError:
        raise UsageError(f"GK_SEED={env!r} is not an integer") from None


def _model(args):
    if getattr(args, "mutation", None):
        m = MUTATIONS.get(args.mutation)
        if m is None:
            raise UsageError(f"unknown mutation {args.mutation!r} (have: {', '.join(MUTATIONS)})")
        if args.model != m.model:
            raise UsageError(f"mutation {m.id} applies to the {m.model} model")
        return m.load()
    if args.model not in BUNDLED and not Path(args.model).is_file():
        raise UsageError(f"no model file {args.model}")
    return resolve_model(args.model)


def _family(model) -> str:
    for name in BUNDLED:
        if model.name == name or model.name.startswith(name + "~"):
            return name
    return model.name


def _emit(args, obj):
    text = json.dumps(obj, indent=2) + "\n"
    if getattr(args, "out", None):
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _say(msg):
    print(msg, file=sys.stderr)


# -- subcommands ------------------------------------------------------------------


def cmd_check(args) -> int:
    try:
        model = _model(args)
    except FrontendError as e:
        _emit(args, {"model": args.model, "ok": False, "diagnostics": [
            {"kind": d.kind, "message": d.message, "line": d.line, "col": d.col} for d in e.diagnostics]})
        for d in e.diagnostics:
            _say(f"{args.model}:{d}")
        return EXIT_FINDINGS
    _emit(args, {"model": args.model, "ok": True, "diagnostics": [], "name": model.name,
                 "hash": model.hash, "actions": sorted(model.actions)})
    _say(f"{args.model}: ok ({len(model.actions)} actions)")
    return EXIT_OK


def _trace_factory(path, scripts):
    if path is None:
        return None
    p = Path(path)
    names = iter([s.name for s in scripts])
    if len(scripts) == 1:
        return lambda seed: TraceWriter(p)
    # one file per script: out.jsonl -> out.<script>.jsonl
    return lambda seed: TraceWriter(p.with_name(f"{p.stem}.{next(names)}{p.suffix}"))


def cmd_validate(args) -> int:
    model = _model(args)
    fam = _family(model)
    svc = args.service
    scripts = None
    if svc == "correct":
        if fam not in CORRECT:
            raise UsageError(f"no reference service for model {model.name!r}")
        factory, correct = CORRECT[fam], True
    elif svc == "mock":
        from .mock import MockBinding
        seed = _seed(args)
        factory, correct = (lambda: MockBinding(model, seed)), False
    elif svc in VARIANTS:
        v = VARIANTS[svc]
        if v.model != fam:
            raise UsageError(f"variant {svc} targets the {v.model} model")
        factory, correct = (lambda: adversary(CORRECT[fam](), svc)), False
        if args.suite is None:
            scripts = [load_script(v.script)]
    else:
        raise UsageError(f"unknown service {svc!r}: use correct, mock or one of {', '.join(VARIANTS)}")
    if scripts is None:
        scripts = load_suite(args.suite or fam)
    backend = ValidatorBackend(model, factory, f"validator+{svc}", correct,
                               _trace_factory(args.trace, scripts), args.policy)
    report = run_suite(scripts, backend)
    _emit(args, report.to_json())
    _say(f"validate {svc}: {len(report.results) - len(report.failures)}/{len(report.results)} passed")
    return EXIT_OK if report.passed else EXIT_FINDINGS


def cmd_mock(args) -> int:
    model = _model(args)
    scripts = load_suite(args.suite or _family(model))
    if args.seeds is not None and args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    report = run_suite(scripts, MockBackend(model, base_seed=_seed(args)), args.seeds)
    _emit(args, report.to_json())
    _say(f"mock: {len(report.results) - len(report.failures)}/{len(report.results)} passed")
    return EXIT_OK if report.passed else EXIT_FINDINGS


def cmd_fuzz(args) -> int:
    model = _model(args)
    fam = _family(model)
    if args.budget < 0:
        raise UsageError("--budget must be >= 0")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    if fam not in CORRECT:
        raise UsageError(f"no reference service for model {model.name!r}")
    mode = args.mode.upper()
    if mode == RAW and fam != "fs":
        raise UsageError("raw mode needs a target program; the demo target speaks the fs model")
    scenario = load_scenario(args.scenario or f"{fam}_campaign")
    targets = args.targets.split(",") if args.targets else None
    plan = FuzzPlan(model, targets, args.budget, _seed(args), args.hints == "on", CORRECT[fam])
    report = run_campaign(plan, scenario, mode, jobs=args.jobs)
    _emit(args, report.to_json())
    caught, faults = report.count(VALIDATOR_CAUGHT), report.count(TARGET_FAULT)
    if mode == SHIELDED:
        _say(f"fuzz shielded: {caught}/{report.total} caught by the validator")
        ok = caught == report.total
    else:
        _say(f"fuzz raw: {faults}/{report.total} injections faulted the target "
             f"({len(report.signatures)} distinct signatures)")
        ok = faults == 0
    return EXIT_OK if ok else EXIT_FINDINGS


def cmd_replay(args) -> int:
    model = _model(args)
    if not Path(args.trace).is_file():
        raise UsageError(f"no trace file {args.trace}")
    verdicts = replay(model, args.trace)
    _emit(args, {"model": model.name, "events": len(verdicts),
                 "verdicts": [v.to_json() for v in verdicts]})
    bad = sum(v.outcome != OK for v in verdicts)
    _say(f"replay: {len(verdicts)} events, {bad} not OK")
    return EXIT_OK if bad == 0 else EXIT_FINDINGS


# -- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gkspec", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("model", help=f"bundled model ({', '.join(BUNDLED)}) or a .gk file")
        sp.add_argument("--out", help="write the JSON report here instead of stdout")
        if seed:
            sp.add_argument("--seed", type=lambda s: int(s, 0), help="default: $GK_SEED, else 0")

    sp = sub.add_parser("check", help="parse and type-check a model")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("validate", help="run a suite through the validator on a service")
    common(sp)
    sp.add_argument("--service", default="correct",
                    help="correct, mock, or an adversary variant id")
    sp.add_argument("--suite", help="bundled suite name, script directory or file "
                                    "(default: the model's suite, or the variant's attack script)")
    sp.add_argument("--trace", help="record a JSONL trace (one file per script for suites)")
    sp.add_argument("--policy", choices=[ABORT, RECORD], default=ABORT)
    sp.add_argument("--mutation", help="apply a curated model mutation first")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("mock", help="run a suite against the mock")
    common(sp)
    sp.add_argument("--suite")
    sp.add_argument("--seeds", type=int, help="runs per script (default: each script's own)")
    sp.add_argument("--mutation")
    sp.set_defaults(func=cmd_mock)

    sp = sub.add_parser("fuzz", help="model-guided fault injection campaign")
    common(sp)
    sp.add_argument("--scenario", help="bundled scenario name or script file")
    sp.add_argument("--budget", type=int, default=20, help="values per injection point")
    sp.add_argument("--hints", choices=["on", "off"], default="on")
    sp.add_argument("--mode", choices=["raw", "shielded", RAW, SHIELDED], default="shielded")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--targets", help="comma-separated actions to inject into (default: all)")
    sp.set_defaults(func=cmd_fuzz)

    sp = sub.add_parser("replay", help="re-check a recorded trace against the model")
    common(sp, seed=False)
    sp.add_argument("trace")
    sp.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        return args.func(args)
    except (UsageError, OSError) as e:
        _say(f"gkspec: {e}")
        return EXIT_USAGE
    except FrontendError as e:
        _say(f"gkspec: {args.model}: {e}")
        return EXIT_FINDINGS
    except GkError as e:
        # bad scripts, corrupt traces, version mismatches, unknown names
        _say(f"gkspec: {type(e).__name__}: {e}")
        return EXIT_USAGE


