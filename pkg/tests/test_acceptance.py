"""End-to-end acceptance checks. Each test prints one PASS/FAIL line for its criterion."""

import json
import random
import threading
import time

import pytest

from gkspec.cli import main
from gkspec.errors import DomainExhausted
from gkspec.fuzz import (CLEAN, RAW, SHIELDED, TARGET_FAULT, VALIDATOR_CAUGHT, FuzzPlan, _clean_run,
                         _result_of, capture, caught_by_validator, run_campaign)
from gkspec.harness import (FAIL, VIOLATION, MockBackend, ValidatorBackend, load_scenario, load_script,
                            load_suite, run_script, run_suite)
from gkspec.mock import MockSession
from gkspec.model import load_bundled
from gkspec.mutations import MUTATIONS, kill
from gkspec.services import VARIANTS, adversary, correct_fs, correct_sync
from gkspec.solver import solve, solve_violations
from gkspec.trace import TraceWriter, read_trace
from gkspec.validator import ValidatorSession, replay

from solver_oracle import brute, key, random_case

FS = load_bundled("fs")
SYNC = load_bundled("sync")
CORRECT = {"fs": correct_fs, "sync": correct_sync}


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail
    return emit


def _validator_suites(fs_model=FS):
    t = time.monotonic()
    fs = run_suite(load_suite("fs"), ValidatorBackend(fs_model, correct_fs, correct=True))
    sync = run_suite(load_suite("sync"), ValidatorBackend(SYNC, correct_sync, correct=True))
    return fs, sync, time.monotonic() - t


def _mock_suites(fs_model=FS, seeds=10):
    fs = run_suite(load_suite("fs"), MockBackend(fs_model), seeds)
    sync = run_suite(load_suite("sync"), MockBackend(SYNC), seeds)
    return fs, sync


def _attacks(fs_model=FS):
    """Variant id -> (caught at the exact attack step, result)."""
    out = {}
    for vid, v in VARIANTS.items():
        model = fs_model if v.model == "fs" else SYNC
        r = run_script(load_script(v.script),
                       ValidatorBackend(model, lambda v=v: adversary(CORRECT[v.model](), v.id)))
        out[vid] = ((r.status, r.step, r.reason) == (FAIL, v.attack_step, VIOLATION), r)
    return out


def test_c1_validator_on_correct_services(report):
    fs, sync, elapsed = _validator_suites()
    names = {r.name for r in fs.results}
    ok = (len(fs.results) >= 50 and "listing3_read_after_write" in names
          and fs.passed and sync.passed and elapsed < 10.0)
    report(1, ok, f"fs {len(fs.results) - len(fs.failures)}/{len(fs.results)}, "
                  f"sync {len(sync.results) - len(sync.failures)}/{len(sync.results)} "
                  f"on validator+correct, 0 violations required, {elapsed:.2f}s (< 10s)")


def test_c2_mock_passes_suites_over_ten_seeds(report):
    fs, sync = _mock_suites()
    seeds = {r.seed for r in fs.results}
    ok = fs.passed and sync.passed and len(seeds) == 10
    report(2, ok, f"mock fs {len(fs.results) - len(fs.failures)}/{len(fs.results)}, "
                  f"sync {len(sync.results) - len(sync.failures)}/{len(sync.results)} "
                  f"runs across {len(seeds)} seeds")


def test_c3_adversaries_caught_at_attack_step(report):
    res = _attacks()
    caught = [vid for vid, (ok, _) in res.items() if ok]
    missed = {vid: (r.status, r.step, r.reason) for vid, (ok, r) in res.items() if not ok}
    report(3, len(res) == 7 and not missed,
           f"{len(caught)}/{len(res)} variants flagged at their attack step"
           + (f"; missed {missed}" if missed else ""))


def _independent_recheck(plan, scenario, rep):
    """Re-derive each injection's pre-call state and re-ask the validator about its values."""
    steps = _clean_run(plan, scenario)
    bad = 0
    for rec in rep.records:
        args, snap, _ = steps[rec.step]
        point = capture(plan.model, snap, rec.action, args)
        if not caught_by_validator(plan.model, snap, rec.action, args, _result_of(point, rec.values)):
            bad += 1
    return bad


def test_c4_shielded_campaign_all_caught(report):
    plan = FuzzPlan(FS, budget=20, seed=1)
    scenario = load_scenario("fs_campaign")
    rep = run_campaign(plan, scenario, SHIELDED)
    not_violations = _independent_recheck(plan, scenario, rep)
    short = [p for p in rep.points if p["generated"] < 20 and not p["exhausted"]]
    caught, clean = rep.count(VALIDATOR_CAUGHT), rep.count(CLEAN)
    ok = (rep.total > 0 and caught == rep.total and clean == 0 and not_violations == 0
          and not short)
    report(4, ok, f"{caught}/{rep.total} VALIDATOR_CAUGHT, {clean} CLEAN over {len(rep.points)} "
                  f"points at budget 20; {not_violations} values failed the independent violation "
                  f"re-check")


def test_c5_raw_campaign_exposes_fd_confusion(report):
    rep = run_campaign(FuzzPlan(FS, budget=20, seed=1), load_scenario("fs_campaign"), RAW)
    fd = [r for r in rep.records if r.outcome == TARGET_FAULT and r.attribution == "fd_confusion"]
    report(5, len(fd) >= 1,
           f"{rep.count(TARGET_FAULT)}/{rep.total} injections faulted the demo target, "
           f"{len(fd)} attributed to fd confusion; signatures {rep.signatures}")


def test_c6_core_mutations_killed(report):
    tighten = MUTATIONS["TIGHTEN_NREAD_LE_CNT"].load()
    size = MUTATIONS["DROP_SIZE_BOUND"].load()
    fresh = MUTATIONS["DROP_FRESH_FD"].load()
    fs1, sync1, _ = _validator_suites(tighten)
    fails_c1 = not (fs1.passed and sync1.passed)
    fs2, sync2 = _mock_suites(size)
    fails_c2 = not (fs2.passed and sync2.passed)
    missed = [vid for vid, (ok, _) in _attacks(fresh).items() if not ok]
    fails_c3 = bool(missed)
    via_api = {m: kill(MUTATIONS[m]).killed for m in ("TIGHTEN_NREAD_LE_CNT", "DROP_SIZE_BOUND",
                                                      "DROP_FRESH_FD")}
    ok = fails_c1 and fails_c2 and fails_c3 and all(via_api.values())
    report(6, ok, f"TIGHTEN fails criterion 1 ({len(fs1.failures)} scripts): {fails_c1}; "
                  f"DROP_SIZE_BOUND fails criterion 2 ({len(fs2.failures)} runs): {fails_c2}; "
                  f"DROP_FRESH_FD fails criterion 3 (missed {missed}): {fails_c3}")


THREADS, PAIRS = 8, 10_000


def _stress(session):
    session.invoke("mutex_init", [7, 0])
    flag = [False]
    flag_lock = threading.Lock()
    double, errors = [], []

    def worker():
        for _ in range(PAIRS):
            v = session.invoke("mutex_lock", [7])
            if not v.ok:
                errors.append(v)
                return
            with flag_lock:  # test-and-set
                if flag[0]:
                    double.append(1)
                flag[0] = True
            with flag_lock:
                flag[0] = False
            v = session.invoke("mutex_unlock", [7])
            if not v.ok:
                errors.append(v)
                return

    ts = [threading.Thread(target=worker) for _ in range(THREADS)]
    t = time.monotonic()
    for th in ts:
        th.start()
    for th in ts:
        th.join()
    return len(double), errors, time.monotonic() - t


def test_c7_sync_stress(report):
    m_double, m_err, m_t = _stress(MockSession(SYNC, 7))
    v_double, v_err, v_t = _stress(ValidatorSession(SYNC, correct_sync()))
    ok = (m_double == v_double == 0 and not m_err and not v_err and m_t < 30.0 and v_t < 30.0)
    report(7, ok, f"{THREADS}x{PAIRS} lock/unlock pairs: mock {m_t:.1f}s, {m_double} double-sets, "
                  f"{len(m_err)} errors; validator+correct {v_t:.1f}s, {v_double} double-sets, "
                  f"{len(v_err)} violations")


def test_c8_solver_matches_brute_force(report):
    rng = random.Random(20240)
    disagreements = 0
    for _ in range(1000):
        req, formulas, doms = random_case(rng)
        sat, viol = brute(formulas, doms)
        r = solve(req(3))
        keys = [key(s) for s in r.solutions]
        ok = (r.ok == bool(sat) and all(k in sat for k in keys) and len(set(keys)) == len(keys)
              and len(keys) == min(3, len(sat)))
        try:
            v, exhausted = solve_violations(req(5)).solutions, False
        except DomainExhausted as e:
            v, exhausted = e.solutions, True
        vkeys = [key(s) for s in v]
        ok = ok and (all(k in viol for k in vkeys) and len(set(vkeys)) == len(vkeys)
                     and exhausted == (len(viol) < 5) and len(vkeys) == min(5, len(viol)))
        disagreements += not ok
    report(8, disagreements == 0, f"1000 random cases (domains <= 2^12), "
                                  f"{disagreements} disagreements with brute force")


def _cli(argv, tmp_path, name):
    out = tmp_path / name
    code = main(argv + ["--out", str(out)])
    return code, out.read_bytes()


def _replay_matches(model, service_factory, script, tmp_path):
    path = tmp_path / f"{model.name}.{script.name}.jsonl"
    backend = ValidatorBackend(model, service_factory, trace_factory=lambda seed: TraceWriter(path))
    run_script(script, backend)
    recorded = [ev["verdict"] for ev in read_trace(path, model).events]
    replayed = [v.to_json() for v in replay(model, path)]
    return recorded == replayed and len(recorded) > 0


def test_c9_determinism_and_replay(report, tmp_path):
    runs = {
        "mock fs": ["mock", "fs", "--seed", "42", "--seeds", "3"],
        "mock sync": ["mock", "sync", "--seed", "42", "--seeds", "3"],
        "fuzz shielded": ["fuzz", "fs", "--seed", "9"],
        "fuzz raw": ["fuzz", "fs", "--seed", "9", "--mode", "raw"],
        "fuzz raw jobs": ["fuzz", "fs", "--seed", "9", "--mode", "raw", "--jobs", "4"],
    }
    outputs = {}
    for label, argv in runs.items():
        a = _cli(argv, tmp_path, f"{label}.a.json")[1]
        b = _cli(argv, tmp_path, f"{label}.b.json")[1]
        outputs[label] = a == b
    outputs["fuzz jobs agree"] = ((tmp_path / "fuzz raw.a.json").read_bytes()
                                  == (tmp_path / "fuzz raw jobs.a.json").read_bytes())
    json.loads((tmp_path / "fuzz raw.a.json").read_text())

    traces = [(FS, correct_fs, s) for s in load_suite("fs")]
    traces += [(SYNC, correct_sync, s) for s in load_suite("sync")
               if not any(st.spawn or st.join for st in s.steps)]
    for vid, v in VARIANTS.items():
        model = FS if v.model == "fs" else SYNC
        traces.append((model, lambda v=v: adversary(CORRECT[v.model](), v.id), load_script(v.script)))
    replay_bad = [s.name for m, f, s in traces if not _replay_matches(m, f, s, tmp_path)]
    identical = all(outputs.values())
    report(9, identical and not replay_bad,
           f"fixed-seed outputs byte-identical: {sum(outputs.values())}/{len(outputs)}; "
           f"replay reproduced verdicts for {len(traces) - len(replay_bad)}/{len(traces)} traces"
           + (f"; mismatched {replay_bad}" if replay_bad else ""))
