import json
import threading

import pytest

from gkspec.constants import CONSTANTS as C
from gkspec.errors import (ArgTypeMismatch, CorruptTrace, IagoViolation, InitTypeMismatch,
                           ServiceUnavailable, SessionBusy, TraceVersionMismatch, UnknownAction)
from gkspec.model import load_bundled, load_model
from gkspec.services import adversary, correct_fs, correct_sync
from gkspec.services.base import ExternResult, ServiceBinding
from gkspec.trace import TraceWriter, parse_trace
from gkspec.validator import (ABORT, MODEL_ERROR, OK, RECORD, VIOLATION, ValidatorSession,
                              init_session, invoke, replay)

FS = load_bundled("fs")
SYNC = load_bundled("sync")
RDWR_CREAT = C["O_RDWR"] | C["O_CREAT"]
W = bytes([0xFF]) * 100


def listing3(session):
    """create foo, write 100 bytes, seek back, read them."""
    fd = invoke(session, "open", ["/foo", RDWR_CREAT, 0o644]).unwrap()
    out = [invoke(session, "write", [fd, W, 100]),
           invoke(session, "lseek", [fd, 0, C["SEEK_SET"]]),
           invoke(session, "read", [fd, bytes(100), 100])]
    return fd, out


class TestInit:
    def test_empty_init(self):
        m = load_model("Map m(k: int) returns (v: int);")
        s = init_session(m, ServiceBinding())
        assert s.state.keys("m") == []

    def test_overrides_applied(self):
        s = init_session(FS, correct_fs(), 'fs_state("/bar").ino := 7; ino_state(7).sz := 0;')
        assert s.state.get("fs_state", ("/bar",)) == {"ino": 7}
        assert s.state.get("ino_state", (7,))["sz"] == 0

    def test_override_after_init_wins(self):
        s = init_session(FS, correct_fs(), 'proc_state(0).cwd := "/tmp";')
        assert s.state.get("proc_state", (0,))["cwd"] == "/tmp"

    def test_override_type_mismatch(self):
        with pytest.raises(InitTypeMismatch):
            init_session(FS, correct_fs(), 'fs_state("/bar").ino := "x";')

    def test_missing_externs(self):
        with pytest.raises(ServiceUnavailable):
            init_session(FS, ServiceBinding({}, "empty"))

    def test_trace_starts_with_init(self):
        tw = TraceWriter()
        s = init_session(FS, correct_fs(), trace=tw)
        s.close()
        lines = tw.getvalue().splitlines()
        assert "init" in json.loads(lines[1])


class TestInvoke:
    def test_listing3_on_correct_service(self):
        s = init_session(FS, correct_fs())
        _, (w, sk, r) = listing3(s)
        assert (w.outcome, w.value) == (OK, 100)
        assert sk.value == 0
        assert r.outcome == OK and r.value == 100
        assert r.outs["buf"] == W

    def test_pre_call_return_checked_against_service(self):
        s = init_session(FS, correct_fs())
        v = invoke(s, "open", ["/missing", C["O_RDONLY"], 0])
        assert (v.outcome, v.value) == (OK, -C["ENOENT"])

    def test_pre_call_return_mismatch_is_violation(self):
        class Liar(ServiceBinding):
            def call(self, fn, args):
                return ExternResult(5 if fn == "untrusted_os_open" else 0, {})
        s = init_session(FS, Liar(correct_fs().table, "liar"))
        v = invoke(s, "open", ["/missing", C["O_RDONLY"], 0])
        assert v.outcome == VIOLATION
        assert v.constraint.startswith("return") and v.bindings["ret"] == 5

    def test_fd_confusion(self):
        s = init_session(FS, adversary(correct_fs(), "FD_CONFUSION"))
        assert invoke(s, "open", ["/foo", RDWR_CREAT, 0o644]).ok
        v = invoke(s, "open", ["/foo2", RDWR_CREAT, 0o644])
        assert v.outcome == VIOLATION
        assert v.constraint == "requires (fd_state(newfd) == NULL)"
        assert v.seq == 2 and v.bindings["newfd"] == 3
        with pytest.raises(IagoViolation):
            v.unwrap()

    def test_double_lock_grant(self):
        s = init_session(SYNC, adversary(correct_sync(), "DOUBLE_LOCK_GRANT"))
        from gkspec.trusted import as_tid
        with as_tid(1):
            assert invoke(s, "mutex_init", [7, C["MUTEX_NORMAL"]]).ok
            assert invoke(s, "mutex_lock", [7]).ok
        with as_tid(2):
            v = invoke(s, "mutex_lock", [7])
        assert v.outcome == VIOLATION
        assert "mutex_state(id).counter == 0" in v.constraint

    def test_record_policy_collects_all(self):
        s = init_session(FS, adversary(correct_fs(), "WRONG_DATA"), policy=RECORD)
        _, (_, _, r) = listing3(s)
        assert r.outcome == VIOLATION and len(r.violations) >= 1

    def test_abort_stops_state_update(self):
        s = init_session(FS, adversary(correct_fs(), "SHORT_READ_LIE"))
        fd, (_, _, r) = listing3(s)
        assert r.outcome == VIOLATION
        assert s.state.get("fd_state", (fd,))["off"] == 0

    def test_unknown_action_and_bad_args(self):
        s = init_session(FS, correct_fs())
        with pytest.raises(UnknownAction):
            invoke(s, "frobnicate", [])
        with pytest.raises(ArgTypeMismatch):
            invoke(s, "close", ["three"])
        with pytest.raises(ArgTypeMismatch):
            invoke(s, "close", [])

    def test_state_divergence_detected(self):
        svc = correct_fs()
        s = init_session(FS, svc)
        fd, _ = listing3(s)
        svc.fs.inodes[svc.fs.paths["/foo"]].data = bytearray(b"\x00" * 100)
        invoke(s, "lseek", [fd, 0, C["SEEK_SET"]])
        assert invoke(s, "read", [fd, bytes(100), 100]).outcome == VIOLATION

    def test_malformed_output_is_violation(self):
        class Huge(ServiceBinding):
            def call(self, fn, args):
                return ExternResult(1 << 70, {})
        s = init_session(FS, Huge(correct_fs().table, "huge"))
        v = invoke(s, "open", ["/foo", RDWR_CREAT, 0o644])
        assert v.outcome == VIOLATION and v.constraint.startswith("well-formed output")

    def test_fs_sessions_single_threaded(self):
        gate, release = threading.Event(), threading.Event()

        class Slow(ServiceBinding):
            def call(self, fn, args):
                gate.set()
                release.wait(5)
                return base.call(fn, args)
        base = correct_fs()
        s = init_session(FS, Slow(base.table, "slow"))
        t = threading.Thread(target=invoke, args=(s, "open", ["/a", RDWR_CREAT, 0o644]))
        t.start()
        gate.wait(5)
        try:
            with pytest.raises(SessionBusy):
                invoke(s, "open", ["/b", RDWR_CREAT, 0o644])
        finally:
            release.set()
            t.join()

    def test_model_error_verdict(self):
        m = load_model("""
Map m(k: int) returns (v: int);
action a(p: int) returns (r: int) := {
  r := extern call untrusted_a(p);
  requires (m(p).v == 0);
  return r;
}""", "broken")
        s = init_session(m, ServiceBinding({"untrusted_a": lambda p: ExternResult(0, {})}))
        v = invoke(s, "a", [1])
        assert v.outcome == MODEL_ERROR and v.kind == "NullDereference"


class TestTraceAndReplay:
    def run(self, binding):
        tw = TraceWriter()
        s = init_session(FS, binding, trace=tw)
        live = []
        try:
            fd = invoke(s, "open", ["/foo", RDWR_CREAT, 0o644])
            live.append(fd)
            live.append(invoke(s, "write", [fd.value, W, 100]))
            live.append(invoke(s, "open", ["/foo2", RDWR_CREAT, 0o644]))
        finally:
            s.close()
        return tw.getvalue(), live

    def test_clean_replay(self):
        text, live = self.run(correct_fs())
        got = replay(FS, text)
        assert [v.outcome for v in got] == [OK, OK, OK]
        assert [v.to_json() for v in got] == [v.to_json() for v in live]

    def test_attack_replay(self):
        text, live = self.run(adversary(correct_fs(), "FD_CONFUSION"))
        got = replay(FS, text)
        assert got[-1].outcome == VIOLATION and got[-1].seq == live[-1].seq
        assert [v.to_json() for v in got] == [v.to_json() for v in live]

    def test_event_field_order(self):
        text, _ = self.run(correct_fs())
        ev = json.loads(text.splitlines()[2])
        assert list(ev)[:6] == ["seq", "action", "args", "extern", "asserts", "state_delta"]
        assert list(ev)[-1] == "verdict"

    def test_truncated(self):
        text, _ = self.run(correct_fs())
        with pytest.raises(CorruptTrace):
            replay(FS, "\n".join(text.splitlines()[:-1]) + "\n")

    def test_garbage(self):
        with pytest.raises(CorruptTrace):
            parse_trace("{not json\n", FS)

    def test_version_mismatch(self):
        text, _ = self.run(correct_fs())
        lines = text.splitlines()
        head = json.loads(lines[0])
        head["version"] = 99
        with pytest.raises(TraceVersionMismatch):
            replay(FS, "\n".join([json.dumps(head)] + lines[1:]) + "\n")

    def test_other_model_rejected(self):
        text, _ = self.run(correct_fs())
        with pytest.raises(TraceVersionMismatch):
            replay(SYNC, text)

    def test_tampered_result_detected(self):
        text, _ = self.run(correct_fs())
        lines = text.splitlines()
        ev = json.loads(lines[3])
        ev["extern"] = []
        lines[3] = json.dumps(ev)
        with pytest.raises(CorruptTrace):
            replay(FS, "\n".join(lines) + "\n")
