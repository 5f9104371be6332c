import json

import pytest

from gkspec.constants import CONSTANTS as C
from gkspec.errors import ScriptParseError
from gkspec.harness import (EXPECTATION_FAILED, FAIL, OVER_PERMISSIVE, OVER_RESTRICTIVE, PASS,
                            MockBackend, ValidatorBackend, check_script, eval_int,
                            expectation_holds, load_scenario, load_script, load_suite,
                            parse_pattern, run_script, run_suite)
from gkspec.model import load_bundled
from gkspec.mutations import CORE, MUTATIONS, kill
from gkspec.services import correct_fs, correct_sync

FS = load_bundled("fs")
SYNC = load_bundled("sync")


def script(*steps, name="t", seeds=1):
    return load_script({"name": name, "steps": list(steps), "seeds": seeds})


class TestScriptFormat:
    def test_bundled_suites(self):
        fs = load_suite("fs")
        assert len(fs) >= 50
        assert "listing3_read_after_write" in {s.name for s in fs}
        assert len(load_suite("sync")) >= 10
        for s in fs:
            check_script(s, FS)
        for s in load_suite("sync"):
            check_script(s, SYNC)

    def test_from_file_and_dir(self, tmp_path):
        obj = {"name": "x", "steps": [{"action": "close", "args": [3], "expect": "== -EBADF"}]}
        (tmp_path / "x.json").write_text(json.dumps(obj))
        assert load_script(tmp_path / "x.json").name == "x"
        assert [s.name for s in load_suite(str(tmp_path))] == ["x"]

    @pytest.mark.parametrize("bad", [
        "{", {"steps": []}, {"name": "x"}, {"name": "x", "steps": []},
        {"name": "x", "steps": [{"args": []}]},
        {"name": "x", "steps": [{"action": "close", "bogus": 1}]},
        {"name": "x", "steps": [{"action": "close", "expect": "~~ 3"}]},
        {"name": "x", "steps": [{"action": "close", "expect_buf": "zz"}]},
        {"name": "x", "steps": [{"action": "close"}], "seeds": 0},
    ])
    def test_rejects(self, bad):
        with pytest.raises(ScriptParseError):
            load_script(bad if isinstance(bad, str) else json.dumps(bad))

    def test_unknown_action(self):
        with pytest.raises(ScriptParseError):
            check_script(script({"action": "fsync", "args": [3]}), FS)

    def test_bundled_script_by_name(self):
        [s] = load_suite("listing3_read_after_write")
        assert s.name == "listing3_read_after_write"
        [s] = load_suite("mutex_lock_unlock")
        check_script(s, SYNC)

    def test_missing_suite(self):
        with pytest.raises(ScriptParseError):
            load_suite("/no/such/dir")
        with pytest.raises(ScriptParseError):
            load_scenario("nope")


class TestValues:
    def test_patterns(self):
        assert parse_pattern("repeat(0xff,3)") == b"\xff\xff\xff"
        assert parse_pattern("zeros(2)") == b"\x00\x00"
        assert parse_pattern("hex:0a0b") == b"\x0a\x0b" == parse_pattern("0a0b")
        assert parse_pattern([1, 2]) == b"\x01\x02"
        with pytest.raises(ScriptParseError):
            parse_pattern("repeat(256,1)")

    def test_int_expressions(self):
        assert eval_int("O_CREAT|O_RDWR", {}) == C["O_CREAT"] | C["O_RDWR"]
        assert eval_int("-ENOENT", {}) == -C["ENOENT"]
        assert eval_int("$fd + 1", {"fd": 3}) == 4
        with pytest.raises(ScriptParseError):
            eval_int("$nope", {})

    def test_expectations(self):
        assert expectation_holds(">= 0", 3, {})
        assert not expectation_holds("== -ENOENT", 0, {})
        assert expectation_holds("== $fd", 5, {"fd": 5})
        assert expectation_holds("any", None, {})


class TestRun:
    def test_expectation_failure(self):
        sc = script({"action": "open", "args": ["/x", "O_RDONLY", 0], "expect": ">= 0"})
        r = run_script(sc, ValidatorBackend(FS, correct_fs))
        assert (r.status, r.step, r.reason) == (FAIL, 0, EXPECTATION_FAILED)
        assert r.classification is None

    def test_buffer_expectation(self):
        steps = [
            {"action": "open", "args": ["/x", "O_CREAT|O_RDWR", "0644"], "bind": "fd"},
            {"action": "write", "args": ["$fd", "0102", 2], "expect": "== 2"},
            {"action": "lseek", "args": ["$fd", 0, "SEEK_SET"]},
            {"action": "read", "args": ["$fd", "zeros(2)", 2], "expect_buf": "0103"},
        ]
        r = run_script(script(*steps), ValidatorBackend(FS, correct_fs))
        assert (r.status, r.step, r.reason) == (FAIL, 3, EXPECTATION_FAILED)

    def test_fresh_state_per_script(self):
        sc = script({"action": "open", "args": ["/x", "O_CREAT|O_EXCL|O_RDWR", "0644"], "expect": ">= 0"})
        rep = run_suite([sc, sc], ValidatorBackend(FS, correct_fs))
        assert rep.passed

    def test_mock_runs_per_seed(self):
        sc = script({"action": "close", "args": [3], "expect": "== -EBADF"}, seeds=4)
        rep = run_suite([sc], MockBackend(FS))
        assert [r.seed for r in rep.results] == [0, 1, 2, 3]
        assert len(run_suite([sc], MockBackend(FS), seeds=2).results) == 2

    def test_spawn_join(self):
        steps = [
            {"action": "mutex_init", "args": [1, "MUTEX_NORMAL"], "expect": "== 0"},
            {"action": "mutex_lock", "args": [1], "tid": 1, "expect": "== 0"},
            {"action": "mutex_lock", "args": [1], "tid": 2, "spawn": "w", "expect": "== 0"},
            {"action": "mutex_unlock", "args": [1], "tid": 1, "expect": "== 0"},
            {"join": "w"},
            {"action": "mutex_unlock", "args": [1], "tid": 2, "expect": "== 0"},
        ]
        for backend in (ValidatorBackend(SYNC, correct_sync), MockBackend(SYNC)):
            assert run_script(script(*steps), backend).status == PASS

    def test_report_json(self):
        sc = script({"action": "close", "args": [3], "expect": "== 0"})
        rep = run_suite([sc], ValidatorBackend(FS, correct_fs, correct=True))
        j = rep.to_json()
        assert j["failed"] == 1 and j["results"][0]["classification"] == OVER_RESTRICTIVE


class TestMutations:
    def test_tightened_read_is_over_restrictive(self):
        m = MUTATIONS["TIGHTEN_NREAD_LE_CNT"].load()
        rep = run_suite([s for s in load_suite("fs") if s.name == "listing3_read_after_write"],
                        ValidatorBackend(m, correct_fs, correct=True))
        (r,) = rep.results
        assert r.status == FAIL and r.reason == "Violation" and r.classification == OVER_RESTRICTIVE

    def test_dropped_size_bound_is_over_permissive(self):
        m = MUTATIONS["DROP_SIZE_BOUND"].load()
        rep = run_suite(load_suite("fs"), MockBackend(m), 3)
        assert rep.failures and all(r.classification == OVER_PERMISSIVE for r in rep.failures)
        assert run_suite(load_suite("fs"), ValidatorBackend(m, correct_fs, correct=True)).passed

    def test_every_mutation_killed(self):
        for mid in list(CORE) + ["DROP_READ_OFFSET_UPDATE"]:
            assert kill(MUTATIONS[mid], seeds=3).killed, mid

    def test_pattern_must_exist(self):
        with pytest.raises(ValueError):
            MUTATIONS["DROP_FRESH_FD"].apply("Map m(k: int) returns (v: int);")
