import pytest

from gkspec.constants import CONSTANTS as C
from gkspec.errors import DomainExhausted, ScenarioError
from gkspec.fuzz import (CLEAN, RAW, SHIELDED, TARGET_FAULT, VALIDATOR_CAUGHT, FuzzPlan,
                         caught_by_validator, generate_malicious, run_campaign, _result_of, capture)
from gkspec.harness import load_scenario, load_script
from gkspec.model import load_bundled, load_model
from gkspec.services import correct_fs
from gkspec.validator import init_session, invoke

FS = load_bundled("fs")
RDWR_CREAT = C["O_RDWR"] | C["O_CREAT"]
W = bytes([0xFF]) * 100


def after_write():
    s = init_session(FS, correct_fs())
    fd = invoke(s, "open", ["/foo", RDWR_CREAT, 0o644]).unwrap()
    invoke(s, "write", [fd, W, 100]).unwrap()
    invoke(s, "lseek", [fd, 0, C["SEEK_SET"]]).unwrap()
    return s.state, fd


class TestGenerate:
    def test_read_values_violate(self):
        st, fd = after_write()
        args = [fd, bytes(100), 100]
        vals = generate_malicious(FS, st, "read", args, budget=20, seed=1)
        assert len(vals) == 20
        assert len({(v["nread"], v["buf"]) for v in vals}) == 20
        point = capture(FS, st, "read", args)
        for v in vals:
            assert caught_by_validator(FS, st, "read", args, _result_of(point, v))
        # wrong byte counts and right counts with wrong contents both appear
        assert any(not 0 <= v["nread"] <= 100 for v in vals)
        assert any(v["nread"] == 100 and v["buf"] != W for v in vals)

    def test_state_untouched(self):
        st, fd = after_write()
        before = st.snapshot()
        generate_malicious(FS, st, "read", [fd, bytes(100), 100], budget=10, seed=2)
        assert st.snapshot() == before

    def test_hint_values_first(self):
        st, fd = after_write()
        vals = generate_malicious(FS, st, "read", [fd, bytes(10), 10], budget=10, seed=4)
        assert all(v["nread"] >= -131 for v in vals)

    def test_live_fd_is_a_candidate(self):
        st, fd = after_write()
        vals = generate_malicious(FS, st, "open", ["/foo2", RDWR_CREAT, 0o644], budget=200, seed=0)
        assert any(v["newfd"] == fd for v in vals)

    def test_pre_call_return_point(self):
        st, _ = after_write()
        vals = generate_malicious(FS, st, "open", ["/missing", C["O_RDONLY"], 0], budget=5, seed=0)
        assert all(v["newfd"] != -C["ENOENT"] for v in vals)

    def test_tautology_exhausts(self):
        m = load_model("""
action a(p: int) returns (r: int) := {
  r := extern call untrusted_a(p);
  requires (true);
  return r;
}""", "taut")
        with pytest.raises(DomainExhausted):
            generate_malicious(m, m.new_state(), "a", [0], budget=3)

    def test_deterministic(self):
        st, fd = after_write()
        a = generate_malicious(FS, st, "read", [fd, bytes(100), 100], budget=8, seed=9)
        b = generate_malicious(FS, st, "read", [fd, bytes(100), 100], budget=8, seed=9)
        assert a == b

    def test_hints_only_reorder(self):
        small = load_model("""
action a(p: char) returns (r: char) := {
  r := extern call untrusted_a(p);
  requires (r >= 10);
  fuzz { requires (r < 5); }
  return r;
}""", "tiny")
        on = generate_malicious(small, small.new_state(), "a", [0], budget=10, seed=1, hints=True)
        off = generate_malicious(small, small.new_state(), "a", [0], budget=10, seed=1, hints=False)
        assert {v["r"] for v in on} == {v["r"] for v in off} == set(range(10))
        assert all(v["r"] < 5 for v in on[:5])


class TestCampaign:
    def test_budget_zero(self):
        rep = run_campaign(FuzzPlan(FS, budget=0), load_scenario("fs_campaign"))
        assert rep.total == 0 and rep.to_json()["records"] == []

    def test_shielded_all_caught(self):
        rep = run_campaign(FuzzPlan(FS, budget=5, seed=3), load_scenario("fs_campaign"), SHIELDED)
        assert rep.total == 5 * len(rep.points) and rep.total > 0
        assert rep.count(VALIDATOR_CAUGHT) == rep.total

    def test_raw_finds_fd_confusion(self):
        rep = run_campaign(FuzzPlan(FS, ["open"], budget=20, seed=0), load_scenario("fs_campaign"), RAW)
        hits = [r for r in rep.records if r.outcome == TARGET_FAULT and r.attribution == "fd_confusion"]
        assert hits and all(r.action == "open" for r in hits)
        assert any("use-after-close" in r.signature for r in hits)

    def test_targets_filter(self):
        rep = run_campaign(FuzzPlan(FS, ["close"], budget=2), load_scenario("fs_campaign"))
        assert {p["action"] for p in rep.points} == {"close"}

    def test_parallel_equals_serial(self):
        plan = FuzzPlan(FS, budget=4, seed=5)
        sc = load_scenario("fs_campaign")
        assert run_campaign(plan, sc, RAW, jobs=4).to_json() == run_campaign(plan, sc, RAW).to_json()

    def test_failing_scenario(self):
        sc = load_script({"name": "bad", "steps": [
            {"action": "open", "args": ["/nope", "O_RDONLY", 0], "expect": ">= 0"}]})
        with pytest.raises(ScenarioError):
            run_campaign(FuzzPlan(FS, budget=1), sc)

    def test_negative_budget(self):
        with pytest.raises(ValueError):
            FuzzPlan(FS, budget=-1)

    def test_outcome_names(self):
        rep = run_campaign(FuzzPlan(FS, ["read"], budget=3), load_scenario("fs_campaign"), RAW)
        assert set(rep.to_json()["outcomes"]) == {CLEAN, TARGET_FAULT, VALIDATOR_CAUGHT}
