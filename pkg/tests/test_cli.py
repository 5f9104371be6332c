import json
import subprocess
import sys

import pytest

from gkspec.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestCheck:
    def test_bundled(self, capsys):
        code, out, _ = run(capsys, "check", "fs")
        assert code == 0 and json.loads(out)["ok"]

    def test_type_error(self, capsys, tmp_path):
        p = tmp_path / "bad.gk"
        p.write_text('action a(p: int) returns (r: int) := {\n  x: int := "foo";\n  return 0;\n}\n')
        code, out, err = run(capsys, "check", str(p))
        d = json.loads(out)["diagnostics"][0]
        assert code == 1 and d["kind"] == "TypeMismatch" and d["line"] == 2
        assert ":2:" in err

    def test_missing_file(self, capsys):
        assert run(capsys, "check", "/no/such.gk")[0] == 2

    def test_usage(self, capsys):
        assert run(capsys, "frob")[0] == 2
        assert run(capsys, "fuzz", "fs", "--hints", "maybe")[0] == 2


class TestValidateMockReplay:
    def test_correct(self, capsys):
        code, out, err = run(capsys, "validate", "fs")
        rep = json.loads(out)
        assert code == 0 and rep["failed"] == 0 and rep["total"] >= 50
        assert "passed" in err

    def test_variant(self, capsys):
        code, out, _ = run(capsys, "validate", "fs", "--service", "FD_CONFUSION")
        (r,) = json.loads(out)["results"]
        assert code == 1 and r["reason"] == "Violation" and r["step"] == 1

    def test_wrong_family_variant(self, capsys):
        assert run(capsys, "validate", "fs", "--service", "OVER_WAKE")[0] == 2

    def test_trace_then_replay(self, capsys, tmp_path):
        t = tmp_path / "attack.jsonl"
        run(capsys, "validate", "fs", "--service", "FD_CONFUSION", "--trace", str(t))
        code, out, _ = run(capsys, "replay", "fs", str(t))
        verdicts = json.loads(out)["verdicts"]
        assert code == 1 and [v["outcome"] for v in verdicts] == ["OK", "VIOLATION"]

    def test_clean_replay(self, capsys, tmp_path):
        t = tmp_path / "clean.jsonl"
        suite = tmp_path / "s.json"
        suite.write_text(json.dumps({"name": "s", "steps": [
            {"action": "open", "args": ["/f", "O_CREAT|O_RDWR", "0644"], "bind": "fd"},
            {"action": "write", "args": ["$fd", "repeat(0x41,10)", 10], "expect": "== 10"}]}))
        assert run(capsys, "validate", "fs", "--suite", str(suite), "--trace", str(t))[0] == 0
        code, out, _ = run(capsys, "replay", "fs", str(t))
        assert code == 0 and json.loads(out)["events"] == 2

    def test_corrupt_trace(self, capsys, tmp_path):
        t = tmp_path / "c.jsonl"
        t.write_text('{"version": 1}\n')
        assert run(capsys, "replay", "fs", str(t))[0] == 2

    def test_mock_and_mutant(self, capsys):
        code, out, _ = run(capsys, "mock", "fs", "--seeds", "2")
        assert code == 0 and json.loads(out)["failed"] == 0
        assert run(capsys, "mock", "fs", "--seeds", "2", "--mutation", "DROP_SIZE_BOUND")[0] == 1

    def test_out_file(self, capsys, tmp_path):
        o = tmp_path / "r.json"
        code, out, _ = run(capsys, "validate", "sync", "--out", str(o))
        assert code == 0 and out == "" and json.loads(o.read_text())["failed"] == 0


class TestFuzz:
    def test_budget_zero(self, capsys):
        code, out, _ = run(capsys, "fuzz", "fs", "--budget", "0")
        assert code == 0 and json.loads(out)["total_injections"] == 0

    def test_shielded(self, capsys):
        code, out, _ = run(capsys, "fuzz", "fs", "--budget", "3")
        rep = json.loads(out)
        assert code == 0 and rep["outcomes"]["VALIDATOR_CAUGHT"] == rep["total_injections"] > 0

    def test_raw_finds_faults(self, capsys):
        code, out, _ = run(capsys, "fuzz", "fs", "--mode", "raw", "--targets", "open")
        rep = json.loads(out)
        assert code == 1 and any(r.get("attribution") == "fd_confusion" for r in rep["records"])

    def test_seed_env_fallback(self, capsys, monkeypatch):
        monkeypatch.setenv("GK_SEED", "7")
        a = run(capsys, "fuzz", "fs", "--budget", "2")[1]
        b = run(capsys, "fuzz", "fs", "--budget", "2", "--seed", "7")[1]
        assert a == b and json.loads(a)["seed"] == 7
        monkeypatch.setenv("GK_SEED", "x")
        assert run(capsys, "fuzz", "fs", "--budget", "2")[0] == 2

    def test_byte_identical(self, capsys):
        a = run(capsys, "fuzz", "fs", "--budget", "4", "--seed", "3", "--jobs", "3")[1]
        b = run(capsys, "fuzz", "fs", "--budget", "4", "--seed", "3")[1]
        assert a == b

    def test_raw_needs_fs(self, capsys):
        assert run(capsys, "fuzz", "sync", "--mode", "raw")[0] == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "gkspec", "check", "sync"], capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["ok"]
