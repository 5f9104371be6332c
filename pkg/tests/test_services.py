import posixpath
import threading

import pytest
from hypothesis import given, strategies as st

from gkspec.constants import CONSTANTS as C
from gkspec.errors import InvalidPath, ServiceUnavailable, UnknownVariant
from gkspec.harness import ValidatorBackend, load_script, run_script
from gkspec.model import load_bundled
from gkspec.services import VARIANTS, adversary, correct_fs, correct_sync
from gkspec.trusted import as_tid, canonicalize, dirname

RDWR_CREAT = C["O_RDWR"] | C["O_CREAT"]


class TestCanonicalize:
    @pytest.mark.parametrize("cwd,path,want", [
        ("/", "spec/../f.txt", "/f.txt"),
        ("/", "/", "/"),
        ("/a/b", "c/./d//e", "/a/b/c/d/e"),
        ("/a", "../b", "/b"),
        ("/a/", "x/", "/a/x"),
    ])
    def test_examples(self, cwd, path, want):
        assert canonicalize(cwd, path) == want

    def test_empty_and_escape(self):
        with pytest.raises(InvalidPath):
            canonicalize("/", "")
        with pytest.raises(InvalidPath):
            canonicalize("/", "../x")

    @given(st.lists(st.sampled_from(["a", "b", ".", "..", "", "c"]), max_size=10),
           st.lists(st.sampled_from(["x", "y"]), max_size=3))
    def test_matches_reference_normalizer(self, comps, cwdparts):
        cwd = "/" + "/".join(cwdparts)
        path = "/".join(comps) or "."
        full = posixpath.join(cwd, path)
        depth, escapes = 0, False
        for c in full.split("/"):
            if c == "..":
                depth -= 1
                escapes |= depth < 0
            elif c not in ("", "."):
                depth += 1
        if escapes:
            with pytest.raises(InvalidPath):
                canonicalize(cwd, path)
        else:
            assert canonicalize(cwd, path) == posixpath.normpath(full).replace("//", "/")

    def test_dirname(self):
        assert dirname("/") == "/" and dirname("/a") == "/" and dirname("/a/b") == "/a"


class TestCorrectFs:
    def test_open_missing(self):
        svc = correct_fs()
        assert svc.call("untrusted_os_open", ["/nope", C["O_RDONLY"], 0]).ret == -C["ENOENT"]

    def test_write_read_round_trip(self):
        svc = correct_fs()
        fd = svc.call("untrusted_os_open", ["/f", RDWR_CREAT, 0o644]).ret
        assert fd == 3
        assert svc.call("untrusted_os_write", [fd, b"hello", 5]).ret == 5
        assert svc.call("untrusted_os_lseek", [fd, 0, C["SEEK_SET"]]).ret == 0
        r = svc.call("untrusted_os_read", [fd, bytes(8), 8])
        assert r.ret == 5 and r.outs[1][:5] == b"hello"

    def test_lowest_free_fd(self):
        svc = correct_fs()
        a = svc.call("untrusted_os_open", ["/a", RDWR_CREAT, 0o644]).ret
        b = svc.call("untrusted_os_open", ["/b", RDWR_CREAT, 0o644]).ret
        svc.call("untrusted_os_close", [a])
        assert svc.call("untrusted_os_open", ["/c", RDWR_CREAT, 0o644]).ret == a
        assert b == a + 1

    def test_unknown_extern(self):
        with pytest.raises(ServiceUnavailable):
            correct_fs().call("untrusted_os_fsync", [3])


class TestCorrectSync:
    def test_trylock_busy(self):
        svc = correct_sync()
        with as_tid(1):
            svc.call("untrusted_mutex_init", [1, C["MUTEX_NORMAL"]])
            assert svc.call("untrusted_mutex_lock", [1]).ret == 0
        with as_tid(2):
            assert svc.call("untrusted_mutex_trylock", [1]).ret == -C["EBUSY"]

    def test_cmpxchg_atomic(self):
        svc = correct_sync()
        svc.call("untrusted_futex_init", [1, 0])
        wins = []

        def worker(tid):
            with as_tid(tid):
                for _ in range(200):
                    while True:
                        # a compare that cannot match just reads the value
                        cur = svc.call("untrusted_futex_cmpxchg", [1, 10**9, 0]).ret
                        if svc.call("untrusted_futex_cmpxchg", [1, cur, cur + 1]).ret == cur:
                            wins.append(cur)
                            break

        ts = [threading.Thread(target=worker, args=(t,)) for t in range(1, 5)]
        for t in ts:
            t.start()
        for t in ts:
            t.join()
        assert sorted(wins) == list(range(800))
        assert svc.call("untrusted_futex_cmpxchg", [1, 800, 800]).ret == 800

    def test_unlock_by_non_owner(self):
        svc = correct_sync()
        with as_tid(1):
            svc.call("untrusted_mutex_init", [1, C["MUTEX_NORMAL"]])
            svc.call("untrusted_mutex_lock", [1])
        with as_tid(2):
            assert svc.call("untrusted_mutex_unlock", [1]).ret == -C["EPERM"]


class TestAdversaries:
    def test_seven_variants(self):
        assert len(VARIANTS) == 7
        assert {v.model for v in VARIANTS.values()} == {"fs", "sync"}

    def test_unknown(self):
        with pytest.raises(UnknownVariant):
            adversary(correct_fs(), "NOPE")

    def test_fd_confusion_reuses_live_fd(self):
        b = adversary(correct_fs(), "FD_CONFUSION")
        a = b.call("untrusted_os_open", ["/foo", RDWR_CREAT, 0o644]).ret
        assert b.call("untrusted_os_open", ["/foo2", RDWR_CREAT, 0o644]).ret == a
        assert b.fired == 1

    @pytest.mark.parametrize("vid", sorted(VARIANTS))
    def test_caught_at_attack_step(self, vid):
        v = VARIANTS[vid]
        base = correct_fs if v.model == "fs" else correct_sync
        model = load_bundled(v.model)
        res = run_script(load_script(v.script),
                         ValidatorBackend(model, lambda: adversary(base(), vid)))
        assert (res.status, res.step, res.reason) == ("FAIL", v.attack_step, "Violation")

    @pytest.mark.parametrize("vid", sorted(set(VARIANTS) - {"DOUBLE_LOCK_GRANT"}))
    def test_script_passes_on_correct_service(self, vid):
        v = VARIANTS[vid]
        base = correct_fs if v.model == "fs" else correct_sync
        res = run_script(load_script(v.script), ValidatorBackend(load_bundled(v.model), base, correct=True))
        assert res.status == "PASS", res.to_json()
