"""Curated mutations of the bundled FS model for the model-debugging loop.

Each mutation is a textual edit of the model source; the harness checks that
the backend it is expected to trip (validator on the correct service for an
over-restrictive model, the mock for an over-permissive one, the attack
scripts for a missing safety check) reports at least one failure.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import Model, bundled_source, load_model


@dataclass(frozen=True)
class Mutation:
    id: str
    description: str
    model: str
    old: str
    new: str
    expect: str  # "OVER_RESTRICTIVE" | "OVER_PERMISSIVE" | "ATTACK_MISSED"

    def apply(self, source: str) -> str:
        if self.old not in source:
            raise ValueError(f"mutation {self.id}: pattern not found in model")
        return source.replace(self.old, self.new)

    def load(self) -> Model:
        return load_model(self.apply(bundled_source(self.model)), f"{self.model}~{self.id}")


MUTATIONS = {m.id: m for m in [
    Mutation("TIGHTEN_NREAD_LE_CNT", "read may not fill the whole request (nread < cnt)", "fs",
             "requires (nread >= 0 and nread <= cnt);", "requires (nread >= 0 and nread < cnt);",
             "OVER_RESTRICTIVE"),
    Mutation("DROP_SIZE_BOUND", "read is no longer bounded by the bytes left in the file", "fs",
             "  requires ((cnt >= avail) -> nread <= avail);\n", "", "OVER_PERMISSIVE"),
    Mutation("DROP_FRESH_FD", "open may return a descriptor that is already in use", "fs",
             "  requires (fd_state(newfd) == NULL);\n", "", "ATTACK_MISSED"),
    Mutation("DROP_READ_OFFSET_UPDATE", "read no longer advances the file offset", "fs",
             "  fd_state(fd).off := off + nread;\n", "", "OVER_RESTRICTIVE"),
]}

# the three from the model-debugging walkthrough; the last entry is an extra state-update drop
CORE = ("TIGHTEN_NREAD_LE_CNT", "DROP_SIZE_BOUND", "DROP_FRESH_FD")


@dataclass
class MutationResult:
    id: str
    expect: str
    killed: bool
    failures: int
    detail: str = ""

    def to_json(self):
        return {"id": self.id, "expect": self.expect, "killed": self.killed,
                "failures": self.failures, "detail": self.detail}


def kill(mutation: Mutation, seeds: int = 10) -> MutationResult:
    """Run the check that should expose ``mutation``; killed means it did."""
    from .harness import MockBackend, ValidatorBackend, load_script, load_suite, run_script, run_suite
    from .services import VARIANTS, adversary, correct_fs, correct_sync

    model = mutation.load()
    service = {"fs": correct_fs, "sync": correct_sync}[mutation.model]
    if mutation.expect == "OVER_RESTRICTIVE":
        rep = run_suite(load_suite(mutation.model), ValidatorBackend(model, service, correct=True))
    elif mutation.expect == "OVER_PERMISSIVE":
        rep = run_suite(load_suite(mutation.model), MockBackend(model), seeds)
    else:
        missed = []
        for v in VARIANTS.values():
            if v.model != mutation.model:
                continue
            r = run_script(load_script(v.script),
                           ValidatorBackend(model, lambda v=v: adversary(service(), v.id)))
            if (r.status, r.step, r.reason) != ("FAIL", v.attack_step, "Violation"):
                missed.append(v.id)
        return MutationResult(mutation.id, mutation.expect, bool(missed), len(missed),
                              ", ".join(missed))
    first = rep.failures[0] if rep.failures else None
    detail = f"{first.name}: {first.detail}" if first else ""
    return MutationResult(mutation.id, mutation.expect, bool(rep.failures), len(rep.failures), detail)
