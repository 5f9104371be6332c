"""Random small-domain constraint sets with an independent brute-force evaluator."""

import itertools
import random

from gkspec.gktypes import INT
from gkspec.solver import SolveRequest, Unknown

CMP = ["==", "!=", "<", "<=", ">", ">="]
PY = {"==": lambda a, b: a == b, "!=": lambda a, b: a != b, "<": lambda a, b: a < b,
      "<=": lambda a, b: a <= b, ">": lambda a, b: a > b, ">=": lambda a, b: a >= b}


def _term(rng, names):
    parts = []
    for n in names:
        c = rng.choice([0, 1, 1, -1, 2, -3, 5])
        if c:
            parts.append((c, n))
    if not parts:
        parts.append((1, rng.choice(names)))
    return parts, rng.randint(-40, 40)


def _atom(rng, names):
    terms, k = _term(rng, names)
    return ("cmp", rng.choice(CMP), terms, k, rng.randint(-60, 60))


def _formula(rng, names, depth=0):
    r = rng.random()
    if depth >= 2 or r < 0.45:
        return _atom(rng, names)
    if r < 0.6:
        return ("not", _formula(rng, names, depth + 1))
    op = rng.choice(["and", "or", "->"])
    return (op, _formula(rng, names, depth + 1), _formula(rng, names, depth + 1))


def render(f):
    tag = f[0]
    if tag == "cmp":
        _, op, terms, k, rhs = f
        lhs = " + ".join(f"{c} * {n}" if c != 1 else n for c, n in terms)
        return f"({lhs} + {k} {op} {rhs})"
    if tag == "not":
        return f"(not {render(f[1])})"
    return f"({render(f[1])} {tag} {render(f[2])})"


def holds(f, env):
    tag = f[0]
    if tag == "cmp":
        _, op, terms, k, rhs = f
        return PY[op](sum(c * env[n] for c, n in terms) + k, rhs)
    if tag == "not":
        return not holds(f[1], env)
    a = holds(f[1], env)
    if tag == "and":
        return a and holds(f[2], env)
    if tag == "or":
        return a or holds(f[2], env)
    return (not a) or holds(f[2], env)


def random_case(rng: random.Random):
    """(request factory, formulas, domains) with at most 2**12 assignments."""
    if rng.random() < 0.5:
        lo = rng.randint(-2048, 0)
        doms = {"x": (lo, lo + rng.randint(0, 4095))}
    else:
        doms = {}
        for n in ("x", "y"):
            lo = rng.randint(-60, 30)
            doms[n] = (lo, lo + rng.randint(0, 63))
    names = list(doms)
    formulas = [_formula(rng, names) for _ in range(rng.randint(1, 3))]
    seed = rng.getrandbits(64)

    def request(max_solutions=1):
        return SolveRequest([render(f) for f in formulas],
                            [Unknown(n, INT, lo, hi) for n, (lo, hi) in doms.items()],
                            seed=seed, max_solutions=max_solutions)
    return request, formulas, doms


def brute(formulas, doms):
    """(satisfying, violating) assignments as sets of sorted item tuples."""
    names = list(doms)
    sat, viol = set(), set()
    for vals in itertools.product(*(range(lo, hi + 1) for lo, hi in doms.values())):
        env = dict(zip(names, vals))
        key = tuple(sorted(env.items()))
        (sat if all(holds(f, env) for f in formulas) else viol).add(key)
    return sat, viol


def key(assignment):
    return tuple(sorted(assignment.items()))
