"""Independent reference computations the tests compare the implementation with.

Nothing here imports the constraint store's logic: satisfiability is decided
by brute-force enumeration of concrete tag assignments.
"""

from __future__ import annotations

import itertools
from typing import Iterable, Sequence

from netmbt.symbolic import ETag, Fresh, Kind, Lit, Not, StrongMatch, Var, WeakMatch, Const

# Entity-tag comparison table for validators, transcribed row by row:
# (first, second, strong comparison, weak comparison)
COMPARISON_TABLE = [
    (ETag("1", weak=True), ETag("1", weak=True), False, True),
    (ETag("1", weak=True), ETag("2", weak=True), False, False),
    (ETag("1", weak=True), ETag("1"), False, True),
    (ETag("1"), ETag("1"), True, True),
]


def table_strong(a: ETag, b: ETag) -> bool:
    return not a.weak and not b.weak and a.opaque == b.opaque


def table_weak(a: ETag, b: ETag) -> bool:
    return a.opaque == b.opaque


def domain(alphabet: Iterable[str], kind: Kind) -> list[ETag]:
    """Concrete values a variable may take; one extra opaque value stands for
    every tag outside the alphabet."""
    opaques = list(alphabet) + ["zz-witness"]
    flags = [False] if kind is Kind.STRONG_TAG else [False, True]
    return [ETag(o, w) for o in opaques for w in flags]


def _tag_value(e, env):
    return e.tag if isinstance(e, Lit) else env[e.var.id]


def eval_bool(e, env, bools) -> bool:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Not):
        return not eval_bool(e.operand, env, bools)
    if isinstance(e, Fresh):
        return bools[e.var.id]
    a, b = _tag_value(e.left, env), _tag_value(e.right, env)
    return table_strong(a, b) if isinstance(e, StrongMatch) else table_weak(a, b)


def satisfiable(facts: Sequence[tuple], var_kinds: dict[int, Kind], alphabet: Sequence[str]) -> bool:
    """``facts`` are ("bool", expr, value) or ("tag", var, observed)."""
    tag_ids = [v for v, k in var_kinds.items() if k is not Kind.BOOL]
    bool_ids = [v for v, k in var_kinds.items() if k is Kind.BOOL]
    domains = [domain(alphabet, var_kinds[v]) for v in tag_ids]
    for values in itertools.product(*domains):
        env = dict(zip(tag_ids, values))
        for bvals in itertools.product([False, True], repeat=len(bool_ids)):
            bools = dict(zip(bool_ids, bvals))
            if all(_holds(f, env, bools) for f in facts):
                return True
    return False


def _holds(fact, env, bools) -> bool:
    if fact[0] == "bool":
        return eval_bool(fact[1], env, bools) == fact[2]
    _, var, observed = fact
    return env[var.id] == observed
