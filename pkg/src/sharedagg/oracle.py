"""Brute-force reference semantics: satisfaction, reduct, stable models.

Interpretations are frozensets of true regular atom indices; every other atom
is false and ``#false`` is never true.  Nothing here shares code with the
search engine.
"""
from __future__ import annotations

from itertools import combinations
from typing import FrozenSet, Iterable, Union

from .core import (
    FALSE_ATOM,
    TRUE_LIT,
    DisjunctiveRule,
    Program,
    Rule,
    SumRule,
)

Interpretation = FrozenSet[int]

ORACLE_CAP = 20


class OracleCapExceeded(RuntimeError):
    pass


def holds(interp: Interpretation, lit: int) -> bool:
    atom = lit >> 1
    val = atom != FALSE_ATOM and atom in interp
    return val != bool(lit & 1)


def sum_value(interp: Interpretation, rule: SumRule) -> int:
    return sum(w for w, l in rule.elements if holds(interp, l))


def satisfies(interp: Interpretation, target: Union[Rule, Program]) -> bool:
    if isinstance(target, Program):
        return all(satisfies(interp, r) for r in target.rules)
    if isinstance(target, DisjunctiveRule):
        if all(holds(interp, l) for l in target.body):
            return any(a in interp for a in target.head_atoms)
        return True
    if sum_value(interp, target) >= target.bound:
        return target.id in interp
    return True


def satisfies_sum(interp: Interpretation, rule: SumRule) -> bool:
    return sum_value(interp, rule) >= rule.bound


def reduct(program: Program, interp: Interpretation) -> Program:
    """The reduct: negation evaluated away, rules with false bodies/sums dropped.

    The constant element of a kept sum rule is written as ``w:not #false``
    and omitted when its weight is zero.
    """
    out: list[Rule] = []
    for r in program.rules:
        if isinstance(r, DisjunctiveRule):
            if all(holds(interp, l) for l in r.body):
                out.append(DisjunctiveRule(r.head, frozenset(l for l in r.body if not l & 1)))
        elif satisfies_sum(interp, r):
            kept = [(w, l) for w, l in r.elements if not l & 1 and holds(interp, l)]
            const = sum(w for w, l in r.elements if l & 1 and holds(interp, l))
            if const > 0:
                kept.append((const, TRUE_LIT))
            out.append(SumRule(r.id, tuple(kept), r.bound))
    return program.with_rules(out)


class _Compiled:
    """Rules as bitmask tests over an atom-to-bit mapping."""

    def __init__(self, program: Program, atoms: list[int]):
        bit = {a: 1 << k for k, a in enumerate(atoms)}
        self.disj = []
        self.sums = []
        for r in program.rules:
            if isinstance(r, DisjunctiveRule):
                if any(l == 0 for l in r.body):  # #false in body
                    continue
                pos = sum(bit[l >> 1] for l in r.body if not l & 1)
                neg = sum(bit[l >> 1] for l in r.body if l & 1 and l >> 1 != FALSE_ATOM)
                head = sum(bit[a] for a in r.head_atoms)
                self.disj.append((pos, neg, head))
            else:
                const = 0
                elems = []
                for w, l in r.elements:
                    if l >> 1 == FALSE_ATOM:
                        const += w if l & 1 else 0
                    else:
                        elems.append((w, bit[l >> 1], bool(l & 1)))
                self.sums.append((elems, const, r.bound, bit[r.id]))

    def model(self, m: int) -> bool:
        for pos, neg, head in self.disj:
            if pos & m == pos and not neg & m and not head & m:
                return False
        for elems, const, bound, idb in self.sums:
            if not idb & m:
                s = const
                for w, b, negated in elems:
                    if bool(b & m) != negated:
                        s += w
                if s >= bound:
                    return False
        return True


def stable_models(program: Program, cap: int = ORACLE_CAP) -> set[Interpretation]:
    """Every interpretation that models the program and is minimal for its reduct."""
    atoms = program.atoms()
    if len(atoms) > cap:
        raise OracleCapExceeded(f"{len(atoms)} atoms exceed the oracle cap of {cap}")
    whole = _Compiled(program, atoms)
    found = set()
    for m in range(1 << len(atoms)):
        if not whole.model(m):
            continue
        interp = frozenset(a for k, a in enumerate(atoms) if m >> k & 1)
        red = _Compiled(reduct(program, interp), atoms)
        sub = (m - 1) & m
        minimal = True
        while True:
            if sub != m and red.model(sub):
                minimal = False
                break
            if sub == 0:
                break
            sub = (sub - 1) & m
        if minimal:
            found.add(interp)
    return found


def named_models(program: Program, models: Iterable[Interpretation]) -> set[frozenset[str]]:
    return {frozenset(program.names[a] for a in m) for m in models}


def is_stable(program: Program, interp: Interpretation) -> bool:
    """Direct check of one interpretation (subsets enumerated by size)."""
    if not satisfies(interp, program):
        return False
    red = reduct(program, interp)
    true_atoms = sorted(interp)
    for size in range(len(true_atoms)):
        for sub in combinations(true_atoms, size):
            if satisfies(frozenset(sub), red):
                return False
    return True
