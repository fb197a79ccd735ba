"""Semantics-preserving simplifications of sum rules and shared-set grouping.

The pipeline runs, one rule at a time in program order, the opposite-literal
merge, the removal of unsatisfiable sums (``i``), bound normalization
(``ii``) and the replacement of duplicated sums (``iii``); afterwards it adds
ordering constraints between consecutive bounds of a shared set (``iv``) and
drops rules whose body contains ``#false``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Optional

from .core import (
    FALSE_ATOM,
    FALSE_LIT,
    DisjunctiveRule,
    Program,
    Rule,
    SumRule,
    make_lit,
)

log = logging.getLogger(__name__)

STEPS = ("merge", "i", "ii", "iii", "iv")
SUMS_CAP = 10**6


class SumsCapExceeded(ValueError):
    pass


@dataclass(frozen=True)
class SharedSetGroup:
    """Sum rules over one element set; ``members`` are (bound, id) by ascending bound."""

    elements: tuple[tuple[int, int], ...]
    members: tuple[tuple[int, int], ...]

    @property
    def bounds(self) -> list[int]:
        return [b for b, _ in self.members]

    def next_of(self, ident: int) -> Optional[int]:
        for k, (_, i) in enumerate(self.members):
            if i == ident:
                return self.members[k + 1][1] if k + 1 < len(self.members) else None
        raise KeyError(ident)


def parse_steps(spec: str) -> frozenset[str]:
    """``"all"``, ``"none"`` or a comma list drawn from merge,i,ii,iii,iv."""
    spec = spec.strip()
    if spec == "all":
        return frozenset(STEPS)
    if spec == "none":
        return frozenset()
    steps = {s.strip() for s in spec.split(",") if s.strip()}
    bad = steps - set(STEPS)
    if bad:
        raise ValueError(f"unknown rewriting step(s): {', '.join(sorted(bad))}")
    return frozenset(steps)


def achievable_sums(rule: SumRule, cap: int = SUMS_CAP) -> list[int]:
    """All nonzero subset sums of the rule's weights, ascending."""
    total = rule.total_weight
    if total > cap:
        raise SumsCapExceeded(f"total weight {total} exceeds cap {cap}")
    reach = 1  # bit s set <=> s is a subset sum
    for w, _ in rule.elements:
        reach |= reach << w
    bits = bin(reach)[:1:-1]
    return [s for s in range(1, total + 1) if bits[s] == "1"]


def merge_opposite_literals(rule: SumRule) -> Rule:
    """Cancel complementary element pairs, lowering the bound accordingly.

    A bound that drops to zero turns the rule into the fact ``id.``; an empty
    element set with positive bound turns it into ``:- id.``.
    """
    by_lit = {l: w for w, l in rule.elements}
    bound = rule.bound
    for lit in sorted(by_lit):
        if lit & 1 or lit not in by_lit or lit ^ 1 not in by_lit:
            continue
        w, w_neg = by_lit.pop(lit), by_lit.pop(lit ^ 1)
        if w >= w_neg:
            keep, diff, sub = lit, w - w_neg, w_neg
        else:
            keep, diff, sub = lit ^ 1, w_neg - w, w
        if diff > 0:
            by_lit[keep] = diff
        bound -= sub
    if bound == rule.bound:
        return rule
    if bound <= 0:
        return DisjunctiveRule(frozenset({rule.id}))
    if not by_lit:
        return DisjunctiveRule(frozenset({FALSE_ATOM}), frozenset({make_lit(rule.id)}))
    return SumRule(rule.id, tuple((w, l) for l, w in by_lit.items()), bound)


def _apply_i(rule: SumRule) -> Rule:
    if rule.bound > rule.total_weight:
        return DisjunctiveRule(frozenset({FALSE_ATOM}), frozenset({make_lit(rule.id)}))
    return rule


def rewrite_ii(rule: SumRule, cap: int = SUMS_CAP) -> SumRule:
    """Raise the bound to the smallest achievable sum not below it."""
    try:
        sums = achievable_sums(rule, cap)
    except SumsCapExceeded:
        log.warning("bound of aggregate %d left unnormalized (total weight above cap)", rule.id)
        return rule
    for s in sums:
        if s >= rule.bound:
            return rule if s == rule.bound else SumRule(rule.id, rule.elements, s)
    return rule


def _apply_iii(rules: list[Optional[Rule]], k: int, names) -> None:
    r = rules[k]
    if not isinstance(r, SumRule):
        return
    twins = [
        o for j, o in enumerate(rules)
        if j != k and isinstance(o, SumRule) and o.bound == r.bound and o.elements == r.elements
    ]
    if twins:
        rep = min(twins, key=lambda o: names[o.id])
        rules[k] = DisjunctiveRule(frozenset({r.id}), frozenset({make_lit(rep.id)}))


def rewrite_i(program: Program) -> Program:
    return program.with_rules(_apply_i(r) if isinstance(r, SumRule) else r for r in program.rules)


def rewrite_iii(program: Program) -> Program:
    """Replace each sum rule duplicating a remaining one by ``id :- id'``."""
    rules: list[Optional[Rule]] = list(program.rules)
    for k in range(len(rules)):
        _apply_iii(rules, k, program.names)
    return program.with_rules(rules)


def group_shared_sets(program: Program) -> list[SharedSetGroup]:
    """Partition sum rules by element set, in order of first appearance."""
    groups: dict[tuple, list[tuple[int, int]]] = {}
    for r in program.sum_rules:
        groups.setdefault(r.elements, []).append((r.bound, r.id))
    names = program.names
    return [
        SharedSetGroup(elems, tuple(sorted(members, key=lambda m: (m[0], names[m[1]]))))
        for elems, members in groups.items()
    ]


def _successor(group: SharedSetGroup, bound: int, names) -> Optional[int]:
    later = [(b, i) for b, i in group.members if b > bound]
    if not later:
        return None
    best = min(b for b, _ in later)
    return min((i for b, i in later if b == best), key=lambda i: names[i])


def rewrite_iv(program: Program, keep_vacuous: bool = False) -> Program:
    """Add ``:- not id(r), next(r)`` right after every sum rule ``r``.

    Without a successor the constraint body holds ``#false``; it is only kept
    when ``keep_vacuous`` is set.
    """
    names = program.names
    by_elems = {g.elements: g for g in group_shared_sets(program)}
    existing = set(program.rules)
    out: list[Rule] = []
    for r in program.rules:
        out.append(r)
        if not isinstance(r, SumRule):
            continue
        nxt = _successor(by_elems[r.elements], r.bound, names)
        if nxt is None and not keep_vacuous:
            continue
        target = FALSE_LIT if nxt is None else make_lit(nxt)
        c = DisjunctiveRule(frozenset({FALSE_ATOM}), frozenset({make_lit(r.id, True), target}))
        if c not in existing:
            out.append(c)
            existing.add(c)
    return program.with_rules(out)


def cleanup(program: Program) -> Program:
    """Drop disjunctive rules whose body contains ``#false``."""
    return program.with_rules(
        r for r in program.rules if not (isinstance(r, DisjunctiveRule) and FALSE_LIT in r.body)
    )


def rewrite_program(
    program: Program,
    steps: Iterable[str] = STEPS,
    emit_intermediate: bool = False,
    cap: int = SUMS_CAP,
) -> Program:
    """Run the selected rewritings; ``emit_intermediate`` skips the final cleanup."""
    steps = frozenset(steps)
    rules: list[Optional[Rule]] = list(program.rules)
    for k in range(len(rules)):
        r = rules[k]
        if not isinstance(r, SumRule):
            continue
        if "merge" in steps:
            r = merge_opposite_literals(r)
        if "i" in steps and isinstance(r, SumRule):
            r = _apply_i(r)
        if "ii" in steps and isinstance(r, SumRule):
            r = rewrite_ii(r, cap)
        rules[k] = r
        if "iii" in steps:
            _apply_iii(rules, k, program.names)
    result = program.with_rules(rules)
    if "iv" in steps:
        result = rewrite_iv(result, keep_vacuous=True)
        if not emit_intermediate:
            result = cleanup(result)
    return result
