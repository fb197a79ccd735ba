"""Fixtures shared by several test modules."""
import random

from sharedagg.core import SumRule, make_lit
from sharedagg.parser import parse
from sharedagg.propagate import TRUE, UNDEF, Assignment, SharedSetPropagator, classic_propagate
from sharedagg.rewrite import SharedSetGroup, achievable_sums, group_shared_sets, rewrite_program

RUN_TEXT = "p2 | n2.\np5 | n5.\n" + "".join(
    f"a{b} :- #sum{{ 2:p2, 5:p5 }} >= {b}.\n" for b in (1, 2, 3, 5, 6, 7)
)

RUN_MODELS = {
    frozenset({"n2", "n5"}),
    frozenset({"n2", "p5", "a1", "a2", "a3", "a5"}),
    frozenset({"p2", "n5", "a1", "a2"}),
    frozenset({"p2", "p5", "a1", "a2", "a3", "a5", "a6", "a7"}),
}

REWRITTEN_RUN = """\
n2 | p2.
n5 | p5.
a1 :- a2.
a2 :- #sum{ 2:p2, 5:p5 } >= 2.
:- not a2, a5.
a3 :- a5.
a5 :- #sum{ 2:p2, 5:p5 } >= 5.
:- not a5, a7.
a6 :- a7.
a7 :- #sum{ 2:p2, 5:p5 } >= 7.
"""
S7 = ":- not a7, #false.\n"


def run_program():
    return parse(RUN_TEXT)


def run_group():
    """The shared set of the rewritten running example, with its program."""
    prog = rewrite_program(run_program())
    (group,) = group_shared_sets(prog)
    return prog, group


def feed(prog, group, literals, eager=False):
    """Assign ``literals`` in order, notifying a fresh shared propagator; return both."""
    a = Assignment(len(prog.names))
    p = SharedSetPropagator(group, eager)
    p.bind(a)
    out = None
    for text in literals:
        lit = prog.lit(text) if isinstance(text, str) else text
        a.assign(lit)
        out = p.on_literal_true(lit)
    return a, p, out


def named(prog, inferences):
    return {(prog.lit_name(l), frozenset(prog.lit_name(q) for q in r)) for l, r in inferences}


# -- random reachable states for the shared-vs-classic comparison -----------

def random_group(rng):
    """A group over distinct atoms 1..n with distinct achievable bounds; ids follow."""
    n = rng.randint(1, 5)
    elems = tuple((rng.randint(1, 6), make_lit(a, rng.random() < 0.3)) for a in range(1, n + 1))
    probe = SumRule(n + 1, elems, 1)
    sums = achievable_sums(probe)
    bounds = sorted(rng.sample(sums, rng.randint(1, min(4, len(sums)))))
    ids = list(range(n + 1, n + 1 + len(bounds)))
    rules = [SumRule(i, elems, b) for i, b in zip(ids, bounds)]
    group = SharedSetGroup(probe.elements, tuple(zip(bounds, ids)))
    return group, rules, n + 1 + len(bounds)


def _closure(rules, group, num_atoms, decisions):
    """Assignment closed under the sum-rule inferences and the ordering constraints, or None on conflict."""
    a = Assignment(num_atoms)
    ids = [make_lit(i) for _, i in group.members]
    for d in decisions:
        if a.value[d] == UNDEF:
            a.assign(d)
        elif a.value[d] != TRUE:
            return None
        changed = True
        while changed:
            changed = False
            inferred = []
            for r in rules:
                inferred += [l for l, _ in classic_propagate(r, a)]
            for lo, hi in zip(ids, ids[1:]):
                if a.value[hi] == TRUE:
                    inferred.append(lo)
                if a.value[lo ^ 1] == TRUE:
                    inferred.append(hi ^ 1)
            for l in inferred:
                if a.value[l] == UNDEF:
                    a.assign(l)
                    changed = True
                elif a.value[l] != TRUE:
                    return None
    return a


def random_state(rng):
    """(group, rules, fixpoint assignment J, unassigned literal l)."""
    while True:
        group, rules, num = random_group(rng)
        lits = [2 * v + s for v in range(1, num) for s in (0, 1)]
        decisions = []
        for _ in range(rng.randint(0, 4)):
            a = _closure(rules, group, num, decisions)
            free = [l for l in lits if a.value[l] == UNDEF]
            if not free:
                break
            cand = decisions + [rng.choice(free)]
            if _closure(rules, group, num, cand) is not None:
                decisions = cand
        a = _closure(rules, group, num, decisions)
        free = [l for l in lits if a.value[l] == UNDEF]
        if free:
            return group, rules, a, rng.choice(free)


def compare_state(group, rules, assignment, lit, eager=False):
    """Mismatch description, or None when shared and classic inferences agree."""
    prop = SharedSetPropagator(group, eager)
    prop.bind(assignment)
    for l in list(assignment.trail):
        prop.on_literal_true(l)
    assignment.assign(lit)
    shared = prop.on_literal_true(lit)
    classic: dict[int, set] = {}
    for r in rules:
        for l, reason in classic_propagate(r, assignment):
            classic.setdefault(l, set()).add(frozenset(reason))
    got = {l for l, _ in shared}
    if got != set(classic) or len(got) != len(shared):
        return f"literals {sorted(got)} != {sorted(classic)}"
    for l, reason in shared:
        if frozenset(reason) not in classic[l]:
            return f"reason of {l}: {sorted(reason)} not among {[sorted(x) for x in classic[l]]}"
        pos = {q: k for k, q in enumerate(assignment.trail)}
        if not all(q in pos for q in reason):
            return f"reason of {l} not contained in the assignment"
    return None
