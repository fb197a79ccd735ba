"""Assignment trail, unit propagation and the two sum-aggregate propagators.

Both aggregate propagators keep a local trail of the literals they have been
notified about, in trail order.  Their scalars describe exactly that local
view; inferred literals are filtered against the global assignment, so a
literal assigned globally but not yet seen locally still produces a conflict.

Reasons of aggregate inferences are either explicit literal tuples or
``Deferred`` handles (propagator, local trail position, kind) rebuilt by
scanning the local trail prefix when conflict analysis asks for them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

from .core import SumRule, make_lit
from .rewrite import SharedSetGroup

INF = float("inf")

TRUE, FALSE, UNDEF = 1, -1, 0

# watch roles
ELEM_TRUE, ELEM_FALSE, ID_TRUE, ID_FALSE = range(4)

# reason kinds
R_TRUE, R_TRUE_UB, R_FALSE, R_FALSE_LB, R_FALSE_SELF, R_TRUE_SELF = range(6)
R_TRUE_NOTID, R_FALSE_ID = 6, 7


class StaleReason(RuntimeError):
    pass


class Deferred:
    __slots__ = ("prop", "pos", "kind")

    def __init__(self, prop, pos: int, kind: int):
        self.prop = prop
        self.pos = pos
        self.kind = kind

    def resolve(self) -> tuple[int, ...]:
        return self.prop.resolve(self.pos, self.kind)

    def __repr__(self):
        return f"Deferred({self.prop.name}, pos={self.pos}, kind={self.kind})"


# a reason is a clause (list holding the implied literal), a tuple of true
# literals, or a Deferred handle
Reason = Union[list, tuple, Deferred, None]


class Assignment:
    """Partial assignment with trail, decision levels and reasons.

    ``value`` is indexed by literal and holds TRUE, FALSE or UNDEF.
    """

    def __init__(self, num_atoms: int):
        self.num_atoms = num_atoms
        self.value = [UNDEF] * (2 * num_atoms)
        self.level = [-1] * num_atoms
        self.reason: list[Reason] = [None] * num_atoms
        self.trail: list[int] = []
        self.trail_lim: list[int] = []

    @classmethod
    def from_literals(cls, num_atoms: int, lits: Iterable[int]) -> "Assignment":
        a = cls(num_atoms)
        for l in lits:
            a.assign(l)
        return a

    def grow(self, num_atoms: int) -> None:
        extra = num_atoms - self.num_atoms
        if extra > 0:
            self.value.extend([UNDEF] * (2 * extra))
            self.level.extend([-1] * extra)
            self.reason.extend([None] * extra)
            self.num_atoms = num_atoms

    @property
    def decision_level(self) -> int:
        return len(self.trail_lim)

    def is_true(self, lit: int) -> bool:
        return self.value[lit] == TRUE

    def is_false(self, lit: int) -> bool:
        return self.value[lit] == FALSE

    def assign(self, lit: int, reason: Reason = None) -> None:
        if self.value[lit] != UNDEF:
            raise ValueError(f"literal {lit} already assigned")
        self.value[lit] = TRUE
        self.value[lit ^ 1] = FALSE
        v = lit >> 1
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason
        self.trail.append(lit)

    def new_level(self) -> None:
        self.trail_lim.append(len(self.trail))

    def backtrack(self, level: int) -> list[int]:
        """Undo all levels above ``level``; return the removed literals."""
        if level >= len(self.trail_lim):
            return []
        start = self.trail_lim[level]
        removed = self.trail[start:]
        value, lv, rs = self.value, self.level, self.reason
        for lit in removed:
            value[lit] = UNDEF
            value[lit ^ 1] = UNDEF
            lv[lit >> 1] = -1
            rs[lit >> 1] = None
        del self.trail[start:]
        del self.trail_lim[level:]
        return removed

    def literals(self) -> set[int]:
        return set(self.trail)


class ClauseDatabase:
    """Clauses of length >= 2 under the two-watched-literal scheme.

    A clause is a Python list; positions 0 and 1 are watched.  ``watches[l]``
    holds the clauses to visit when ``l`` becomes false.
    """

    def __init__(self, num_atoms: int):
        self.watches: list[list[list[int]]] = [[] for _ in range(2 * num_atoms)]
        self.clauses: list[list[int]] = []

    def grow(self, num_atoms: int) -> None:
        self.watches.extend([] for _ in range(2 * num_atoms - len(self.watches)))

    def attach(self, clause: list[int]) -> None:
        self.clauses.append(clause)
        self.watches[clause[0]].append(clause)
        self.watches[clause[1]].append(clause)

    def propagate(self, assignment: Assignment, lit: int) -> Optional[list[int]]:
        """Visit clauses watching the complement of the now-true ``lit``.

        Implied literals are assigned with their clause as reason; the first
        falsified clause is returned.
        """
        false_lit = lit ^ 1
        value = assignment.value
        watches = self.watches
        ws = watches[false_lit]
        i = j = 0
        n = len(ws)
        while i < n:
            c = ws[i]
            i += 1
            if c[0] == false_lit:
                c[0] = c[1]
                c[1] = false_lit
            first = c[0]
            if value[first] == TRUE:
                ws[j] = c
                j += 1
                continue
            for k in range(2, len(c)):
                if value[c[k]] != FALSE:
                    c[1] = c[k]
                    c[k] = false_lit
                    watches[c[1]].append(c)
                    break
            else:
                ws[j] = c
                j += 1
                if value[first] == FALSE:
                    while i < n:
                        ws[j] = ws[i]
                        j += 1
                        i += 1
                    del ws[j:]
                    return c
                assignment.assign(first, c)
        del ws[j:]
        return None


@dataclass
class Conflict:
    clause: tuple[int, ...]


def reason_literals(assignment: Assignment, atom: int) -> tuple[int, ...]:
    """reasons(l) for the literal currently assigned to ``atom``."""
    r = assignment.reason[atom]
    if r is None:
        return ()
    if isinstance(r, list):
        return tuple(q ^ 1 for q in r if q >> 1 != atom)
    if isinstance(r, tuple):
        return r
    return r.resolve()


def unit_propagate(assignment: Assignment, clauses: Iterable[Iterable[int]]):
    """Run unit propagation to fixpoint over ``clauses``.

    Returns the list of (literal, reasons) inferred, or a ``Conflict`` naming
    the falsified clause.  The assignment is extended in place.
    """
    db = ClauseDatabase(assignment.num_atoms)
    inferred: list[tuple[int, tuple[int, ...]]] = []
    start = len(assignment.trail)
    for cl in clauses:
        c = list(dict.fromkeys(cl))
        if not c:
            return Conflict(())
        if len(c) == 1:
            v = assignment.value[c[0]]
            if v == FALSE:
                return Conflict(tuple(c))
            if v == UNDEF:
                assignment.assign(c[0], c)
            continue
        # watch non-false literals first so the invariant holds mid-assignment
        c.sort(key=lambda l: assignment.value[l] == FALSE)
        db.attach(c)
        if assignment.value[c[0]] == FALSE:
            return Conflict(tuple(c))
        if assignment.value[c[1]] == FALSE and assignment.value[c[0]] == UNDEF:
            assignment.assign(c[0], c)
    qhead = 0
    while qhead < len(assignment.trail):
        lit = assignment.trail[qhead]
        qhead += 1
        confl = db.propagate(assignment, lit)
        if confl is not None:
            return Conflict(tuple(confl))
    for lit in assignment.trail[start:]:
        inferred.append((lit, reason_literals(assignment, lit >> 1)))
    return inferred


def classic_propagate(rule: SumRule, assignment: Assignment) -> list[tuple[int, tuple[int, ...]]]:
    """Id and element inferences for one sum rule, computed from scratch.

    Returns (literal, reasons) pairs for literals not already true.  An
    inferred literal whose complement is true signals a conflict; callers
    check that themselves.  Element inferences only target unassigned
    elements (an assigned element is either already entailed or already
    contradicted by an id inference).
    """
    val = assignment.value
    idl = make_lit(rule.id)
    true_elems = tuple(l for _, l in rule.elements if val[l] == TRUE)
    false_comps = tuple(l ^ 1 for _, l in rule.elements if val[l] == FALSE)
    true_sum = sum(w for w, l in rule.elements if val[l] == TRUE)
    nonfalse = sum(w for w, l in rule.elements if val[l] != FALSE)
    out = []
    if true_sum >= rule.bound and val[idl] != TRUE:
        out.append((idl, true_elems))
    if nonfalse < rule.bound and val[idl ^ 1] != TRUE:
        out.append((idl ^ 1, false_comps))
    if val[idl] == TRUE:
        for w, l in rule.elements:
            if val[l] == UNDEF and nonfalse - w < rule.bound:
                out.append((l, (idl,) + false_comps))
    if val[idl] == FALSE:
        for w, l in rule.elements:
            if val[l] == UNDEF and true_sum >= rule.bound - w:
                out.append((l ^ 1, (idl ^ 1,) + true_elems))
    return out


class _LocalTrailPropagator:
    """Bookkeeping shared by both propagators: local trail, undo, reasons."""

    name = "aggregate"

    def __init__(self, elements: Sequence[tuple[int, int]], eager: bool = False):
        # heaviest first so threshold scans can stop early
        order = sorted(range(len(elements)), key=lambda k: (-elements[k][0], k))
        self.weights = [elements[k][0] for k in order]
        self.elit = [elements[k][1] for k in order]
        self.estate = [UNDEF] * len(order)
        self.local: list[tuple] = []  # (lit, role, idx, saved)
        self.eager = eager
        self.value: list[int] = []
        self.level: list[int] = []
        self.calls = 0

    def bind(self, assignment: Assignment) -> None:
        self.value = assignment.value
        self.level = assignment.level

    def watch_list(self) -> list[tuple[int, int, int]]:
        out = []
        for k, l in enumerate(self.elit):
            out.append((l, ELEM_TRUE, k))
            out.append((l ^ 1, ELEM_FALSE, k))
        return out

    def _reason(self, pos: int, kind: int):
        if self.eager:
            return self.resolve(pos, kind)
        return Deferred(self, pos, kind)

    def resolve(self, pos: int, kind: int) -> tuple[int, ...]:
        if pos >= len(self.local):
            raise StaleReason(f"{self.name}: position {pos} was undone")
        prefix = self.local[: pos + 1]
        if kind in (R_TRUE, R_TRUE_UB, R_TRUE_SELF, R_TRUE_NOTID):
            out = [e[0] for e in prefix if e[1] == ELEM_TRUE]
        else:
            out = [e[0] for e in prefix if e[1] == ELEM_FALSE]
        if kind == R_TRUE_UB:
            w = min((e for e in prefix if e[1] == ID_FALSE), key=lambda e: self.bound_of(e[2]))
            out.append(w[0])
        elif kind == R_FALSE_LB:
            w = max((e for e in prefix if e[1] == ID_TRUE), key=lambda e: self.bound_of(e[2]))
            out.append(w[0])
        elif kind in (R_FALSE_SELF, R_TRUE_SELF):
            out.append(prefix[-1][0])
        elif kind in (R_TRUE_NOTID, R_FALSE_ID):
            out.extend(e[0] for e in prefix if e[1] in (ID_TRUE, ID_FALSE))
        return tuple(out)

    def bound_of(self, idx: int) -> int:
        raise NotImplementedError


class SharedSetPropagator(_LocalTrailPropagator):
    """One propagator for all sum rules sharing an element set.

    Tracks the smallest and greatest reachable sum and the tightest bound
    that must (lower) and must not (upper) be reached.
    """

    name = "shared"

    def __init__(self, group: SharedSetGroup, eager: bool = False):
        super().__init__(group.elements, eager)
        self.group = group
        self.bounds = [b for b, _ in group.members]
        self.idlits = [make_lit(i) for _, i in group.members]
        self.bstate = [UNDEF] * len(self.bounds)
        self.min_sum = 0
        self.max_sum = sum(self.weights)
        self.lower_bound = 0
        self.upper_bound = INF
        self._lb_lit = None
        self._ub_lit = None

    def bound_of(self, idx: int) -> int:
        return self.bounds[idx]

    def watch_list(self):
        out = super().watch_list()
        for k, l in enumerate(self.idlits):
            out.append((l, ID_TRUE, k))
            out.append((l ^ 1, ID_FALSE, k))
        return out

    @property
    def entries(self) -> int:
        return len(self.weights)

    def snapshot(self) -> tuple:
        return (self.min_sum, self.max_sum, self.lower_bound, self.upper_bound)

    def recompute(self) -> tuple:
        """The four scalars from scratch over the local view."""
        seen = {e[0] for e in self.local}
        mn = sum(w for w, l in zip(self.weights, self.elit) if l in seen)
        mx = sum(w for w, l in zip(self.weights, self.elit) if l ^ 1 not in seen)
        lb = max([b for b, l in zip(self.bounds, self.idlits) if l in seen] + [0])
        ub = min([b for b, l in zip(self.bounds, self.idlits) if l ^ 1 in seen] + [INF])
        return (mn, mx, lb, ub)

    def observe(self, lit: int, role: int, idx: int) -> bool:
        """Record ``lit`` on the local trail; False if no bound changed."""
        if role == ELEM_TRUE:
            self.local.append((lit, role, idx, None))
            self.estate[idx] = TRUE
            self.min_sum += self.weights[idx]
        elif role == ELEM_FALSE:
            self.local.append((lit, role, idx, None))
            self.estate[idx] = FALSE
            self.max_sum -= self.weights[idx]
        elif role == ID_TRUE:
            self.local.append((lit, role, idx, (self.lower_bound, self._lb_lit)))
            self.bstate[idx] = TRUE
            if self.bounds[idx] <= self.lower_bound:
                return False
            self.lower_bound = self.bounds[idx]
            self._lb_lit = lit
        else:
            self.local.append((lit, role, idx, (self.upper_bound, self._ub_lit)))
            self.bstate[idx] = FALSE
            if self.bounds[idx] >= self.upper_bound:
                return False
            self.upper_bound = self.bounds[idx]
            self._ub_lit = lit
        return True

    def on_true(self, lit: int, role: int, idx: int) -> list:
        """Handle ``lit`` becoming true; return (literal, reason) inferences."""
        self.calls += 1
        if not self.observe(lit, role, idx):
            return []
        val = self.value
        pos = len(self.local) - 1
        out = []
        if role == ELEM_TRUE:
            ms = self.min_sum
            r = None
            for b, il in zip(self.bounds, self.idlits):
                if b > ms:
                    break
                if val[il] != TRUE:
                    if r is None:
                        r = self._reason(pos, R_TRUE)
                    out.append((il, r))
            if self.upper_bound != INF:
                thr = self.upper_bound - ms
                r = None
                for k, w in enumerate(self.weights):
                    if w < thr:
                        break
                    l = self.elit[k]
                    if self.estate[k] == UNDEF and val[l ^ 1] != TRUE:
                        if r is None:
                            r = self._reason(pos, R_TRUE_UB)
                        out.append((l ^ 1, r))
        elif role == ELEM_FALSE:
            ms = self.max_sum
            r = None
            for k in range(len(self.bounds) - 1, -1, -1):
                if self.bounds[k] <= ms:
                    break
                il = self.idlits[k]
                if val[il ^ 1] != TRUE:
                    if r is None:
                        r = self._reason(pos, R_FALSE)
                    out.append((il ^ 1, r))
            if self.lower_bound > 0:
                thr = ms - self.lower_bound
                r = None
                for k, w in enumerate(self.weights):
                    if w <= thr:
                        break
                    l = self.elit[k]
                    if self.estate[k] == UNDEF and val[l] != TRUE:
                        if r is None:
                            r = self._reason(pos, R_FALSE_LB)
                        out.append((l, r))
        elif role == ID_TRUE:
            thr = self.max_sum - self.lower_bound
            r = None
            for k, w in enumerate(self.weights):
                if w <= thr:
                    break
                l = self.elit[k]
                if self.estate[k] == UNDEF and val[l] != TRUE:
                    if r is None:
                        r = self._reason(pos, R_FALSE_SELF)
                    out.append((l, r))
        else:
            thr = self.upper_bound - self.min_sum
            r = None
            for k, w in enumerate(self.weights):
                if w < thr:
                    break
                l = self.elit[k]
                if self.estate[k] == UNDEF and val[l ^ 1] != TRUE:
                    if r is None:
                        r = self._reason(pos, R_TRUE_SELF)
                    out.append((l ^ 1, r))
        return out

    def backtrack(self, level: int) -> None:
        local = self.local
        lv = self.level
        while local and lv[local[-1][0] >> 1] > level:
            lit, role, idx, saved = local.pop()
            if role == ELEM_TRUE:
                self.estate[idx] = UNDEF
                self.min_sum -= self.weights[idx]
            elif role == ELEM_FALSE:
                self.estate[idx] = UNDEF
                self.max_sum += self.weights[idx]
            elif role == ID_TRUE:
                self.bstate[idx] = UNDEF
                self.lower_bound, self._lb_lit = saved
            else:
                self.bstate[idx] = UNDEF
                self.upper_bound, self._ub_lit = saved

    def on_literal_true(self, lit: int) -> list[tuple[int, tuple[int, ...]]]:
        """Dispatch ``lit`` by its role and return inferences with resolved reasons."""
        hits = [(role, idx) for l, role, idx in self.watch_list() if l == lit]
        if not hits:
            return []
        role, idx = hits[0]
        res = self.on_true(lit, role, idx)
        return [(l, r if isinstance(r, tuple) else r.resolve()) for l, r in res]


class ClassicPropagator(_LocalTrailPropagator):
    """The per-rule propagator: id and element inferences, maintained incrementally."""

    name = "classic"

    def __init__(self, rule: SumRule, eager: bool = False):
        super().__init__(rule.elements, eager)
        self.rule = rule
        self.bound = rule.bound
        self.idlit = make_lit(rule.id)
        self.id_state = UNDEF
        self.true_sum = 0
        self.nonfalse = sum(self.weights)

    def bound_of(self, idx: int) -> int:
        return self.bound

    def watch_list(self):
        out = super().watch_list()
        out.append((self.idlit, ID_TRUE, 0))
        out.append((self.idlit ^ 1, ID_FALSE, 0))
        return out

    @property
    def entries(self) -> int:
        return len(self.weights)

    def recompute(self) -> tuple:
        seen = {e[0] for e in self.local}
        ts = sum(w for w, l in zip(self.weights, self.elit) if l in seen)
        nf = sum(w for w, l in zip(self.weights, self.elit) if l ^ 1 not in seen)
        return (ts, nf)

    def snapshot(self) -> tuple:
        return (self.true_sum, self.nonfalse)

    def _force_elements_true(self, pos: int, out: list) -> None:
        thr = self.nonfalse - self.bound
        val = self.value
        r = None
        for k, w in enumerate(self.weights):
            if w <= thr:
                break
            l = self.elit[k]
            if self.estate[k] == UNDEF and val[l] != TRUE:
                if r is None:
                    r = self._reason(pos, R_FALSE_ID)
                out.append((l, r))

    def _force_elements_false(self, pos: int, out: list) -> None:
        thr = self.bound - self.true_sum
        val = self.value
        r = None
        for k, w in enumerate(self.weights):
            if w < thr:
                break
            l = self.elit[k]
            if self.estate[k] == UNDEF and val[l ^ 1] != TRUE:
                if r is None:
                    r = self._reason(pos, R_TRUE_NOTID)
                out.append((l ^ 1, r))

    def on_true(self, lit: int, role: int, idx: int) -> list:
        self.calls += 1
        self.local.append((lit, role, idx, None))
        pos = len(self.local) - 1
        val = self.value
        out = []
        if role == ELEM_TRUE:
            self.estate[idx] = TRUE
            self.true_sum += self.weights[idx]
            if self.true_sum >= self.bound and val[self.idlit] != TRUE:
                out.append((self.idlit, self._reason(pos, R_TRUE)))
            if self.id_state == FALSE:
                self._force_elements_false(pos, out)
        elif role == ELEM_FALSE:
            self.estate[idx] = FALSE
            self.nonfalse -= self.weights[idx]
            if self.nonfalse < self.bound and val[self.idlit ^ 1] != TRUE:
                out.append((self.idlit ^ 1, self._reason(pos, R_FALSE)))
            if self.id_state == TRUE:
                self._force_elements_true(pos, out)
        elif role == ID_TRUE:
            self.id_state = TRUE
            self._force_elements_true(pos, out)
        else:
            self.id_state = FALSE
            self._force_elements_false(pos, out)
        return out

    def backtrack(self, level: int) -> None:
        local = self.local
        lv = self.level
        while local and lv[local[-1][0] >> 1] > level:
            lit, role, idx, _ = local.pop()
            if role == ELEM_TRUE:
                self.estate[idx] = UNDEF
                self.true_sum -= self.weights[idx]
            elif role == ELEM_FALSE:
                self.estate[idx] = UNDEF
                self.nonfalse += self.weights[idx]
            else:
                self.id_state = UNDEF
