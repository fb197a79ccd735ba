"""CDCL stable-model search over clauses plus sum-aggregate propagators.

Disjunctive rules become clauses.  Every regular atom that is not an
aggregate id gets a support clause: if it is true, some rule having it in the
head has a true body and all other head atoms false.  Sum rules are handled
only by propagators, which enforce ``id <-> sum`` in both directions.  On
non-tight programs each total candidate is checked for reduct minimality by
a nested search.
"""
from __future__ import annotations

import heapq
import logging
import random
import time
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional

import networkx as nx

from .core import (
    FALSE_ATOM,
    FALSE_LIT,
    TRUE_LIT,
    DisjunctiveRule,
    Program,
    SumRule,
    clause_of,
    make_lit,
)
from .propagate import (
    FALSE,
    TRUE,
    UNDEF,
    Assignment,
    ClassicPropagator,
    ClauseDatabase,
    Deferred,
    SharedSetPropagator,
)
from .rewrite import SharedSetGroup, group_shared_sets

log = logging.getLogger(__name__)


class ResourceLimit(RuntimeError):
    pass


@dataclass
class SolverConfig:
    propagator: str = "shared"  # or "standard"
    limit: int = 1  # 0 enumerates all models
    stability: str = "auto"  # "always", "off"
    seed: int = 0
    restarts: str = "off"  # or "luby:<base>"
    eager_reasons: bool = False
    timeout_ms: Optional[float] = None
    conflict_limit: Optional[int] = None
    debug_checks: bool = False
    trace: bool = False
    record_learned: bool = False
    phase_saving: bool = False  # reuse the last value of a variable instead of false

    def __post_init__(self):
        if self.propagator not in ("shared", "standard"):
            raise ValueError(f"unknown propagator mode {self.propagator!r}")
        if self.stability not in ("auto", "always", "off"):
            raise ValueError(f"unknown stability mode {self.stability!r}")
        if self.limit < 0:
            raise ValueError("enumeration limit must be >= 0")
        if self.restarts != "off" and not self.restarts.startswith("luby:"):
            raise ValueError(f"unknown restart policy {self.restarts!r}")


@dataclass
class LearnedClause:
    literals: tuple[int, ...]
    tainted: bool  # depends on a clause blocking an emitted model
    models_before: int


@dataclass
class SolveResult:
    models: list[frozenset[str]]
    status: str  # SATISFIABLE, UNSATISFIABLE, COMPLETE
    stats: dict = field(default_factory=dict)


def luby(i: int) -> int:
    """The i-th element (1-based) of the Luby sequence."""
    k = 1
    while (1 << k) - 1 < i:
        k += 1
    while True:
        if i == (1 << k) - 1:
            return 1 << (k - 1)
        i -= (1 << (k - 1)) - 1
        k = 1
        while (1 << k) - 1 < i:
            k += 1


def is_tight(program: Program) -> bool:
    """No cycle through positive dependencies (head to positive body, id to positive element)."""
    g = nx.DiGraph()
    for r in program.rules:
        if isinstance(r, DisjunctiveRule):
            for x in r.head_atoms:
                for l in r.body:
                    if not l & 1 and l >> 1 != FALSE_ATOM:
                        g.add_edge(x, l >> 1)
        else:
            for _, l in r.elements:
                if not l & 1 and l >> 1 != FALSE_ATOM:
                    g.add_edge(r.id, l >> 1)
    return nx.is_directed_acyclic_graph(g)


def partition_sum_rules(program: Program, mode: str):
    """Split sum rules into shared groups and rules left to classic propagators."""
    if mode == "standard":
        return [], list(program.sum_rules)
    classic: list[SumRule] = []
    usable: list[SumRule] = []
    for r in program.sum_rules:
        lits = {l for _, l in r.elements}
        if any(l ^ 1 in lits for l in lits):
            log.warning("aggregate %s has complementary elements; using classic propagator",
                        program.names[r.id])
            classic.append(r)
        else:
            usable.append(r)
    groups = []
    for g in group_shared_sets(program.with_rules(usable)):
        members, seen = [], set()
        for b, i in g.members:
            if b in seen:
                log.warning("aggregate %s duplicates bound %d; using classic propagator",
                            program.names[i], b)
                classic.append(next(r for r in usable if r.id == i))
            else:
                seen.add(b)
                members.append((b, i))
        groups.append(SharedSetGroup(g.elements, tuple(members)))
    return groups, classic


class Solver:
    def __init__(self, program: Program, config: Optional[SolverConfig] = None):
        self.program = program
        self.config = config or SolverConfig()
        self.regular = program.atoms()
        self.ids = {r.id for r in program.sum_rules}
        self.num_atoms = len(program.names)
        self.assign = Assignment(self.num_atoms)
        self.db = ClauseDatabase(self.num_atoms)
        self.units: list[int] = [make_lit(FALSE_ATOM, True)]
        self.unsat = False
        self.tainted: set[int] = set()
        self.learned: list[LearnedClause] = []
        self.trace: list[tuple] = []
        self.models_found = 0
        self.stats = {
            "decisions": 0,
            "conflicts": 0,
            "inferences": 0,
            "learned": 0,
            "restarts": 0,
            "stability_checks": 0,
            "lazy_reasons_resolved": 0,
            "debug_violations": 0,
            "deleted": 0,
        }
        self._aux: dict[frozenset, int] = {}
        self.learnts: list[list[int]] = []
        self.lbd: dict[int, int] = {}
        self._add_rule_clauses()
        self._add_support_clauses()
        self.assign.grow(self.num_atoms)
        self.db.grow(self.num_atoms)
        self._build_propagators()
        if self.config.stability == "always":
            self.check_models = True
        elif self.config.stability == "off":
            self.check_models = False
        else:
            self.check_models = not is_tight(program)
        self._init_heuristic()
        self.max_learnts = max(2000, len(self.db.clauses) // 3)
        self.qhead = 0
        self._started = False

    # -- construction -------------------------------------------------

    def _new_atom(self) -> int:
        self.num_atoms += 1
        return self.num_atoms - 1

    def _add_clause(self, lits) -> None:
        lits = list(dict.fromkeys(lits))
        if any(l ^ 1 in lits for l in lits):
            return
        if not lits:
            self.unsat = True
        elif len(lits) == 1:
            self.units.append(lits[0])
        else:
            self.db.clauses.append(lits)

    def _add_rule_clauses(self) -> None:
        for r in self.program.disjunctive_rules:
            c = clause_of(r)
            if not c.tautology:
                self._add_clause(sorted(c.literals))

    def _conjunction(self, lits: frozenset) -> int:
        """A literal equivalent to the conjunction of ``lits`` (fresh atom if needed)."""
        if len(lits) == 1:
            return next(iter(lits))
        aux = self._aux.get(lits)
        if aux is None:
            aux = self._aux[lits] = self._new_atom()
            a = make_lit(aux)
            for l in sorted(lits):
                self._add_clause([a ^ 1, l])
            self._add_clause([a] + sorted(l ^ 1 for l in lits))
        return make_lit(aux)

    def _add_support_clauses(self) -> None:
        defining: dict[int, list[DisjunctiveRule]] = {}
        for r in self.program.disjunctive_rules:
            if FALSE_LIT in r.body or any(l ^ 1 in r.body for l in r.body):
                continue
            for a in r.head_atoms:
                defining.setdefault(a, []).append(r)
        for a in range(1, len(self.program.names)):
            if a in self.ids:
                continue
            options = []
            supported = False
            for r in defining.get(a, []):
                cond = frozenset(l for l in r.body if l != TRUE_LIT) | frozenset(
                    make_lit(b, True) for b in r.head_atoms if b != a
                )
                if not cond:
                    supported = True
                    break
                options.append(cond)
            if supported:
                continue
            self._add_clause([make_lit(a, True)] + [self._conjunction(c) for c in options])

    def _build_propagators(self) -> None:
        eager = self.config.eager_reasons
        groups, classic = partition_sum_rules(self.program, self.config.propagator)
        self.props = [SharedSetPropagator(g, eager) for g in groups]
        self.props += [ClassicPropagator(r, eager) for r in classic]
        self.shared_props = self.props[: len(groups)]
        self.classic_props = self.props[len(groups):]
        self.agg_watch: list[list] = [[] for _ in range(2 * self.num_atoms)]
        for p in self.props:
            p.bind(self.assign)
            for lit, role, idx in p.watch_list():
                self.agg_watch[lit].append((p, role, idx))
        self.stats["propagators_allocated"] = len(self.props)
        self.stats["element_entries_stored"] = sum(p.entries for p in self.props)

    def _init_heuristic(self) -> None:
        self.activity = [0.0] * self.num_atoms
        if self.config.seed:
            rng = random.Random(self.config.seed)
            self.activity = [rng.random() * 1e-3 for _ in range(self.num_atoms)]
        self.var_inc = 1.0
        self.phase = [1] * self.num_atoms  # 1 = negative literal first
        self.heap = [(-self.activity[v], v) for v in range(1, self.num_atoms)]
        heapq.heapify(self.heap)

    # -- core loop ----------------------------------------------------

    def _enqueue_units(self) -> bool:
        a = self.assign
        for l in self.units:
            v = a.value[l]
            if v == FALSE:
                return False
            if v == UNDEF:
                a.assign(l, [l])
        for c in self.db.clauses:
            self.db.watches[c[0]].append(c)
            self.db.watches[c[1]].append(c)
        for p in self.props:
            for l, r in self._initial_inferences(p):
                v = a.value[l]
                if v == FALSE:
                    return False
                if v == UNDEF:
                    a.assign(l, r)
        return True

    @staticmethod
    def _initial_inferences(p):
        # sums that are out of reach before anything is assigned
        if isinstance(p, SharedSetPropagator):
            return [(il ^ 1, ()) for b, il in zip(p.bounds, p.idlits) if b > p.max_sum]
        if p.nonfalse < p.bound:
            return [(p.idlit ^ 1, ())]
        return []

    def reason_lits(self, atom: int) -> tuple[int, ...]:
        r = self.assign.reason[atom]
        if r is None:
            return ()
        if isinstance(r, list):
            return tuple(q ^ 1 for q in r if q >> 1 != atom)
        if isinstance(r, tuple):
            return r
        self.stats["lazy_reasons_resolved"] += 1
        res = r.resolve()
        self.assign.reason[atom] = res
        return res

    def propagate(self) -> Optional[list[int]]:
        """Propagate queued literals; return a falsified clause on conflict."""
        a = self.assign
        trail = a.trail
        val = a.value
        db = self.db
        watch = self.agg_watch
        inferences = 0
        confl = None
        while self.qhead < len(trail):
            lit = trail[self.qhead]
            self.qhead += 1
            confl = db.propagate(a, lit)
            if confl is not None:
                break
            for prop, role, idx in watch[lit]:
                for l, r in prop.on_true(lit, role, idx):
                    v = val[l]
                    if v == UNDEF:
                        a.assign(l, r)
                        inferences += 1
                    elif v == FALSE:
                        if isinstance(r, Deferred):
                            self.stats["lazy_reasons_resolved"] += 1
                            r = r.resolve()
                        confl = [l] + [q ^ 1 for q in r]
                        break
                if confl is not None:
                    break
            if confl is not None:
                break
        self.stats["inferences"] += inferences
        if self.config.debug_checks:
            self._debug_check(complete=confl is None)
        return confl

    def _debug_check(self, complete: bool) -> None:
        val = self.assign.value
        for p in self.props:
            if p.recompute() != p.snapshot():
                self.stats["debug_violations"] += 1
            seen = {e[0] for e in p.local}
            if any(val[l] != TRUE for l in seen):
                self.stats["debug_violations"] += 1
            if complete:
                relevant = {l for l, _, _ in p.watch_list() if val[l] == TRUE}
                if relevant != seen:
                    self.stats["debug_violations"] += 1

    def backtrack(self, level: int) -> None:
        if level >= self.assign.decision_level:
            return
        for p in self.props:
            p.backtrack(level)
        removed = self.assign.backtrack(level)
        act = self.activity
        phase = self.phase if self.config.phase_saving else None
        for lit in removed:
            v = lit >> 1
            if phase is not None:
                phase[v] = lit & 1
            heapq.heappush(self.heap, (-act[v], v))
        self.qhead = min(self.qhead, len(self.assign.trail))
        if self.config.debug_checks:
            self._debug_check(complete=False)

    def _bump(self, v: int) -> None:
        act = self.activity
        act[v] += self.var_inc
        if act[v] > 1e100:
            for k in range(len(act)):
                act[k] *= 1e-100
            self.var_inc *= 1e-100
            val = self.assign.value
            self.heap = [(-act[u], u) for u in range(1, self.num_atoms) if val[2 * u] == UNDEF]
            heapq.heapify(self.heap)
        elif self.assign.value[2 * v] == UNDEF:
            heapq.heappush(self.heap, (-act[v], v))

    def _pick(self) -> Optional[int]:
        heap = self.heap
        val = self.assign.value
        act = self.activity
        while heap:
            neg, v = heapq.heappop(heap)
            if val[2 * v] == UNDEF and -neg == act[v]:
                return v
        # stale entries exhausted: fall back to a scan
        for v in range(1, self.num_atoms):
            if val[2 * v] == UNDEF:
                return v
        return None

    def analyze(self, confl: list[int]) -> tuple[list[int], int, bool]:
        """First-UIP learning; returns (clause, backjump level, tainted)."""
        a = self.assign
        level = a.level
        trail = a.trail
        cur = a.decision_level
        seen = set()
        learnt: list[int] = [0]
        counter = 0
        tainted = id(confl) in self.tainted
        idx = len(trail) - 1
        lits = confl
        p = None
        while True:
            for q in lits:
                v = q >> 1
                if level[v] == 0:
                    # level-0 facts may rest on model-blocking clauses
                    tainted = tainted or self.models_found > 0
                    continue
                if v not in seen:
                    seen.add(v)
                    self._bump(v)
                    if level[v] >= cur:
                        counter += 1
                    else:
                        learnt.append(q)
            while (trail[idx] >> 1) not in seen:
                idx -= 1
            p = trail[idx]
            idx -= 1
            seen.discard(p >> 1)
            counter -= 1
            if counter == 0:
                break
            r = a.reason[p >> 1]
            if isinstance(r, list) and id(r) in self.tainted:
                tainted = True
            lits = [q ^ 1 for q in self.reason_lits(p >> 1)]
        learnt[0] = p ^ 1
        # drop literals implied by the rest of the clause
        kept = []
        for q in learnt[1:]:
            v = q >> 1
            r = a.reason[v]
            if r is None:
                kept.append(q)
                continue
            reason = self.reason_lits(v)
            if all(level[x >> 1] == 0 or (x >> 1) in seen for x in reason):
                if isinstance(r, list) and id(r) in self.tainted:
                    tainted = True
                if self.models_found and any(level[x >> 1] == 0 for x in reason):
                    tainted = True
            else:
                kept.append(q)
        rest = sorted(kept, key=lambda q: (-level[q >> 1], q))
        learnt = [learnt[0]] + rest
        bj = level[rest[0] >> 1] if rest else 0
        return learnt, bj, tainted

    def _learn(self, confl: list[int], tainted_confl: bool = False) -> bool:
        """Resolve a falsified clause; False when the empty clause is derived."""
        a = self.assign
        if tainted_confl:
            self.tainted.add(id(confl))
        if not confl:
            return False
        top = max(a.level[q >> 1] for q in confl)
        if top == 0:
            return False
        if top < a.decision_level:
            self.backtrack(top)
        self.stats["conflicts"] += 1
        learnt, bj, tainted = self.analyze(confl)
        if self.config.record_learned:
            self.learned.append(LearnedClause(tuple(sorted(learnt)), tainted, self.models_found))
        if self.config.trace:
            self.trace.append(("learn", tuple(sorted(learnt)), bj))
        self.backtrack(bj)
        self.stats["learned"] += 1
        if len(learnt) == 1:
            self.units.append(learnt[0])
            a.assign(learnt[0], learnt)
        else:
            self.db.attach(learnt)
            self.learnts.append(learnt)
            self.lbd[id(learnt)] = len({a.level[q >> 1] for q in learnt})
            a.assign(learnt[0], learnt)
        if tainted:
            self.tainted.add(id(learnt))
        self.var_inc /= 0.95
        if len(self.learnts) >= self.max_learnts:
            self._reduce_db()
        return True

    def _reduce_db(self) -> None:
        """Forget the worse half of the learned clauses (by level count, then length)."""
        reason = self.assign.reason
        ranked = sorted(self.learnts, key=lambda c: (self.lbd[id(c)], len(c)))
        half = len(ranked) // 2
        keep, drop = [], set()
        for k, c in enumerate(ranked):
            if k < half or self.lbd[id(c)] <= 2 or reason[c[0] >> 1] is c:
                keep.append(c)
            else:
                drop.add(id(c))
        for i in drop:
            self.lbd.pop(i)
            self.tainted.discard(i)
        self.learnts = [c for c in self.learnts if id(c) not in drop]
        db = self.db
        db.clauses = [c for c in db.clauses if id(c) not in drop]
        for ws in db.watches:
            ws.clear()
        for c in db.clauses:
            db.watches[c[0]].append(c)
            db.watches[c[1]].append(c)
        self.stats["deleted"] += len(drop)
        self.max_learnts = int(self.max_learnts * 1.1)

    def _add_blocking(self, lits: list[int], tainted: bool) -> bool:
        """Store a clause falsified by the current total assignment and learn from it."""
        level = self.assign.level
        clause = sorted(lits, key=lambda q: (-level[q >> 1], q))
        if len(clause) >= 2:
            self.db.attach(clause)
        elif clause:
            self.units.append(clause[0])
        if tainted:
            self.tainted.add(id(clause))
        return self._learn(clause)

    def _deadline_check(self) -> None:
        if self._deadline is not None and time.perf_counter() > self._deadline:
            raise ResourceLimit("time limit exceeded")
        lim = self.config.conflict_limit
        if lim is not None and self.stats["conflicts"] > lim:
            raise ResourceLimit("conflict limit exceeded")

    def model_atoms(self) -> frozenset[int]:
        val = self.assign.value
        return frozenset(a for a in self.regular if val[2 * a] == TRUE)

    def solve(self) -> Iterator[frozenset[int]]:
        """Yield stable models as sets of true regular atoms.

        ``self.status`` is COMPLETE, SATISFIABLE or UNSATISFIABLE afterwards.
        """
        if self._started:
            raise RuntimeError("solve() may only be called once per Solver")
        self._started = True
        cfg = self.config
        self._deadline = None
        if cfg.timeout_ms is not None:
            self._deadline = time.perf_counter() + cfg.timeout_ms / 1000.0
        self.status = "UNSATISFIABLE"
        if self.unsat or not self._enqueue_units():
            self._finish()
            return
        restart_base = int(cfg.restarts.split(":")[1]) if cfg.restarts != "off" else 0
        restart_idx, until_restart = 1, (luby(1) * restart_base if restart_base else None)
        steps = 0
        while True:
            steps += 1
            if steps & 63 == 0:
                self._deadline_check()
            confl = self.propagate()
            if confl is not None:
                if cfg.trace:
                    self.trace.append(("conflict", self.assign.decision_level))
                if not self._learn(confl):
                    break
                if until_restart is not None:
                    until_restart -= 1
                    if until_restart <= 0:
                        restart_idx += 1
                        until_restart = luby(restart_idx) * restart_base
                        self.stats["restarts"] += 1
                        self.backtrack(0)
                continue
            v = self._pick()
            if v is None:
                if self.check_models and not self._is_stable():
                    if cfg.trace:
                        self.trace.append(("unstable", tuple(sorted(self.model_atoms()))))
                    if not self._add_blocking(self._blocking_lits(), tainted=False):
                        break
                    continue
                model = self.model_atoms()
                self.models_found += 1
                if cfg.trace:
                    self.trace.append(("model", tuple(sorted(model))))
                yield model
                if cfg.limit and self.models_found >= cfg.limit:
                    self.status = "SATISFIABLE"
                    self._finish()
                    return
                if not self._add_blocking(self._blocking_lits(), tainted=True):
                    break
                continue
            self.stats["decisions"] += 1
            self.assign.new_level()
            lit = 2 * v + self.phase[v]
            if cfg.trace:
                self.trace.append(("decide", lit))
            self.assign.assign(lit)
        self.status = "COMPLETE" if self.models_found else "UNSATISFIABLE"
        self._finish()

    def _finish(self) -> None:
        self.stats["on_literal_true_calls"] = sum(p.calls for p in self.shared_props)
        self.stats["classic_propagate_calls"] = sum(p.calls for p in self.classic_props)
        self.stats["models"] = self.models_found

    def _blocking_lits(self) -> list[int]:
        val = self.assign.value
        return [make_lit(a, val[2 * a] == TRUE) for a in self.regular]

    # -- stability ----------------------------------------------------

    def _is_stable(self) -> bool:
        self.stats["stability_checks"] += 1
        return check_stability(self.model_atoms(), self.program, self.config.propagator)


def minimality_program(candidate: frozenset[int], program: Program) -> Optional[Program]:
    """Program whose models are the models J of the reduct with J a proper subset of ``candidate``.

    Returns None when ``candidate`` has no true atoms (nothing to shrink).
    """
    if not candidate:
        return None

    def holds(l: int) -> bool:
        a = l >> 1
        return (a != FALSE_ATOM and a in candidate) != bool(l & 1)

    rules = []
    for r in program.rules:
        if isinstance(r, DisjunctiveRule):
            if all(holds(l) for l in r.body):
                head = frozenset(a for a in r.head_atoms if a in candidate) or frozenset({FALSE_ATOM})
                rules.append(DisjunctiveRule(head, frozenset(l for l in r.body if not l & 1)))
        elif sum(w for w, l in r.elements if holds(l)) >= r.bound:
            elems = [(w, l) for w, l in r.elements if not l & 1 and holds(l)]
            const = sum(w for w, l in r.elements if l & 1 and holds(l))
            if const:
                elems.append((const, TRUE_LIT))
            rules.append(SumRule(r.id, tuple(elems), r.bound))
    rules.append(DisjunctiveRule(frozenset({FALSE_ATOM}), frozenset(make_lit(a) for a in candidate)))
    return program.with_rules(rules)


def check_stability(candidate: frozenset[int], program: Program, propagator: str = "shared") -> bool:
    """True iff no proper subset of ``candidate`` models the reduct.

    A smaller model exists iff a supported one does, so a nested search with
    the check disabled decides the question.
    """
    sub = minimality_program(candidate, program)
    if sub is None:
        return True
    inner = Solver(sub, SolverConfig(propagator=propagator, limit=1, stability="off"))
    for _ in inner.solve():
        return False
    return True


def solve(program: Program, config: Optional[SolverConfig] = None) -> SolveResult:
    """Run the search and collect models as sets of atom names."""
    solver = Solver(program, config)
    names = program.names
    models = [frozenset(names[a] for a in m) for m in solver.solve()]
    return SolveResult(models, solver.status, dict(solver.stats))
