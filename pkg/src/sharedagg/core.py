"""Ground programs: atoms, literals, disjunctive and sum rules, validation.

Atoms are dense integer indices into ``Program.names``; index 0 is always the
false constant ``#false``.  A literal is an int: ``2 * atom`` for the atom and
``2 * atom + 1`` for its default negation, so ``lit ^ 1`` is the complement.
The literal ``not #false`` (``TRUE_LIT``) plays the role of the true constant.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence, Union

import networkx as nx

FALSE_ATOM = 0
FALSE_NAME = "#false"
FALSE_LIT = 0
TRUE_LIT = 1

INT64_MAX = 2**63 - 1


def make_lit(atom: int, negated: bool = False) -> int:
    return (atom << 1) | int(negated)


def atom_of(lit: int) -> int:
    return lit >> 1


def is_negated(lit: int) -> bool:
    return bool(lit & 1)


def complement(lit: int) -> int:
    return lit ^ 1


@dataclass(frozen=True)
class DisjunctiveRule:
    """``p1 | ... | pm :- l1, ..., ln.``; a head of only ``#false`` is a constraint."""

    head: frozenset[int]
    body: frozenset[int] = frozenset()

    @property
    def head_atoms(self) -> frozenset[int]:
        """H(r): head atoms without the false constant."""
        return self.head - {FALSE_ATOM}

    @property
    def is_constraint(self) -> bool:
        return not self.head_atoms


@dataclass(frozen=True)
class SumRule:
    """``id :- #sum{ w0:l0, ..., wn:ln } >= bound.``"""

    id: int
    elements: tuple[tuple[int, int], ...]
    bound: int

    def __post_init__(self):
        object.__setattr__(self, "elements", canonical_elements(self.elements))

    @property
    def total_weight(self) -> int:
        return sum(w for w, _ in self.elements)

    @property
    def element_key(self) -> tuple[tuple[int, int], ...]:
        return self.elements


Rule = Union[DisjunctiveRule, SumRule]


def canonical_elements(elements: Iterable[tuple[int, int]]) -> tuple[tuple[int, int], ...]:
    """Sort weighted elements by (atom, polarity, weight)."""
    return tuple(sorted(elements, key=lambda e: (e[1] >> 1, e[1] & 1, e[0])))


@dataclass(frozen=True)
class Clause:
    literals: frozenset[int]
    tautology: bool = False


@dataclass(frozen=True, eq=False)
class Program:
    """An ordered collection of ground rules over an atom table.

    Two programs compare equal when their rules, read through atom names,
    coincide in order; atom indices and unused table entries are ignored.
    """

    names: tuple[str, ...]
    rules: tuple[Rule, ...] = ()
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.names or self.names[0] != FALSE_NAME:
            raise ValueError("atom 0 must be the false constant")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.names)})

    @classmethod
    def empty(cls) -> "Program":
        return cls((FALSE_NAME,))

    def atom(self, name: str) -> int:
        return self._index[name]

    def lit(self, text: str) -> int:
        """Literal from ``"a"`` or ``"not a"``."""
        text = text.strip()
        if text.startswith("not "):
            return make_lit(self._index[text[4:].strip()], True)
        return make_lit(self._index[text])

    def lit_name(self, lit: int) -> str:
        name = self.names[lit >> 1]
        return f"not {name}" if lit & 1 else name

    def with_rules(self, rules: Iterable[Rule]) -> "Program":
        return Program(self.names, tuple(rules))

    def with_atoms(self, extra: Sequence[str]) -> tuple["Program", list[int]]:
        """Return a program whose table also holds ``extra`` and their indices."""
        names = list(self.names)
        out = []
        for n in extra:
            if n in self._index:
                out.append(self._index[n])
            else:
                out.append(len(names))
                names.append(n)
        return Program(tuple(names), self.rules), out

    @property
    def disjunctive_rules(self) -> list[DisjunctiveRule]:
        return [r for r in self.rules if isinstance(r, DisjunctiveRule)]

    @property
    def sum_rules(self) -> list[SumRule]:
        return [r for r in self.rules if isinstance(r, SumRule)]

    def atoms(self) -> list[int]:
        """atoms(P): regular atoms occurring in some rule, ascending."""
        seen = set()
        for r in self.rules:
            seen.update(_rule_atoms(r))
        seen.discard(FALSE_ATOM)
        return sorted(seen)

    def named_rules(self) -> list[tuple]:
        out = []
        for r in self.rules:
            if isinstance(r, DisjunctiveRule):
                out.append((
                    "d",
                    frozenset(self.names[a] for a in r.head),
                    frozenset(self.lit_name(l) for l in r.body),
                ))
            else:
                out.append((
                    "s",
                    self.names[r.id],
                    frozenset((w, self.lit_name(l)) for w, l in r.elements),
                    r.bound,
                ))
        return out

    def __eq__(self, other):
        if not isinstance(other, Program):
            return NotImplemented
        return self.named_rules() == other.named_rules()

    def __hash__(self):
        return hash(tuple(self.named_rules()))

    def __iter__(self) -> Iterator[Rule]:
        return iter(self.rules)

    def __len__(self):
        return len(self.rules)


def _rule_atoms(r: Rule) -> Iterator[int]:
    if isinstance(r, DisjunctiveRule):
        yield from r.head
        for l in r.body:
            yield l >> 1
    else:
        yield r.id
        for _, l in r.elements:
            yield l >> 1


class ProgramError(ValueError):
    """A program violates a structural requirement; ``rule`` names the culprit."""

    def __init__(self, message: str, rule: Rule | None = None, rule_text: str | None = None):
        self.rule = rule
        self.rule_text = rule_text
        super().__init__(f"{message}: {rule_text}" if rule_text else message)


class RecursiveAggregateId(ProgramError):
    pass


class DuplicateAggregateId(ProgramError):
    pass


class IdInRuleHead(ProgramError):
    pass


class WeightOverflow(ProgramError):
    pass


class InvalidWeight(ProgramError):
    pass


def clause_of(rule: DisjunctiveRule) -> Clause:
    """C(r) with the false constant simplified away.

    ``#false`` in the head is dropped, ``not #false`` in the body is dropped,
    and ``#false`` in the body (or a complementary pair) yields a tautology.
    """
    lits = {make_lit(a) for a in rule.head if a != FALSE_ATOM}
    for l in rule.body:
        if l == FALSE_LIT:
            return Clause(frozenset(), tautology=True)
        if l == TRUE_LIT:
            continue
        lits.add(l ^ 1)
    if any(l ^ 1 in lits for l in lits):
        return Clause(frozenset(lits), tautology=True)
    return Clause(frozenset(lits))


def dependency_graph(program: Program) -> nx.DiGraph:
    """Arcs from head atoms to body atoms and from aggregate ids to element atoms.

    Polarity is ignored and the false constant is not a node.
    """
    g = nx.DiGraph()
    g.add_nodes_from(program.atoms())
    for r in program.rules:
        if isinstance(r, DisjunctiveRule):
            for x in sorted(r.head_atoms):
                for l in sorted(r.body):
                    if l >> 1 != FALSE_ATOM:
                        g.add_edge(x, l >> 1)
        else:
            for _, l in r.elements:
                if l >> 1 != FALSE_ATOM:
                    g.add_edge(r.id, l >> 1)
    return g


def recursive_atoms(graph: nx.DiGraph) -> set[int]:
    out = set()
    for comp in nx.strongly_connected_components(graph):
        if len(comp) > 1:
            out.update(comp)
    out.update(n for n in graph.nodes if graph.has_edge(n, n))
    return out


def rule_text(program: Program, rule: Rule) -> str:
    from .parser import format_rule

    return format_rule(program, rule)


def validate(program: Program) -> Program:
    """Check the structural requirements on sum rules; return the program unchanged."""
    ids: dict[int, SumRule] = {}
    for r in program.sum_rules:
        if r.id == FALSE_ATOM:
            raise ProgramError("aggregate id must be a regular atom", r, rule_text(program, r))
        if r.bound <= 0 or any(w <= 0 for w, _ in r.elements):
            raise InvalidWeight("weights and bounds must be positive", r, rule_text(program, r))
        if len({l for _, l in r.elements}) != len(r.elements):
            raise ProgramError("duplicate literal in aggregate", r, rule_text(program, r))
        if r.total_weight > INT64_MAX or r.bound > INT64_MAX:
            raise WeightOverflow("total weight exceeds 64-bit range", r, rule_text(program, r))
        if r.id in ids:
            raise DuplicateAggregateId(
                f"aggregate id {program.names[r.id]} defined twice", r, rule_text(program, r)
            )
        ids[r.id] = r
    for r in program.disjunctive_rules:
        clash = r.head_atoms & ids.keys()
        if clash:
            name = program.names[min(clash)]
            raise IdInRuleHead(f"aggregate id {name} occurs in a rule head", r, rule_text(program, r))
    rec = recursive_atoms(dependency_graph(program))
    for r in program.sum_rules:
        if r.id in rec:
            raise RecursiveAggregateId(
                f"aggregate id {program.names[r.id]} is recursive", r, rule_text(program, r)
            )
    return program
