"""Reader and canonical printer for the ``.gasp`` ground-program text format.

Grammar (``%`` comments run to end of line)::

    statement := disj "." | sum "." ;
    disj      := headlist [ ":-" [ bodylist ] ] | ":-" [ bodylist ] ;
    headlist  := headatom { "|" headatom } ;
    headatom  := IDENT | "#false" ;
    bodylist  := lit { "," lit } ;
    lit       := [ "not" ] ( IDENT | "#false" ) ;
    sum       := IDENT ":-" "#sum" "{" elem { "," elem } "}" ">=" INT ;
    elem      := INT ":" lit ;
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from .core import (
    FALSE_ATOM,
    FALSE_NAME,
    DisjunctiveRule,
    Program,
    ProgramError,
    Rule,
    SumRule,
    make_lit,
    validate,
)


@dataclass(frozen=True)
class SourceLocation:
    line: int
    column: int

    def __str__(self):
        return f"{self.line}:{self.column}"


class ParseError(Exception):
    def __init__(self, location: SourceLocation, expected: str, found: str = ""):
        self.location = location
        self.expected = expected
        self.found = found
        msg = f"{location}: expected {expected}"
        if found:
            msg += f", found {found!r}"
        super().__init__(msg)


_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+|%[^\n]*)
  | (?P<nl>\n)
  | (?P<if>:-)
  | (?P<geq>>=)
  | (?P<kw>\#sum|\#false)
  | (?P<ident>[a-z][A-Za-z0-9_]*)
  | (?P<int>-?[0-9]+)
  | (?P<punct>[.|,{}:])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    loc: SourceLocation


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    line, col_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        loc = SourceLocation(line, pos - col_start + 1)
        if m is None:
            raise ParseError(loc, "a token", text[pos])
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            col_start = m.end()
        elif kind != "ws":
            val = m.group()
            if kind in ("punct", "kw", "if", "geq") or val == "not":
                kind = val
            toks.append(_Tok(kind, val, loc))
        pos = m.end()
    toks.append(_Tok("eof", "", SourceLocation(line, pos - col_start + 1)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0
        self.names: list[str] = [FALSE_NAME]
        self.index: dict[str, int] = {FALSE_NAME: FALSE_ATOM}
        self.rules: list[Rule] = []

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def expect(self, kind: str, what: str | None = None) -> _Tok:
        t = self.tok
        if t.kind != kind:
            raise ParseError(t.loc, what or repr(kind), t.text or "end of input")
        self.i += 1
        return t

    def accept(self, kind: str) -> bool:
        if self.tok.kind == kind:
            self.i += 1
            return True
        return False

    def intern(self, name: str) -> int:
        idx = self.index.get(name)
        if idx is None:
            idx = self.index[name] = len(self.names)
            self.names.append(name)
        return idx

    def atom(self) -> int:
        t = self.tok
        if t.kind == "#false":
            self.i += 1
            return FALSE_ATOM
        return self.intern(self.expect("ident", "an atom").text)

    def literal(self) -> int:
        neg = self.accept("not")
        return make_lit(self.atom(), neg)

    def positive_int(self, what: str) -> int:
        t = self.expect("int", what)
        if t.text.startswith("-") or t.text.startswith("0"):
            raise ParseError(t.loc, f"{what} (positive integer without leading zeros)", t.text)
        return int(t.text)

    def body(self) -> frozenset[int]:
        if self.tok.kind == ".":
            return frozenset()
        lits = [self.literal()]
        while self.accept(","):
            lits.append(self.literal())
        return frozenset(lits)

    def statement(self) -> Rule:
        start = self.tok
        if self.accept(":-"):
            rule = DisjunctiveRule(frozenset({FALSE_ATOM}), self.body())
        else:
            head = [self.atom()]
            while self.accept("|"):
                head.append(self.atom())
            if self.accept(":-"):
                if self.tok.kind == "#sum":
                    if len(head) != 1 or head[0] == FALSE_ATOM:
                        raise ParseError(start.loc, "a single atom as aggregate id", start.text)
                    rule = self.sum_tail(head[0])
                else:
                    rule = DisjunctiveRule(frozenset(head), self.body())
            else:
                rule = DisjunctiveRule(frozenset(head))
        self.expect(".", "'.'")
        return rule

    def sum_tail(self, ident: int) -> SumRule:
        self.expect("#sum")
        self.expect("{", "'{'")
        elems = []
        seen = set()
        while True:
            w = self.positive_int("a weight")
            self.expect(":", "':'")
            lt = self.tok
            lit = self.literal()
            if lit in seen:
                raise ParseError(lt.loc, "distinct literals in aggregate", lt.text)
            seen.add(lit)
            elems.append((w, lit))
            if not self.accept(","):
                break
        self.expect("}", "'}' or ','")
        self.expect(">=", "'>='")
        bound = self.positive_int("a bound")
        return SumRule(ident, tuple(elems), bound)

    def program(self) -> Program:
        while self.tok.kind != "eof":
            self.rules.append(self.statement())
        return Program(tuple(self.names), tuple(self.rules))


def parse(text: Union[str, bytes], check: bool = True) -> Program:
    """Parse program text; by default the result is validated."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    program = _Parser(text).program()
    return validate(program) if check else program


def parse_file(path, check: bool = True) -> Program:
    with open(path, "rb") as fh:
        return parse(fh.read(), check=check)


def _lit_sort_key(program: Program, lit: int):
    # negative literals first, then by name
    return (0 if lit & 1 else 1, program.names[lit >> 1])


def format_rule(program: Program, rule: Rule) -> str:
    names = program.names
    if isinstance(rule, SumRule):
        elems = sorted(rule.elements, key=lambda e: (e[0], _lit_sort_key(program, e[1])))
        inner = ", ".join(f"{w}:{program.lit_name(l)}" for w, l in elems)
        return f"{names[rule.id]} :- #sum{{ {inner} }} >= {rule.bound}."
    body = ", ".join(program.lit_name(l) for l in sorted(rule.body, key=lambda l: _lit_sort_key(program, l)))
    if rule.head == {FALSE_ATOM}:
        return f":- {body}." if body else f"{FALSE_NAME}."
    head = " | ".join(sorted(names[a] for a in rule.head))
    return f"{head} :- {body}." if body else f"{head}."


def print_program(program: Program) -> str:
    """Canonical text: one rule per line in program order, LF line endings."""
    return "".join(format_rule(program, r) + "\n" for r in program.rules)


__all__ = [
    "ParseError",
    "ProgramError",
    "SourceLocation",
    "format_rule",
    "parse",
    "parse_file",
    "print_program",
]
