"""Ground answer-set solving with shared propagation for sum aggregates."""
from .core import DisjunctiveRule, Program, ProgramError, SumRule, validate
from .oracle import stable_models
from .parser import ParseError, parse, parse_file, print_program
from .rewrite import rewrite_program
from .search import Solver, SolverConfig, SolveResult, solve

__all__ = [
    "DisjunctiveRule",
    "ParseError",
    "Program",
    "ProgramError",
    "SolveResult",
    "Solver",
    "SolverConfig",
    "SumRule",
    "parse",
    "parse_file",
    "print_program",
    "rewrite_program",
    "solve",
    "stable_models",
    "validate",
]
