"""Component Assignment instance generator and a two-mode comparison harness.

Each user gets one set of weighted ``assign`` atoms instantiated at K bounds,
so a shared-set solver needs one propagator per user where the per-rule
solver needs K.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .core import Program, SumRule
from .parser import parse
from .rewrite import achievable_sums, rewrite_program
from .search import ResourceLimit, Solver, SolverConfig

log = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
XORSHIFT_MULT = 0x2545F4914F6CDD1D
STREAMS = {"prices": 1, "sets": 2}
# restarts keep the desk suite at sub-second runs; both modes use the same policy
BENCH_RESTARTS = "luby:100"


class DegenerateBudget(ValueError):
    pass


class OutcomeMismatch(RuntimeError):
    pass


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


class XorShift64Star:
    """xorshift64* generator; ``stream`` derives an independent state from the seed."""

    def __init__(self, seed: int, stream: int = 0):
        state = splitmix64((seed * 0x100000001B3 + stream) & MASK64)
        self.state = state or 0x853C49E6748FEA9B

    def next(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * XORSHIFT_MULT) & MASK64

    def randint(self, lo: int, hi: int) -> int:
        """Integer in [lo, hi] (modulo reduction; the bias is negligible for small ranges)."""
        return lo + self.next() % (hi - lo + 1)

    def sample(self, items: Sequence, k: int) -> list:
        pool = list(items)
        out = []
        for _ in range(k):
            out.append(pool.pop(self.randint(0, len(pool) - 1)))
        return out


@dataclass
class CaInstance:
    prices: list[int]  # component c(k+1) costs prices[k]
    budgets: list[tuple[int, int]]  # per user, inclusive [min, max]
    incompatible: list[list[int]]  # component indices
    required: list[list[int]]
    bounds_per_user: int

    @property
    def users(self) -> int:
        return len(self.budgets)

    @property
    def components(self) -> int:
        return len(self.prices)

    def __post_init__(self):
        if any(p <= 0 for p in self.prices):
            raise ValueError("prices must be positive")
        if any(lo > hi for lo, hi in self.budgets):
            raise ValueError("budget interval with min > max")
        if any(len(s) < 2 for s in self.incompatible) or any(len(s) < 1 for s in self.required):
            raise ValueError("incompatibility sets need >= 2 components, requirement sets >= 1")


def generate_instance(users: int, components: int, seed: int, bounds_per_user: int = 16,
                      price_max: int = 100) -> CaInstance:
    if users < 1 or components < 0 or bounds_per_user < 2 or price_max < 1:
        raise ValueError("need users >= 1, components >= 0, bounds_per_user >= 2, price_max >= 1")
    rng = XorShift64Star(seed, STREAMS["prices"])
    prices = [rng.randint(1, price_max) for _ in range(components)]
    center = sum(prices) / users
    lo = int(center * 0.75 + 0.5)
    hi = int(center * 1.25 + 0.5)
    if lo < 1 or lo > hi:
        raise DegenerateBudget(f"budget interval [{lo}, {hi}] is empty or non-positive")
    sets = XorShift64Star(seed, STREAMS["sets"])
    incompatible = []
    for _ in range(2 * users):
        k = min(sets.randint(2, 3), components)
        if k >= 2:
            incompatible.append(sorted(sets.sample(range(components), k)))
    required = []
    for _ in range(sets.randint(1, 2)):
        k = min(sets.randint(2, 4), components)
        required.append(sorted(sets.sample(range(components), k)))
    return CaInstance(prices, [(lo, hi)] * users, incompatible, required, bounds_per_user)


def user_bounds(prices: Sequence[int], lo: int, hi: int, k: int) -> tuple[list[int], int, int]:
    """K bounds for one user: the budget endpoints plus evenly spaced interior values.

    Every bound is snapped to an achievable subset sum (which leaves the meaning
    of "cost >= bound" unchanged) and interior values are kept distinct, so
    normalization and duplicate removal leave exactly K bounds when enough
    distinct sums exist.  Returns (bounds, bound for cost >= lo, bound for cost > hi).
    """
    elems = tuple((p, 2 * (j + 1)) for j, p in enumerate(prices))
    sums = achievable_sums(SumRule(1, elems, 1)) if elems else []

    def snap(b):
        return next((s for s in sums if s >= b), b)

    low, high = snap(lo), snap(hi + 1)
    chosen = [low, high]
    inside = [s for s in sums if low < s < high]
    for t in range(1, k - 1):
        if not inside:
            break
        target = lo + (hi + 1 - lo) * t / (k - 1)
        best = min(inside, key=lambda s: (abs(s - target), s))
        inside.remove(best)
        chosen.append(best)
    spare = [s for s in sums if s not in chosen]
    while len(chosen) < k and spare:
        chosen.append(spare.pop(0))
    return sorted(set(chosen)), low, high


def instance_text(inst: CaInstance) -> str:
    """Ground program text for the instance (deterministic, LF line endings)."""
    users = range(1, inst.users + 1)
    comps = range(1, inst.components + 1)
    lines = ["% component assignment instance"]
    for c in comps:
        heads = [f"assign_c{c}_u{u}" for u in users] + [f"unassigned_c{c}"]
        lines.append(" | ".join(heads) + ".")
    for u in users:
        lo, hi = inst.budgets[u - 1]
        elems = ", ".join(f"{p}:assign_c{c}_u{u}" for c, p in zip(comps, inst.prices))
        bounds, low, high = user_bounds(inst.prices, lo, hi, inst.bounds_per_user)
        for b in bounds:
            lines.append(f"atleast_u{u}_{b} :- #sum{{ {elems} }} >= {b}.")
        lines.append(f":- not atleast_u{u}_{low}.")
        lines.append(f":- atleast_u{u}_{high}.")
        for s in inst.incompatible:
            lines.append(":- " + ", ".join(f"assign_c{c + 1}_u{u}" for c in s) + ".")
        for s in inst.required:
            lines.append(":- " + ", ".join(f"not assign_c{c + 1}_u{u}" for c in s) + ".")
    return "\n".join(lines) + "\n"


def generate(users: int, components: int, seed: int, bounds_per_user: int = 16,
             price_max: int = 100) -> str:
    return instance_text(generate_instance(users, components, seed, bounds_per_user, price_max))


def instance_name(users: int, components: int, seed: int, k: int) -> str:
    return f"ca_u{users}_c{components}_k{k}_s{seed}"


def desk_suite(users=(2, 3, 4), components=(20, 30), k: int = 16, seeds=range(1, 6)):
    """(name, text) for the desk-scale comparison suite."""
    for u in users:
        for c in components:
            for s in seeds:
                yield instance_name(u, c, s, k), generate(u, c, s, k)


# -- harness --------------------------------------------------------------

@dataclass
class RunReport:
    instance: str
    mode: str
    outcome: str  # "models-found(n)", "unsat" or "timeout"
    time_ms: float
    stats: dict = field(default_factory=dict)

    @property
    def memory_proxy(self) -> int:
        return self.stats.get("element_entries_stored", 0) + self.stats.get("clause_literals", 0)

    def line(self) -> str:
        stats = " ".join(f"stat:{k}={v}" for k, v in sorted(self.stats.items()))
        return f"{self.instance}\t{self.mode}\t{self.outcome}\t{self.time_ms:.3f}\t{stats}"


def run_once(program: Program, mode: str, limit: int = 1, timeout_ms: Optional[float] = None,
             seed: int = 0, restarts: str = BENCH_RESTARTS) -> tuple[str, float, dict]:
    cfg = SolverConfig(propagator=mode, limit=limit, seed=seed, timeout_ms=timeout_ms,
                       restarts=restarts)
    start = time.perf_counter()
    solver = Solver(program, cfg)
    n = 0
    try:
        for _ in solver.solve():
            n += 1
        outcome = f"models-found({n})" if n else "unsat"
    except ResourceLimit:
        outcome = "timeout"
    elapsed = (time.perf_counter() - start) * 1000.0
    solver._finish()
    stats = dict(solver.stats)
    stats["clause_literals"] = sum(len(c) for c in solver.db.clauses)
    return outcome, elapsed, stats


def run_comparison(instances: Iterable[tuple[str, str]], modes=("standard", "shared"),
                   limit: int = 1, timeout_ms: Optional[float] = 60000.0, repeats: int = 1,
                   seed: int = 0, restarts: str = BENCH_RESTARTS) -> list[RunReport]:
    """Solve each instance in every mode; the reported time is the best of ``repeats``.

    Raises OutcomeMismatch when modes disagree on satisfiability or, under full
    enumeration, on the model count.
    """
    reports = []
    for name, text in instances:
        program = rewrite_program(parse(text))
        group = []
        for mode in modes:
            best = None
            for _ in range(max(1, repeats)):
                outcome, ms, stats = run_once(program, mode, limit, timeout_ms, seed, restarts)
                if best is None or ms < best[1]:
                    best = (outcome, ms, stats)
            group.append(RunReport(name, mode, best[0], best[1], best[2]))
        _check_outcomes(group, limit)
        reports.extend(group)
    return reports


def _check_outcomes(group: list[RunReport], limit: int) -> None:
    done = [r for r in group if r.outcome != "timeout"]
    if not done:
        return
    if limit == 0:
        keys = {r.outcome for r in done}
    else:
        keys = {r.outcome == "unsat" for r in done}
    if len(keys) > 1:
        raise OutcomeMismatch(
            f"{group[0].instance}: " + ", ".join(f"{r.mode}={r.outcome}" for r in group)
        )


CSV_FIELDS = [
    "instance", "mode", "outcome", "time_ms", "propagators_allocated",
    "element_entries_stored", "aggregate_calls", "conflicts", "decisions", "memory_proxy",
]


def write_csv(reports: Sequence[RunReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in reports:
            s = r.stats
            w.writerow([
                r.instance, r.mode, r.outcome, f"{r.time_ms:.3f}",
                s.get("propagators_allocated", 0), s.get("element_entries_stored", 0),
                aggregate_calls(s), s.get("conflicts", 0), s.get("decisions", 0), r.memory_proxy,
            ])


def aggregate_calls(stats: dict) -> int:
    return stats.get("on_literal_true_calls", 0) + stats.get("classic_propagate_calls", 0)


def load_dir(directory) -> list[tuple[str, str]]:
    paths = sorted(Path(directory).glob("*.gasp"))
    return [(p.stem, p.read_text()) for p in paths]
