"""Acceptance criteria 1-10, each at its stated tolerance."""
import logging
import random
import time

import pytest

from sharedagg.bench import aggregate_calls, desk_suite, run_comparison
from sharedagg.oracle import holds, named_models, stable_models
from sharedagg.parser import print_program
from sharedagg.propagate import INF
from sharedagg.rewrite import rewrite_program
from sharedagg.search import Solver, SolverConfig

from acceptance_log import criterion
from common import (
    REWRITTEN_RUN,
    RUN_MODELS,
    S7,
    compare_state,
    feed,
    named,
    random_state,
    run_group,
    run_program,
)
from randprog import random_program

SOLVER_SEEDS = range(1000, 1300)


def test_criterion_1_running_example_models():
    detail = []
    with criterion(1, detail):
        start = time.perf_counter()
        p = run_program()
        assert named_models(p, stable_models(p)) == RUN_MODELS
        for mode in ("shared", "standard"):
            s = Solver(rewrite_program(p), SolverConfig(propagator=mode, limit=0))
            got = [frozenset(p.names[a] for a in m) for m in s.solve()]
            assert set(got) == RUN_MODELS and len(got) == 4, mode
        elapsed = time.perf_counter() - start
        detail.append(f"4 models in both modes and oracle, {elapsed:.3f}s")
        assert elapsed < 1.0


def test_criterion_2_rewritten_program_text():
    detail = []
    with criterion(2, detail):
        start = time.perf_counter()
        p = run_program()
        assert print_program(rewrite_program(p, emit_intermediate=True)) == REWRITTEN_RUN + S7
        assert print_program(rewrite_program(p)) == REWRITTEN_RUN
        elapsed = time.perf_counter() - start
        detail.append(f"exact text match, {elapsed:.3f}s")
        assert elapsed < 1.0


def test_criterion_3_scalars_and_inferences():
    detail = []
    with criterion(3, detail):
        prog, group = run_group()
        assert feed(prog, group, [])[1].snapshot() == (0, 7, 0, INF)
        assert feed(prog, group, ["p2", "not p5", "a5", "not a7"])[1].snapshot() == (2, 2, 5, 7)
        cases = [
            (["not a7", "not n2", "p2"], [("a2", {"p2"}), ("not p5", {"p2", "not a7"})]),
            (["a2", "n5", "not p5"],
             [("not a5", {"not p5"}), ("not a7", {"not p5"}), ("p2", {"not p5", "a2"})]),
            (["a5"], [("p5", {"a5"})]),
            (["not a5"], [("not p5", {"not a5"})]),
        ]
        for lits, expected in cases:
            for eager in (False, True):
                got = named(prog, feed(prog, group, lits, eager)[2])
                assert got == {(l, frozenset(r)) for l, r in expected}, (lits, eager)
        detail.append("2 snapshots, 4 inference sets, lazy and eager")


def test_criterion_4_rewriting_preserves_models():
    detail = []
    with criterion(4, detail):
        start = time.perf_counter()
        mismatches = 0
        for seed in range(2000, 2500):
            p = random_program(seed, max_atoms=10, max_sums=4, max_disj=5, max_weight=6)
            if named_models(p, stable_models(p)) != named_models(p, stable_models(rewrite_program(p))):
                mismatches += 1
        elapsed = time.perf_counter() - start
        detail.append(f"500 programs, {mismatches} mismatches, {elapsed:.1f}s")
        assert mismatches == 0 and elapsed < 60


def test_criterion_5_shared_equals_classic():
    detail = []
    with criterion(5, detail):
        start = time.perf_counter()
        bad = []
        for seed in range(3000, 4000):
            group, rules, a, lit = random_state(random.Random(seed))
            msg = compare_state(group, rules, a, lit)
            if msg:
                bad.append((seed, msg))
        elapsed = time.perf_counter() - start
        detail.append(f"1000 states, {len(bad)} mismatches, {elapsed:.1f}s")
        assert not bad, bad[:3]
        assert elapsed < 30


def _valuation(solver, model):
    vals = {a: (a in model) for a in range(1, len(solver.program.names))}
    for lits, aux in solver._aux.items():
        vals[aux] = all(holds(model, l) for l in lits)
    return lambda l: (l >> 1) != 0 and vals[l >> 1] != bool(l & 1)


@pytest.fixture(scope="module")
def solver_suite():
    """Criterion 6 runs, keeping what criteria 7, 8 and 10 inspect."""
    logging.disable(logging.WARNING)
    rows = []
    try:
        for seed in SOLVER_SEEDS:
            p = random_program(seed)
            expected = stable_models(p)
            prog = rewrite_program(p)
            for mode in ("shared", "standard"):
                runs = {}
                for eager in (False, True):
                    s = Solver(prog, SolverConfig(propagator=mode, limit=0, stability="always",
                                                  debug_checks=True, trace=True,
                                                  record_learned=True, eager_reasons=eager))
                    models = list(s.solve())
                    runs[eager] = (s, models)
                rows.append((seed, mode, expected, runs))
    finally:
        logging.disable(logging.NOTSET)
    return rows


def test_criterion_6_solver_matches_oracle(solver_suite):
    detail = []
    with criterion(6, detail):
        bad = [(seed, mode) for seed, mode, expected, runs in solver_suite
               if set(runs[False][1]) != expected or len(runs[False][1]) != len(expected)]
        detail.append(f"{len(SOLVER_SEEDS)} programs x 2 modes, {len(bad)} mismatches")
        assert not bad, bad[:5]


def test_criterion_7_incremental_scalars(solver_suite):
    detail = []
    with criterion(7, detail):
        violations = sum(runs[False][0].stats["debug_violations"] for _, _, _, runs in solver_suite)
        shared = sum(len(runs[False][0].shared_props) for _, _, _, runs in solver_suite)
        detail.append(f"{violations} violations over {shared} shared-set propagators")
        assert violations == 0 and shared > 0


def test_criterion_8_learned_clauses_entailed(solver_suite):
    detail = []
    with criterion(8, detail):
        checked = violations = 0
        for _, _, expected, runs in solver_suite:
            s, models = runs[False]
            for c in s.learned:
                # clauses derived from model-blocking clauses need only hold for models
                # not yet reported when they were learned
                pool = expected - set(models[: c.models_before]) if c.tainted else expected
                for m in pool:
                    val = _valuation(s, m)
                    checked += 1
                    if not any(val(l) for l in c.literals):
                        violations += 1
        detail.append(f"{checked} clause/model checks, {violations} violations")
        assert violations == 0 and checked > 0


def test_criterion_9_desk_scale_trend():
    detail = []
    with criterion(9, detail):
        logging.disable(logging.WARNING)
        try:
            reports = run_comparison(desk_suite(users=(2, 3, 4), components=(20, 30), k=16,
                                                seeds=range(1, 6)),
                                     timeout_ms=60000, repeats=3)
        finally:
            logging.disable(logging.NOTSET)
        by = {}
        for r in reports:
            by.setdefault(r.instance, {})[r.mode] = r
        k = 16
        fewer_calls = 0
        slow = []
        for name, pair in by.items():
            std, sh = pair["standard"], pair["shared"]
            users = int(name.split("_")[1][1:])
            comps = int(name.split("_")[2][1:])
            assert std.outcome == sh.outcome != "timeout", name
            assert sh.stats["propagators_allocated"] == users, name
            assert std.stats["propagators_allocated"] == users * k, name
            assert sh.stats["element_entries_stored"] * k == std.stats["element_entries_stored"], name
            assert std.stats["element_entries_stored"] == users * k * comps, name
            if aggregate_calls(sh.stats) <= 0.8 * aggregate_calls(std.stats):
                fewer_calls += 1
            if sh.time_ms > 1.1 * std.time_ms:
                slow.append((name, round(std.time_ms, 1), round(sh.time_ms, 1)))
        ratio = max(pair["shared"].time_ms / pair["standard"].time_ms for pair in by.values())
        detail.append(f"{len(by)} instances, calls cut >=20% on {fewer_calls}, "
                      f"worst time ratio {ratio:.2f}")
        assert fewer_calls >= 0.8 * len(by)
        assert not slow, slow


def test_criterion_10_lazy_equals_eager(solver_suite):
    detail = []
    with criterion(10, detail):
        diffs = 0
        for _, _, _, runs in solver_suite:
            lazy, eager = runs[False][0], runs[True][0]
            if lazy.trace != eager.trace or [c.literals for c in lazy.learned] != [
                c.literals for c in eager.learned
            ]:
                diffs += 1
        detail.append(f"{len(solver_suite)} runs, {diffs} differing traces")
        assert diffs == 0
