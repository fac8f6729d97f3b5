from __future__ import annotations

from collections import Counter

import pytest

from deltamv.errors import Mismatch
from deltamv.rqg import (
    KINDS,
    Case,
    Limits,
    check_case,
    generate_case,
    parse_seed_range,
    run_differential,
    run_seeds,
)
from deltamv.ir.serde import plan_dumps


def test_same_seed_same_case():
    a, b = generate_case(17), generate_case(17)
    assert a.to_json() == b.to_json()
    assert generate_case(18).to_json() != a.to_json()


def test_case_json_round_trip():
    case = generate_case(5)
    again = Case.from_json(case.to_json())
    assert again.to_json() == case.to_json()
    assert plan_dumps(again.plan) == plan_dumps(case.plan)


def test_verdict_is_reproducible():
    a, b = run_differential(generate_case(9)), run_differential(generate_case(9))
    assert (a.ok, a.strategies, a.oracle_checks) == (b.ok, b.strategies, b.oracle_checks)


def test_empty_tables_are_a_valid_case():
    v = check_case(generate_case(3, Limits(rows=0)))
    assert v.ok


def test_grammar_coverage_over_a_thousand_seeds():
    coverage: Counter = Counter()
    for s in range(1000):
        coverage.update(k for k, n in generate_case(s).kinds().items() if n)
    assert all(coverage[k] >= 20 for k in KINDS), coverage


def test_small_sweep_passes():
    out = run_seeds(range(40))
    assert out["passed"] == out["cases"] == 40
    assert out["oracle_checks"] > 0


def test_rand_views_refresh_by_full_recompute():
    seeds = [s for s in range(400) if not generate_case(s).deterministic()]
    assert seeds
    v = run_differential(generate_case(seeds[0]))
    assert v.ok and set(v.strategies) == {"full_recompute"}


def test_broken_effectivization_is_caught_with_a_small_repro():
    from deltamv import faults

    caught = None
    with faults.inject(faults.BROKEN_EFFECTIVIZE):
        for s in range(60):
            v = run_differential(generate_case(s))
            if not v.ok:
                caught = v
                break
    assert caught is not None
    repro = Case.from_json(caught.repro)
    assert len(repro.batches) <= len(generate_case(caught.seed).batches)
    with pytest.raises(Mismatch):
        caught.raise_for_mismatch()


def test_seed_ranges():
    assert list(parse_seed_range("3..5")) == [3, 4, 5]
    assert list(parse_seed_range("7")) == [7]
