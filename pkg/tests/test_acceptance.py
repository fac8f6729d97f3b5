"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the summary lines.
"""

from __future__ import annotations

import datetime as dt
import os
import random
import time
from collections import Counter

import pytest

from deltamv import faults
from deltamv import values as V
from deltamv.apply import read_provenance
from deltamv.bench import generate_bench, run_bench
from deltamv.ir.plan import source_tables
from deltamv.ir.schema import Schema
from deltamv.pipeline import FELL_BACK, MvDecl, Pipeline, PipelineSpec, SourceDecl
from deltamv.relation import Changeset, Relation, apply_changeset, bags_equal, effectivize
from deltamv.rqg import CLOCK_START, TABLE_SCHEMA, TEMPORAL_TERMS, fingerprint_suite, generate_case, run_seeds
from deltamv.storage import Store

from conftest import CUSTOMERS, FIG1_SQL, ORDERS, T0, make_pipeline

WORKERS = min(4, os.cpu_count() or 1)


def report(n: int, ok: bool, detail: str) -> None:
    print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}")


@pytest.fixture(scope="module")
def sweep():
    return run_seeds(range(1000), workers=WORKERS)


# 1 ---------------------------------------------------------------------------


def test_1_differential_correctness(sweep):
    ok = sweep["passed"] == sweep["cases"] == 1000 and sweep["elapsed_s"] < 600
    report(1, ok, f"{sweep['passed']}/{sweep['cases']} RQG cases agree with full recompute in {sweep['elapsed_s']}s; "
                  f"strategies {sweep['strategies']}")
    assert ok, sweep["mismatches"][:3]


# 2 ---------------------------------------------------------------------------


def test_2_delta_oracle_on_all_cases(sweep):
    oracle_failures = [m for m in sweep["mismatches"] if "delta oracle" in m["message"]]
    ok = sweep["oracle_checks"] > 0 and not oracle_failures and sweep["passed"] == sweep["cases"]
    report(2, ok, f"{sweep['oracle_checks']} change plans matched post - pre on {sweep['cases']} cases")
    assert ok


# 3 ---------------------------------------------------------------------------

SCHEMA3 = Schema.of(("k", V.INT64), ("s", V.STRING))


def _random_changeset(rng: random.Random, base: Relation) -> Changeset:
    entries = []
    live = list(base.with_ids())
    rng.shuffle(live)
    for row, rid in live[: rng.randint(0, len(live))]:
        entries.append((row, -1, rid))
    for _ in range(rng.randint(0, 6)):
        rid = rng.randint(100, 110)
        row = (rng.randint(0, 3), rng.choice("xy"))
        entries.append((row, 1, rid))
        if rng.random() < 0.5:
            entries.append((row, -1, rid))  # insert then delete in the same window
            if rng.random() < 0.5:
                entries.append((row, 1, rid))
    rng.shuffle(entries)
    return Changeset(SCHEMA3, entries)


def test_3_effectivization_laws():
    rng = random.Random(3)
    n, t0 = 100_000, time.perf_counter()
    for _ in range(n):
        base_rows = [((rng.randint(0, 3), rng.choice("xy")), i) for i in range(rng.randint(0, 4))]
        base = Relation(SCHEMA3, [r for r, _ in base_rows], [i for _, i in base_rows])
        cs = _random_changeset(rng, base)
        once = effectivize(cs)
        assert Counter(effectivize(once).entries) == Counter(once.entries)
        assert apply_changeset(base, once).counter(True) == apply_changeset(base, cs).counter(True)
    a = (1, "A")
    cancel = effectivize(Changeset(SCHEMA3, [(a, 1, 7), (a, -1, 7)]))
    ok = cancel.entries == []
    report(3, ok, f"idempotence and application equivalence on {n} changesets "
                  f"({time.perf_counter() - t0:.1f}s); insert-then-delete cancels to the empty changeset")
    assert ok


# 4 ---------------------------------------------------------------------------


def test_4_temporal_filters():
    out = run_seeds(range(200), workers=WORKERS, temporal=True)
    hits = out["term_hits"]
    ok = out["passed"] == out["cases"] == 200 and all(hits[t] > 0 for t in TEMPORAL_TERMS)
    report(4, ok, f"{out['passed']}/200 rolling-window cases exact; term hits {hits}")
    assert ok, out["mismatches"][:3]


# 5 ---------------------------------------------------------------------------


def _upgrade_views() -> PipelineSpec:
    mvs = []
    for s in range(200):
        case = generate_case(s)
        if case.deterministic() and set(source_tables(case.plan)) <= {"t0", "t1"}:
            mvs.append(MvDecl(f"v{s}", case.plan))
        if len(mvs) == 25:
            break
    return PipelineSpec([SourceDecl("t0", TABLE_SCHEMA), SourceDecl("t1", TABLE_SCHEMA)], mvs)


def test_5_fingerprints_and_upgrade():
    suite = fingerprint_suite(cosmetic=500, semantic=500, seed=0)
    store = Store()
    spec = _upgrade_views()
    old = Pipeline(store, spec, fingerprint_versions=(101,), strategy_policy="incremental")
    old.create_sources()
    rng = random.Random(5)
    rows = lambda k: [(i, rng.randint(0, 4), rng.choice("abcd"), rng.randint(0, 40) / 4,  # noqa: E731
                       CLOCK_START.date() - dt.timedelta(days=rng.randint(0, 60))) for i in range(k, k + 8)]
    store.commit("t0", rows(0))
    store.commit("t1", rows(0))
    old.run_or_raise(CLOCK_START)
    reasons: Counter = Counter()
    for versions, k in (((101, 102), 100), ((102,), 200)):
        store.commit("t0", rows(k))
        pipe = Pipeline(store, spec, fingerprint_versions=versions, strategy_policy="incremental")
        rep = pipe.run_or_raise(CLOCK_START)
        reasons.update(e.reason for e in rep.entries if e.strategy == "full_recompute")
    full = sum(n for r, n in reasons.items() if not r.startswith("not incrementalizable"))
    ok = (
        suite["cosmetic_unchanged"] == suite["cosmetic"] == 500
        and suite["semantic_changed"] == suite["semantic"] == 500
        and full == 0
    )
    report(5, ok, f"cosmetic {suite['cosmetic_unchanged']}/500 unchanged, semantic {suite['semantic_changed']}/500 changed; "
                  f"upgrade 101 -> 101+102 -> 102 over {len(spec.mvs)} views: {full} full recomputes")
    assert ok, (suite["failures"][:3], reasons)


# 6 ---------------------------------------------------------------------------

T6 = Schema.of(("k", V.INT64), ("g", V.STRING), ("v", V.FLOAT64), ("d", V.DATE))
SINGLE_TABLE_VIEWS = {
    "rows": "SELECT k, v FROM t WHERE v > 0",
    "agg": "SELECT g, SUM(v) AS s, COUNT(*) AS n FROM t GROUP BY g",
    "avg": "SELECT g, AVG(v) AS m, STDDEV(v) AS sd FROM t GROUP BY g",
    "win": "SELECT k, ROW_NUMBER() OVER (PARTITION BY g ORDER BY v) AS rn FROM t",
    "dist": "SELECT DISTINCT g FROM t",
    "recent": "SELECT k, v FROM t WHERE d >= current_date() - INTERVAL 7 DAYS",
}


def _zero_and_all_changed(views: dict, n: int = 200) -> tuple[int, int, int]:
    zero_bad = all_bad = total = 0
    for name, q in views.items():
        pipe = make_pipeline({"t": T6}, {name: q})
        pipe.store.commit("t", [(i, "abcd"[i % 4], float(i), T0.date()) for i in range(n)])
        pipe.run_or_raise(T0)
        zero_bad += not pipe.refresh(name, T0).strategy.startswith("incremental")
        t = pipe.store.table("t")
        pipe.store.commit("t", updates={rid: (r[0], r[1], r[2] + 1, r[3]) for r, rid in t.snapshot().with_ids()})
        all_bad += pipe.refresh(name, T0).strategy.startswith("incremental")
        total += 1
    return zero_bad, all_bad, total


def _generated_single_table(limit: int = 120) -> tuple[int, int, int]:
    zero_bad = all_bad = total = 0
    for s in range(400):
        case = generate_case(s)
        tables = set(source_tables(case.plan))
        if len(tables) != 1 or not case.deterministic():
            continue
        (t,) = tables
        store = Store()
        pipe = Pipeline(store, PipelineSpec([SourceDecl(t, TABLE_SCHEMA)], [MvDecl("mv", case.plan)]))
        pipe.create_sources()
        store.commit(t, case.initial[t] + [(1000 + i, i % 5, "abcd"[i % 4], float(i), CLOCK_START.date()) for i in range(40)])
        pipe.run_or_raise(CLOCK_START)
        zero_bad += not pipe.refresh("mv", CLOCK_START).strategy.startswith("incremental")
        live = store.table(t).snapshot().with_ids()
        store.commit(t, updates={rid: r[:3] + ((r[3] or 0.0) + 1.0,) + r[4:] for r, rid in live})
        all_bad += pipe.refresh("mv", CLOCK_START).strategy.startswith("incremental")
        total += 1
        if total == limit:
            break
    return zero_bad, all_bad, total


def _pipeline_aware() -> tuple[str, str]:
    """Same upstream view and change, with and without a downstream consumer."""
    T = Schema.of(("k", V.INT64), ("g", V.STRING), ("v", V.FLOAT64))
    U = Schema.of(("k", V.INT64), ("g", V.STRING))
    up = "SELECT t.k, t.v, u.g FROM t JOIN u ON t.k = u.k"
    chosen = []
    for views in ({"up": up}, {"up": up, "down": "SELECT g, COUNT(*) AS n FROM up GROUP BY g"}):
        pipe = make_pipeline({"t": T, "u": U}, views)
        pipe.store.commit("t", [(i, "x", float(i)) for i in range(500)])
        pipe.store.commit("u", [(i, "abcd"[i % 4]) for i in range(500)])
        pipe.run_or_raise(T0)
        t = pipe.store.table("t")
        pipe.store.commit("t", updates={rid: (r[0], r[1], r[2] + 1) for r, rid in t.snapshot().with_ids() if r[0] < 250})
        chosen.append(pipe.refresh("up", T0).strategy)
    return chosen[0], chosen[1]


def test_6_cost_model_sanity():
    z1, a1, n1 = _zero_and_all_changed(SINGLE_TABLE_VIEWS)
    z2, a2, n2 = _generated_single_table()
    leaf, upstream = _pipeline_aware()
    ok = z1 == a1 == z2 == a2 == 0 and leaf == "full_recompute" and upstream.startswith("incremental")
    report(6, ok, f"zero-change chose incremental on {n1 + n2 - z1 - z2}/{n1 + n2} views; all-rows-changed chose "
                  f"row-incremental on {a1 + a2}/{n1 + n2}; leaf view chose {leaf}, same view with a consumer chose {upstream}")
    assert ok


# 7 ---------------------------------------------------------------------------


def test_7_bench_direction():
    t0 = time.perf_counter()
    rep = run_bench(generate_bench("tiny", seed=0, incremental_batches=2))
    elapsed = time.perf_counter() - t0
    per = rep.per_mv()
    right, total = rep.accuracy()
    ok = (
        per["regional_avg"]["speedup"] > 1
        and per["market_52wk"]["speedup"] > 1
        and per["prospect_last_seen"]["speedup"] <= 1.1
        and right >= 3
        and elapsed < 300
    )
    speeds = ", ".join(f"{mv} {v['speedup']:.2f}x" for mv, v in per.items())
    report(7, ok, f"speedups {speeds}; cost model right on {right}/{total} views; {elapsed:.1f}s")
    assert ok


# 8 ---------------------------------------------------------------------------


def test_8_fallback_at_every_incremental_point():
    outcomes = {}
    for point in faults.INCREMENTAL_POINTS:
        pipe = make_pipeline(
            {"customers": CUSTOMERS, "orders": ORDERS},
            {
                "joined": "SELECT o.order_id, c.region, o.amount FROM customers c JOIN orders o ON c.customer_id = o.customer_id",
                "regional": FIG1_SQL,
            },
        )
        d = dt.date(2025, 1, 1)
        pipe.store.commit("customers", [(1, "us-east"), (2, "asia")])
        pipe.store.commit("orders", [(10, 1, 100.0, d), (11, 2, 20.0, d)])
        pipe.run_or_raise(T0)
        pipe.store.commit("orders", [(12, 1, 50.0, d)])
        with faults.inject(point, times=1):
            rep = pipe.run(T0)
        hit = [e for e in rep.entries if e.outcome == FELL_BACK]
        same = all(bags_equal(pipe.contents(m), pipe.recompute(m), 1e-9) for m in ("joined", "regional"))
        outcomes[point] = rep.ok and len(hit) == 1 and same
    ok = all(outcomes.values())
    report(8, ok, "fell back with contents equal to recompute at " + ", ".join(f"{p}={'ok' if v else 'BAD'}" for p, v in outcomes.items()))
    assert ok


# 9 ---------------------------------------------------------------------------


def test_9_crash_atomicity(tmp_path):
    results = {}
    for point in (faults.APPLY_BETWEEN_PHASES, faults.STORAGE_COMMIT_WRITE):
        root = tmp_path / point
        pipe = make_pipeline({"customers": CUSTOMERS, "orders": ORDERS}, {"regional": FIG1_SQL}, store=Store(root))
        d = dt.date(2025, 1, 1)
        pipe.store.commit("customers", [(1, "us-east"), (2, "asia")])
        pipe.store.commit("orders", [(10, 1, 100.0, d)])
        pipe.run_or_raise(T0)
        before = pipe.contents("regional").counter()
        pipe.store.commit("orders", [(11, 2, 30.0, d)])
        with faults.inject(point, times=1), pytest.raises(faults.SimulatedCrash):
            pipe.refresh("regional", T0)
        # a new process opens the store
        reopened = Pipeline(Store(root), pipe.spec)
        backing = reopened.catalog.physical("regional")
        prov = read_provenance(reopened.store, backing)
        prior_ok = reopened.contents("regional").counter() == before
        consistent = bags_equal(reopened.contents("regional"), reopened.recompute("regional", prov.source_versions), 1e-9)
        rep = reopened.refresh("regional", T0)
        recovered = rep.outcome == "ok" and bags_equal(reopened.contents("regional"), reopened.recompute("regional"), 1e-9)
        results[point] = prior_ok and consistent and recovered
    ok = all(results.values())
    report(9, ok, "prior version readable, provenance consistent, next refresh succeeds after crash at "
                  + ", ".join(f"{p}={'ok' if v else 'BAD'}" for p, v in results.items()))
    assert ok
