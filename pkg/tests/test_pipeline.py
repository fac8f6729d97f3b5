from __future__ import annotations

import datetime as dt

import pytest

from deltamv import faults
from deltamv import values as V
from deltamv.errors import CycleDetected, PlanError
from deltamv.ir.schema import Schema
from deltamv.pipeline import FELL_BACK, OK, MvDecl, Pipeline, PipelineSpec, SourceDecl, plan_run
from deltamv.relation import bags_equal
from deltamv.sql import parse_query
from deltamv.storage import Store

from conftest import CUSTOMERS, FIG1_SQL, ORDERS, T0, make_pipeline

T = Schema.of(("k", V.INT64), ("v", V.INT64))
D = dt.date(2025, 1, 1)


def spec(views: dict[str, str]) -> PipelineSpec:
    return PipelineSpec([SourceDecl("t", T)], [MvDecl(n, parse_query(q)) for n, q in views.items()])


def test_chain_and_diamond_layers():
    chain = spec({"a": "SELECT k FROM t", "b": "SELECT k FROM a", "c": "SELECT k FROM b"})
    assert plan_run(chain) == [["a"], ["b"], ["c"]]
    diamond = spec({
        "a": "SELECT k, v FROM t",
        "b": "SELECT k FROM a",
        "c": "SELECT v FROM a",
        "d": "SELECT b.k FROM b JOIN c ON b.k = c.v",
    })
    assert plan_run(diamond) == [["a"], ["b", "c"], ["d"]]


def test_cycle_is_rejected():
    with pytest.raises(CycleDetected):
        plan_run(spec({"a": "SELECT k FROM b", "b": "SELECT k FROM a"}))


def test_unknown_source_is_rejected():
    with pytest.raises(PlanError):
        spec({"a": "SELECT k FROM nowhere"}).validate()


def fig1():
    pipe = make_pipeline({"customers": CUSTOMERS, "orders": ORDERS}, {"mv": FIG1_SQL})
    pipe.store.commit("customers", [(1, "us-east"), (2, "asia")])
    pipe.store.commit("orders", [(10, 1, 100.0, D), (11, 1, 200.0, D)])
    return pipe


def test_first_refresh_then_incremental_then_noop():
    pipe = fig1()
    rep = pipe.refresh("mv", T0)
    assert rep.outcome == OK and rep.strategy == "full_recompute" and rep.reason == "first refresh"
    assert pipe.contents("mv").rows == [("us-east", 150.0)]
    pipe.store.commit("orders", [(12, 2, 40.0, D)])
    rep = pipe.refresh("mv", T0)
    assert rep.strategy.startswith("incremental")
    assert sorted(pipe.contents("mv").rows) == [("asia", 40.0), ("us-east", 150.0)]
    rep = pipe.refresh("mv", T0)
    assert rep.rows_written == 0


def test_definition_edit_forces_full_recompute():
    pipe = fig1()
    pipe.run_or_raise(T0)
    pipe.store.commit("customers", [(3, "europe")])
    pipe.store.commit("orders", [(12, 3, 10.0, D)])
    edited = FIG1_SQL.replace("'asia'", "'asia', 'europe'")
    again = Pipeline(pipe.store, PipelineSpec(pipe.spec.sources, [MvDecl("mv", parse_query(edited))]))
    rep = again.refresh("mv", T0)
    assert rep.strategy == "full_recompute" and rep.reason == "definition changed"
    assert sorted(again.contents("mv").rows) == [("europe", 10.0), ("us-east", 150.0)]
    # the next refresh is incremental again
    pipe.store.commit("orders", [(13, 3, 30.0, D)])
    assert again.refresh("mv", T0).strategy.startswith("incremental")
    assert sorted(again.contents("mv").rows) == [("europe", 20.0), ("us-east", 150.0)]


def test_schema_changing_edit_gets_a_new_backing_table():
    pipe = fig1()
    pipe.run_or_raise(T0)
    edited = FIG1_SQL.replace("AVG(o.amount)", "MAX(o.amount)")
    again = Pipeline(pipe.store, PipelineSpec(pipe.spec.sources, [MvDecl("mv", parse_query(edited))]))
    assert again.catalog.physical("mv") != pipe.catalog.physical("mv")
    assert again.refresh("mv", T0).strategy == "full_recompute"
    assert again.contents("mv").rows == [("us-east", 200.0)]


def test_cosmetic_edit_keeps_incremental():
    pipe = fig1()
    pipe.run_or_raise(T0)
    cosmetic = FIG1_SQL.replace("c.customer_id = o.customer_id", "o.customer_id = c.customer_id")
    again = Pipeline(pipe.store, PipelineSpec(pipe.spec.sources, [MvDecl("mv", parse_query(cosmetic))]))
    pipe.store.commit("orders", [(12, 2, 40.0, D)])
    assert again.refresh("mv", T0).strategy.startswith("incremental")


JOINED = "SELECT o.order_id, c.region, o.amount FROM customers c JOIN orders o ON c.customer_id = o.customer_id"


@pytest.mark.parametrize("point", faults.INCREMENTAL_POINTS)
def test_fault_falls_back_to_full_recompute(point):
    pipe = make_pipeline({"customers": CUSTOMERS, "orders": ORDERS}, {"mv": JOINED})
    pipe.store.commit("customers", [(1, "us-east"), (2, "asia")])
    pipe.store.commit("orders", [(10, 1, 100.0, D)])
    pipe.run_or_raise(T0)
    pipe.store.commit("orders", [(12, 2, 40.0, D)])
    # once: the fault hits the incremental attempt, not the fallback
    with faults.inject(point, times=1):
        rep = pipe.refresh("mv", T0)
    assert rep.outcome == FELL_BACK and rep.strategy == "full_recompute"
    assert "InjectedFault" in rep.error
    assert bags_equal(pipe.contents("mv"), pipe.recompute("mv"), 1e-9)


def test_views_over_views_stay_consistent(tmp_path):
    store = Store(tmp_path)
    pipe = make_pipeline(
        {"t": T},
        {
            "a": "SELECT k, SUM(v) AS s FROM t GROUP BY k",
            "b": "SELECT k FROM a WHERE s > 10",
            "c": "SELECT COUNT(*) AS n FROM b",
        },
        store=store,
        parallelism=2,
    )
    pipe.store.commit("t", [(1, 5), (2, 20)])
    pipe.run_or_raise(T0)
    assert pipe.contents("c").rows == [(1,)]
    pipe.store.commit("t", [(1, 9)])
    report = pipe.run_or_raise(T0)
    assert report.batches == [["a"], ["b"], ["c"]]
    assert pipe.contents("c").rows == [(2,)]
    # reopening from disk sees the same state and refreshes incrementally
    reopened = Pipeline(Store(tmp_path), pipe.spec)
    reopened.store.commit("t", [(3, 11)])
    reopened.run_or_raise(T0)
    assert reopened.contents("c").rows == [(3,)]
    for mv in ("a", "b", "c"):
        assert reopened.contents(mv).counter() == reopened.recompute(mv).counter()


def test_temporal_view_follows_the_clock():
    events = Schema.of(("id", V.INT64), ("d", V.DATE))
    pipe = make_pipeline({"e": events}, {"w": "SELECT id FROM e WHERE d >= current_date() - INTERVAL 2 DAYS"})
    pipe.store.commit("e", [(1, D), (2, D + dt.timedelta(days=2))])
    start = dt.datetime.combine(D, dt.time(9))
    pipe.run_or_raise(start)
    assert sorted(pipe.contents("w").rows) == [(1,), (2,)]
    rep = pipe.refresh("w", start + dt.timedelta(days=3))
    assert rep.strategy.startswith("incremental")
    assert pipe.contents("w").rows == [(2,)]


def test_explain_reports_the_decision():
    pipe = fig1()
    pipe.run_or_raise(T0)
    pipe.store.commit("orders", [(12, 2, 40.0, D)])
    info = pipe.explain("mv", T0)
    assert info["mv"] == "mv"
    text = str(info)
    assert "merge_aggregate" in text


def test_spec_json_round_trip(tmp_path):
    s = spec({"a": "SELECT k FROM t WHERE v > 1"})
    s.save(tmp_path / "p.json")
    loaded = PipelineSpec.load(tmp_path / "p.json")
    assert loaded.to_json() == s.to_json()
