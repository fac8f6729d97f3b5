from __future__ import annotations

import datetime as dt

from deltamv import values as V
from deltamv.deltagen import (
    FullRecompute,
    MERGE_AGGREGATE,
    PartitionOverwrite,
    RefreshContext,
    RowIncremental,
    build_change_plan,
    candidate_strategies,
    delta_rules,
)
from deltamv.enable import enable
from deltamv.eval import evaluate, evaluate_changeset
from deltamv.ir.plan import bind
from deltamv.ir.schema import Schema
from deltamv.normalize import normalize
from deltamv.relation import bag_difference, effectivize
from deltamv.sql import parse_query
from deltamv.storage import Store

from conftest import CUSTOMERS, FIG1_SQL, ORDERS, T0, make_pipeline

EVENTS = Schema.of(("id", V.INT64), ("d", V.DATE))
WINDOW = "SELECT id, d FROM events WHERE d >= current_date() - INTERVAL 30 DAYS"
EPOCH = dt.date(2025, 1, 1)


def day(n: int) -> dt.datetime:
    return dt.datetime.combine(EPOCH + dt.timedelta(days=n), dt.time(12))


def _enabled(sql, tables):
    return enable(normalize(parse_query(sql), catalog=tables))


def test_row_leaves_the_temporal_window():
    store = Store()
    store.create_table("events", EVENTS)
    store.commit("events", [(1, EPOCH + dt.timedelta(days=70)), (2, EPOCH + dt.timedelta(days=95))])
    ep = _enabled(WINDOW, {"events": EVENTS})
    ctx = RefreshContext({"events": (1, 1)}, day(100), day(101))
    cp = build_change_plan(ep, ctx)
    got = effectivize(evaluate_changeset(cp.delta, store, day(100), day(101)))
    assert [(r, s) for r, s, _ in got.entries] == [((1, EPOCH + dt.timedelta(days=70)), -1)]
    assert "temporal window" in {getattr(d, "label", "") for d in _walk(cp.delta)}


def _walk(d):
    yield d
    for k in d.children():
        yield from _walk(k)


def test_unchanged_clock_and_sources_give_an_empty_delta():
    store = Store()
    store.create_table("events", EVENTS)
    store.commit("events", [(1, EPOCH)])
    ep = _enabled(WINDOW, {"events": EVENTS})
    cp = build_change_plan(ep, RefreshContext({"events": (1, 1)}, day(5), day(5)))
    assert len(effectivize(evaluate_changeset(cp.delta, store, day(5), day(5)))) == 0


def test_join_delta_matches_recompute_and_diff(shop):
    sql = "SELECT o.order_id, c.region FROM customers c JOIN orders o ON c.customer_id = o.customer_id"
    tables = {"customers": CUSTOMERS, "orders": ORDERS}
    ep = _enabled(sql, tables)
    shop.commit("customers", [(4, "asia")])
    shop.commit("orders", [(20, 4, 1.0, EPOCH), (21, 1, 2.0, EPOCH)])
    from deltamv.ir import expr as E

    shop.commit("orders", delete_predicate=E.Cmp("=", E.Col("order_id"), E.lit(12)))
    ctx = RefreshContext({"customers": (1, 2), "orders": (1, 3)}, T0, T0)
    cp = build_change_plan(ep, ctx)
    delta = effectivize(evaluate_changeset(cp.delta, shop, T0, T0))
    pre = evaluate(bind(ep.plan, {"customers": 1, "orders": 1}), shop, T0)
    post = evaluate(bind(ep.plan, {"customers": 2, "orders": 3}), shop, T0)
    assert delta.zset() == bag_difference(post, pre).zset()
    assert "join" in " ".join(delta_rules(cp.delta))


def test_fig1_uses_merge_aggregate():
    ep = _enabled(FIG1_SQL, {"customers": CUSTOMERS, "orders": ORDERS})
    cands = candidate_strategies(ep, RefreshContext({"customers": (1, 1), "orders": (1, 2)}, T0, T0))
    inc = [c for c in cands if isinstance(c, RowIncremental)]
    assert inc and inc[0].apply_mode == MERGE_AGGREGATE
    assert any(isinstance(c, FullRecompute) for c in cands)


def test_partitioned_filter_view_is_eligible_for_partition_overwrite():
    ep = _enabled("SELECT order_id, amount, date FROM orders WHERE amount > 0", {"orders": ORDERS})
    ctx = RefreshContext({"orders": (1, 2)}, T0, T0)
    cands = candidate_strategies(ep, ctx, ("date",), {"orders": ("date",)})
    assert any(isinstance(c, PartitionOverwrite) for c in cands)
    # an unpartitioned source is not eligible
    cands = candidate_strategies(ep, ctx, ("date",), {})
    assert not any(isinstance(c, PartitionOverwrite) for c in cands)


def test_partition_overwrite_refresh_keeps_other_partitions():
    pipe = make_pipeline(
        {"orders": (ORDERS, ("date",))},
        {"mv": ("SELECT order_id, amount, date FROM orders WHERE amount > 0", ("date",))},
        strategy_policy="incremental",
    )
    d1, d2 = dt.date(2025, 1, 1), dt.date(2025, 1, 2)
    pipe.store.commit("orders", [(1, 1, 5.0, d1), (2, 1, 6.0, d2)])
    pipe.run_or_raise(T0)
    backing = pipe.catalog.physical("mv")
    before = {row for row in pipe.store.snapshot(backing).rows if row[2] == d1}
    pipe.store.commit("orders", [(3, 1, 7.0, d2)])
    rep = pipe.refresh("mv", T0)
    assert rep.strategy == "partition_overwrite"
    after = {row for row in pipe.store.snapshot(backing).rows if row[2] == d1}
    assert before == after
    assert sorted(pipe.contents("mv").rows) == sorted(pipe.recompute("mv").rows)


def test_rand_view_is_full_recompute_only():
    pipe = make_pipeline({"orders": ORDERS}, {"mv": "SELECT order_id, rand() AS r FROM orders"})
    pipe.store.commit("orders", [(1, 1, 5.0, EPOCH)])
    pipe.run_or_raise(T0)
    pipe.store.commit("orders", [(2, 1, 5.0, EPOCH)])
    rep = pipe.refresh("mv", T0)
    assert rep.strategy == "full_recompute" and "not incrementalizable" in rep.reason
