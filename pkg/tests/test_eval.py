from __future__ import annotations

import datetime as dt
from collections import defaultdict

from hypothesis import given
from hypothesis import strategies as st

from deltamv.eval import evaluate
from deltamv.ir.plan import bind
from deltamv.sql import parse_query
from deltamv.storage import Store

from conftest import CUSTOMERS, FIG1_SQL, ORDERS

D = dt.date(2025, 1, 1)


def run(store: Store, sql: str, now=None):
    plan = parse_query(sql)
    versions = {t: store.current_version(t) for t in store.table_names()}
    return evaluate(bind(plan, versions), store, now=now)


def test_fig1_example():
    store = Store()
    store.create_table("customers", CUSTOMERS)
    store.create_table("orders", ORDERS)
    store.commit("customers", [(1, "us-east")])
    store.commit("orders", [(10, 1, 100.0, D), (11, 1, 200.0, D)])
    assert run(store, FIG1_SQL).rows == [("us-east", 150.0)]


def test_having_drops_regions_outside_the_list(shop):
    assert sorted(run(shop, FIG1_SQL).rows) == [("asia", 50.0), ("us-east", 150.0)]


@given(
    st.lists(st.sampled_from(["us-east", "us-west", "asia", "europe", None]), min_size=1, max_size=5),
    st.lists(st.tuples(st.integers(0, 5), st.integers(-4, 40)), max_size=20),
)
def test_join_aggregate_matches_brute_force(regions, orders):
    store = Store()
    store.create_table("customers", CUSTOMERS)
    store.create_table("orders", ORDERS)
    store.commit("customers", [(i, r) for i, r in enumerate(regions)])
    store.commit("orders", [(n, c, a / 4, D) for n, (c, a) in enumerate(orders)])
    sums: dict = defaultdict(list)
    for c, a in orders:
        if c < len(regions) and regions[c] in ("us-east", "us-west", "asia"):
            sums[regions[c]].append(a / 4)
    want = {r: sum(xs) / len(xs) for r, xs in sums.items()}
    got = dict(run(store, FIG1_SQL).rows)
    assert got.keys() == want.keys()
    for r in want:
        assert abs(got[r] - want[r]) <= 1e-9 * max(1.0, abs(want[r]))


def test_left_join_pads_with_nulls(shop):
    shop.commit("customers", [(4, "asia")])
    rows = run(shop, "SELECT c.customer_id, o.order_id FROM customers c LEFT JOIN orders o ON c.customer_id = o.customer_id")
    assert (4, None) in rows.rows and len(rows) == 5


def test_window_row_number(shop):
    rows = run(shop, "SELECT order_id, ROW_NUMBER() OVER (PARTITION BY customer_id ORDER BY amount DESC) AS rn FROM orders")
    assert sorted(rows.rows) == [(10, 2), (11, 1), (12, 1), (13, 1)]


def test_union_all_and_distinct(shop):
    rows = run(shop, "SELECT DISTINCT customer_id FROM (SELECT customer_id FROM orders UNION ALL SELECT customer_id FROM customers) u")
    assert sorted(rows.rows) == [(1,), (2,), (3,)]


def test_count_star_of_empty_input_is_zero():
    store = Store()
    store.create_table("orders", ORDERS)
    assert run(store, "SELECT COUNT(*) AS n, SUM(amount) AS s FROM orders").rows == [(0, None)]


def test_temporal_filter_uses_the_supplied_clock(shop):
    sql = "SELECT order_id FROM orders WHERE date >= current_date() - INTERVAL 1 DAYS"
    now = dt.datetime(2025, 1, 3, 9)
    assert sorted(run(shop, sql, now).rows) == [(11,), (12,), (13,)]
    assert run(shop, sql, now + dt.timedelta(days=1)).rows == [(13,)]
