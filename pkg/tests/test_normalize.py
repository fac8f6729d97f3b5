from __future__ import annotations

from hypothesis import given
from hypothesis import strategies as st

from deltamv.ir import expr as E
from deltamv.ir.plan import Filter, Project, Scan, walk_plan
from deltamv.normalize import is_normalized, normalize
from deltamv.rqg import TABLE_SCHEMA, Limits, generate_case
from deltamv.sql import parse_query

from conftest import CUSTOMERS, ORDERS

TABLES = {"customers": CUSTOMERS, "orders": ORDERS}


def norm(sql: str):
    return normalize(parse_query(sql), catalog=TABLES).plan


def test_stacked_filters_merge():
    p = norm("SELECT * FROM (SELECT * FROM orders WHERE amount > 1) x WHERE customer_id = 2")
    filters = [n for n in walk_plan(p) if isinstance(n, Filter)]
    assert len(filters) == 1 and isinstance(filters[0].predicate, E.And)


def test_identity_projection_disappears():
    p = norm("SELECT order_id, customer_id, amount, date FROM orders")
    assert isinstance(p, Scan)


def test_stacked_projections_collapse():
    p = norm("SELECT a + 1 AS b FROM (SELECT amount * 2 AS a FROM orders) x")
    assert isinstance(p, Project) and isinstance(p.child, Scan)


def test_constants_fold_but_the_clock_does_not():
    p = norm("SELECT order_id FROM orders WHERE amount > 1 + 2 AND date >= current_date() - INTERVAL 3 DAYS")
    f = next(n for n in walk_plan(p) if isinstance(n, Filter))
    lits = [e for e in E.walk(f.predicate) if isinstance(e, E.Lit)]
    assert any(x.value == 3 for x in lits)
    assert any(isinstance(e, E.CurrentDate) for e in E.walk(f.predicate))


def test_rand_is_not_duplicated_by_collapse():
    p = norm("SELECT r AS a, r AS b FROM (SELECT rand() AS r FROM orders) x")
    assert isinstance(p, Project) and isinstance(p.child, Project)


def test_ctes_inline():
    p = norm("WITH big AS (SELECT * FROM orders WHERE amount > 10) SELECT order_id FROM big")
    assert is_normalized(p)


@given(st.integers(0, 10_000))
def test_normalize_is_idempotent_on_generated_views(seed):
    case = generate_case(seed, Limits())
    catalog = {t: TABLE_SCHEMA for t in case.tables}
    once = normalize(case.plan, catalog=catalog)
    assert normalize(once.plan, catalog=catalog).plan == once.plan
    assert is_normalized(once.plan)
