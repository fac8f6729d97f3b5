from __future__ import annotations

import pytest

from deltamv import values as V
from deltamv.errors import PlanError
from deltamv.ir import expr as E
from deltamv.ir.determinism import DETERMINISTIC, OPAQUE, REWRITABLE, TIME_DEPENDENT, classify_determinism
from deltamv.ir.plan import bind, infer_schema, is_bound, output_schema, source_tables, unbind
from deltamv.ir.schema import Schema
from deltamv.ir.serde import plan_dumps, plan_loads
from deltamv.sql import parse_query

from conftest import CUSTOMERS, FIG1_SQL, ORDERS

TABLES = {"customers": CUSTOMERS, "orders": ORDERS}


def test_fig1_output_schema():
    schema = output_schema(parse_query(FIG1_SQL), TABLES)
    assert schema.names == ("region", "avg_order_amount") or list(schema.names) == ["region", "avg_order_amount"]
    assert schema.columns[1].type == V.FLOAT64


def test_plan_json_round_trip(fig1_plan):
    again = plan_loads(plan_dumps(fig1_plan))
    assert again == fig1_plan


def test_bind_and_unbind():
    p = parse_query(FIG1_SQL)
    assert not is_bound(p)
    b = bind(p, {"customers": 3, "orders": 4})
    assert is_bound(b) and unbind(b) == p
    assert sorted(source_tables(p)) == ["customers", "orders"]


def test_unknown_column_is_a_plan_error():
    with pytest.raises(PlanError):
        infer_schema(parse_query("SELECT nope FROM orders"), TABLES)


def test_type_mismatch_is_a_plan_error():
    with pytest.raises(PlanError):
        infer_schema(parse_query("SELECT * FROM orders WHERE amount = 'x'"), TABLES)


def test_determinism_classes():
    def top(sql):
        return classify_determinism(infer_schema(parse_query(sql), TABLES))

    assert top("SELECT * FROM orders").overall == DETERMINISTIC
    assert top("SELECT * FROM orders WHERE date >= current_date() - INTERVAL 30 DAYS").overall == TIME_DEPENDENT
    assert top("SELECT customer_id, COLLECT_LIST(amount) AS xs FROM orders GROUP BY customer_id").overall == REWRITABLE
    r = top("SELECT order_id, rand() AS r FROM orders")
    assert r.overall == OPAQUE and r.full_recompute_only


def test_expression_three_valued_logic():
    s = Schema.of(("a", V.INT64), ("b", V.BOOL))
    f = E.compile_expr(E.Or((E.Col("b"), E.Cmp("=", E.Col("a"), E.lit(1)))), s)
    assert f((1, None)) is True
    assert f((2, None)) is None
    assert f((2, False)) is False


def test_integer_division_by_zero_is_null():
    s = Schema.of(("a", V.INT64))
    f = E.compile_expr(E.BinOp("/", E.Col("a"), E.lit(0)), s)
    assert f((4,)) is None
