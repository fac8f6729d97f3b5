from __future__ import annotations

import pytest

from deltamv import values as V
from deltamv.errors import SqlSyntaxError
from deltamv.ir.plan import Aggregate, Filter, Join, Window, With, walk_plan
from deltamv.sql import parse_query, parse_statement, split_statements


def kinds(plan):
    return {type(p) for p in walk_plan(plan)}


def test_create_table_with_partitioning():
    kind, name, schema, parts = parse_statement(
        "CREATE TABLE orders (order_id BIGINT NOT NULL, amount DOUBLE, date DATE) PARTITIONED BY (date)"
    )
    assert (kind, name, tuple(parts)) == ("table", "orders", ("date",))
    assert schema.columns[0].type == V.INT64 and not schema.columns[0].nullable
    assert schema.columns[2].type == V.DATE


def test_create_materialized_view():
    out = parse_statement("CREATE MATERIALIZED VIEW mv AS SELECT a FROM t WHERE a > 1")
    assert out[0] == "mv" and out[1] == "mv"
    assert Filter in kinds(out[2])


def test_query_shapes():
    assert {Join, Aggregate} <= kinds(parse_query("SELECT t.a, COUNT(*) AS n FROM t JOIN u ON t.a = u.a GROUP BY t.a"))
    assert Window in kinds(parse_query("SELECT a, ROW_NUMBER() OVER (PARTITION BY b ORDER BY a) AS rn FROM t"))
    assert With in kinds(parse_query("WITH x AS (SELECT a FROM t) SELECT a FROM x"))


def test_split_statements_ignores_semicolons_in_strings():
    parts = split_statements("SELECT 'a;b' FROM t; SELECT 1 FROM u;")
    assert len(parts) == 2


def test_syntax_error_reports_position():
    with pytest.raises(SqlSyntaxError):
        parse_query("SELECT FROM WHERE")
