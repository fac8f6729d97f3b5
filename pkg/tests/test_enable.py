from __future__ import annotations

import math
import statistics

import pytest
from hypothesis import given
from hypothesis import strategies as st

from deltamv import values as V
from deltamv.enable import COUNT_STAR_COLUMN, ROW_ID_COLUMN, enable
from deltamv.errors import NotIncrementalizable
from deltamv.ir.plan import Aggregate, walk_plan
from deltamv.ir.schema import Schema
from deltamv.normalize import normalize
from deltamv.sql import parse_query

from conftest import CUSTOMERS, FIG1_SQL, ORDERS, T0, make_pipeline

TABLES = {"customers": CUSTOMERS, "orders": ORDERS}


def enabled(sql: str):
    return enable(normalize(parse_query(sql), catalog=TABLES))


def test_fig1_backing_columns():
    ep = enabled(FIG1_SQL)
    names = list(ep.backing_schema.names)
    assert names[0] == "region"
    agg = next(p for p in walk_plan(ep.plan) if isinstance(p, Aggregate))
    kinds = sorted(a.kind for _, a in agg.aggs)
    assert "AVG" not in kinds and {"SUM", "COUNT", "COUNT_STAR"} <= set(kinds)
    assert COUNT_STAR_COLUMN in names and names[-1] == ROW_ID_COLUMN
    assert list(ep.user_schema.names) == ["region", "avg_order_amount"]
    assert ep.merge is not None and ep.merge.keys == ("region",)


def test_having_on_group_key_moves_below_the_aggregate():
    ep = enabled(FIG1_SQL)
    assert ep.top_kind == "aggregate"
    assert any("below the aggregate" in r for r in ep.rewrites)


def test_first_with_ordering_key_is_rewritten():
    ep = enabled("SELECT customer_id, FIRST(amount ORDER BY order_id) AS f FROM orders GROUP BY customer_id")
    kinds = {a.kind for p in walk_plan(ep.plan) if isinstance(p, Aggregate) for _, a in p.aggs}
    assert "FIRST" not in kinds


def test_rand_is_not_incrementalizable():
    with pytest.raises(NotIncrementalizable):
        enabled("SELECT order_id, rand() AS r FROM orders")


def test_reserved_prefix_rejected():
    from deltamv.errors import PlanError

    with pytest.raises(PlanError):
        enabled("SELECT amount AS __enzyme_x FROM orders")


@given(st.lists(st.integers(-400, 400), min_size=1, max_size=12))
def test_stddev_reconstruction_matches_direct_computation(xs):
    schema = Schema.of(("g", V.INT64), ("x", V.FLOAT64))
    pipe = make_pipeline({"t": schema}, {"mv": "SELECT g, STDDEV(x) AS sd, AVG(x) AS m FROM t GROUP BY g"})
    vals = [x / 8 for x in xs]
    pipe.store.commit("t", [(1, x) for x in vals])
    pipe.run_or_raise(T0)
    [(g, sd, m)] = pipe.contents("mv").rows
    want_sd = statistics.stdev(vals) if len(vals) > 1 else None
    if want_sd is None:
        assert sd is None
    else:
        assert math.isclose(sd, want_sd, rel_tol=1e-9, abs_tol=1e-9)
    assert math.isclose(m, statistics.fmean(vals), rel_tol=1e-9, abs_tol=1e-12)
