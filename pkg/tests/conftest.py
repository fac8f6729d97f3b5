from __future__ import annotations

import datetime as dt

import pytest
from hypothesis import HealthCheck, settings

from deltamv import values as V
from deltamv.ir.schema import Schema
from deltamv.sql import parse_query
from deltamv.storage import Store

settings.register_profile(
    "deltamv",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("deltamv")

CUSTOMERS = Schema.of(("customer_id", V.INT64, False), ("region", V.STRING))
ORDERS = Schema.of(("order_id", V.INT64, False), ("customer_id", V.INT64), ("amount", V.FLOAT64), ("date", V.DATE))

FIG1_SQL = """
SELECT c.region, AVG(o.amount) AS avg_order_amount
FROM customers c JOIN orders o ON c.customer_id = o.customer_id
GROUP BY c.region
HAVING c.region IN ('us-east', 'us-west', 'asia')
"""

T0 = dt.datetime(2025, 1, 1, 12)


@pytest.fixture
def fig1_plan():
    return parse_query(FIG1_SQL)


@pytest.fixture
def shop():
    """Customers and Orders with a handful of rows at v1."""
    store = Store()
    store.create_table("customers", CUSTOMERS)
    store.create_table("orders", ORDERS)
    store.commit("customers", [(1, "us-east"), (2, "asia"), (3, "europe")])
    store.commit(
        "orders",
        [
            (10, 1, 100.0, dt.date(2025, 1, 1)),
            (11, 1, 200.0, dt.date(2025, 1, 2)),
            (12, 2, 50.0, dt.date(2025, 1, 2)),
            (13, 3, 70.0, dt.date(2025, 1, 3)),
        ],
    )
    return store


def make_pipeline(sources, views, store=None, **kw):
    """Pipeline over ``sources`` {name: schema | (schema, parts)} and ``views`` {name: sql | (sql, parts)}."""
    from deltamv.pipeline import MvDecl, Pipeline, PipelineSpec, SourceDecl

    decls = []
    for name, s in sources.items():
        schema, parts = s if isinstance(s, tuple) else (s, ())
        decls.append(SourceDecl(name, schema, tuple(parts)))
    mvs = []
    for name, v in views.items():
        sql, parts = v if isinstance(v, tuple) else (v, ())
        mvs.append(MvDecl(name, parse_query(sql), tuple(parts), text=sql))
    store = store if store is not None else Store()
    pipe = Pipeline(store, PipelineSpec(decls, mvs), **kw)
    pipe.create_sources()
    return pipe
