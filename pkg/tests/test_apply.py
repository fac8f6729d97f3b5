from __future__ import annotations

import datetime as dt

import pytest

from deltamv import values as V
from deltamv.apply import (
    Provenance,
    apply_partition_overwrite,
    apply_replace_where,
    check_provenance,
    read_provenance,
)
from deltamv.errors import RowOutsidePartition, StaleProvenance
from deltamv.ir import expr as E
from deltamv.ir.schema import Schema
from deltamv.relation import Changeset, Relation

from conftest import ORDERS, T0, make_pipeline

SALES = Schema.of(("region", V.STRING), ("x", V.INT64))
GROUPED = "SELECT region, SUM(x) AS s, COUNT(*) AS n FROM sales GROUP BY region"


def grouped():
    pipe = make_pipeline({"sales": SALES}, {"mv": GROUPED}, strategy_policy="incremental")
    pipe.store.commit("sales", [("east", 4), ("east", 6)])
    pipe.run_or_raise(T0)
    return pipe


def test_merge_adds_adjustment_onto_stored_group():
    pipe = grouped()
    assert pipe.contents("mv").rows == [("east", 10, 2)]
    pipe.store.commit("sales", [("east", 5)])
    rep = pipe.refresh("mv", T0)
    assert rep.strategy == "incremental:merge_aggregate"
    assert pipe.contents("mv").rows == [("east", 15, 3)]


def test_merge_removes_group_at_count_zero_and_inserts_new_groups():
    pipe = grouped()
    pipe.store.commit("sales", [("west", 1)], delete_predicate=E.Cmp("=", E.Col("region"), E.lit("east")))
    pipe.run_or_raise(T0)
    assert pipe.contents("mv").rows == [("west", 1, 1)]


def _row_view():
    pipe = make_pipeline({"orders": ORDERS}, {"mv": "SELECT order_id, amount FROM orders"})
    pipe.store.commit("orders", [(1, 1, 2.0, dt.date(2025, 1, 1))])
    pipe.run_or_raise(T0)
    backing = pipe.catalog.physical("mv")
    return pipe, backing, read_provenance(pipe.store, backing)


def test_empty_replace_where_advances_version_and_provenance():
    pipe, backing, prov = _row_view()
    v = pipe.store.current_version(backing)
    new = Provenance(source_versions={"orders": 1}, strategy="x")
    schema = pipe.store.table_schema(backing)
    apply_replace_where(pipe.store, backing, Changeset(schema, []), new)
    assert pipe.store.current_version(backing) == v + 1
    assert read_provenance(pipe.store, backing).strategy == "x"


def test_unbalanced_raw_changeset_is_a_noop():
    pipe, backing, prov = _row_view()
    before = pipe.contents("mv").counter()
    data = Schema(pipe.store.table_schema(backing).columns[:-1])
    cs = Changeset(data, [((9, 9.0), 1, "ghost"), ((9, 9.0), -1, "ghost")])
    apply_replace_where(pipe.store, backing, cs, prov)
    assert pipe.contents("mv").counter() == before


def test_stale_provenance_refuses():
    pipe, backing, prov = _row_view()
    with pytest.raises(StaleProvenance):
        check_provenance(pipe.store, backing, {"orders": 0})
    assert check_provenance(pipe.store, backing, {"orders": 1}).source_versions == {"orders": 1}


def test_partition_overwrite_rejects_rows_outside_the_partitions():
    pipe = make_pipeline({"orders": (ORDERS, ("date",))}, {"mv": ("SELECT order_id, date FROM orders", ("date",))})
    pipe.store.commit("orders", [(1, 1, 2.0, dt.date(2025, 1, 1))])
    pipe.run_or_raise(T0)
    backing = pipe.catalog.physical("mv")
    prov = read_provenance(pipe.store, backing)
    data = Schema(pipe.store.table_schema(backing).columns[:-1])
    wrong = Relation(data, [(2, dt.date(2025, 1, 9))], ["r2"])
    with pytest.raises(RowOutsidePartition):
        apply_partition_overwrite(pipe.store, backing, "date", {dt.date(2025, 1, 1)}, wrong, prov)
    v = pipe.store.current_version(backing)
    apply_partition_overwrite(pipe.store, backing, "date", set(), Relation(data, [], []), prov)
    assert pipe.store.current_version(backing) == v + 1
    assert pipe.contents("mv").rows == [(1, dt.date(2025, 1, 1))]


def test_provenance_travels_with_every_commit():
    pipe, backing, _ = _row_view()
    pipe.store.commit("orders", [(2, 1, 3.0, dt.date(2025, 1, 1))])
    pipe.run_or_raise(T0)
    t = pipe.store.table(backing)
    for c in t.commits[1:]:
        assert "enzyme.provenance" in c.metadata
