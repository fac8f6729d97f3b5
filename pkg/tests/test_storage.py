from __future__ import annotations

import datetime as dt

import pytest
from hypothesis import given
from hypothesis import strategies as st

from deltamv import faults
from deltamv import values as V
from deltamv.errors import DuplicateTable, InvalidCommit, UnknownPartitionColumn
from deltamv.ir import expr as E
from deltamv.ir.schema import Schema
from deltamv.relation import Changeset, Relation, apply_changeset, effectivize
from deltamv.storage import Store

from conftest import ORDERS

S = Schema.of(("k", V.INT64), ("v", V.STRING))


def test_create_table_starts_empty_at_v0():
    store = Store()
    t = store.create_table("Orders", ORDERS)
    assert t.version == 0
    assert len(store.snapshot("Orders")) == 0


def test_create_table_rejects_unknown_partition_column_and_duplicates():
    store = Store()
    with pytest.raises(UnknownPartitionColumn):
        store.create_table("Orders", ORDERS, ["nonexistent"])
    store.create_table("Orders", ORDERS, ["date"])
    with pytest.raises(DuplicateTable):
        store.create_table("Orders", ORDERS)


def test_empty_commit_still_advances_version():
    store = Store()
    store.create_table("t", S)
    c = store.commit("t")
    assert c.version == 1 and not c.inserted and not c.deleted


def test_insert_assigns_fresh_row_ids():
    store = Store()
    store.create_table("t", S)
    c = store.commit("t", [(1, "a"), (2, "b")])
    ids = [rid for rid, _ in c.inserted]
    assert c.version == 1 and len(set(ids)) == 2


def test_insert_plus_predicate_delete_in_one_commit():
    store = Store()
    store.create_table("t", S)
    store.commit("t", [(1, "a"), (2, "b")])
    c = store.commit("t", [(3, "c")], delete_predicate=E.Cmp("=", E.Col("k"), E.lit(1)))
    # brute force: the live rows matching k = 1
    assert [r for r in c.deleted_rows] == [(1, "a")]
    assert [row for _, row in c.inserted] == [(3, "c")]


def test_snapshot_time_travel():
    store = Store()
    store.create_table("t", S)
    store.commit("t", [(1, "A"), (2, "B")])
    store.commit("t", delete_predicate=E.Cmp("=", E.Col("v"), E.lit("A")))
    assert sorted(store.snapshot("t", 1).rows) == [(1, "A"), (2, "B")]
    assert store.snapshot("t", 2).rows == [(2, "B")]
    assert len(store.snapshot("t", 0)) == 0


def test_change_feed_examples():
    store = Store()
    store.create_table("t", S)
    store.commit("t", [(1, "A")])
    store.commit("t", delete_predicate=E.Cmp("=", E.Col("k"), E.lit(1)))
    assert len(store.change_feed("t", 1, 1)) == 0
    assert [(r, s) for r, s, _ in store.change_feed("t", 0, 1).entries] == [((1, "A"), 1)]
    feed = store.change_feed("t", 0, 2)
    assert sorted((r, s) for r, s, _ in feed.entries) == [((1, "A"), -1), ((1, "A"), 1)]
    assert len(effectivize(feed)) == 0


def test_update_keeps_row_id():
    store = Store()
    store.create_table("t", S)
    c = store.commit("t", [(1, "a")])
    rid = c.inserted[0][0]
    store.commit("t", updates={rid: (1, "b")})
    feed = store.change_feed("t", 1, 2)
    assert {(r, s, i) for r, s, i in feed.entries} == {((1, "a"), -1, rid), ((1, "b"), 1, rid)}
    assert store.table("t").lookup(rid) == (1, "b")


def test_commit_raw_rejects_reusing_a_live_id():
    store = Store()
    store.create_table("t", S)
    c = store.commit("t", [(1, "a")])
    rid = c.inserted[0][0]
    with pytest.raises(InvalidCommit):
        store.commit_raw("t", [(rid, (2, "b"))], [])


def test_persisted_store_reloads(tmp_path):
    store = Store(tmp_path)
    store.create_table("t", S, ["v"])
    store.commit("t", [(1, "a"), (2, "b")], metadata={"note": "x"})
    again = Store(tmp_path)
    assert sorted(again.snapshot("t").rows) == [(1, "a"), (2, "b")]
    assert again.table("t").latest_metadata("note") == (1, "x")
    assert again.table("t").partition_columns == ("v",) or list(again.table("t").partition_columns) == ["v"]


def test_crash_while_writing_a_commit_leaves_previous_version(tmp_path):
    store = Store(tmp_path)
    store.create_table("t", S)
    store.commit("t", [(1, "a")])
    with faults.inject(faults.STORAGE_COMMIT_WRITE), pytest.raises(faults.SimulatedCrash):
        store.commit("t", [(2, "b")])
    again = Store(tmp_path)
    assert again.current_version("t") == 1
    assert again.snapshot("t").rows == [(1, "a")]


# --- properties over random histories ---------------------------------------

ops = st.lists(
    st.one_of(
        st.tuples(st.just("ins"), st.lists(st.tuples(st.integers(0, 4), st.sampled_from("abc")), max_size=4)),
        st.tuples(st.just("del"), st.integers(0, 4)),
        st.tuples(st.just("upd"), st.integers(0, 4)),
    ),
    max_size=12,
)


def _run(history) -> Store:
    store = Store()
    store.create_table("t", S)
    for kind, arg in history:
        if kind == "ins":
            store.commit("t", arg)
        elif kind == "del":
            store.commit("t", delete_predicate=E.Cmp("=", E.Col("k"), E.lit(arg)))
        else:
            t = store.table("t")
            ups = {rid: (row[0], row[1] + "'") for row, rid in t.snapshot().with_ids() if row[0] == arg}
            store.commit("t", updates=ups)
    return store


def _fold(store: Store, v: int) -> Relation:
    """Replay oracle: start empty and apply each commit's inserts and deletes."""
    t = store.table("t")
    live: dict = {}
    for version in range(1, v + 1):
        c = t.commits[version - 1]
        if c.truncate:
            live.clear()
        for rid in c.deleted:
            live.pop(rid, None)
        for rid, row in c.inserted:
            live[rid] = row
    return Relation(S, list(live.values()), list(live.keys()))


@given(ops)
def test_snapshot_equals_replay_of_commits(history):
    store = _run(history)
    for v in range(store.current_version("t") + 1):
        assert store.snapshot("t", v).counter(True) == _fold(store, v).counter(True)


@given(ops, st.data())
def test_change_feed_moves_snapshot_a_to_b(history, data):
    store = _run(history)
    n = store.current_version("t")
    a = data.draw(st.integers(0, n))
    b = data.draw(st.integers(a, n))
    got = apply_changeset(store.snapshot("t", a), store.change_feed("t", a, b))
    assert got.counter(True) == store.snapshot("t", b).counter(True)


@given(ops)
def test_live_row_ids_are_unique(history):
    store = _run(history)
    for v in range(store.current_version("t") + 1):
        ids = store.snapshot("t", v).ids
        assert len(ids) == len(set(ids))


def test_effectivize_examples():
    a = (1, "A")
    assert effectivize(Changeset(S, [(a, 1, None), (a, -1, None)])).entries == []
    twice = effectivize(Changeset(S, [(a, 1, None), (a, 1, None)]))
    assert twice.entries == [(a, 1, None), (a, 1, None)]
    update = Changeset(S, [((1, "old"), -1, 7), ((1, "new"), 1, 7)])
    assert sorted(effectivize(update).entries) == sorted(update.entries)


def test_timestamps_round_trip_through_disk(tmp_path):
    schema = Schema.of(("ts", V.TIMESTAMP), ("d", V.DATE))
    store = Store(tmp_path)
    store.create_table("t", schema)
    row = (dt.datetime(2025, 3, 1, 8, 30, 15), dt.date(2025, 3, 1))
    store.commit("t", [row])
    assert Store(tmp_path).snapshot("t").rows == [row]
