from __future__ import annotations

from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from deltamv import values as V
from deltamv.ir.schema import Schema
from deltamv.relation import (
    Changeset,
    NegativeMultiplicity,
    Relation,
    apply_changeset,
    bag_difference,
    bags_equal,
    concat,
    effectivize,
)

S = Schema.of(("k", V.INT64), ("v", V.STRING))

rows = st.tuples(st.integers(0, 3), st.sampled_from(["a", "b"]))
entries = st.lists(
    st.tuples(rows, st.sampled_from([1, -1]), st.one_of(st.none(), st.integers(0, 3))),
    max_size=16,
)


def cs(es) -> Changeset:
    return Changeset(S, list(es))


@given(entries)
def test_effectivize_preserves_zset(es):
    assert effectivize(cs(es)).zset() == cs(es).zset()


@given(entries)
def test_effectivize_output_is_effectivized(es):
    assert effectivize(cs(es)).is_effectivized()


@given(entries)
def test_effectivize_is_idempotent(es):
    once = effectivize(cs(es))
    assert Counter(effectivize(once).entries) == Counter(once.entries)


@given(entries, entries)
def test_effectivize_distributes_over_concat(a, b):
    joined = effectivize(concat(S, [cs(a), cs(b)])).zset()
    assert joined == _sum(effectivize(cs(a)).zset(), effectivize(cs(b)).zset())


def _sum(x: Counter, y: Counter) -> Counter:
    out = Counter(x)
    for k, v in y.items():
        out[k] += v
    return Counter({k: v for k, v in out.items() if v})


@given(entries)
def test_effectivize_never_grows(es):
    assert len(effectivize(cs(es))) <= len(es)


def test_insert_then_delete_of_same_row_cancels():
    a = (1, "a")
    assert effectivize(cs([(a, 1, 5), (a, -1, 5)])).entries == []
    # distinct ids are distinct rows and must survive
    kept = effectivize(cs([(a, 1, 5), (a, -1, 6)]))
    assert len(kept) == 2


@given(st.lists(rows, max_size=8), st.lists(rows, max_size=8))
def test_bag_difference_moves_pre_to_post(pre_rows, post_rows):
    pre, post = Relation(S, pre_rows), Relation(S, post_rows)
    diff = bag_difference(post, pre, with_ids=False)
    assert diff.is_effectivized()
    assert apply_changeset(pre, diff, match_ids=False).counter() == post.counter()


def test_apply_changeset_rejects_deleting_absent_row():
    with pytest.raises(NegativeMultiplicity):
        apply_changeset(Relation(S, []), cs([((1, "a"), -1, None)]))


def test_apply_unbalanced_raw_changeset_is_a_noop():
    rel = Relation(S, [(1, "a")], [7])
    out = apply_changeset(rel, cs([((2, "b"), 1, 8), ((2, "b"), -1, 8)]))
    assert out.counter(True) == rel.counter(True)


def test_bags_equal_tolerance():
    s = Schema.of(("x", V.FLOAT64))
    a = Relation(s, [(0.1 + 0.2,), (1.0,)])
    b = Relation(s, [(1.0,), (0.3,)])
    assert not bags_equal(a, b)
    assert bags_equal(a, b, rel_tol=1e-9)
    assert not bags_equal(a, Relation(s, [(1.0,)]), rel_tol=1e-9)
