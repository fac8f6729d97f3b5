from __future__ import annotations

from hypothesis import given
from hypothesis import strategies as st

from deltamv import cost as C
from deltamv.deltagen import FullRecompute, RefreshContext, RowIncremental, candidate_strategies
from deltamv.enable import enable
from deltamv.normalize import normalize
from deltamv.sql import parse_query

from conftest import CUSTOMERS, FIG1_SQL, ORDERS

TABLES = {"customers": CUSTOMERS, "orders": ORDERS}
JOIN_SQL = "SELECT o.order_id, c.region FROM customers c JOIN orders o ON c.customer_id = o.customer_id"


def _cands(sql):
    ep = enable(normalize(parse_query(sql), catalog=TABLES))
    full, inc = candidate_strategies(ep, RefreshContext({"customers": (1, 2), "orders": (1, 2)}))
    return ep, full, inc


def _stats(changed_c, total_c, changed_o, total_o, mv_rows=None):
    return C.ChangeStats(
        {
            "customers": C.SourceStats(changed_c, total_c, changed_c),
            "orders": C.SourceStats(changed_o, total_o, changed_o),
        },
        mv_rows,
    )


def test_zero_change_costs_only_the_overhead():
    for sql in (FIG1_SQL, JOIN_SQL):
        ep, full, inc = _cands(sql)
        stats = _stats(0, 1000, 0, 10_000)
        i, f = C.estimate(inc, ep, stats), C.estimate(full, ep, stats)
        assert i.total == C.CostParams().c0
        assert i.total < f.total
        assert C.choose("mv", [(full, f), (inc, i)]) is inc


@given(st.integers(1, 50_000), st.integers(1, 50_000))
def test_everything_changed_makes_incremental_no_cheaper(nc, no):
    for sql in (FIG1_SQL, JOIN_SQL):
        ep, full, inc = _cands(sql)
        stats = _stats(nc, nc, no, no)
        assert C.estimate(inc, ep, stats).total >= C.estimate(full, ep, stats).total


def test_small_change_prefers_incremental():
    ep, full, inc = _cands(JOIN_SQL)
    stats = _stats(1, 1000, 10, 100_000)
    scored = [(s, C.estimate(s, ep, stats)) for s in (full, inc)]
    assert isinstance(C.choose("mv", scored), RowIncremental)


def test_downstream_feed_penalty_flips_a_close_call():
    full, inc = FullRecompute(), RowIncremental(None)  # type: ignore[arg-type]
    f = C.CostEstimate({"all": 100.0}, output_rows=1000, feed_rows=2000)
    i = C.CostEstimate({"all": 100.5}, output_rows=1000, feed_rows=10)
    assert C.choose("mv", [(full, f), (inc, i)]) is full
    assert C.choose("mv", [(full, f), (inc, i)], downstream=["child"]) is inc


def test_ties_go_to_incremental():
    full, inc = FullRecompute(), RowIncremental(None)  # type: ignore[arg-type]
    est = C.CostEstimate({"all": 5.0})
    assert C.choose("mv", [(full, est), (inc, est)]) is inc


def test_feedback_flips_provenance_and_scales():
    ep, full, inc = _cands(JOIN_SQL)
    stats = _stats(5, 100, 5, 100)
    history = C.CostHistory()
    base = C.estimate(inc, ep, stats, history, mv="mv")
    assert base.provenance == C.DEFAULT_PARAMETERS
    C.record_feedback(history, "mv", inc, ep, {"estimated": base.total, "units": 2 * base.total})
    again = C.estimate(inc, ep, stats, history, mv="mv")
    assert again.provenance == C.HISTORY_MATCHED
    assert abs(again.total - 2 * base.total) < 1e-9
    # keyed by strategy: full-path estimates are untouched
    assert C.estimate(full, ep, stats, history, mv="mv").provenance == C.DEFAULT_PARAMETERS


def test_history_ring_buffer_evicts_oldest(tmp_path):
    ep, full, inc = _cands(JOIN_SQL)
    k = 3
    history = C.CostHistory(tmp_path / "h.jsonl", capacity=k)
    for n in range(k + 1):
        C.record_feedback(history, "mv", full, ep, {"estimated": 1.0, "units": float(n)})
    kept = history.lookup("mv", full.label, C.shape_digest(full, ep))
    assert [o.observed for o in kept] == [1.0, 2.0, 3.0]
    reloaded = C.CostHistory(tmp_path / "h.jsonl", capacity=k)
    assert [o.observed for o in reloaded.lookup("mv", full.label, C.shape_digest(full, ep))] == [1.0, 2.0, 3.0]
