from __future__ import annotations

import csv
import io
import json

import pytest

from deltamv.bench import KEYS, apply_batch, generate_bench, run_bench
from deltamv.pipeline import Pipeline
from deltamv.storage import Store


@pytest.fixture(scope="module")
def ws():
    return generate_bench("tiny", seed=1, incremental_batches=2)


def test_generation_is_deterministic(ws):
    again = generate_bench("tiny", seed=1, incremental_batches=2)
    assert [b.label for b in again.batches] == [b.label for b in ws.batches]
    assert again.batches[1].changes[0].updates == ws.batches[1].changes[0].updates


def test_prospect_list_is_mostly_rewritten(ws):
    hist = next(c for c in ws.batches[0].changes if c.table == "prospect")
    batch = next(c for c in ws.batches[1].changes if c.table == "prospect")
    assert len(batch.updates) > 0.95 * len(hist.inserts)


def test_market_batches_only_insert(ws):
    for b in ws.batches[1:]:
        m = next(c for c in b.changes if c.table == "market")
        assert m.inserts and not m.updates and not m.deletes


def test_apply_batch_updates_by_key(ws):
    store = Store()
    pipe = Pipeline(store, ws.spec)
    pipe.create_sources()
    apply_batch(store, ws.batches[0])
    before = len(store.snapshot("customer"))
    apply_batch(store, ws.batches[1])
    cust = next(c for c in ws.batches[1].changes if c.table == "customer")
    assert len(store.snapshot("customer")) == before + len(cust.inserts)
    pos = store.table_schema("customer").resolve(KEYS["customer"])
    live = {r[pos]: r for r in store.snapshot("customer").rows}
    assert all(live[k] == row for k, row in cust.updates.items())


def test_report_outputs(ws, tmp_path):
    report = run_bench(ws, views=["dim_account"])
    assert {e.batch for e in report.entries} == {1, 2}
    totals = report.totals
    ti = sum(e.t_incr_ms for e in report.entries)
    tf = sum(e.t_full_ms for e in report.entries)
    assert totals["speedup"] == round(tf / ti, 3)
    paths = report.write(tmp_path, plot=True)
    assert json.loads(paths["json"].read_text())["per_mv"]["dim_account"]["batches"] == 2
    rows = list(csv.DictReader(io.StringIO(paths["csv"].read_text())))
    assert len(rows) == 2 and rows[0]["mv"] == "dim_account"
    assert paths["png"].read_bytes()[:4] == b"\x89PNG"
