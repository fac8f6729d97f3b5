from __future__ import annotations

import json

import pytest

from deltamv.cli import EXIT_MISMATCH, EXIT_OK, EXIT_REFRESH, EXIT_USAGE, ROOT_ENV, main
from deltamv.ir.serde import plan_from_json
from deltamv.normalize import normalize
from deltamv.pipeline import Pipeline

SCHEMA_SQL = """
CREATE TABLE customers (customer_id BIGINT NOT NULL, region STRING);
CREATE TABLE orders (order_id BIGINT NOT NULL, customer_id BIGINT, amount DOUBLE, date DATE) PARTITIONED BY (date);
CREATE MATERIALIZED VIEW regional AS
SELECT c.region, AVG(o.amount) AS avg_order_amount
FROM customers c JOIN orders o ON c.customer_id = o.customer_id
GROUP BY c.region
HAVING c.region IN ('us-east', 'us-west', 'asia');
"""


@pytest.fixture
def ws(tmp_path, monkeypatch):
    monkeypatch.setenv(ROOT_ENV, str(tmp_path / "ws"))
    (tmp_path / "defs.sql").write_text(SCHEMA_SQL)
    (tmp_path / "customers.csv").write_text("customer_id,region\n1,us-east\n2,asia\n")
    (tmp_path / "orders.jsonl").write_text(
        '{"order_id": 10, "customer_id": 1, "amount": 100.0, "date": "2025-01-01"}\n'
        '{"order_id": 11, "customer_id": 1, "amount": 200.0, "date": "2025-01-02"}\n'
    )
    assert main(["create", str(tmp_path / "defs.sql")]) == EXIT_OK
    assert main(["load", "customers", str(tmp_path / "customers.csv")]) == EXIT_OK
    assert main(["load", "orders", str(tmp_path / "orders.jsonl")]) == EXIT_OK
    return tmp_path


def _json(capsys) -> dict:
    return json.loads(capsys.readouterr().out)


def test_refresh_and_report(ws, capsys):
    capsys.readouterr()
    assert main(["refresh", "--now", "2025-01-03T00:00:00", "--json"]) == EXIT_OK
    out = _json(capsys)
    assert out["ok"] and out["entries"][0]["strategy"] == "full_recompute"
    pipe = Pipeline.open(ws / "ws")
    assert pipe.contents("regional").rows == [("us-east", 150.0)]
    assert main(["--json", "refresh", "regional", "--now", "2025-01-03T00:00:00"]) == EXIT_OK
    assert _json(capsys)["entries"][0]["rows_written"] == 0


def test_explain_json_plan_round_trips(ws, capsys):
    main(["refresh", "--now", "2025-01-03T00:00:00"])
    capsys.readouterr()
    assert main(["explain", "regional", "--json"]) == EXIT_OK
    out = _json(capsys)
    pipe = Pipeline.open(ws / "ws")
    plan = plan_from_json(out["plan"])
    catalog = {t: pipe.store.table_schema(t) for t in ("customers", "orders")}
    assert normalize(plan, catalog=catalog).plan == pipe.catalog.layout("regional").normalized.plan
    assert out["chosen"].startswith("incremental")
    assert "merge_aggregate" in out["change_plan"] or out["chosen"] == "incremental:merge_aggregate"


def test_usage_errors_exit_1(ws, capsys):
    assert main(["refresh", "nope"]) == EXIT_USAGE
    assert main(["explain", "nope"]) == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_USAGE


def test_refresh_failure_exits_2(ws, monkeypatch):
    from deltamv import faults

    main(["refresh", "--now", "2025-01-03T00:00:00"])
    # the full-recompute commit itself fails, so there is nothing to fall back to
    with faults.inject(faults.APPLY_COMMIT):
        assert main(["refresh", "--now", "2025-01-03T00:00:00", "--policy", "full"]) == EXIT_REFRESH


def test_rqg_exit_codes(tmp_path, monkeypatch, capsys):
    from deltamv import rqg

    assert main(["rqg", "--seeds", "0..3", "--json"]) == EXIT_OK
    assert _json(capsys)["passed"] == 4
    real = rqg._one

    def broken(args):
        seed, limits, _, temporal = args
        return real((seed, limits, True, temporal))

    monkeypatch.setattr(rqg, "_one", broken)
    code = main(["rqg", "--seeds", "0..40", "--out", str(tmp_path / "repros")])
    assert code == EXIT_MISMATCH
    assert list((tmp_path / "repros").glob("repro_*.json"))
