from __future__ import annotations

import pytest

from deltamv import fingerprint as F
from deltamv.errors import MissingUdfSignature
from deltamv.ir import expr as E
from deltamv.normalize import normalize
from deltamv.rqg import fingerprint_suite
from deltamv.sql import parse_query

from conftest import CUSTOMERS, ORDERS

TABLES = {"customers": CUSTOMERS, "orders": ORDERS, "a": CUSTOMERS, "b": CUSTOMERS}


def fp(sql: str, version: int = 101) -> str:
    return F.fingerprint(normalize(parse_query(sql), catalog=TABLES), version=version).digest


def test_inner_join_order_does_not_matter():
    assert fp("SELECT a.region FROM a JOIN b ON a.customer_id = b.customer_id") == fp(
        "SELECT a.region FROM b JOIN a ON b.customer_id = a.customer_id"
    )


def test_left_join_order_matters():
    assert fp("SELECT a.region FROM a LEFT JOIN b ON a.customer_id = b.customer_id") != fp(
        "SELECT a.region FROM b LEFT JOIN a ON a.customer_id = b.customer_id"
    )


def test_aliases_and_cosmetic_rewrites_do_not_matter():
    base = fp("SELECT customer_id, amount FROM orders WHERE amount > 5 AND customer_id = 1")
    assert base == fp("SELECT o.customer_id AS customer_id, o.amount AS amount FROM orders o WHERE 1 = customer_id AND 5 < amount")
    assert base == fp("WITH x AS (SELECT * FROM orders WHERE amount > 5) SELECT customer_id, amount FROM x WHERE customer_id = 1")


def test_semantic_edits_change_the_digest():
    base = fp("SELECT customer_id, SUM(amount) AS s FROM orders GROUP BY customer_id")
    assert base != fp("SELECT customer_id, MAX(amount) AS s FROM orders GROUP BY customer_id")
    assert base != fp("SELECT customer_id, SUM(amount) AS s FROM orders WHERE amount > 0 GROUP BY customer_id")


def test_output_column_names_matter():
    assert fp("SELECT amount AS x FROM orders") != fp("SELECT amount AS y FROM orders")


def test_digest_is_sha256_hex():
    d = fp("SELECT * FROM orders")
    assert len(d) == 64 and int(d, 16) >= 0


def test_udf_signature_is_part_of_the_digest():
    E.register_udf("fp_test_double", lambda x: None if x is None else 2 * x, "float64", deterministic=True)
    plan = normalize(parse_query("SELECT fp_test_double(amount) AS d FROM orders"), catalog=TABLES)
    a = F.fingerprint(plan, {"fp_test_double": "v1"})
    assert a != F.fingerprint(plan, {"fp_test_double": "v2"})
    with pytest.raises(MissingUdfSignature):
        F.fingerprint(plan, {})


def test_upgrade_records_the_new_version_on_match():
    plan = normalize(parse_query("SELECT * FROM orders"), catalog=TABLES)
    history = F.FingerprintHistory([F.fingerprint(plan, version=101)])
    assert F.check_unchanged(history, plan, supported=(101, 102))
    assert history.digest_for(102) == F.fingerprint(plan, version=102).digest
    # after the old version is retired the view is still recognized
    assert F.check_unchanged(history, plan, supported=(102,))


def test_version_mismatch_means_changed():
    plan = normalize(parse_query("SELECT * FROM orders"), catalog=TABLES)
    history = F.FingerprintHistory([F.fingerprint(plan, version=101)])
    assert not F.check_unchanged(history, plan, supported=(102,))


def test_mutation_suite_small():
    out = fingerprint_suite(cosmetic=60, semantic=60, seed=7)
    assert out["cosmetic_unchanged"] == out["cosmetic"] == 60
    assert out["semantic_changed"] == out["semantic"] == 60
