from __future__ import annotations

import random

from hypothesis import given
from hypothesis import strategies as st

from deltamv import fingerprint as F
from deltamv.eval import evaluate
from deltamv.ir.plan import bind, infer_schema
from deltamv.mutate import cosmetic_mutation, semantic_mutation
from deltamv.normalize import normalize
from deltamv.relation import bags_equal
from deltamv.rqg import CLOCK_START, TABLE_SCHEMA, apply_op, generate_case
from deltamv.storage import Store


def _catalog(case):
    return {t: TABLE_SCHEMA for t in case.tables}


@given(st.integers(0, 5000))
def test_cosmetic_mutation_keeps_results(seed):
    case = generate_case(seed)
    if not case.deterministic():
        return
    catalog = _catalog(case)
    plan = infer_schema(case.plan, catalog)
    mutated, _ = cosmetic_mutation(plan, random.Random(seed), catalog.__getitem__, 3)
    store = Store()
    for t, schema in case.tables.items():
        store.create_table(t, schema)
        store.commit(t, case.initial[t])
    for op in case.batches[0].ops if case.batches else []:
        apply_op(store, op)
    versions = {t: store.current_version(t) for t in case.tables}
    a = evaluate(bind(infer_schema(case.plan, catalog), versions), store, CLOCK_START)
    b = evaluate(bind(infer_schema(mutated, catalog), versions), store, CLOCK_START)
    assert bags_equal(a, b, 1e-9)


@given(st.integers(0, 5000))
def test_semantic_mutation_changes_the_fingerprint(seed):
    case = generate_case(seed)
    catalog = _catalog(case)
    plan = infer_schema(case.plan, catalog)
    got = semantic_mutation(plan, random.Random(seed), catalog.__getitem__)
    if got is None:
        return
    mutated, _ = got
    fp = lambda p: F.fingerprint(normalize(p, catalog=catalog)).digest  # noqa: E731
    assert fp(mutated) != fp(plan)
