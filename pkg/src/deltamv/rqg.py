"""Random query generator and differential correctness harness.

``generate_case`` draws tables, initial data, a view definition and a list
of change batches from a seed. ``run_differential`` refreshes the view
incrementally after each batch and checks three things against independent
computations:

* the stored view bag-equals evaluating the raw definition from scratch
  (floats within a relative tolerance);
* the generated delta, netted, equals the difference between post and pre
  states;
* the view fingerprint does not drift while the definition is unchanged.

On a mismatch the case is shrunk to the shortest failing batch prefix and
then to as few change rows as still fail.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import random
import time
import traceback
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from deltamv import faults
from deltamv import fingerprint as F
from deltamv import values as V
from deltamv.cost import CostHistory
from deltamv.deltagen import build_change_plan
from deltamv.deltaplan import DConcat, DFilter, DStatePlan, walk_delta
from deltamv.errors import Mismatch, PlanError, TypeMismatch, UnresolvedColumn
from deltamv.eval import evaluate, evaluate_changeset
from deltamv.ir import expr as E
from deltamv.ir.plan import (
    AggCall,
    Aggregate,
    Distinct,
    Filter,
    Join,
    Plan,
    Project,
    Scan,
    UnionAll,
    WinCall,
    Window,
    With,
    CteRef,
    bind,
    infer_schema,
    strip_schemas,
    walk_plan,
)
from deltamv.ir.schema import Schema
from deltamv.ir.serde import expr_from_json, expr_to_json, plan_from_json, plan_to_json
from deltamv.mutate import cosmetic_mutation, semantic_mutation
from deltamv.normalize import normalize
from deltamv.pipeline import FELL_BACK, FAILED, MvDecl, Pipeline, PipelineSpec, SourceDecl
from deltamv.relation import bag_difference, bags_equal, describe_bag_diff, effectivize
from deltamv.storage import Store

REL_TOL = 1e-9
HOT_KEYS = (0, 1, 2)
HOT_SHARE = 0.2
GROUP_VALUES = ("a", "b", "c", "d")
BASE_DATE = dt.date(2024, 1, 1)
DATE_SPAN = 100
CLOCK_START = dt.datetime(2024, 3, 1)

TABLE_SCHEMA = Schema.of(
    ("id", V.INT64, False),
    ("k", V.INT64),
    ("g", V.STRING),
    ("v", V.FLOAT64),
    ("d", V.DATE),
)

TEMPORAL_TERMS = ("left window", "entered window", "changed rows in window")

# operator kinds reported by the coverage counter
KINDS = ("scan", "filter", "project", "join", "aggregate", "window", "union_all", "distinct", "temporal_filter", "with")


@dataclass(frozen=True)
class Limits:
    rows: int = 12
    batches: int = 5
    batch_rows: int = 4
    tables: int = 3
    joins: int = 3
    keys: int = 8


@dataclass
class Op:
    kind: str  # insert | delete | update
    table: str
    rows: list[tuple] = field(default_factory=list)
    predicate: E.Expr | None = None
    assignments: dict[str, E.Expr] = field(default_factory=dict)

    def size(self) -> int:
        return len(self.rows) if self.kind == "insert" else 1


@dataclass
class Batch:
    ops: list[Op]
    advance: dt.timedelta


@dataclass
class Case:
    seed: int
    tables: dict[str, Schema]
    initial: dict[str, list[tuple]]
    plan: Plan
    batches: list[Batch]
    effectivize: str = "auto"

    def kinds(self) -> Counter:
        return plan_kinds(self.plan)

    def deterministic(self) -> bool:
        return not any(E.has_nondeterministic_call(e) for p in walk_plan(self.plan) for e in p.exprs())

    # serialization -----------------------------------------------------

    def to_json(self) -> dict:
        def rows_json(name, rows):
            types = self.tables[name].types
            return [[V.to_json_value(v, t) for v, t in zip(r, types)] for r in rows]

        def op_json(op: Op) -> dict:
            d: dict[str, Any] = {"kind": op.kind, "table": op.table}
            if op.rows:
                d["rows"] = rows_json(op.table, op.rows)
            if op.predicate is not None:
                d["predicate"] = expr_to_json(op.predicate)
            if op.assignments:
                d["set"] = {k: expr_to_json(v) for k, v in op.assignments.items()}
            return d

        return {
            "seed": self.seed,
            "effectivize": self.effectivize,
            "tables": {n: s.to_json() for n, s in self.tables.items()},
            "initial": {n: rows_json(n, r) for n, r in self.initial.items()},
            "plan": plan_to_json(strip_schemas(self.plan)),
            "batches": [
                {"advance_seconds": b.advance.total_seconds(), "ops": [op_json(o) for o in b.ops]} for b in self.batches
            ],
        }

    @classmethod
    def from_json(cls, d: dict) -> "Case":
        tables = {n: Schema.from_json(s) for n, s in d["tables"].items()}

        def rows(name, data):
            types = tables[name].types
            return [tuple(V.from_json_value(v, t) for v, t in zip(r, types)) for r in data]

        batches = []
        for b in d["batches"]:
            ops = []
            for o in b["ops"]:
                ops.append(
                    Op(
                        o["kind"],
                        o["table"],
                        rows(o["table"], o.get("rows", [])),
                        expr_from_json(o.get("predicate")),
                        {k: expr_from_json(v) for k, v in o.get("set", {}).items()},
                    )
                )
            batches.append(Batch(ops, dt.timedelta(seconds=b["advance_seconds"])))
        return cls(
            d["seed"],
            tables,
            {n: rows(n, r) for n, r in d["initial"].items()},
            plan_from_json(d["plan"]),
            batches,
            d.get("effectivize", "auto"),
        )


def plan_kinds(plan: Plan) -> Counter:
    c: Counter = Counter()
    for p in walk_plan(plan):
        if isinstance(p, CteRef):
            continue
        c[p.kind] += 1
        if isinstance(p, Filter) and E.has_time_function(p.predicate):
            c["temporal_filter"] += 1
    return c


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------


class _Data:
    def __init__(self, rng: random.Random, limits: Limits):
        self.rng = rng
        self.limits = limits
        self.next_id: Counter = Counter()

    def key(self) -> int | None:
        r = self.rng.random()
        if r < 0.05:
            return None
        if r < 0.05 + HOT_SHARE:
            return self.rng.choice(HOT_KEYS)
        return self.rng.randint(len(HOT_KEYS), len(HOT_KEYS) + self.limits.keys)

    def value(self) -> float | None:
        # multiples of 0.25 keep sums exact, so float results are reproducible
        return None if self.rng.random() < 0.05 else self.rng.randint(-40, 120) / 4

    def group(self) -> str | None:
        return None if self.rng.random() < 0.08 else self.rng.choice(GROUP_VALUES)

    def date(self) -> dt.date:
        return BASE_DATE + dt.timedelta(days=self.rng.randint(0, DATE_SPAN))

    def row(self, table: str) -> tuple:
        self.next_id[table] += 1
        # ids repeat occasionally so that duplicate rows occur
        rid = self.next_id[table] if self.rng.random() > 0.1 else max(1, self.next_id[table] - 1)
        return (rid, self.key(), self.group(), self.value(), self.date())

    def predicate(self) -> E.Expr:
        r = self.rng.random()
        if r < 0.45:
            k = self.rng.choice(HOT_KEYS) if self.rng.random() < 0.6 else self.rng.randint(0, len(HOT_KEYS) + self.limits.keys)
            return E.Cmp("=", E.Col("k"), E.lit(k))
        if r < 0.65:
            return E.Cmp("<", E.Col("v"), E.lit(self.rng.randint(-40, 120) / 4))
        if r < 0.8:
            return E.Cmp("=", E.Col("g"), E.lit(self.rng.choice(GROUP_VALUES)))
        if r < 0.9:
            return E.IsNull(E.Col("k"))
        return E.Cmp("<=", E.Col("id"), E.lit(self.rng.randint(1, max(1, self.next_id.most_common(1)[0][1] if self.next_id else 1))))

    def op(self, table: str) -> Op:
        r = self.rng.random()
        if r < 0.45:
            n = self.rng.randint(1, max(1, self.limits.batch_rows))
            return Op("insert", table, [self.row(table) for _ in range(n)])
        if r < 0.65:
            return Op("delete", table, predicate=self.predicate())
        col = self.rng.choice(["v", "k", "g", "d", "v"])
        val: Any = {"v": self.value, "k": self.key, "g": self.group, "d": self.date}[col]()
        lit = E.Lit(val, TABLE_SCHEMA.columns[TABLE_SCHEMA.resolve(col)].type)
        return Op("update", table, predicate=self.predicate(), assignments={col: lit})


# ---------------------------------------------------------------------------
# plans
# ---------------------------------------------------------------------------


def _ref(c) -> str:
    return f"{c.qualifier}.{c.name}" if c.qualifier else c.name


class _PlanGen:
    def __init__(self, rng: random.Random, tables: dict[str, Schema], limits: Limits, temporal: bool = False):
        self.rng = rng
        self.tables = tables
        self.limits = limits
        self.joins_left = limits.joins
        self.alias_n = 0
        self.temporal = temporal

    def annotate(self, p: Plan) -> Plan:
        return infer_schema(strip_schemas(p), self.tables.__getitem__)

    def cols(self, p: Plan, typ: str | None = None) -> list[str]:
        return [_ref(c) for c in p.schema.columns if typ is None or c.type == typ]

    def pick(self, p: Plan, typ: str) -> str | None:
        cs = self.cols(p, typ)
        return self.rng.choice(cs) if cs else None

    # leaves and row-preserving operators ---------------------------------

    def scan(self) -> Plan:
        self.alias_n += 1
        t = self.rng.choice(sorted(self.tables))
        return self.annotate(Scan(t, alias=f"{t}_{self.alias_n}"))

    def temporal_filter(self, p: Plan) -> Plan:
        d = self.pick(p, V.DATE)
        if d is None:
            return p
        w = self.rng.randint(3, 60)
        lower = E.Cmp(">=", E.Col(d), E.BinOp("-", E.CurrentDate(), E.lit(dt.timedelta(days=w))))
        if self.rng.random() < 0.3:
            upper = E.Cmp("<", E.Col(d), E.CurrentDate())
            return self.annotate(Filter(p, E.And((lower, upper))))
        return self.annotate(Filter(p, lower))

    def plain_filter(self, p: Plan) -> Plan:
        r = self.rng.random()
        if r < 0.4 and self.pick(p, V.FLOAT64):
            e: E.Expr = E.Cmp(self.rng.choice([">", "<=", "!="]), E.Col(self.pick(p, V.FLOAT64)), E.lit(self.rng.randint(-10, 60) / 4))
        elif r < 0.6 and self.pick(p, V.STRING):
            e = E.InList(E.Col(self.pick(p, V.STRING)), tuple(E.lit(g) for g in self.rng.sample(GROUP_VALUES, 2)))
        elif r < 0.8 and self.pick(p, V.INT64):
            e = E.Or((E.IsNull(E.Col(self.pick(p, V.INT64))), E.Cmp("<", E.Col(self.pick(p, V.INT64)), E.lit(self.rng.randint(1, 8)))))
        else:
            col = self.rng.choice(self.cols(p))
            e = E.IsNull(E.Col(col), negated=True)
        return self.annotate(Filter(p, e))

    def filter(self, p: Plan) -> Plan:
        if self.rng.random() < 0.25:
            return self.temporal_filter(p)
        return self.plain_filter(p)

    def project(self, p: Plan) -> Plan:
        cols = p.schema.columns
        chosen = self.rng.sample(range(len(cols)), self.rng.randint(1, len(cols)))
        items = [(f"p{i}", E.Col(_ref(cols[i]))) for i in sorted(chosen)]
        v = self.pick(p, V.FLOAT64)
        if v and self.rng.random() < 0.5:
            items.append(("px", E.BinOp(self.rng.choice(["+", "*", "-"]), E.Col(v), E.lit(self.rng.randint(1, 8) / 4))))
        k = self.pick(p, V.INT64)
        if k and self.rng.random() < 0.3:
            items.append(("pc", E.Func("coalesce", (E.Col(k), E.lit(-1)))))
        return self.annotate(Project(p, tuple(items)))

    # composite relations -------------------------------------------------

    def rel(self, depth: int = 0) -> Plan:
        r = self.rng.random()
        if self.joins_left > 0 and r < 0.45:
            self.joins_left -= 1
            p = self.join(depth)
        elif r < 0.55 and depth < 2:
            p = self.inner_aggregate(depth)
        else:
            p = self.scan()
        while self.rng.random() < 0.35:
            p = self.filter(p)
        return p

    def join(self, depth: int) -> Plan:
        left = self.rel(depth + 1)
        right = self.rel(depth + 1)
        lk, rk = self.pick(left, V.INT64), self.pick(right, V.INT64)
        kind = self.rng.choices(["inner", "left_outer", "right_outer", "full_outer"], [5, 3, 1, 2])[0]
        if lk is None or rk is None:
            cond: E.Expr | None = None
            kind = "inner"
        else:
            cond = E.Cmp("=", E.Col(lk), E.Col(rk))
            if self.rng.random() < 0.2:
                lv, rv = self.pick(left, V.FLOAT64), self.pick(right, V.FLOAT64)
                if lv and rv:
                    cond = E.And((cond, E.Cmp("<=", E.Col(lv), E.Col(rv))))
        return self.annotate(Join(left, right, kind, cond))

    def aggs(self, p: Plan, n: int) -> list[tuple[str, AggCall]]:
        out = []
        for i in range(n):
            v = self.pick(p, V.FLOAT64)
            g = self.pick(p, V.STRING)
            choices = ["COUNT_STAR"]
            if v:
                choices += ["SUM", "SUM", "AVG", "MIN", "MAX", "COUNT", "STDDEV", "FIRST"]
            if g:
                choices += ["MAX", "COLLECT_SET", "COLLECT_LIST"]
            kind = self.rng.choice(choices)
            if kind == "COUNT_STAR":
                call = AggCall("COUNT_STAR")
            elif kind in ("COLLECT_SET", "COLLECT_LIST") or (kind == "MAX" and g and not v):
                call = AggCall(kind, E.Col(g))
            elif kind == "FIRST":
                order = self.pick(p, V.INT64)
                call = AggCall("FIRST", E.Col(v), E.Col(order)) if order else AggCall("SUM", E.Col(v))
            else:
                call = AggCall(kind, E.Col(v))
            out.append((f"a{i}", call))
        return out

    def keys(self, p: Plan, n: int) -> list[tuple[str, E.Expr]]:
        cands = self.cols(p, V.INT64) + self.cols(p, V.STRING) + self.cols(p, V.DATE)
        chosen = self.rng.sample(cands, min(n, len(cands)))
        return [(f"k{i}", E.Col(c)) for i, c in enumerate(chosen)]

    def inner_aggregate(self, depth: int) -> Plan:
        child = self.rel(depth + 1)
        keys = self.keys(child, self.rng.randint(1, 2))
        return self.annotate(Aggregate(child, tuple(keys), tuple(self.aggs(child, self.rng.randint(1, 2)))))

    # top-level shapes ----------------------------------------------------

    def top(self) -> Plan:
        shape = self.rng.choices(
            ["rows", "aggregate", "window", "distinct", "union", "with", "rand"],
            [26, 34, 12, 9, 9, 7, 3],
        )[0]
        if self.temporal:
            shape = self.rng.choice(["rows", "aggregate", "rows_join"])
            base = self.scan() if shape != "rows_join" else self.join(1)
            base = self.temporal_filter(base)
            if shape == "aggregate":
                return self.annotate(Aggregate(base, tuple(self.keys(base, 1)), tuple(self.aggs(base, 2))))
            return base
        if shape == "rows":
            p = self.rel()
            names = [c.name for c in p.schema.columns]
            if len(set(names)) < len(names):
                p = self.annotate(Project(p, tuple((f"c{i}", E.Col(_ref(c))) for i, c in enumerate(p.schema.columns))))
            if self.rng.random() < 0.5:
                p = self.project(p)
            return p
        if shape == "aggregate":
            child = self.rel()
            keys = self.keys(child, self.rng.choice([0, 1, 1, 2]))
            p = self.annotate(Aggregate(child, tuple(keys), tuple(self.aggs(child, self.rng.randint(1, 3)))))
            a0 = p.schema.columns[p.schema.resolve("a0")].type
            if a0 in (V.INT64, V.FLOAT64) and self.rng.random() < 0.25:
                p = self.annotate(Filter(p, E.Cmp(">", E.Col("a0"), E.Lit(0 if a0 == V.INT64 else 0.0, a0))))
            if self.rng.random() < 0.3:
                p = self.project(p)
            return p
        if shape == "window":
            child = self.rel()
            part = tuple(E.Col(c) for c in self.rng.sample(self.cols(child, V.INT64) + self.cols(child, V.STRING), 1))
            order = []
            v = self.pick(child, V.FLOAT64)
            if v:
                order.append((E.Col(v), self.rng.random() < 0.5))
            funcs = []
            for i in range(self.rng.randint(1, 2)):
                kind = self.rng.choice(["ROW_NUMBER", "RANK", "DENSE_RANK", "SUM", "COUNT", "MIN", "MAX"] if v else ["COUNT"])
                arg = E.Col(v) if kind in ("SUM", "MIN", "MAX") else None
                funcs.append((f"w{i}", WinCall(kind, arg)))
            return self.annotate(Window(child, part, tuple(order), tuple(funcs)))
        if shape == "distinct":
            child = self.rel()
            cols = self.cols(child)
            chosen = self.rng.sample(cols, min(len(cols), self.rng.randint(1, 2)))
            return self.annotate(Distinct(Project(child, tuple((f"x{i}", E.Col(c)) for i, c in enumerate(chosen)))))
        if shape == "union":
            branches = []
            for _ in range(self.rng.randint(2, 3)):
                b = self.rel(1)
                k = self.pick(b, V.INT64) or self.cols(b, V.INT64)[0]
                v = self.pick(b, V.FLOAT64)
                ve: E.Expr = E.Col(v) if v else E.Lit(0.0, V.FLOAT64)
                branches.append(Project(b, (("x", E.Col(k)), ("y", ve))))
            return self.annotate(UnionAll(tuple(branches)))
        if shape == "with":
            inner = self.filter(self.scan())
            k = self.pick(inner, V.INT64)
            items = (("ck", E.Col(k)), ("cv", E.Col(self.pick(inner, V.FLOAT64))))
            body = Aggregate(CteRef("src"), (("ck", E.Col("ck")),), (("total", AggCall("SUM", E.Col("cv"))), ("n", AggCall("COUNT_STAR"))))
            if self.rng.random() < 0.5:
                body = Join(CteRef("src"), body, "inner", None)
                body = Project(body, (("x", E.Col("cv")), ("t", E.Col("total"))))
            return self.annotate(With((("src", Project(inner, items)),), body))
        # a non-deterministic view: the engine must refuse to maintain it incrementally
        child = self.rel()
        return self.annotate(Filter(child, E.Cmp("<", E.Func("rand", ()), E.lit(0.5))))


def generate_case(seed: int, limits: Limits | None = None, temporal: bool = False) -> Case:
    """Deterministic in ``seed`` (and ``limits``)."""
    limits = limits or Limits()
    rng = random.Random(seed)
    n_tables = rng.randint(1, max(1, limits.tables))
    tables = {f"t{i}": TABLE_SCHEMA for i in range(n_tables)}
    data = _Data(rng, limits)
    initial = {t: [data.row(t) for _ in range(rng.randint(0, limits.rows) if limits.rows else 0)] for t in tables}
    plan = None
    for _ in range(50):
        gen = _PlanGen(rng, tables, limits, temporal)
        try:
            plan = gen.top()
            break
        except (TypeMismatch, UnresolvedColumn, PlanError, IndexError, ValueError):
            continue
    if plan is None:
        raise PlanError(f"seed {seed}: no valid plan after 50 draws")
    batches = []
    for _ in range(rng.randint(1, max(1, limits.batches))):
        ops = []
        if limits.rows or rng.random() < 0.5:
            for _ in range(rng.randint(1, 4)):
                ops.append(data.op(rng.choice(sorted(tables))))
        step = rng.choice([0, 1, 1, 2, 3, 7]) if temporal or rng.random() < 0.5 else 0
        batches.append(Batch(ops, dt.timedelta(days=step, hours=rng.choice([0, 0, 6]))))
    effect = rng.choice(["auto", "auto", "always", "never"])
    return Case(seed, tables, initial, strip_schemas(plan), batches, effect)


# ---------------------------------------------------------------------------
# differential run
# ---------------------------------------------------------------------------


@dataclass
class Verdict:
    seed: int
    ok: bool
    message: str = ""
    strategies: list[str] = field(default_factory=list)
    kinds: dict[str, int] = field(default_factory=dict)
    oracle_checks: int = 0
    term_hits: dict[str, int] = field(default_factory=dict)
    repro: dict | None = None
    detail: str = ""

    def raise_for_mismatch(self) -> None:
        if not self.ok:
            raise Mismatch(f"seed {self.seed}: {self.message}", self.repro)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def apply_op(store: Store, op: Op) -> None:
    if op.kind == "insert":
        store.commit(op.table, op.rows)
    elif op.kind == "delete":
        store.commit(op.table, delete_predicate=op.predicate)
    else:
        t = store.table(op.table)
        pred = E.compile_predicate(op.predicate, t.schema)
        sets = {t.schema.resolve(c): E.evaluate_constant(e) for c, e in op.assignments.items()}
        updates = {}
        for row, rid in t.snapshot().with_ids():
            if pred(row):
                new = list(row)
                for i, v in sets.items():
                    new[i] = v
                updates[rid] = tuple(new)
        store.commit(op.table, updates=updates)


class _Failure(Exception):
    pass


def _term_hits(cp, catalog, prev, now, hits: Counter) -> None:
    """Count which terms of each temporal-filter delta produced rows."""
    for d in walk_delta(cp.delta):
        if not isinstance(d, DConcat) or d.label != "temporal window":
            continue
        for term in d.inputs:
            label = term.label if isinstance(term, DStatePlan) else "changed rows in window"
            if isinstance(term, (DStatePlan, DFilter)) and evaluate_changeset(term, catalog, prev, now).entries:
                hits[label] += 1


def _execute(case: Case, batches: list[Batch], track_terms: bool = False) -> Verdict:
    v = Verdict(case.seed, True, kinds=dict(case.kinds()))
    store = Store()
    spec = PipelineSpec([SourceDecl(n, s) for n, s in case.tables.items()], [MvDecl("mv", case.plan)])
    pipe = Pipeline(store, spec, history=CostHistory(None), effectivize=case.effectivize, strategy_policy="incremental")
    pipe.create_sources()
    for t, rows in case.initial.items():
        if rows:
            store.commit(t, rows)
    deterministic = case.deterministic()
    now = CLOCK_START
    raw = infer_schema(case.plan, store.table_schema)
    fp0 = F.fingerprint(normalize(case.plan, catalog=store.table_schema))
    hits: Counter = Counter()

    def check_contents(step: str) -> None:
        if not deterministic:
            return
        versions = {t: store.current_version(t) for t in case.tables}
        want = evaluate(bind(raw, versions), store, now)
        got = pipe.contents("mv")
        if not bags_equal(got, want, REL_TOL):
            raise _Failure(f"{step}: stored view differs from recompute: {describe_bag_diff(got, want)}")

    try:
        rep = pipe.refresh("mv", now)
        if rep.outcome == FAILED:
            raise _Failure(f"initial refresh failed: {rep.error}")
        check_contents("initial load")
        for bi, batch in enumerate(batches):
            for op in batch.ops:
                apply_op(store, op)
            prev, now = now, now + batch.advance
            if F.fingerprint(normalize(case.plan, catalog=store.table_schema)) != fp0:
                raise _Failure(f"batch {bi}: fingerprint drifted")
            if deterministic:
                prep = pipe._prepare("mv", now)
                if prep.full_reason is not None:
                    raise _Failure(f"batch {bi}: unexpected full recompute ({prep.full_reason})")
                pipe._context(prep, now)
                cp = build_change_plan(prep.layout.enabled, prep.ctx)
                pre = evaluate(cp.pre, pipe.catalog, prev)
                post = evaluate(cp.post, pipe.catalog, now)
                delta = evaluate_changeset(cp.delta, pipe.catalog, prev, now)
                if effectivize(delta).zset() != effectivize(bag_difference(post, pre)).zset():
                    raise _Failure(f"batch {bi}: delta differs from post - pre\n{cp.explain()}")
                v.oracle_checks += 1
                if track_terms:
                    _term_hits(cp, pipe.catalog, prev, now, hits)
            rep = pipe.refresh("mv", now)
            v.strategies.append(rep.strategy)
            if deterministic:
                if rep.outcome == FELL_BACK or rep.outcome == FAILED:
                    raise _Failure(f"batch {bi}: incremental refresh {rep.outcome}: {rep.error}")
                if rep.strategy == "full_recompute":
                    raise _Failure(f"batch {bi}: incremental path not taken ({rep.reason})")
            elif rep.strategy != "full_recompute" or not rep.reason.startswith("not incrementalizable"):
                raise _Failure(f"batch {bi}: non-deterministic view refreshed with {rep.strategy}")
            check_contents(f"batch {bi}")
    except _Failure as exc:
        v.ok, v.message = False, str(exc)
    except Exception as exc:  # engine crash counts as a mismatch
        v.ok, v.message = False, f"{type(exc).__name__}: {exc}"
        v.detail = traceback.format_exc()
    v.term_hits = dict(hits)
    return v


def _shrink(case: Case, fails: Callable[[list[Batch]], bool]) -> list[Batch]:
    """Shortest failing batch prefix, then fewest ops and rows that still fail."""
    batches = case.batches
    for k in range(1, len(batches) + 1):
        if fails(batches[:k]):
            batches = batches[:k]
            break
    batches = [Batch(list(b.ops), b.advance) for b in batches]
    for b in batches:
        i = 0
        while i < len(b.ops):
            trial_ops = b.ops[:i] + b.ops[i + 1:]
            saved = b.ops
            b.ops = trial_ops
            if fails(batches):
                continue
            b.ops = saved
            i += 1
        for j, op in enumerate(b.ops):
            if op.kind != "insert":
                continue
            while len(op.rows) > 1:
                half = len(op.rows) // 2
                for part in (op.rows[:half], op.rows[half:]):
                    b.ops[j] = Op("insert", op.table, part)
                    if fails(batches):
                        op = b.ops[j]
                        break
                else:
                    b.ops[j] = op
                    break
    return batches


def run_differential(case: Case, minimize: bool = True, track_terms: bool = False) -> Verdict:
    v = _execute(case, case.batches, track_terms)
    if v.ok or not minimize:
        if not v.ok:
            v.repro = case.to_json()
        return v
    small = _shrink(case, lambda bs: not _execute(case, bs).ok)
    repro = dataclasses.replace(case, batches=small)
    v.repro = repro.to_json()
    v.repro["message"] = _execute(repro, small).message
    return v


def check_case(case: Case) -> Verdict:
    """Like :func:`run_differential` but raises :class:`Mismatch` on failure."""
    v = run_differential(case)
    v.raise_for_mismatch()
    return v


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


def _one(args) -> Verdict:
    seed, limits, broken, temporal = args
    case = generate_case(seed, limits, temporal=temporal)
    if broken:
        with faults.inject(faults.BROKEN_EFFECTIVIZE):
            return run_differential(case, track_terms=temporal)
    return run_differential(case, track_terms=temporal)


def run_seeds(
    seeds: Iterable[int],
    limits: Limits | None = None,
    workers: int = 1,
    broken_effectivize: bool = False,
    temporal: bool = False,
) -> dict:
    """Run many cases; returns a JSON-ready summary with grammar coverage."""
    t0 = time.perf_counter()
    limits = limits or Limits()
    jobs = [(s, limits, broken_effectivize, temporal) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            verdicts = list(pool.map(_one, jobs, chunksize=8))
    else:
        verdicts = [_one(j) for j in jobs]
    coverage: Counter = Counter()
    strategies: Counter = Counter()
    terms: Counter = Counter()
    for v in verdicts:
        for k, n in v.kinds.items():
            coverage[k] += 1 if n else 0
        strategies.update(v.strategies)
        terms.update(v.term_hits)
    failed = [v for v in verdicts if not v.ok]
    out = {
        "cases": len(verdicts),
        "passed": len(verdicts) - len(failed),
        "mismatches": [{"seed": v.seed, "message": v.message, "repro": v.repro} for v in failed],
        "coverage": {k: coverage.get(k, 0) for k in KINDS},
        "strategies": dict(strategies),
        "oracle_checks": sum(v.oracle_checks for v in verdicts),
        "elapsed_s": round(time.perf_counter() - t0, 3),
    }
    if temporal:
        out["term_hits"] = {k: terms.get(k, 0) for k in TEMPORAL_TERMS}
    return out


def fingerprint_suite(cosmetic: int = 500, semantic: int = 500, seed: int = 0) -> dict:
    """Mutate generated views; cosmetic edits must keep the fingerprint, semantic ones must change it."""
    catalog = {"t0": TABLE_SCHEMA, "t1": TABLE_SCHEMA, "t2": TABLE_SCHEMA}.__getitem__

    def fp(p: Plan) -> str:
        return F.fingerprint(normalize(p, catalog=catalog)).digest

    kinds: Counter = Counter()
    out = {"cosmetic": 0, "cosmetic_unchanged": 0, "semantic": 0, "semantic_changed": 0, "failures": []}
    s = seed
    while out["cosmetic"] < cosmetic or out["semantic"] < semantic:
        rng = random.Random(s)
        plan = infer_schema(generate_case(s).plan, catalog)
        base = fp(plan)
        if out["cosmetic"] < cosmetic:
            mutated, labels = cosmetic_mutation(plan, rng, catalog, steps=rng.randint(1, 3))
            if labels:
                out["cosmetic"] += 1
                kinds.update(labels)
                if fp(mutated) == base:
                    out["cosmetic_unchanged"] += 1
                else:
                    out["failures"].append({"seed": s, "kind": "cosmetic", "mutations": labels})
        if out["semantic"] < semantic:
            got = semantic_mutation(plan, rng, catalog)
            if got is not None:
                out["semantic"] += 1
                kinds[got[1]] += 1
                if fp(got[0]) != base:
                    out["semantic_changed"] += 1
                else:
                    out["failures"].append({"seed": s, "kind": "semantic", "mutations": [got[1]]})
        s += 1
    out["mutation_kinds"] = dict(sorted(kinds.items()))
    return out


def parse_seed_range(text: str) -> range:
    """``"A..B"`` (inclusive) or a single seed."""
    if ".." in text:
        a, b = text.split("..", 1)
        return range(int(a), int(b) + 1)
    return range(int(text), int(text) + 1)


__all__ = [
    "Batch",
    "Case",
    "KINDS",
    "Limits",
    "Op",
    "TEMPORAL_TERMS",
    "Verdict",
    "apply_op",
    "check_case",
    "fingerprint_suite",
    "generate_case",
    "parse_seed_range",
    "plan_kinds",
    "run_differential",
    "run_seeds",
]
