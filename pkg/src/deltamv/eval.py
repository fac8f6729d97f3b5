"""Reference bag-semantics interpreter for bound plans and delta plans.

Derived row ids: a scan yields storage RowIds; Project, Filter, KeyFilter and
Window keep the input id; a join pairs ``(left_id, right_id)`` with ``None``
on a null-extended side; an aggregate uses ``("g", *group_key)``; Distinct
uses ``("d", *row)``; UNION ALL tags ``(branch, id)``.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Protocol

from deltamv import faults
from deltamv import values as V
from deltamv.deltaplan import (
    POST,
    PRE,
    DConcat,
    DEffectivize,
    DEmpty,
    DFilter,
    DJoin,
    DMergeAggregate,
    DProject,
    DRecompute,
    DScan,
    DStatePlan,
    DUnion,
    Delta,
)
from deltamv.errors import PlanError, RuntimeTypeError, UnresolvedColumn
from deltamv.ir.expr import (
    And,
    Cmp,
    Expr,
    columns_used,
    compile_expr,
    compile_predicate,
    infer_type,
    stddev_from_sums,
)
from deltamv.ir.plan import (
    AggCall,
    Aggregate,
    CteRef,
    Distinct,
    Filter,
    Join,
    KeyFilter,
    Plan,
    Project,
    Scan,
    UnionAll,
    Window,
    With,
    infer_schema,
    transform_plan,
)
from deltamv.ir.schema import Schema
from deltamv.relation import Changeset, Relation, effectivize


class Catalog(Protocol):
    def table_schema(self, name: str) -> Schema: ...

    def scan(self, name: str, version: int) -> Relation: ...

    def changes(self, name: str, start: int, end: int) -> Changeset: ...


@dataclass
class EvalCache:
    """Per-refresh memo of evaluated plans, deltas and change feeds."""

    plans: dict = field(default_factory=dict)
    deltas: dict = field(default_factory=dict)
    feeds: dict = field(default_factory=dict)
    # rows consumed per operator kind; reported to the cost history
    rows_in: dict = field(default_factory=lambda: defaultdict(int))

    def total_rows(self) -> int:
        return sum(self.rows_in.values())


def _out(v: Any) -> Any:
    # canonical output form of a grouping value: no negative zero
    if type(v) is float and v == 0.0:
        return 0.0
    return v


def ensure_schema(plan: Plan, catalog: Catalog) -> Plan:
    if plan.schema is None:
        return infer_schema(plan, catalog.table_schema)
    return plan


def evaluate(plan: Plan, catalog: Catalog, now: dt.datetime | None = None, cache: EvalCache | None = None) -> Relation:
    """Evaluate a bound plan; ``now`` is substituted for every clock function."""
    plan = ensure_schema(plan, catalog)
    return _Evaluator(catalog, now, cache or EvalCache()).run(plan)


# ---------------------------------------------------------------------------
# joins
# ---------------------------------------------------------------------------


def _conjuncts(e: Expr | None) -> list[Expr]:
    if e is None:
        return []
    if isinstance(e, And):
        out: list[Expr] = []
        for a in e.args:
            out.extend(_conjuncts(a))
        return out
    return [e]


def _resolves(expr: Expr, schema: Schema) -> bool:
    try:
        for name in columns_used(expr):
            schema.resolve(name)
    except UnresolvedColumn:
        return False
    return True


def equi_keys(condition: Expr | None, left: Schema, right: Schema) -> tuple[list[Expr], list[Expr], list[Expr]]:
    """Split a join condition into left keys, right keys and residual conjuncts."""
    lk: list[Expr] = []
    rk: list[Expr] = []
    residual: list[Expr] = []
    for c in _conjuncts(condition):
        if isinstance(c, Cmp) and c.op == "=" and columns_used(c.left) and columns_used(c.right):
            if _resolves(c.left, left) and _resolves(c.right, right) and not _resolves(c.left, right):
                lk.append(c.left)
                rk.append(c.right)
                continue
            if _resolves(c.right, left) and _resolves(c.left, right) and not _resolves(c.right, right):
                lk.append(c.right)
                rk.append(c.left)
                continue
        residual.append(c)
    return lk, rk, residual


def _key_fn(exprs: list[Expr], schema: Schema, now) -> Callable[[tuple], tuple | None]:
    """Canonical equi-join key; None when any component is null (never matches)."""
    fns = [compile_expr(e, schema, now) for e in exprs]

    def key(row):
        out = []
        for f in fns:
            v = f(row)
            if v is None:
                return None
            out.append(V.canon(v))
        return tuple(out)

    return key


def join_rows(
    left: Iterable[tuple[tuple, Any, int]],
    right: Iterable[tuple[tuple, Any, int]],
    kind: str,
    condition: Expr | None,
    lschema: Schema,
    rschema: Schema,
    now: dt.datetime | None,
    probe_left: bool = True,
) -> list[tuple[tuple, Any, int]]:
    """Join two streams of ``(row, id, sign)``; the output sign is the product.

    ``probe_left`` builds the hash table on the right input; pass False when
    the left input is the small one.
    """
    combined = Schema(tuple(lschema.columns) + tuple(rschema.columns))
    lk, rk, residual = equi_keys(condition, lschema, rschema)
    lkey = _key_fn(lk, lschema, now)
    rkey = _key_fn(rk, rschema, now)
    res = compile_predicate(And(tuple(residual)), combined, now) if residual else None
    lnull = (None,) * len(lschema)
    rnull = (None,) * len(rschema)
    left = list(left)
    right = list(right)
    out: list = []
    keep_left = kind in ("left_outer", "full_outer", "left_anti")
    keep_right = kind in ("right_outer", "full_outer", "right_anti")
    emit_pairs = kind not in ("left_anti", "right_anti")
    r_matched = [False] * len(right) if keep_right else None

    if probe_left:
        table: dict = defaultdict(list)
        for j, (r, _, _) in enumerate(right):
            k = rkey(r)
            if k is not None:
                table[k].append(j)
        for l, lid, ls in left:
            k = lkey(l)
            hit = False
            if k is not None:
                for j in table.get(k, ()):
                    r, rid, rs = right[j]
                    row = l + r
                    if res is None or res(row):
                        hit = True
                        if r_matched is not None:
                            r_matched[j] = True
                        if emit_pairs:
                            out.append((row, (lid, rid), ls * rs))
            if keep_left and not hit:
                out.append((l + rnull, (lid, None), ls))
    else:
        table = defaultdict(list)
        for i, (l, _, _) in enumerate(left):
            k = lkey(l)
            if k is not None:
                table[k].append(i)
        l_matched = [False] * len(left)
        for j, (r, rid, rs) in enumerate(right):
            k = rkey(r)
            if k is None:
                continue
            for i in table.get(k, ()):
                l, lid, ls = left[i]
                row = l + r
                if res is None or res(row):
                    l_matched[i] = True
                    if r_matched is not None:
                        r_matched[j] = True
                    if emit_pairs:
                        out.append((row, (lid, rid), ls * rs))
        if keep_left:
            for i, (l, lid, ls) in enumerate(left):
                if not l_matched[i]:
                    out.append((l + rnull, (lid, None), ls))
    if r_matched is not None:
        for j, (r, rid, rs) in enumerate(right):
            if not r_matched[j]:
                out.append((lnull + r, (None, rid), rs))
    return out


# ---------------------------------------------------------------------------
# aggregates
# ---------------------------------------------------------------------------


def _fsum(values: list[float]) -> float:
    try:
        return math.fsum(values)
    except (OverflowError, ValueError):
        return sum(values)


def _sum(values: list, typ: str) -> Any:
    if not values:
        return None
    if typ == V.INT64:
        return V.check_int(sum(values))
    return _fsum([float(v) for v in values])


def _json_array(values: list, typ: str) -> str:
    return json.dumps([V.to_json_value(v, typ) for v in values], separators=(",", ":"))


def aggregate_values(call: AggCall, rows: list[tuple], arg_fn, order_fn, arg_type: str | None) -> Any:
    kind = call.kind
    if kind == "COUNT_STAR":
        return len(rows)
    vals = [arg_fn(r) for r in rows]
    present = [v for v in vals if v is not None]
    if kind == "COUNT":
        return len(present)
    if kind == "SUM":
        return _sum(present, arg_type)
    if kind == "AVG":
        if not present:
            return None
        total = sum(present) if arg_type == V.INT64 else _fsum(present)
        return float(total) / float(len(present))
    if kind == "STDDEV":
        if not present:
            return None
        fl = [float(v) for v in present]
        return stddev_from_sums(_fsum(fl), _fsum([x * x for x in fl]), len(fl))
    if kind == "MIN":
        return min(present, key=V.sort_key) if present else None
    if kind == "MAX":
        return max(present, key=V.sort_key) if present else None
    if kind in ("FIRST", "MIN_BY"):
        if order_fn is None:
            # input order; classified non-deterministic
            return vals[0] if vals else None
        pairs = [(order_fn(r), v) for r, v in zip(rows, vals)]
        pairs = [p for p in pairs if p[0] is not None]
        if not pairs:
            return None
        return min(pairs, key=lambda p: (V.sort_key(p[0]), V.sort_key(p[1])))[1]
    if kind == "COLLECT_LIST":
        return _json_array(sorted(present, key=V.sort_key), arg_type)
    if kind == "COLLECT_SET":
        uniq = {V.canon(v): v for v in present}
        return _json_array(sorted(uniq.values(), key=V.sort_key), arg_type)
    raise RuntimeTypeError(f"unknown aggregate {kind}")


# ---------------------------------------------------------------------------
# plan interpreter
# ---------------------------------------------------------------------------


class _Evaluator:
    def __init__(self, catalog: Catalog, now: dt.datetime | None, cache: EvalCache):
        self.catalog = catalog
        self.now = now
        self.cache = cache
        self.ctes: dict[str, Relation] = {}

    def run(self, plan: Plan) -> Relation:
        if isinstance(plan, (With, CteRef)) or self.ctes:
            return self._dispatch(plan)
        key = (plan, self.now)
        hit = self.cache.plans.get(key)
        if hit is None:
            hit = self._dispatch(plan)
            self.cache.plans[key] = hit
        return hit

    def _dispatch(self, p: Plan) -> Relation:
        method = getattr(self, "_" + p.kind, None)
        if method is None:
            raise PlanError(f"cannot evaluate {p.kind}")
        return method(p)

    def _scan(self, p: Scan) -> Relation:
        if p.version is None:
            raise PlanError(f"scan of {p.table!r} is not bound to a version")
        base = self.catalog.scan(p.table, p.version)
        self.cache.rows_in["scan"] += len(base.rows)
        return Relation(p.schema, base.rows, base.ids)

    def _project(self, p: Project) -> Relation:
        src = self.run(p.child)
        fns = [compile_expr(e, p.child.schema, self.now) for _, e in p.items]
        self.cache.rows_in["project"] += len(src.rows)
        rows = [tuple(f(r) for f in fns) for r in src.rows]
        return Relation(p.schema, rows, src.ids)

    def _filter(self, p: Filter) -> Relation:
        src = self.run(p.child)
        pred = compile_predicate(p.predicate, p.child.schema, self.now)
        self.cache.rows_in["filter"] += len(src.rows)
        rows, ids = [], []
        for r, i in src.with_ids():
            if pred(r):
                rows.append(r)
                ids.append(i)
        return Relation(p.schema, rows, ids)

    def _key_filter(self, p: KeyFilter) -> Relation:
        if p.slot is not None:
            raise PlanError(f"key filter slot {p.slot!r} was never filled")
        src = self.run(p.child)
        keep = key_filter_fn(p.keys, p.key_set, p.child.schema, self.now)
        self.cache.rows_in["key_filter"] += len(src.rows)
        rows, ids = [], []
        for r, i in src.with_ids():
            if keep(r):
                rows.append(r)
                ids.append(i)
        return Relation(p.schema, rows, ids)

    def _aggregate(self, p: Aggregate) -> Relation:
        src = self.run(p.child)
        cs = p.child.schema
        self.cache.rows_in["aggregate"] += len(src.rows)
        key_fns = [compile_expr(e, cs, self.now) for _, e in p.keys]
        groups: dict[tuple, list[tuple]] = {}
        firsts: dict[tuple, tuple] = {}
        for r in src.rows:
            raw = tuple(f(r) for f in key_fns)
            k = V.canon_row(raw)
            g = groups.get(k)
            if g is None:
                groups[k] = g = []
                firsts[k] = tuple(_out(v) for v in raw)
            g.append(r)
        if not p.keys and not groups:
            groups[()] = []
            firsts[()] = ()
        compiled = []
        for _, call in p.aggs:
            arg_fn = compile_expr(call.arg, cs, self.now) if call.arg is not None else None
            order_fn = compile_expr(call.order, cs, self.now) if call.order is not None else None
            arg_type = infer_type(call.arg, cs) if call.arg is not None else None
            compiled.append((call, arg_fn, order_fn, arg_type))
        rows, ids = [], []
        for k, members in groups.items():
            vals = [aggregate_values(c, members, a, o, t) for c, a, o, t in compiled]
            rows.append(firsts[k] + tuple(vals))
            ids.append(("g",) + k)
        return Relation(p.schema, rows, ids)

    def _window(self, p: Window) -> Relation:
        src = self.run(p.child)
        return window_eval(p, src, self.now, self.cache)

    def _join(self, p: Join) -> Relation:
        left = self.run(p.left)
        right = self.run(p.right)
        self.cache.rows_in["join"] += len(left.rows) + len(right.rows)
        lstream = [(r, i, 1) for r, i in left.with_ids()]
        rstream = [(r, i, 1) for r, i in right.with_ids()]
        out = join_rows(lstream, rstream, p.join_kind, p.condition, p.left.schema, p.right.schema, self.now)
        return Relation(p.schema, [r for r, _, _ in out], [i for _, i, _ in out])

    def _union_all(self, p: UnionAll) -> Relation:
        rows, ids = [], []
        for b, kid in enumerate(p.inputs):
            rel = self.run(kid)
            rows.extend(rel.rows)
            ids.extend((b, i) for i in (rel.ids if rel.ids is not None else [None] * len(rel.rows)))
        self.cache.rows_in["union_all"] += len(rows)
        return Relation(p.schema, rows, ids)

    def _distinct(self, p: Distinct) -> Relation:
        src = self.run(p.child)
        self.cache.rows_in["distinct"] += len(src.rows)
        seen: dict[tuple, tuple] = {}
        for r in src.rows:
            k = V.canon_row(r)
            if k not in seen:
                seen[k] = tuple(_out(v) for v in r)
        return Relation(p.schema, list(seen.values()), [("d",) + k for k in seen])

    def _with(self, p: With) -> Relation:
        saved = dict(self.ctes)
        try:
            for name, sub in p.bindings:
                self.ctes[name] = self.run(sub)
            return self.run(p.body)
        finally:
            self.ctes = saved

    def _cte_ref(self, p: CteRef) -> Relation:
        if p.name not in self.ctes:
            raise PlanError(f"unbound CTE {p.name!r}")
        rel = self.ctes[p.name]
        return Relation(p.schema, rel.rows, rel.ids)


def key_filter_fn(keys, key_set: frozenset, schema: Schema, now) -> Callable[[tuple], bool]:
    if not keys:
        present = () in key_set
        return lambda row: present
    if len(keys) == 1:
        f = compile_expr(keys[0], schema, now)
        return lambda row: (V.canon(f(row)),) in key_set
    fns = [compile_expr(e, schema, now) for e in keys]
    return lambda row: tuple(V.canon(g(row)) for g in fns) in key_set


def window_eval(p: Window, src: Relation, now, cache: EvalCache | None = None) -> Relation:
    cs = p.child.schema
    if cache is not None:
        cache.rows_in["window"] += len(src.rows)
    part_fns = [compile_expr(e, cs, now) for e in p.partition]
    order_fns = [(compile_expr(e, cs, now), asc) for e, asc in p.order]
    ids = src.ids if src.ids is not None else list(range(len(src.rows)))
    parts: dict[tuple, list[int]] = {}
    for idx, r in enumerate(src.rows):
        parts.setdefault(V.canon_row(tuple(f(r) for f in part_fns)), []).append(idx)
    extra: list[tuple] = [()] * len(src.rows)
    for members in parts.values():
        # ties broken by ascending row id, then the ORDER BY keys
        members = sorted(members, key=lambda i: V.sort_key(V.canon_id(ids[i])))
        for f, asc in reversed(order_fns):
            members.sort(key=lambda i: V.sort_key(f(src.rows[i])), reverse=not asc)
        okeys = [tuple(V.sort_key(f(src.rows[i])) for f, _ in order_fns) for i in members]
        cols = []
        for _, call in p.funcs:
            kind = call.kind
            if kind == "ROW_NUMBER":
                vals = list(range(1, len(members) + 1))
            elif kind in ("RANK", "DENSE_RANK"):
                vals = []
                rank = dense = 0
                prev = object()
                for pos, k in enumerate(okeys):
                    if k != prev:
                        rank = pos + 1
                        dense += 1
                        prev = k
                    vals.append(rank if kind == "RANK" else dense)
            else:
                if call.arg is None:
                    agg = AggCall("COUNT_STAR")
                    total = len(members)
                else:
                    agg = AggCall(kind, call.arg)
                    af = compile_expr(call.arg, cs, now)
                    total = aggregate_values(agg, [src.rows[i] for i in members], af, None, infer_type(call.arg, cs))
                vals = [total] * len(members)
            cols.append(vals)
        for pos, i in enumerate(members):
            extra[i] = tuple(c[pos] for c in cols)
    rows = [r + e for r, e in zip(src.rows, extra)]
    return Relation(p.schema, rows, src.ids)


# ---------------------------------------------------------------------------
# delta interpreter
# ---------------------------------------------------------------------------


def fill_slots(plan: Plan, slot: str, keys: frozenset) -> Plan:
    def fn(p: Plan) -> Plan | None:
        if isinstance(p, KeyFilter) and p.slot == slot:
            return replace(p, key_set=keys, slot=None)
        return None

    return transform_plan(plan, fn)


class DeltaEvaluator:
    """Evaluates delta plans: pre-state plans see ``prev_now``, post-state ``curr_now``."""

    def __init__(
        self,
        catalog: Catalog,
        prev_now: dt.datetime | None,
        curr_now: dt.datetime | None,
        cache: EvalCache | None = None,
    ):
        self.catalog = catalog
        self.prev_now = prev_now
        self.curr_now = curr_now
        self.cache = cache or EvalCache()

    def state(self, plan: Plan, clock: str) -> Relation:
        now = self.prev_now if clock == PRE else self.curr_now
        plan = ensure_schema(plan, self.catalog)
        return _Evaluator(self.catalog, now, self.cache).run(plan)

    def run(self, d: Delta) -> Changeset:
        hit = self.cache.deltas.get(id(d))
        if hit is not None and hit[0] is d:
            return hit[1]
        out = self._dispatch(d)
        self.cache.deltas[id(d)] = (d, out)
        return out

    def _dispatch(self, d: Delta) -> Changeset:
        if isinstance(d, DScan):
            key = (d.table, d.start, d.end)
            feed = self.cache.feeds.get(key)
            if feed is None:
                feed = self.catalog.changes(d.table, d.start, d.end)
                self.cache.feeds[key] = feed
            self.cache.rows_in["change_feed"] += len(feed.entries)
            return Changeset(d.schema, feed.entries)
        if isinstance(d, DEmpty):
            return Changeset(d.schema, [])
        if isinstance(d, DFilter):
            src = self.run(d.child)
            pred = compile_predicate(d.predicate, d.child.schema, self.curr_now)
            return Changeset(d.schema, [e for e in src.entries if pred(e[0])])
        if isinstance(d, DProject):
            src = self.run(d.child)
            fns = [compile_expr(e, d.child.schema, self.curr_now) for _, e in d.items]
            return Changeset(d.schema, [(tuple(f(r) for f in fns), s, i) for r, s, i in src.entries])
        if isinstance(d, DJoin):
            return self._join(d)
        if isinstance(d, DConcat):
            out: list = []
            for kid in d.inputs:
                out.extend(self.run(kid).entries)
            return Changeset(d.schema, out)
        if isinstance(d, DUnion):
            out = []
            for b, kid in enumerate(d.inputs):
                out.extend((r, s, (b, i)) for r, s, i in self.run(kid).entries)
            return Changeset(d.schema, out)
        if isinstance(d, DRecompute):
            return self._recompute(d)
        if isinstance(d, DStatePlan):
            rel = self.state(d.plan, d.clock)
            return Changeset(d.schema, [(r, d.sign, i) for r, i in rel.with_ids()])
        if isinstance(d, DEffectivize):
            return Changeset(d.schema, effectivize(self.run(d.child)).entries)
        if isinstance(d, DMergeAggregate):
            return self._merge_aggregate(d)
        raise PlanError(f"cannot evaluate delta node {d!r}")

    def _join(self, d: DJoin) -> Changeset:
        delta = self.run(d.delta)
        if not delta.entries:
            return Changeset(d.schema, [])
        other_plan = ensure_schema(d.other, self.catalog)
        # slot filling rebuilds nodes and drops their schema; the shape is unchanged
        other = self.state(self._reduce(other_plan, d, delta), d.other_clock)
        dstream = [(r, i, s) for r, s, i in delta.entries]
        ostream = [(r, i, 1) for r, i in other.with_ids()]
        self.cache.rows_in["join"] += len(dstream) + len(ostream)
        if d.delta_is_left:
            out = join_rows(dstream, ostream, d.join_kind, d.condition, d.delta.schema, other_plan.schema, self.curr_now, probe_left=False)
        else:
            out = join_rows(ostream, dstream, d.join_kind, d.condition, other_plan.schema, d.delta.schema, self.curr_now, probe_left=True)
        return Changeset(d.schema, [(r, s, i) for r, i, s in out])

    def _reduce(self, other: Plan, d: DJoin, delta: Changeset) -> Plan:
        """Fill a semi-join reduction slot on the state side from the delta's join keys."""
        slots = [p for p in _walk(other) if isinstance(p, KeyFilter) and p.slot is not None]
        if not slots:
            return other
        if d.delta_is_left:
            dk, _, _ = equi_keys(d.condition, d.delta.schema, other.schema)
        else:
            _, dk, _ = equi_keys(d.condition, other.schema, d.delta.schema)
        kf = _key_fn(dk, d.delta.schema, self.curr_now)
        keys = frozenset(k for k in (kf(r) for r, _, _ in delta.entries) if k is not None)
        for s in {p.slot for p in slots}:
            other = fill_slots(other, s, keys)
        return other

    def _recompute(self, d: DRecompute) -> Changeset:
        keys: set = set()
        for src, exprs in d.sources:
            cs = self.run(src)
            if not cs.entries:
                continue
            fns = [compile_expr(e, src.schema, self.curr_now) for e in exprs]
            for r, _, _ in cs.entries:
                keys.add(tuple(V.canon(f(r)) for f in fns))
        if not keys:
            return Changeset(d.schema, [])
        frozen = frozenset(keys)
        out: list = []
        if d.pre is not None:
            rel = self.state(fill_slots(d.pre, d.slot, frozen), PRE)
            out.extend((r, -1, i) for r, i in rel.with_ids())
        if d.post is not None:
            rel = self.state(fill_slots(d.post, d.slot, frozen), POST)
            out.extend((r, 1, i) for r, i in rel.with_ids())
        return Changeset(d.schema, out)

    def _merge_aggregate(self, d: DMergeAggregate) -> Changeset:
        src = self.run(d.child)
        cs = d.child.schema
        key_fns = [compile_expr(e, cs, self.curr_now) for _, e in d.keys]
        groups: dict[tuple, list] = {}
        firsts: dict[tuple, tuple] = {}
        for r, s, _ in src.entries:
            raw = tuple(f(r) for f in key_fns)
            k = V.canon_row(raw)
            if k not in groups:
                groups[k] = []
                firsts[k] = tuple(_out(v) for v in raw)
            groups[k].append((r, s))
        compiled = []
        for _, call in d.aggs:
            fn = compile_expr(call.arg, cs, self.curr_now) if call.arg is not None else None
            typ = infer_type(call.arg, cs) if call.arg is not None else None
            compiled.append((call.kind, fn, typ))
        out = []
        for k, members in groups.items():
            vals = []
            for kind, fn, typ in compiled:
                if kind == "COUNT_STAR":
                    vals.append(sum(s for _, s in members))
                    continue
                xs = [(fn(r), s) for r, s in members]
                if kind == "COUNT":
                    vals.append(sum(s for x, s in xs if x is not None))
                elif kind == "SUM":
                    signed = [x * s for x, s in xs if x is not None]
                    if typ == V.INT64:
                        vals.append(V.check_int(sum(signed)))
                    else:
                        vals.append(_fsum([float(x) for x in signed]))
                else:
                    raise PlanError(f"{kind} is not merge-adjustable")
            if all(v == 0 for v in vals):
                continue
            out.append((firsts[k] + tuple(vals), 1, ("g",) + k))
        return Changeset(d.schema, out)


def _walk(plan: Plan):
    yield plan
    for k in plan.children():
        yield from _walk(k)


def evaluate_changeset(
    delta: Delta,
    catalog: Catalog,
    prev_now: dt.datetime | None = None,
    curr_now: dt.datetime | None = None,
    cache: EvalCache | None = None,
) -> Changeset:
    faults.check(faults.DELTA_EVALUATION)
    return DeltaEvaluator(catalog, prev_now, curr_now, cache).run(delta)
