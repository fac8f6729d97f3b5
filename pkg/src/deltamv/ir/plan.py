"""Logical plan nodes and schema inference."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterator, Mapping

from deltamv import values as V
from deltamv.errors import PlanError, TypeMismatch, UnknownTable
from deltamv.ir.expr import Col, Expr, infer_nullable, infer_type
from deltamv.ir.schema import Column, Schema

AGG_KINDS = (
    "SUM",
    "COUNT",
    "COUNT_STAR",
    "MIN",
    "MAX",
    "AVG",
    "FIRST",
    "COLLECT_LIST",
    "COLLECT_SET",
    "STDDEV",
    # internal: value at the lexicographically smallest (order, value) pair;
    # FIRST(x ORDER BY k) is rewritten to it.
    "MIN_BY",
)
WINDOW_KINDS = ("ROW_NUMBER", "RANK", "DENSE_RANK", "SUM", "COUNT", "MIN", "MAX")
JOIN_KINDS = ("inner", "left_outer", "right_outer", "full_outer")
# internal: the unmatched rows of one side, null-padded to the join schema
ANTI_JOIN_KINDS = ("left_anti", "right_anti")


@dataclass(frozen=True)
class AggCall:
    kind: str
    arg: Expr | None = None
    # ordering key for FIRST / MIN_BY
    order: Expr | None = None
    # set by the enabler: an explicit local sort makes COLLECT_* deterministic
    sorted: bool = False

    def exprs(self) -> tuple[Expr, ...]:
        return tuple(e for e in (self.arg, self.order) if e is not None)


@dataclass(frozen=True)
class WinCall:
    kind: str
    arg: Expr | None = None


@dataclass(frozen=True)
class Plan:
    schema: Schema | None = field(default=None, compare=False, repr=False, kw_only=True)

    kind = "plan"

    def children(self) -> tuple["Plan", ...]:
        return ()

    def with_children(self, kids: tuple["Plan", ...]) -> "Plan":
        return self

    def exprs(self) -> tuple[Expr, ...]:
        return ()


@dataclass(frozen=True)
class Scan(Plan):
    table: str
    alias: str | None = None
    # None in definition form; a table version once bound for evaluation
    version: int | None = None

    kind = "scan"

    @property
    def qualifier(self) -> str:
        return self.alias or self.table


@dataclass(frozen=True)
class Project(Plan):
    child: Plan
    items: tuple[tuple[str, Expr], ...]

    kind = "project"

    def children(self):
        return (self.child,)

    def with_children(self, kids):
        return Project(kids[0], self.items)

    def exprs(self):
        return tuple(e for _, e in self.items)


@dataclass(frozen=True)
class Filter(Plan):
    child: Plan
    predicate: Expr

    kind = "filter"

    def children(self):
        return (self.child,)

    def with_children(self, kids):
        return Filter(kids[0], self.predicate)

    def exprs(self):
        return (self.predicate,)


@dataclass(frozen=True)
class Aggregate(Plan):
    child: Plan
    keys: tuple[tuple[str, Expr], ...]
    aggs: tuple[tuple[str, AggCall], ...]

    kind = "aggregate"

    def children(self):
        return (self.child,)

    def with_children(self, kids):
        return Aggregate(kids[0], self.keys, self.aggs)

    def exprs(self):
        out = [e for _, e in self.keys]
        for _, a in self.aggs:
            out.extend(a.exprs())
        return tuple(out)


@dataclass(frozen=True)
class Window(Plan):
    child: Plan
    partition: tuple[Expr, ...]
    order: tuple[tuple[Expr, bool], ...]  # (expr, ascending)
    funcs: tuple[tuple[str, WinCall], ...]

    kind = "window"

    def children(self):
        return (self.child,)

    def with_children(self, kids):
        return Window(kids[0], self.partition, self.order, self.funcs)

    def exprs(self):
        out = list(self.partition) + [e for e, _ in self.order]
        out += [w.arg for _, w in self.funcs if w.arg is not None]
        return tuple(out)


@dataclass(frozen=True)
class Join(Plan):
    left: Plan
    right: Plan
    join_kind: str
    condition: Expr | None = None

    kind = "join"

    def children(self):
        return (self.left, self.right)

    def with_children(self, kids):
        return Join(kids[0], kids[1], self.join_kind, self.condition)

    def exprs(self):
        return (self.condition,) if self.condition is not None else ()


@dataclass(frozen=True)
class UnionAll(Plan):
    inputs: tuple[Plan, ...]

    kind = "union_all"

    def children(self):
        return self.inputs

    def with_children(self, kids):
        return UnionAll(tuple(kids))


@dataclass(frozen=True)
class Distinct(Plan):
    child: Plan

    kind = "distinct"

    def children(self):
        return (self.child,)

    def with_children(self, kids):
        return Distinct(kids[0])


@dataclass(frozen=True)
class With(Plan):
    """Common table expressions; removed by the normalizer."""

    bindings: tuple[tuple[str, Plan], ...]
    body: Plan

    kind = "with"

    def children(self):
        return tuple(p for _, p in self.bindings) + (self.body,)

    def with_children(self, kids):
        n = len(self.bindings)
        return With(tuple((name, kids[i]) for i, (name, _) in enumerate(self.bindings)), kids[n])


@dataclass(frozen=True)
class CteRef(Plan):
    name: str

    kind = "cte_ref"


@dataclass(frozen=True)
class KeyFilter(Plan):
    """Internal semi-join against a constant key set (``child ⋉_keys K``)."""

    child: Plan
    keys: tuple[Expr, ...]
    key_set: frozenset
    # named placeholder filled with the affected keys at delta-evaluation time
    slot: str | None = None

    kind = "key_filter"

    def children(self):
        return (self.child,)

    def with_children(self, kids):
        return KeyFilter(kids[0], self.keys, self.key_set, self.slot)

    def exprs(self):
        return self.keys


PLAN_TYPES = (Scan, Project, Filter, Aggregate, Window, Join, UnionAll, Distinct, With, CteRef, KeyFilter)


def walk_plan(plan: Plan) -> Iterator[Plan]:
    yield plan
    for kid in plan.children():
        yield from walk_plan(kid)


def transform_plan(plan: Plan, fn: Callable[[Plan], Plan | None]) -> Plan:
    """Bottom-up rewrite that drops stale schema annotations on rebuilt nodes."""
    kids = plan.children()
    if kids:
        new_kids = tuple(transform_plan(k, fn) for k in kids)
        if any(a is not b for a, b in zip(new_kids, kids)):
            plan = plan.with_children(new_kids)
    out = fn(plan)
    return plan if out is None else out


def scans(plan: Plan) -> list[Scan]:
    return [p for p in walk_plan(plan) if isinstance(p, Scan)]


def source_tables(plan: Plan) -> list[str]:
    seen: list[str] = []
    for s in scans(plan):
        if s.table not in seen:
            seen.append(s.table)
    return seen


def bind(plan: Plan, versions: Mapping[str, int]) -> Plan:
    """Fill every Scan's version slot; the refresh form of a plan."""

    def fn(p: Plan) -> Plan | None:
        if isinstance(p, Scan):
            if p.table not in versions:
                raise PlanError(f"no version binding for table {p.table!r}")
            return replace(p, version=versions[p.table])
        return None

    return transform_plan(strip_schemas(plan), fn)


def unbind(plan: Plan) -> Plan:
    return transform_plan(strip_schemas(plan), lambda p: replace(p, version=None) if isinstance(p, Scan) else None)


def strip_schemas(plan: Plan) -> Plan:
    kids = tuple(strip_schemas(k) for k in plan.children())
    out = plan.with_children(kids) if kids else plan
    if out.schema is not None:
        out = replace(out, schema=None)
    return out


def is_bound(plan: Plan) -> bool:
    states = {s.version is not None for s in scans(plan)}
    if len(states) > 1:
        raise PlanError("plan mixes bound and unbound scans")
    return states == {True}


# ---------------------------------------------------------------------------
# schema inference
# ---------------------------------------------------------------------------


def agg_result_type(call: AggCall, schema: Schema) -> tuple[str, bool]:
    kind = call.kind
    if kind not in AGG_KINDS:
        raise TypeMismatch(f"unknown aggregate {kind}")
    if kind == "COUNT_STAR":
        return V.INT64, False
    if call.arg is None:
        raise TypeMismatch(f"{kind} requires an argument")
    t = infer_type(call.arg, schema)
    if call.order is not None:
        infer_type(call.order, schema)
    if kind == "COUNT":
        return V.INT64, False
    if kind == "SUM":
        if t not in V.NUMERIC_TYPES:
            raise TypeMismatch(f"SUM over {t}")
        return t, True
    if kind in ("AVG", "STDDEV"):
        if t not in V.NUMERIC_TYPES:
            raise TypeMismatch(f"{kind} over {t}")
        return V.FLOAT64, True
    if kind in ("COLLECT_LIST", "COLLECT_SET"):
        # rendered as a JSON array string after a deterministic local sort
        return V.STRING, False
    return t, True


def window_result_type(call: WinCall, schema: Schema) -> tuple[str, bool]:
    if call.kind not in WINDOW_KINDS:
        raise TypeMismatch(f"unknown window function {call.kind}")
    if call.kind in ("ROW_NUMBER", "RANK", "DENSE_RANK"):
        return V.INT64, False
    if call.kind == "COUNT":
        if call.arg is not None:
            infer_type(call.arg, schema)
        return V.INT64, False
    if call.arg is None:
        raise TypeMismatch(f"{call.kind} window requires an argument")
    t = infer_type(call.arg, schema)
    if call.kind == "SUM" and t not in V.NUMERIC_TYPES:
        raise TypeMismatch(f"SUM over {t}")
    return t, True


def _key_column(name: str, expr: Expr, schema: Schema) -> Column:
    t = infer_type(expr, schema)
    if t is None:
        t = V.STRING
    qualifier = None
    if isinstance(expr, Col):
        src = schema.columns[schema.resolve(expr.name)]
        if src.name == name:
            qualifier = src.qualifier
    return Column(name, t, infer_nullable(expr, schema), qualifier)


SchemaLookup = Mapping[str, Schema] | Callable[[str], Schema]


def _lookup(catalog: SchemaLookup, name: str) -> Schema:
    if callable(catalog):
        return catalog(name)
    if name not in catalog:
        raise UnknownTable(f"unknown table {name!r}")
    return catalog[name]


def infer_schema(plan: Plan, catalog: SchemaLookup, ctes: Mapping[str, Schema] | None = None) -> Plan:
    """Return ``plan`` with an output schema attached to every node."""
    ctes = dict(ctes or {})
    if isinstance(plan, With):
        new_bindings = []
        for name, sub in plan.bindings:
            annotated = infer_schema(sub, catalog, ctes)
            ctes[name] = annotated.schema
            new_bindings.append((name, annotated))
        body = infer_schema(plan.body, catalog, ctes)
        return replace(With(tuple(new_bindings), body), schema=body.schema)
    if isinstance(plan, CteRef):
        if plan.name not in ctes:
            raise UnknownTable(f"unknown CTE {plan.name!r}")
        return replace(plan, schema=ctes[plan.name])
    kids = tuple(infer_schema(k, catalog, ctes) for k in plan.children())
    node = plan.with_children(kids) if kids else plan
    return replace(node, schema=_node_schema(node, kids, catalog))


def _node_schema(node: Plan, kids: tuple[Plan, ...], catalog: SchemaLookup) -> Schema:
    if isinstance(node, Scan):
        return _lookup(catalog, node.table).unqualified().qualified(node.qualifier)
    if isinstance(node, Project):
        src = kids[0].schema
        cols = []
        for name, e in node.items:
            t = infer_type(e, src)
            if t is None:
                raise TypeMismatch(f"cannot infer type of untyped null column {name!r}")
            qualifier = None
            if isinstance(e, Col):
                c = src.columns[src.resolve(e.name)]
                if c.name == name:
                    qualifier = c.qualifier
            cols.append(Column(name, t, infer_nullable(e, src), qualifier))
        out = Schema(tuple(cols))
        out.check_unique()
        return out
    if isinstance(node, Filter):
        src = kids[0].schema
        t = infer_type(node.predicate, src)
        if t not in (V.BOOL, None):
            raise TypeMismatch(f"filter predicate has type {t}, expected bool")
        return src
    if isinstance(node, KeyFilter):
        for e in node.keys:
            infer_type(e, kids[0].schema)
        return kids[0].schema
    if isinstance(node, Aggregate):
        src = kids[0].schema
        cols = [_key_column(name, e, src) for name, e in node.keys]
        for name, call in node.aggs:
            t, nullable = agg_result_type(call, src)
            cols.append(Column(name, t, nullable))
        out = Schema(tuple(cols))
        out.check_unique()
        return out
    if isinstance(node, Window):
        src = kids[0].schema
        for e in node.partition:
            infer_type(e, src)
        for e, _ in node.order:
            infer_type(e, src)
        cols = list(src.columns)
        for name, call in node.funcs:
            t, nullable = window_result_type(call, src)
            cols.append(Column(name, t, nullable))
        return Schema(tuple(cols))
    if isinstance(node, Join):
        if node.join_kind not in JOIN_KINDS + ANTI_JOIN_KINDS:
            raise PlanError(f"unknown join kind {node.join_kind}")
        left, right = kids[0].schema, kids[1].schema
        lcols = list(left.columns)
        rcols = list(right.columns)
        if node.join_kind in ("right_outer", "full_outer", "right_anti"):
            lcols = [replace(c, nullable=True) for c in lcols]
        if node.join_kind in ("left_outer", "full_outer", "left_anti"):
            rcols = [replace(c, nullable=True) for c in rcols]
        out = Schema(tuple(lcols + rcols))
        if node.condition is not None:
            t = infer_type(node.condition, Schema(tuple(left.columns) + tuple(right.columns)))
            if t not in (V.BOOL, None):
                raise TypeMismatch("join condition must be boolean")
        return out
    if isinstance(node, UnionAll):
        first = kids[0].schema
        for k in kids[1:]:
            s = k.schema
            if len(s) != len(first):
                raise TypeMismatch("UNION ALL inputs differ in arity")
            for a, b in zip(first.columns, s.columns):
                if a.type != b.type:
                    raise TypeMismatch(f"UNION ALL column {a.name} type {a.type} vs {b.type}")
        cols = []
        for i, c in enumerate(first.columns):
            nullable = any(k.schema.columns[i].nullable for k in kids)
            cols.append(Column(c.name, c.type, nullable))
        return Schema(tuple(cols))
    if isinstance(node, Distinct):
        return kids[0].schema
    raise PlanError(f"unknown plan node {node!r}")


def output_schema(plan: Plan, catalog: SchemaLookup) -> Schema:
    if plan.schema is not None:
        return plan.schema
    return infer_schema(plan, catalog).schema


def count_nodes(plan: Plan) -> dict[str, int]:
    counts: dict[str, int] = {}
    for p in walk_plan(plan):
        counts[p.kind] = counts.get(p.kind, 0) + 1
    return counts


def plan_depth(plan: Plan) -> int:
    kids = plan.children()
    return 1 + (max(plan_depth(k) for k in kids) if kids else 0)


def map_exprs(plan: Plan, fn: Callable[[Expr], Expr]) -> Plan:
    """Apply ``fn`` to every top-level expression of this node (not children)."""
    if isinstance(plan, Project):
        return Project(plan.child, tuple((n, fn(e)) for n, e in plan.items))
    if isinstance(plan, Filter):
        return Filter(plan.child, fn(plan.predicate))
    if isinstance(plan, Aggregate):
        aggs = tuple(
            (n, replace(a, arg=fn(a.arg) if a.arg is not None else None, order=fn(a.order) if a.order is not None else None))
            for n, a in plan.aggs
        )
        return Aggregate(plan.child, tuple((n, fn(e)) for n, e in plan.keys), aggs)
    if isinstance(plan, Window):
        return Window(
            plan.child,
            tuple(fn(e) for e in plan.partition),
            tuple((fn(e), asc) for e, asc in plan.order),
            tuple((n, replace(w, arg=fn(w.arg) if w.arg is not None else None)) for n, w in plan.funcs),
        )
    if isinstance(plan, Join):
        return Join(plan.left, plan.right, plan.join_kind, fn(plan.condition) if plan.condition is not None else None)
    if isinstance(plan, KeyFilter):
        return KeyFilter(plan.child, tuple(fn(e) for e in plan.keys), plan.key_set, plan.slot)
    return plan


def describe(plan: Plan) -> str:
    """One-line label of a node (no children)."""
    from deltamv.ir.serde import expr_to_text

    if isinstance(plan, Scan):
        v = f"@v{plan.version}" if plan.version is not None else ""
        a = f" AS {plan.alias}" if plan.alias else ""
        return f"Scan({plan.table}{a}{v})"
    if isinstance(plan, Project):
        return "Project(" + ", ".join(f"{expr_to_text(e)} AS {n}" if not (isinstance(e, Col) and e.name == n) else n for n, e in plan.items) + ")"
    if isinstance(plan, Filter):
        return f"Filter({expr_to_text(plan.predicate)})"
    if isinstance(plan, Aggregate):
        keys = ", ".join(expr_to_text(e) for _, e in plan.keys)
        aggs = ", ".join(f"{agg_to_text(a)} AS {n}" for n, a in plan.aggs)
        return f"Aggregate(keys=[{keys}], aggs=[{aggs}])"
    if isinstance(plan, Window):
        part = ", ".join(expr_to_text(e) for e in plan.partition)
        order = ", ".join(expr_to_text(e) + ("" if asc else " DESC") for e, asc in plan.order)
        funcs = ", ".join(f"{w.kind}({expr_to_text(w.arg) if w.arg is not None else ''}) AS {n}" for n, w in plan.funcs)
        return f"Window(partition=[{part}], order=[{order}], funcs=[{funcs}])"
    if isinstance(plan, Join):
        cond = expr_to_text(plan.condition) if plan.condition is not None else "TRUE"
        return f"Join({plan.join_kind}, {cond})"
    if isinstance(plan, UnionAll):
        return "UnionAll"
    if isinstance(plan, Distinct):
        return "Distinct"
    if isinstance(plan, With):
        return "With(" + ", ".join(n for n, _ in plan.bindings) + ")"
    if isinstance(plan, CteRef):
        return f"CteRef({plan.name})"
    if isinstance(plan, KeyFilter):
        keys = ", ".join(expr_to_text(e) for e in plan.keys)
        if plan.slot is not None:
            return f"KeyFilter([{keys}] in affected keys of {plan.slot})"
        return f"KeyFilter([{keys}] in {len(plan.key_set)} keys)"
    return repr(plan)


def agg_to_text(a: AggCall) -> str:
    from deltamv.ir.serde import expr_to_text

    if a.kind == "COUNT_STAR":
        return "COUNT(*)"
    inner = expr_to_text(a.arg) if a.arg is not None else ""
    if a.order is not None:
        inner += f" ORDER BY {expr_to_text(a.order)}"
    return f"{a.kind}({inner})"


def explain_tree(plan: Plan, indent: int = 0) -> str:
    lines = ["  " * indent + describe(plan)]
    for kid in plan.children():
        lines.append(explain_tree(kid, indent + 1))
    return "\n".join(lines)


def as_dict(plan: Plan) -> dict[str, Any]:
    from deltamv.ir.serde import plan_to_json

    return plan_to_json(plan)
