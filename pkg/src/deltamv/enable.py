"""Technique enablers: rewrite a normalized plan into its stored (backing) form.

The backing plan's output is what the view's backing table holds; the
top-level projection rebuilds user columns from it. Rewrites:

* AVG(x)    -> SUM(x), COUNT(x); user column = sum / count
* STDDEV(x) -> SUM(x), SUM(x*x), COUNT(x); user column rebuilt from the three
* FIRST(x ORDER BY k) -> MIN_BY(x, k) when k is never null
* COLLECT_LIST / COLLECT_SET get an explicit local sort
* SUM(x) at the top gains a COUNT(x) companion so merges know when it is null
* a COUNT(*) per group at a top-level aggregate
* filters on group keys only move below their aggregate

Projections above a top-level aggregate move into the top-level projection,
which keeps group keys in the backing table even when the user drops them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from deltamv import values as V
from deltamv.errors import NotIncrementalizable, PlanError
from deltamv.ir import expr as E
from deltamv.ir.determinism import classify_determinism
from deltamv.ir.plan import (
    AggCall,
    Aggregate,
    Distinct,
    Filter,
    Plan,
    Project,
    Window,
    infer_schema,
    strip_schemas,
    transform_plan,
    walk_plan,
)
from deltamv.ir.schema import Column, Schema
from deltamv.normalize import NormalizedPlan

META_PREFIX = "__enzyme_"
ROW_ID_COLUMN = "__enzyme_row_id"
COUNT_STAR_COLUMN = "__enzyme_cnt_star"
MERGE_KINDS = ("SUM", "COUNT", "COUNT_STAR")


@dataclass(frozen=True)
class MergeSpec:
    """How merge adjustments combine with stored rows of a top-level aggregate."""

    keys: tuple[str, ...]
    # (backing column, SUM | COUNT | COUNT_STAR)
    columns: tuple[tuple[str, str], ...]
    # SUM column -> its COUNT companion; a sum is null when the count is 0
    null_when_zero: tuple[tuple[str, str], ...]
    count_column: str

    @property
    def is_global(self) -> bool:
        return not self.keys


@dataclass(frozen=True)
class EnabledPlan:
    source: Plan
    plan: Plan
    top_level_projection: tuple[tuple[str, E.Expr], ...]
    user_schema: Schema
    backing_schema: Schema
    merge: MergeSpec | None = None
    top_kind: str = "row"
    rewrites: tuple[str, ...] = field(default=())

    @property
    def data_schema(self) -> Schema:
        """Backing columns produced by the plan (without the row id column)."""
        return self.plan.schema.unqualified()


def _schema_lookup(plan: Plan) -> dict[str, Schema]:
    from deltamv.ir.plan import Scan

    return {p.table: p.schema.unqualified() for p in walk_plan(plan) if isinstance(p, Scan)}


def _col_ref(c: Column) -> E.Col:
    return E.Col(f"{c.qualifier}.{c.name}" if c.qualifier else c.name)


def _rewrite_aggs(node: Aggregate, notes: list[str], tables) -> Aggregate:
    child_schema = node.child.schema or infer_schema(node.child, tables).schema
    out = []
    for name, a in node.aggs:
        if a.kind == "FIRST" and a.order is not None:
            if not E.infer_nullable(a.order, child_schema):
                notes.append(f"{name}: FIRST rewritten to MIN_BY over the ordering key")
                a = AggCall("MIN_BY", a.arg, a.order)
        elif a.kind in ("COLLECT_LIST", "COLLECT_SET") and not a.sorted:
            notes.append(f"{name}: {a.kind} given an explicit local sort")
            a = AggCall(a.kind, a.arg, a.order, True)
        out.append((name, a))
    return Aggregate(node.child, node.keys, tuple(out))


def _as_float(e: E.Expr) -> E.Expr:
    return E.BinOp("*", e, E.Lit(1.0, V.FLOAT64))


def decompose(node: Aggregate, top: bool, notes: list[str]) -> tuple[Aggregate, list[tuple[str, E.Expr]], MergeSpec | None]:
    """Split AVG / STDDEV into mergeable components.

    Returns the new aggregate, items rebuilding the original output columns
    from it, and a merge spec when every component is merge-adjustable.
    """
    aggs: list[tuple[str, AggCall]] = []
    recon: list[tuple[str, E.Expr]] = [(n, E.Col(n)) for n, _ in node.keys]
    null_pairs: list[tuple[str, str]] = []
    for name, a in node.aggs:
        if name.startswith(META_PREFIX):
            raise PlanError(f"column name {name!r} uses the reserved prefix {META_PREFIX}")
        if a.kind == "AVG":
            s, c = f"{META_PREFIX}sum_{name}", f"{META_PREFIX}cnt_{name}"
            aggs += [(s, AggCall("SUM", a.arg)), (c, AggCall("COUNT", a.arg))]
            recon.append((name, E.BinOp("/", E.Col(s), E.Col(c))))
            null_pairs.append((s, c))
            notes.append(f"{name}: AVG decomposed into SUM and COUNT")
        elif a.kind == "STDDEV":
            s, q, c = f"{META_PREFIX}sum_{name}", f"{META_PREFIX}sq_{name}", f"{META_PREFIX}cnt_{name}"
            x = _as_float(a.arg)
            aggs += [
                (s, AggCall("SUM", x)),
                (q, AggCall("SUM", E.BinOp("*", x, x))),
                (c, AggCall("COUNT", a.arg)),
            ]
            recon.append((name, E.Func("stddev_from_sums", (E.Col(s), E.Col(q), E.Col(c)))))
            null_pairs += [(s, c), (q, c)]
            notes.append(f"{name}: STDDEV decomposed into SUM, SUM of squares and COUNT")
        elif a.kind == "SUM" and top:
            c = f"{META_PREFIX}cnt_{name}"
            aggs += [(name, a), (c, AggCall("COUNT", a.arg))]
            recon.append((name, E.Col(name)))
            null_pairs.append((name, c))
        else:
            aggs.append((name, a))
            recon.append((name, E.Col(name)))
    merge = None
    if top:
        aggs.append((COUNT_STAR_COLUMN, AggCall("COUNT_STAR")))
        if all(a.kind in MERGE_KINDS for _, a in aggs):
            merge = MergeSpec(
                keys=tuple(n for n, _ in node.keys),
                columns=tuple((n, a.kind) for n, a in aggs),
                null_when_zero=tuple(null_pairs),
                count_column=COUNT_STAR_COLUMN,
            )
    return Aggregate(node.child, node.keys, tuple(aggs)), recon, merge


def _push_key_filter_below(f: Filter) -> Plan | None:
    """Filter on group-key columns only commutes with its aggregate."""
    agg = f.child
    if not isinstance(agg, Aggregate) or not agg.keys:
        return None
    schema = agg.schema
    key_count = len(agg.keys)
    mapping: dict[str, E.Expr] = {}
    for ref in E.columns_used(f.predicate):
        idx = schema.resolve(ref)
        if idx >= key_count:
            return None
        mapping[ref] = agg.keys[idx][1]
    if not E.is_deterministic(f.predicate):
        return None
    pred = E.substitute(f.predicate, mapping)
    return Aggregate(Filter(agg.child, pred), agg.keys, agg.aggs)


def _push_filter_through_project(f: Filter) -> Plan | None:
    proj = f.child
    if not E.is_deterministic(f.predicate):
        return None
    schema = proj.schema
    mapping = {ref: proj.items[schema.resolve(ref)][1] for ref in E.columns_used(f.predicate)}
    if any(not E.is_deterministic(e) for e in mapping.values()):
        return None
    return Project(Filter(proj.child, E.substitute(f.predicate, mapping)), proj.items)


def _compose(outer: list[tuple[str, E.Expr]], inner_schema: Schema, inner_items: list[tuple[str, E.Expr]]) -> list[tuple[str, E.Expr]]:
    """Substitute ``inner_items`` (indexed by ``inner_schema``) into ``outer``."""

    def sub(e: E.Expr) -> E.Expr:
        return E.transform(e, lambda x: inner_items[inner_schema.resolve(x.name)][1] if isinstance(x, E.Col) else None)

    return [(n, sub(e)) for n, e in outer]


def enable(normalized: NormalizedPlan | Plan) -> EnabledPlan:
    plan = normalized.plan if isinstance(normalized, NormalizedPlan) else normalized
    if plan.schema is None:
        raise PlanError("enable needs an annotated plan")
    report = classify_determinism(plan)
    if report.full_recompute_only:
        raise NotIncrementalizable("; ".join(report.reasons()))
    tables = _schema_lookup(plan)
    notes: list[str] = []

    # pass 1: local rewrites everywhere
    def local(p: Plan) -> Plan | None:
        if isinstance(p, Aggregate):
            return _rewrite_aggs(p, notes, tables)
        return None

    body = infer_schema(transform_plan(strip_schemas(plan), local), tables)

    def push(p: Plan) -> Plan | None:
        if not isinstance(p, Filter) or p.child.schema is None:
            return None
        if isinstance(p.child, Project):
            pushed = _push_filter_through_project(p)
            if pushed is not None:
                return pushed
        if isinstance(p.child, Aggregate):
            pushed = _push_key_filter_below(p)
            if pushed is not None:
                notes.append("filter on group keys moved below the aggregate")
            return pushed
        return None

    for _ in range(16):
        moved = infer_schema(strip_schemas(transform_plan(body, push)), tables)
        if moved == body:
            break
        body = moved

    user_schema = body.schema
    for c in user_schema.columns:
        if c.name.startswith(META_PREFIX):
            raise PlanError(f"column name {c.name!r} uses the reserved prefix {META_PREFIX}")

    # peel projections above a top-level aggregate into the top-level view
    root = body
    peeled = []
    while isinstance(root, Project):
        peeled.append(root)
        root = root.child
    merge: MergeSpec | None = None
    if isinstance(root, Aggregate):
        top: list[tuple[str, E.Expr]] = [(c.name, _col_ref(c)) for c in user_schema.columns]
        for proj in peeled:
            top = _compose(top, proj.schema, list(proj.items))
        new_agg, recon, merge = decompose(root, True, notes)
        top = _compose(top, root.schema, recon)
        root = new_agg
        top_kind = "aggregate"
    else:
        root = body
        top = None
        top_kind = {Window: "window", Distinct: "distinct"}.get(type(root), "row")

    # AVG / STDDEV below the top: decompose and rebuild in place
    def inner(p: Plan) -> Plan | None:
        if isinstance(p, Aggregate) and any(a.kind in ("AVG", "STDDEV") for _, a in p.aggs):
            new_agg, recon, _ = decompose(p, False, notes)
            return Project(new_agg, tuple(recon))
        return None

    if isinstance(root, Aggregate):
        root = root.with_children((transform_plan(strip_schemas(root.child), inner),))
    else:
        root = transform_plan(strip_schemas(root), inner)
    root = infer_schema(strip_schemas(root), tables)

    if top is None:
        # row-shaped view: backing columns need unique plain names
        cols = root.schema.columns
        names = [c.name for c in cols]
        if len(set(names)) != len(names):
            items = tuple((f"{META_PREFIX}c{i}_{c.name}", E.Col(_col_ref(c).name)) for i, c in enumerate(cols))
            if any(names.count(c.name) > 1 and c.qualifier is None for c in cols):
                raise PlanError("view has duplicate unqualified column names; alias them")
            root = infer_schema(Project(strip_schemas(root), items), tables)
            top = [(c.name, E.Col(n)) for c, (n, _) in zip(cols, items)]
        else:
            top = [(c.name, E.Col(c.name)) for c in cols]

    backing = Schema(tuple(c.unqualified() for c in root.schema.columns) + (Column(ROW_ID_COLUMN, V.STRING, False),))
    backing.check_unique()
    top_t = tuple(top)
    return EnabledPlan(
        source=plan,
        plan=root,
        top_level_projection=top_t,
        user_schema=_view_schema(top_t, backing),
        backing_schema=backing,
        merge=merge,
        top_kind=top_kind,
        rewrites=tuple(dict.fromkeys(notes)),
    )


def _view_schema(top: tuple[tuple[str, E.Expr], ...], backing: Schema) -> Schema:
    cols = []
    for name, e in top:
        t = E.infer_type(e, backing)
        cols.append(Column(name, t or V.STRING, E.infer_nullable(e, backing)))
    return Schema(tuple(cols))


def project_view(enabled: EnabledPlan, rows: list[tuple]) -> list[tuple]:
    """Apply the top-level projection to backing rows."""
    fns = [E.compile_expr(e, enabled.backing_schema) for _, e in enabled.top_level_projection]
    return [tuple(f(r) for f in fns) for r in rows]


__all__ = [
    "COUNT_STAR_COLUMN",
    "EnabledPlan",
    "MergeSpec",
    "META_PREFIX",
    "ROW_ID_COLUMN",
    "decompose",
    "enable",
    "project_view",
]
