"""Incremental plan generation.

``build_change_plan`` walks an enabled plan bottom-up and produces, for the
root, a pre-state plan (sources at their previous versions), a post-state plan
(sources at their current versions) and a delta plan whose evaluation is the
changeset between the two. The rules:

* scan: the change feed between the two versions;
* filter / project: applied to the child delta;
* filter over the refresh clock: rows that left the window, rows that entered
  it, and the filtered child delta;
* inner join: ``ΔL ⋈ R + L′ ⋈ ΔR``, the state side restricted to the delta's
  join keys;
* outer joins: the inner-join delta plus a recompute of the unmatched rows
  for the join keys touched on either side;
* aggregate, window, distinct: recompute only the groups / partitions /
  rows whose keys occur in the child delta (``-pre(K) + post(K)``);
* UNION ALL: the union of child deltas.

Subtrees whose sources did not change produce an empty delta.
"""

from __future__ import annotations

import datetime as dt
import itertools
from dataclasses import dataclass, field
from typing import Any, Mapping

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
    explain_delta,
    walk_delta,
)
from deltamv.enable import EnabledPlan
from deltamv.errors import NotIncrementalizable, PlanError, UnresolvedColumn
from deltamv.eval import equi_keys
from deltamv.ir import expr as E
from deltamv.ir.plan import (
    Aggregate,
    Distinct,
    Filter,
    Join,
    KeyFilter,
    Plan,
    Project,
    Scan,
    UnionAll,
    Window,
    bind,
    explain_tree,
    infer_schema,
    walk_plan,
)
from deltamv.ir.schema import Schema

REPLACE_WHERE = "replace_where"
MERGE_AGGREGATE = "merge_aggregate"
EFFECTIVIZE_MODES = ("auto", "always", "never")
# an intermediate changeset is effectivized when it is this many times
# larger than its estimated net size
EFFECTIVIZE_RATIO = 2.0


@dataclass(frozen=True)
class RefreshContext:
    """Source version ranges and refresh clocks for one refresh."""

    versions: Mapping[str, tuple[int, int]]
    prev_refresh_time: dt.datetime | None = None
    curr_refresh_time: dt.datetime | None = None
    captured_params: Mapping[str, Any] = field(default_factory=dict)
    # per source: (raw change-feed size, estimated effectivized size)
    change_sizes: Mapping[str, tuple[int, int]] = field(default_factory=dict)
    effectivize: str = "auto"

    def __post_init__(self) -> None:
        for t, (a, b) in self.versions.items():
            if a > b:
                raise PlanError(f"{t}: from version {a} after to version {b}")
        if self.prev_refresh_time and self.curr_refresh_time and self.curr_refresh_time < self.prev_refresh_time:
            raise PlanError("current refresh time precedes the previous one")
        if self.effectivize not in EFFECTIVIZE_MODES:
            raise PlanError(f"unknown effectivize mode {self.effectivize!r}")

    @property
    def from_versions(self) -> dict[str, int]:
        return {t: a for t, (a, _) in self.versions.items()}

    @property
    def to_versions(self) -> dict[str, int]:
        return {t: b for t, (_, b) in self.versions.items()}

    @property
    def clock_moved(self) -> bool:
        return self.prev_refresh_time != self.curr_refresh_time


@dataclass(frozen=True)
class ChangePlan:
    pre: Plan
    post: Plan
    delta: Delta

    def explain(self) -> str:
        return explain_change_plan(self)


# ---------------------------------------------------------------------------
# strategies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FullRecompute:
    reason: str = ""

    kind = "full_recompute"
    label = "full_recompute"


@dataclass(frozen=True)
class RowIncremental:
    change_plan: ChangePlan
    apply_mode: str = REPLACE_WHERE

    kind = "row_incremental"

    @property
    def label(self) -> str:
        return f"incremental:{self.apply_mode}"


@dataclass(frozen=True)
class PartitionOverwrite:
    """Recompute whole partitions of a single-source view.

    ``change_plan.delta`` is a DRecompute keyed by the source partition
    column; ``column`` is the backing column holding the partition value.
    """

    change_plan: ChangePlan
    column: str
    source: str

    kind = "partition_overwrite"
    label = "partition_overwrite"


RefreshStrategy = FullRecompute | RowIncremental | PartitionOverwrite


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _ref_for(schema: Schema, idx: int) -> str | None:
    """A column reference that resolves to exactly ``idx`` in ``schema``."""
    c = schema.columns[idx]
    candidates = [c.name] + ([f"{c.qualifier}.{c.name}"] if c.qualifier else [])
    for ref in candidates:
        try:
            if schema.resolve(ref) == idx:
                return ref
        except UnresolvedColumn:
            continue
    return None


def _remap(expr: E.Expr, src: Schema, dst: Schema, index_map: Mapping[int, int]) -> E.Expr | None:
    """Rewrite column refs of ``expr`` from ``src`` positions to ``dst`` positions."""
    mapping: dict[str, E.Expr] = {}
    for ref in E.columns_used(expr):
        i = src.resolve(ref)
        if i not in index_map:
            return None
        new = _ref_for(dst, index_map[i])
        if new is None:
            return None
        mapping[ref] = E.Col(new)
    return E.substitute(expr, mapping)


def _clock_literals(expr: E.Expr, now: dt.datetime | None) -> E.Expr:
    if now is None:
        raise PlanError("temporal filter needs both refresh times")

    def fn(e: E.Expr) -> E.Expr | None:
        if isinstance(e, E.CurrentDate):
            return E.Lit(now.date(), V.DATE)
        if isinstance(e, E.CurrentTimestamp):
            return E.Lit(now, V.TIMESTAMP)
        return None

    return E.transform(expr, fn)


def _truthy(e: E.Expr) -> E.Expr:
    # null-safe: unknown counts as false
    return E.Case(((e, E.Lit(True, V.BOOL)),), E.Lit(False, V.BOOL))


def is_temporal_filter(p: Plan) -> bool:
    return isinstance(p, Filter) and E.has_time_function(p.predicate)


def restrict(p: Plan, keys: tuple[E.Expr, ...], slot: str) -> Plan:
    """Restrict ``p`` to rows whose ``keys`` lie in the slot's key set.

    The key filter is pushed as far toward the scans as semantics allow, so
    the state plans only touch rows that can be affected.
    """
    schema = p.schema
    here = KeyFilter(p, keys, frozenset(), slot)
    if not keys:
        return here
    if isinstance(p, Filter):
        return Filter(restrict(p.child, keys, slot), p.predicate)
    if isinstance(p, Distinct):
        return Distinct(restrict(p.child, keys, slot))
    if isinstance(p, Project):
        mapping = {}
        for ref in set().union(*(E.columns_used(k) for k in keys)):
            e = p.items[schema.resolve(ref)][1]
            if not E.is_deterministic(e):
                return here
            mapping[ref] = e
        return Project(restrict(p.child, tuple(E.substitute(k, mapping) for k in keys), slot), p.items)
    if isinstance(p, Aggregate):
        nkeys = len(p.keys)
        mapping = {}
        for ref in set().union(*(E.columns_used(k) for k in keys)):
            i = schema.resolve(ref)
            if i >= nkeys:
                return here
            mapping[ref] = p.keys[i][1]
        return Aggregate(restrict(p.child, tuple(E.substitute(k, mapping) for k in keys), slot), p.keys, p.aggs)
    if isinstance(p, Window):
        cs = p.child.schema
        part_cols = {cs.resolve(e.name) for e in p.partition if isinstance(e, E.Col)}
        ident = {i: i for i in part_cols}
        moved = [_remap(k, schema, cs, ident) for k in keys]
        if any(m is None for m in moved):
            return here
        return Window(restrict(p.child, tuple(moved), slot), p.partition, p.order, p.funcs)
    if isinstance(p, UnionAll):
        kids = []
        for kid in p.inputs:
            ident = {i: i for i in range(len(schema))}
            moved = [_remap(k, schema, kid.schema, ident) for k in keys]
            if any(m is None for m in moved):
                return here
            kids.append(restrict(kid, tuple(moved), slot))
        return UnionAll(tuple(kids))
    if isinstance(p, Join):
        return _restrict_join(p, keys, slot) or here
    return here


def _restrict_join(p: Join, keys: tuple[E.Expr, ...], slot: str) -> Plan | None:
    ls, rs = p.left.schema, p.right.schema
    nl = len(ls)
    schema = p.schema
    used = set()
    for k in keys:
        used |= {schema.resolve(r) for r in E.columns_used(k)}
    kind = p.join_kind
    if kind in ("full_outer",):
        return None
    left_ok = kind in ("inner", "left_outer", "left_anti")
    right_ok = kind in ("inner", "right_outer", "right_anti")
    lmap = {i: i for i in range(nl)}
    rmap = {i: i - nl for i in range(nl, nl + len(rs))}
    if used <= set(lmap) and left_ok:
        lkeys = tuple(_remap(k, schema, ls, lmap) for k in keys)
        if any(k is None for k in lkeys):
            return None
        left = restrict(p.left, lkeys, slot)
        right = p.right
        if kind == "inner":
            other = _across_equalities(lkeys, p, True)
            if other is not None:
                right = restrict(p.right, other, slot)
        return Join(left, right, kind, p.condition)
    if used <= set(rmap) and right_ok:
        rkeys = tuple(_remap(k, schema, rs, rmap) for k in keys)
        if any(k is None for k in rkeys):
            return None
        right = restrict(p.right, rkeys, slot)
        left = p.left
        if kind == "inner":
            other = _across_equalities(rkeys, p, False)
            if other is not None:
                left = restrict(p.left, other, slot)
        return Join(left, right, kind, p.condition)
    return None


def _across_equalities(keys: tuple[E.Expr, ...], p: Join, from_left: bool) -> tuple[E.Expr, ...] | None:
    """Translate side keys to the other side when each is an equi-join key."""
    lk, rk, _ = equi_keys(p.condition, p.left.schema, p.right.schema)
    src, dst = (lk, rk) if from_left else (rk, lk)
    sschema = p.left.schema if from_left else p.right.schema
    out = []
    for k in keys:
        hit = None
        for a, b in zip(src, dst):
            if a == k or (
                isinstance(a, E.Col)
                and isinstance(k, E.Col)
                and sschema.resolve(a.name) == sschema.resolve(k.name)
            ):
                hit = b
                break
        if hit is None:
            return None
        out.append(hit)
    return tuple(out)


# ---------------------------------------------------------------------------
# generator
# ---------------------------------------------------------------------------


class _Generator:
    def __init__(self, plan: Plan, ctx: RefreshContext):
        if plan.schema is None:
            raise PlanError("delta generation needs an annotated plan")
        self.ctx = ctx
        self.tables = {s.table: s.schema.unqualified() for s in walk_plan(plan) if isinstance(s, Scan)}
        missing = [t for t in self.tables if t not in ctx.versions]
        if missing:
            raise PlanError(f"refresh context has no versions for {missing}")
        self._slots = itertools.count(1)

    def slot(self, prefix: str) -> str:
        return f"{prefix}{next(self._slots)}"

    def state(self, p: Plan, clock: str) -> Plan:
        versions = self.ctx.from_versions if clock == PRE else self.ctx.to_versions
        return infer_schema(bind(p, versions), self.tables)

    def changed(self, p: Plan) -> bool:
        for n in walk_plan(p):
            if isinstance(n, Scan):
                a, b = self.ctx.versions[n.table]
                if a != b:
                    return True
            elif is_temporal_filter(n) and self.ctx.clock_moved:
                return True
        return False

    # effectivization policy ------------------------------------------------

    def maybe_effectivize(self, d: Delta) -> Delta:
        if isinstance(d, (DEmpty, DEffectivize)):
            return d
        mode = self.ctx.effectivize
        if mode == "never":
            return d
        if mode == "always":
            return DEffectivize(d.schema, d)
        raw = eff = 0
        for leaf in walk_delta(d):
            if isinstance(leaf, DScan):
                r, e = self.ctx.change_sizes.get(leaf.table, (0, 0))
                raw += r
                eff += e
        if raw > EFFECTIVIZE_RATIO * eff:
            return DEffectivize(d.schema, d)
        return d

    # rules -----------------------------------------------------------------

    def delta(self, p: Plan) -> Delta:
        if not self.changed(p):
            return DEmpty(p.schema)
        if isinstance(p, Scan):
            a, b = self.ctx.versions[p.table]
            return DScan(p.schema, p.table, p.alias, a, b)
        if isinstance(p, Filter):
            if is_temporal_filter(p):
                return self.temporal(p)
            return DFilter(p.schema, self.delta(p.child), p.predicate)
        if isinstance(p, Project):
            return DProject(p.schema, self.delta(p.child), p.items)
        if isinstance(p, Join):
            return self.join(p)
        if isinstance(p, Aggregate):
            keys = tuple(e for _, e in p.keys)
            return self.recompute(p, keys, "group_recompute")
        if isinstance(p, Window):
            return self.recompute(p, tuple(p.partition), "partition_recompute")
        if isinstance(p, Distinct):
            cs = p.child.schema
            keys = tuple(E.Col(_ref_for(cs, i) or cs.columns[i].name) for i in range(len(cs)))
            return self.recompute(p, keys, "distinct_recompute")
        if isinstance(p, UnionAll):
            return DUnion(p.schema, tuple(self.delta(k) for k in p.inputs))
        raise NotIncrementalizable(f"no delta rule for {p.kind}")

    def recompute(self, p: Plan, keys: tuple[E.Expr, ...], rule: str) -> Delta:
        child = p.children()[0]
        d = self.maybe_effectivize(self.delta(child))
        slot = self.slot("k")
        restricted = p.with_children((restrict(child, keys, slot),))
        return DRecompute(
            p.schema,
            ((d, keys),),
            slot,
            self.state(restricted, PRE),
            self.state(restricted, POST),
            rule,
        )

    def temporal(self, p: Filter) -> Delta:
        """Rows leaving the window, rows entering it, and the filtered child delta."""
        ctx = self.ctx
        terms: list[Delta] = []
        f_curr = _clock_literals(p.predicate, ctx.curr_refresh_time)
        if ctx.clock_moved:
            f_prev = _clock_literals(p.predicate, ctx.prev_refresh_time)
            left = Filter(p.child, E.and_(_truthy(f_prev), E.Not(_truthy(f_curr))))
            entered = Filter(p.child, E.and_(E.Not(_truthy(f_prev)), _truthy(f_curr)))
            terms.append(DStatePlan(p.schema, self.state(left, PRE), -1, PRE, "left window"))
            terms.append(DStatePlan(p.schema, self.state(entered, PRE), 1, PRE, "entered window"))
        if self.changed(p.child):
            terms.append(DFilter(p.schema, self.delta(p.child), f_curr))
        return DConcat(p.schema, tuple(terms), "temporal window")

    def join(self, p: Join) -> Delta:
        kind = p.join_kind
        inner = self.inner_join(p)
        parts = [inner]
        if kind in ("left_outer", "full_outer"):
            parts.append(self.anti(p, "left_anti"))
        if kind in ("right_outer", "full_outer"):
            parts.append(self.anti(p, "right_anti"))
        if len(parts) == 1:
            return inner
        return DConcat(p.schema, tuple(parts), f"{kind} = inner + unmatched")

    def inner_join(self, p: Join) -> Delta:
        terms: list[Delta] = []
        lk, rk, _ = equi_keys(p.condition, p.left.schema, p.right.schema)
        if self.changed(p.left):
            dl = self.maybe_effectivize(self.delta(p.left))
            other = p.right
            if rk:
                other = restrict(other, tuple(rk), self.slot("sj"))
            terms.append(DJoin(p.schema, dl, self.state(other, PRE), True, p.condition, PRE, "inner"))
        if self.changed(p.right):
            dr = self.maybe_effectivize(self.delta(p.right))
            other = p.left
            if lk:
                other = restrict(other, tuple(lk), self.slot("sj"))
            terms.append(DJoin(p.schema, dr, self.state(other, POST), False, p.condition, POST, "inner"))
        if len(terms) == 1:
            return terms[0]
        return DConcat(p.schema, tuple(terms), "ΔL ⋈ R + L′ ⋈ ΔR")

    def anti(self, p: Join, kind: str) -> Delta:
        """Unmatched rows of one side, recomputed for the touched join keys."""
        lk, rk, _ = equi_keys(p.condition, p.left.schema, p.right.schema)
        slot = self.slot("k")
        sources = []
        if self.changed(p.left):
            sources.append((self.maybe_effectivize(self.delta(p.left)), tuple(lk)))
        if self.changed(p.right):
            sources.append((self.maybe_effectivize(self.delta(p.right)), tuple(rk)))
        if lk:
            left, right = restrict(p.left, tuple(lk), slot), restrict(p.right, tuple(rk), slot)
        else:
            left, right = KeyFilter(p.left, (), frozenset(), slot), p.right
        anti = Join(left, right, kind, p.condition)
        return DRecompute(
            p.schema,
            tuple(sources),
            slot,
            self.state(anti, PRE),
            self.state(anti, POST),
            f"{kind}_recompute",
        )


def build_change_plan(plan: EnabledPlan | Plan, ctx: RefreshContext) -> ChangePlan:
    """Pre-state, post-state and delta plans for the enabled (backing) plan."""
    faults.check(faults.PLAN_GENERATION)
    p = plan.plan if isinstance(plan, EnabledPlan) else plan
    gen = _Generator(p, ctx)
    return ChangePlan(gen.state(p, PRE), gen.state(p, POST), gen.delta(p))


def build_temporal_delta(filter_node: Filter, ctx: RefreshContext) -> Delta:
    if not is_temporal_filter(filter_node):
        raise PlanError("not a clock-dependent filter")
    return _Generator(filter_node, ctx).delta(filter_node)


def build_materialized_aggregate_delta(plan: EnabledPlan, ctx: RefreshContext) -> ChangePlan:
    """Merge adjustments: the top aggregate applied to its child delta only.

    Rows carry the group keys, the signed sum of each SUM component and the
    signed change of each count. Views whose top aggregate is not merge
    adjustable get the group-recompute delta instead.
    """
    faults.check(faults.PLAN_GENERATION)
    root = plan.plan
    if plan.merge is None or not isinstance(root, Aggregate):
        return build_change_plan(plan, ctx)
    gen = _Generator(root, ctx)
    child = gen.maybe_effectivize(gen.delta(root.child))
    delta: Delta = DMergeAggregate(root.schema, child, root.keys, root.aggs)
    if isinstance(child, DEmpty):
        delta = DEmpty(root.schema)
    return ChangePlan(gen.state(root, PRE), gen.state(root, POST), delta)


# ---------------------------------------------------------------------------
# partition overwrite
# ---------------------------------------------------------------------------


def trace_column(p: Plan, idx: int) -> tuple[str, str] | None:
    """Source (table, column) an output column copies unchanged, if any.

    Operators that mix rows across values of the column (joins, windows not
    partitioned by it, aggregates not grouped by it) break the trace.
    """
    if isinstance(p, Scan):
        return p.table, p.schema.columns[idx].name
    if isinstance(p, Filter):
        if is_temporal_filter(p):
            return None
        return trace_column(p.child, idx)
    if isinstance(p, (KeyFilter, Distinct)):
        return trace_column(p.children()[0], idx)
    if isinstance(p, Project):
        e = p.items[idx][1]
        if isinstance(e, E.Col):
            return trace_column(p.child, p.child.schema.resolve(e.name))
        return None
    if isinstance(p, Aggregate):
        if idx >= len(p.keys) or not isinstance(p.keys[idx][1], E.Col):
            return None
        return trace_column(p.child, p.child.schema.resolve(p.keys[idx][1].name))
    if isinstance(p, Window):
        cs = p.child.schema
        if idx >= len(cs):
            return None
        parts = {cs.resolve(e.name) for e in p.partition if isinstance(e, E.Col)}
        if idx not in parts:
            return None
        return trace_column(p.child, idx)
    return None


def partition_eligibility(
    plan: EnabledPlan,
    mv_partition_columns: tuple[str, ...],
    source_partitions: Mapping[str, tuple[str, ...]],
) -> tuple[str, str, str] | None:
    """``(backing column, source table, source column)`` when overwrite applies.

    Requires a single source table, a view partitioned by one column that is
    a plain copy of that table's partition column, and no clock-dependent
    filters.
    """
    root = plan.plan
    tables = {s.table for s in walk_plan(root) if isinstance(s, Scan)}
    if len(tables) != 1 or len(mv_partition_columns) != 1:
        return None
    if any(is_temporal_filter(n) for n in walk_plan(root)):
        return None
    (table,) = tables
    user_col = mv_partition_columns[0]
    top = dict(plan.top_level_projection)
    e = top.get(user_col)
    if not isinstance(e, E.Col):
        return None
    backing_col = e.name
    try:
        idx = root.schema.unqualified().resolve(backing_col)
    except UnresolvedColumn:
        return None
    traced = trace_column(root, idx)
    if traced is None or traced[0] != table or traced[1] not in source_partitions.get(table, ()):
        return None
    return backing_col, table, traced[1]


def build_partition_overwrite(plan: EnabledPlan, ctx: RefreshContext, column: str, source: str, source_column: str) -> PartitionOverwrite:
    faults.check(faults.PLAN_GENERATION)
    root = plan.plan
    gen = _Generator(root, ctx)
    slot = gen.slot("part")
    a, b = ctx.versions[source]
    scan = next(s for s in walk_plan(root) if isinstance(s, Scan))
    feed: Delta = DScan(scan.schema, source, scan.alias, a, b) if a != b else DEmpty(scan.schema)
    ref = _ref_for(root.schema, root.schema.unqualified().resolve(column))
    restricted = restrict(root, (E.Col(ref),), slot)
    skey = _ref_for(scan.schema, scan.schema.resolve(source_column))
    delta = DRecompute(
        root.schema,
        ((feed, (E.Col(skey),)),),
        slot,
        gen.state(restricted, PRE),
        gen.state(restricted, POST),
        "partition_overwrite",
    )
    return PartitionOverwrite(ChangePlan(gen.state(root, PRE), gen.state(root, POST), delta), column, source)


# ---------------------------------------------------------------------------
# strategies
# ---------------------------------------------------------------------------


def candidate_strategies(
    plan: EnabledPlan | None,
    ctx: RefreshContext,
    mv_partition_columns: tuple[str, ...] = (),
    source_partitions: Mapping[str, tuple[str, ...]] | None = None,
) -> list[RefreshStrategy]:
    """Full recompute plus the one incremental strategy the plan admits."""
    out: list[RefreshStrategy] = [FullRecompute()]
    if plan is None:
        return out
    part = partition_eligibility(plan, mv_partition_columns, source_partitions or {})
    if part is not None:
        out.append(build_partition_overwrite(plan, ctx, *part))
    elif plan.merge is not None:
        out.append(RowIncremental(build_materialized_aggregate_delta(plan, ctx), MERGE_AGGREGATE))
    else:
        out.append(RowIncremental(build_change_plan(plan, ctx), REPLACE_WHERE))
    return out


def select_strategy(
    plan: EnabledPlan | None,
    ctx: RefreshContext,
    stats,
    history,
    mv: str = "",
    mv_partition_columns: tuple[str, ...] = (),
    source_partitions: Mapping[str, tuple[str, ...]] | None = None,
    downstream: int = 0,
    params=None,
    source_plan: Plan | None = None,
):
    """Pick a strategy by estimated cost; returns ``(strategy, [(candidate, estimate)])``.

    ``source_plan`` is costed when the view could not be enabled.
    """
    from deltamv import cost

    faults.check(faults.STRATEGY_SELECTION)
    candidates = candidate_strategies(plan, ctx, mv_partition_columns, source_partitions)
    target = plan if plan is not None else source_plan
    scored = [(s, cost.estimate(s, target, stats, history, mv=mv, params=params)) for s in candidates]
    return cost.choose(mv, scored, downstream, stats=stats, params=params), scored


# ---------------------------------------------------------------------------
# explain
# ---------------------------------------------------------------------------


def explain_change_plan(cp: ChangePlan) -> str:
    return "\n".join(
        [
            "pre:",
            explain_tree(cp.pre, 1),
            "post:",
            explain_tree(cp.post, 1),
            "delta:",
            explain_delta(cp.delta, 1),
        ]
    )


def delta_rules(d: Delta) -> list[str]:
    return [n.rule for n in walk_delta(d)]


__all__ = [
    "ChangePlan",
    "FullRecompute",
    "MERGE_AGGREGATE",
    "PartitionOverwrite",
    "REPLACE_WHERE",
    "RefreshContext",
    "RefreshStrategy",
    "RowIncremental",
    "build_change_plan",
    "build_materialized_aggregate_delta",
    "build_partition_overwrite",
    "build_temporal_delta",
    "candidate_strategies",
    "delta_rules",
    "explain_change_plan",
    "partition_eligibility",
    "restrict",
    "select_strategy",
    "trace_column",
]
