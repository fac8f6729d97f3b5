"""Changeset-producing plan nodes.

A delta plan is a tree whose leaves are change feeds and whose interior
nodes combine feeds with ordinary (pre- or post-state) plans. Each node names
the rewrite rule that produced it so ``explain`` can show the derivation.
Nodes compare by identity; evaluation caches results per node object.
"""

from __future__ import annotations

from dataclasses import dataclass

from deltamv.ir.expr import Expr
from deltamv.ir.plan import AggCall, Plan, describe, explain_tree
from deltamv.ir.schema import Schema
from deltamv.ir.serde import expr_to_text

PRE = "pre"
POST = "post"


@dataclass(frozen=True, eq=False)
class Delta:
    schema: Schema

    def children(self) -> tuple["Delta", ...]:
        return ()

    def plans(self) -> tuple[tuple[str, Plan], ...]:
        return ()

    @property
    def rule(self) -> str:
        return type(self).__name__


@dataclass(frozen=True, eq=False)
class DScan(Delta):
    table: str
    alias: str | None
    start: int
    end: int

    rule = "scan_change_feed"


@dataclass(frozen=True, eq=False)
class DEmpty(Delta):
    rule = "empty"


@dataclass(frozen=True, eq=False)
class DFilter(Delta):
    child: Delta
    predicate: Expr

    rule = "filter_push_through"

    def children(self):
        return (self.child,)


@dataclass(frozen=True, eq=False)
class DProject(Delta):
    child: Delta
    items: tuple[tuple[str, Expr], ...]

    rule = "project_push_through"

    def children(self):
        return (self.child,)


@dataclass(frozen=True, eq=False)
class DJoin(Delta):
    """Inner join of a changeset with one side's pre or post state."""

    delta: Delta
    other: Plan
    delta_is_left: bool
    condition: Expr | None
    other_clock: str  # PRE or POST
    join_kind: str = "inner"

    rule = "inner_join_delta"

    def children(self):
        return (self.delta,)

    def plans(self):
        return ((self.other_clock, self.other),)


@dataclass(frozen=True, eq=False)
class DConcat(Delta):
    """Bag sum of changesets with the same schema and id space."""

    inputs: tuple[Delta, ...]
    label: str = "sum"

    rule = "sum"

    def children(self):
        return self.inputs


@dataclass(frozen=True, eq=False)
class DUnion(Delta):
    """UNION ALL of child deltas; ids tagged by branch position."""

    inputs: tuple[Delta, ...]

    rule = "union_all_delta"

    def children(self):
        return self.inputs


@dataclass(frozen=True, eq=False)
class DRecompute(Delta):
    """``-pre(K) + post(K)`` where K is the set of keys touched by ``sources``.

    ``pre``/``post`` contain KeyFilter nodes whose ``slot`` equals ``slot``;
    they are filled with K before evaluation. Used for aggregates, windows,
    distinct, outer-join anti-join parts and partition overwrite.
    """

    sources: tuple[tuple[Delta, tuple[Expr, ...]], ...]
    slot: str
    pre: Plan | None
    post: Plan | None
    rule_name: str = "group_recompute"

    @property
    def rule(self) -> str:
        return self.rule_name

    def children(self):
        return tuple(d for d, _ in self.sources)

    def plans(self):
        out = []
        if self.pre is not None:
            out.append((PRE, self.pre))
        if self.post is not None:
            out.append((POST, self.post))
        return tuple(out)


@dataclass(frozen=True, eq=False)
class DStatePlan(Delta):
    """Every row of a state plan with a fixed sign (temporal window terms)."""

    plan: Plan
    sign: int
    clock: str
    label: str = ""

    rule = "temporal_window_term"

    def plans(self):
        return ((self.clock, self.plan),)


@dataclass(frozen=True, eq=False)
class DEffectivize(Delta):
    child: Delta

    rule = "selective_effectivize"

    def children(self):
        return (self.child,)


@dataclass(frozen=True, eq=False)
class DMergeAggregate(Delta):
    """Per-group signed aggregate of a changeset: merge adjustments.

    Output rows are ``keys + one column per aggregate``; SUM columns hold the
    signed sum of contributions, COUNT / COUNT_STAR columns the signed count.
    """

    child: Delta
    keys: tuple[tuple[str, Expr], ...]
    aggs: tuple[tuple[str, AggCall], ...]

    rule = "materialized_merge_adjustment"

    def children(self):
        return (self.child,)


def walk_delta(d: Delta):
    yield d
    for k in d.children():
        yield from walk_delta(k)


def _label(d: Delta) -> str:
    if isinstance(d, DScan):
        a = f" AS {d.alias}" if d.alias and d.alias != d.table else ""
        return f"Δ {d.table}{a} ({d.start}, {d.end}]"
    if isinstance(d, DFilter):
        return f"σ {expr_to_text(d.predicate)}"
    if isinstance(d, DProject):
        return "π " + ", ".join(n for n, _ in d.items)
    if isinstance(d, DJoin):
        side = "Δleft ⋈ right" if d.delta_is_left else "left ⋈ Δright"
        cond = expr_to_text(d.condition) if d.condition is not None else "TRUE"
        return f"{side} [{d.other_clock} state] on {cond}"
    if isinstance(d, DRecompute):
        return f"-pre + post restricted to keys {d.slot}"
    if isinstance(d, DStatePlan):
        sign = "+" if d.sign > 0 else "-"
        return f"{sign}{d.label or 'state'} [{d.clock} state]"
    if isinstance(d, DMergeAggregate):
        return "adjust " + ", ".join(n for n, _ in d.aggs) + " by " + ", ".join(n for n, _ in d.keys)
    if isinstance(d, DConcat):
        return d.label
    return ""


def explain_delta(d: Delta, indent: int = 0) -> str:
    pad = "  " * indent
    lines = [f"{pad}delta [{d.rule}] {_label(d)}".rstrip()]
    for clock, plan in d.plans():
        lines.append(f"{pad}  {clock}:")
        lines.append(explain_tree(plan, indent + 2))
    for kid in d.children():
        lines.append(explain_delta(kid, indent + 1))
    return "\n".join(lines)


def describe_delta(d: Delta) -> str:
    return f"[{d.rule}] {_label(d)}"


__all__ = [
    "DConcat",
    "DEffectivize",
    "DEmpty",
    "DFilter",
    "DJoin",
    "DMergeAggregate",
    "DProject",
    "DRecompute",
    "DScan",
    "DStatePlan",
    "DUnion",
    "Delta",
    "POST",
    "PRE",
    "describe",
    "explain_delta",
    "walk_delta",
]
