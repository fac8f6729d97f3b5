"""Plan mutators for fingerprint testing.

Cosmetic mutations rewrite a plan into a form with the same meaning: commuted
operands and join inputs, split filters, CTE wrappers, identity projections.
Semantic mutations change what a plan computes: edited literals, swapped
operators, different aggregate or join kinds. A sound fingerprint is equal
across the former and differs across the latter.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import random
from typing import Callable

from deltamv import values as V
from deltamv.errors import IvmError
from deltamv.ir import expr as E
from deltamv.ir.plan import (
    AggCall,
    Aggregate,
    CteRef,
    Distinct,
    Filter,
    Join,
    Plan,
    Project,
    UnionAll,
    WinCall,
    Window,
    With,
    infer_schema,
    strip_schemas,
    walk_plan,
)

MIRROR = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "=": "=", "!=": "!="}
CMP_CHANGE = {"<": "<=", "<=": "<", ">": ">=", ">=": ">", "=": "!=", "!=": "="}
BINOP_CHANGE = {"+": "-", "-": "+", "*": "+", "/": "*"}
AGG_CHANGE = {
    "SUM": "MAX",
    "MAX": "MIN",
    "MIN": "MAX",
    "AVG": "SUM",
    "COUNT": "COUNT_STAR",
    "STDDEV": "AVG",
    "FIRST": "MAX",
    "COLLECT_SET": "COLLECT_LIST",
    "COLLECT_LIST": "COLLECT_SET",
    "MIN_BY": "MAX",
}
WIN_CHANGE = {"ROW_NUMBER": "RANK", "RANK": "DENSE_RANK", "DENSE_RANK": "ROW_NUMBER", "SUM": "MAX", "MIN": "MAX", "MAX": "MIN", "COUNT": "ROW_NUMBER"}
JOIN_CHANGE = {"inner": "left_outer", "left_outer": "inner", "right_outer": "full_outer", "full_outer": "inner"}
JOIN_SWAP = {"inner": "inner", "full_outer": "full_outer", "left_outer": "right_outer", "right_outer": "left_outer"}


# ---------------------------------------------------------------------------
# positional rewriting
# ---------------------------------------------------------------------------


def _plan_nodes(plan: Plan) -> list[Plan]:
    return list(walk_plan(plan))


def _rewrite_plan_at(plan: Plan, target: int, fn: Callable[[Plan], Plan]) -> Plan:
    """Replace the ``target``-th node in pre-order by ``fn(node)``."""
    counter = [0]

    def go(p: Plan) -> Plan:
        i = counter[0]
        counter[0] += 1
        if i == target:
            return fn(p)
        kids = p.children()
        if not kids:
            return p
        new = tuple(go(k) for k in kids)
        return p if all(a is b for a, b in zip(new, kids)) else p.with_children(new)

    return go(plan)


def _expr_nodes(e: E.Expr) -> list[E.Expr]:
    return list(E.walk(e))


def _rewrite_expr_at(e: E.Expr, target: int, fn: Callable[[E.Expr], E.Expr]) -> E.Expr:
    counter = [0]

    def go(x: E.Expr) -> E.Expr:
        i = counter[0]
        counter[0] += 1
        if i == target:
            return fn(x)
        kids = x.children()
        if not kids:
            return x
        new = tuple(go(k) for k in kids)
        return x if all(a is b for a, b in zip(new, kids)) else x.with_children(new)

    return go(e)


def _expr_slots(p: Plan) -> list[tuple[Callable[[Plan], E.Expr], Callable[[Plan, E.Expr], Plan]]]:
    """(getter, setter) pairs for every expression a node owns."""
    slots: list = []
    if isinstance(p, Filter):
        slots.append((lambda n: n.predicate, lambda n, e: dataclasses.replace(n, predicate=e)))
    elif isinstance(p, Join) and p.condition is not None:
        slots.append((lambda n: n.condition, lambda n, e: dataclasses.replace(n, condition=e)))
    elif isinstance(p, Project):
        for i in range(len(p.items)):
            slots.append(
                (
                    lambda n, i=i: n.items[i][1],
                    lambda n, e, i=i: dataclasses.replace(n, items=n.items[:i] + ((n.items[i][0], e),) + n.items[i + 1:]),
                )
            )
    elif isinstance(p, Aggregate):
        for i in range(len(p.keys)):
            slots.append(
                (
                    lambda n, i=i: n.keys[i][1],
                    lambda n, e, i=i: dataclasses.replace(n, keys=n.keys[:i] + ((n.keys[i][0], e),) + n.keys[i + 1:]),
                )
            )
    return slots


# ---------------------------------------------------------------------------
# cosmetic
# ---------------------------------------------------------------------------


def _commute_expr(x: E.Expr) -> E.Expr | None:
    if isinstance(x, E.BinOp) and x.op in ("+", "*"):
        return E.BinOp(x.op, x.right, x.left)
    if isinstance(x, E.Cmp):
        return E.Cmp(MIRROR[x.op], x.right, x.left)
    if isinstance(x, E.And) and len(x.args) > 1:
        return E.And(tuple(reversed(x.args)))
    if isinstance(x, E.Or) and len(x.args) > 1:
        return E.Or(tuple(reversed(x.args)))
    if isinstance(x, E.InList) and len(x.values) > 1:
        return dataclasses.replace(x, values=tuple(reversed(x.values)))
    return None


def _order_free(plan: Plan) -> set[int]:
    """Pre-order indexes of nodes whose output column order nothing observes."""
    free: set[int] = set()
    counter = [0]

    def go(p: Plan, sensitive: bool) -> None:
        i = counter[0]
        counter[0] += 1
        if not sensitive:
            free.add(i)
        # projections and aggregates name their outputs; below them order is invisible
        kid_sensitive = sensitive and not isinstance(p, (Project, Aggregate))
        if isinstance(p, UnionAll):
            kid_sensitive = True
        for k in p.children():
            go(k, kid_sensitive)

    go(plan, True)
    return free


def _cosmetic_candidates(plan: Plan) -> list[tuple[str, Callable[[Plan], Plan]]]:
    out: list[tuple[str, Callable[[Plan], Plan]]] = []
    nodes = _plan_nodes(plan)
    free = _order_free(plan)
    for i, p in enumerate(nodes):
        if isinstance(p, Join) and i in free:

            def swap(n: Join) -> Plan:
                cond = n.condition
                if isinstance(cond, E.Cmp):
                    cond = E.Cmp(MIRROR[cond.op], cond.right, cond.left)
                return Join(n.right, n.left, JOIN_SWAP[n.join_kind], cond)

            out.append(("join_swap", lambda pl, i=i, f=swap: _rewrite_plan_at(pl, i, f)))
        if isinstance(p, Filter) and isinstance(p.predicate, E.And) and len(p.predicate.args) > 1:

            def split(n: Filter) -> Plan:
                first, *rest = n.predicate.args
                inner = E.And(tuple(rest)) if len(rest) > 1 else rest[0]
                return Filter(Filter(n.child, inner), first)

            out.append(("filter_split", lambda pl, i=i, f=split: _rewrite_plan_at(pl, i, f)))
        if not isinstance(p, (CteRef, With)) and not any(isinstance(q, CteRef) for q in walk_plan(p)):
            name = f"m{i}"
            out.append(
                ("cte_wrap", lambda pl, i=i, name=name: _rewrite_plan_at(pl, i, lambda n: With(((name, n),), CteRef(name))))
            )
        for get, put in _expr_slots(p):
            ex = get(p)
            for j, x in enumerate(_expr_nodes(ex)):
                if _commute_expr(x) is not None:
                    out.append(
                        (
                            "operand_swap",
                            lambda pl, i=i, get=get, put=put, j=j: _rewrite_plan_at(
                                pl, i, lambda n: put(n, _rewrite_expr_at(get(n), j, _commute_expr))
                            ),
                        )
                    )
    out.append(("redundant_project", _identity_project))
    return out


def _identity_project(plan: Plan) -> Plan:
    names = [c.name for c in plan.schema.columns]
    if len(set(names)) < len(names):
        raise ValueError("duplicate output names")
    refs = [f"{c.qualifier}.{c.name}" if c.qualifier else c.name for c in plan.schema.columns]
    return Project(plan, tuple((n, E.Col(r)) for n, r in zip(names, refs)))


# ---------------------------------------------------------------------------
# semantic
# ---------------------------------------------------------------------------


def _edit_literal(x: E.Expr) -> E.Expr | None:
    if not isinstance(x, E.Lit) or x.value is None:
        return None
    v = x.value
    if x.type == V.BOOL:
        return E.Lit(not v, x.type)
    if x.type == V.INT64:
        return E.Lit(v + 1, x.type)
    if x.type == V.FLOAT64:
        return E.Lit(v + 0.5, x.type)
    if x.type == V.STRING:
        return E.Lit(v + "x", x.type)
    if x.type == V.DATE:
        return E.Lit(v + dt.timedelta(days=1), x.type)
    if x.type == V.TIMESTAMP:
        return E.Lit(v + dt.timedelta(seconds=1), x.type)
    if x.type == V.INTERVAL:
        return E.Lit(v + dt.timedelta(days=1), x.type)
    return None


def _change_operator(x: E.Expr) -> E.Expr | None:
    if isinstance(x, E.Cmp):
        return E.Cmp(CMP_CHANGE[x.op], x.left, x.right)
    if isinstance(x, E.BinOp) and x.op in BINOP_CHANGE:
        return E.BinOp(BINOP_CHANGE[x.op], x.left, x.right)
    if isinstance(x, E.And) and len(x.args) > 1:
        return E.Or(x.args)
    if isinstance(x, E.Or) and len(x.args) > 1:
        return E.And(x.args)
    if isinstance(x, E.IsNull):
        return dataclasses.replace(x, negated=not x.negated)
    return None


def _semantic_candidates(plan: Plan) -> list[tuple[str, Callable[[Plan], Plan]]]:
    out: list[tuple[str, Callable[[Plan], Plan]]] = []
    for i, p in enumerate(_plan_nodes(plan)):
        for get, put in _expr_slots(p):
            for j, x in enumerate(_expr_nodes(get(p))):
                for label, fn in (("literal_edit", _edit_literal), ("operator_change", _change_operator)):
                    if fn(x) is not None:
                        out.append(
                            (
                                label,
                                lambda pl, i=i, get=get, put=put, j=j, fn=fn: _rewrite_plan_at(
                                    pl, i, lambda n: put(n, _rewrite_expr_at(get(n), j, fn))
                                ),
                            )
                        )
        if isinstance(p, Aggregate):
            for k, (name, a) in enumerate(p.aggs):
                if a.kind not in AGG_CHANGE:
                    continue

                def agg(n: Aggregate, k=k) -> Plan:
                    nm, a = n.aggs[k]
                    kind = AGG_CHANGE[a.kind]
                    call = AggCall(kind) if kind == "COUNT_STAR" else AggCall(kind, a.arg)
                    return dataclasses.replace(n, aggs=n.aggs[:k] + ((nm, call),) + n.aggs[k + 1:])

                out.append(("aggregate_change", lambda pl, i=i, f=agg: _rewrite_plan_at(pl, i, f)))
        if isinstance(p, Window):
            for k, (name, w) in enumerate(p.funcs):

                def win(n: Window, k=k) -> Plan:
                    nm, w = n.funcs[k]
                    kind = WIN_CHANGE[w.kind]
                    arg = w.arg if kind in ("SUM", "MIN", "MAX") else None
                    if kind in ("SUM", "MIN", "MAX") and arg is None:
                        raise ValueError("no argument to aggregate")
                    return dataclasses.replace(n, funcs=n.funcs[:k] + ((nm, WinCall(kind, arg)),) + n.funcs[k + 1:])

                out.append(("window_change", lambda pl, i=i, f=win: _rewrite_plan_at(pl, i, f)))
        if isinstance(p, Join) and p.join_kind in JOIN_CHANGE:
            out.append(
                (
                    "join_kind_change",
                    lambda pl, i=i: _rewrite_plan_at(pl, i, lambda n: dataclasses.replace(n, join_kind=JOIN_CHANGE[n.join_kind])),
                )
            )
        if isinstance(p, Distinct):
            out.append(("distinct_removed", lambda pl, i=i: _rewrite_plan_at(pl, i, lambda n: n.child)))
    return out


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------


def _apply_one(plan: Plan, candidates, rng: random.Random, catalog) -> tuple[Plan, str] | None:
    # pick the kind of mutation uniformly, then a site, so common sites don't crowd out rare kinds
    by_label: dict[str, list] = {}
    for label, fn in candidates:
        by_label.setdefault(label, []).append(fn)
    labels = sorted(by_label)
    rng.shuffle(labels)
    order = []
    for label in labels:
        fns = by_label[label]
        rng.shuffle(fns)
        order.extend((label, fn) for fn in fns)
    for label, fn in order:
        try:
            out = infer_schema(strip_schemas(fn(plan)), catalog)
        except (IvmError, ValueError, KeyError, TypeError):
            continue
        return out, label
    return None


def cosmetic_mutation(plan: Plan, rng: random.Random, catalog, steps: int = 1) -> tuple[Plan, list[str]]:
    """Apply ``steps`` meaning-preserving rewrites; ``plan`` must be annotated."""
    labels: list[str] = []
    for _ in range(steps):
        got = _apply_one(plan, _cosmetic_candidates(plan), rng, catalog)
        if got is None:
            break
        plan, label = got
        labels.append(label)
    return plan, labels


def semantic_mutation(plan: Plan, rng: random.Random, catalog) -> tuple[Plan, str] | None:
    """One meaning-changing rewrite, or None when the plan offers no site."""
    return _apply_one(plan, _semantic_candidates(plan), rng, catalog)


__all__ = ["cosmetic_mutation", "semantic_mutation"]
