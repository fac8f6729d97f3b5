"""Rewrite analyzed plans into the simplified canonical form.

Rules (normalization version 1), applied top-down until a fixpoint:

* inline common table expressions;
* merge stacked filters into one conjunction;
* collapse stacked projections (unless that would duplicate a
  non-deterministic expression);
* drop projections that rename nothing and drop nothing;
* fold deterministic literal-only subexpressions into literals;
* flatten nested UNION ALL.
"""

from __future__ import annotations

from dataclasses import dataclass

from deltamv import values as V
from deltamv.errors import NormalizationDidNotConverge, PlanError
from deltamv.ir import expr as E
from deltamv.ir.plan import (
    CteRef,
    Filter,
    Plan,
    Project,
    Scan,
    UnionAll,
    With,
    infer_schema,
    map_exprs,
    strip_schemas,
    walk_plan,
)
from deltamv.ir.schema import Schema

NORMALIZATION_VERSION = 1
SUPPORTED_VERSIONS = (1,)
MAX_ITERATIONS = 32


@dataclass(frozen=True)
class NormalizedPlan:
    plan: Plan
    version: int


def _scan_catalog(plan: Plan, catalog) -> dict[str, Schema]:
    """Table schemas, taken from the caller's catalog or from annotated scans."""
    out: dict[str, Schema] = {}
    for p in walk_plan(plan):
        if isinstance(p, Scan) and p.table not in out:
            if catalog is not None:
                out[p.table] = catalog(p.table) if callable(catalog) else catalog[p.table]
            elif p.schema is not None:
                out[p.table] = p.schema.unqualified()
            else:
                raise PlanError("normalize needs schemas: pass a catalog or an annotated plan")
        if isinstance(p, With):
            for _, sub in p.bindings:
                out.update(_scan_catalog(sub, catalog))
    return out


def inline_ctes(plan: Plan, env: dict[str, Plan] | None = None) -> Plan:
    env = dict(env or {})
    if isinstance(plan, With):
        for name, sub in plan.bindings:
            env[name] = inline_ctes(sub, env)
        return inline_ctes(plan.body, env)
    if isinstance(plan, CteRef):
        if plan.name not in env:
            raise PlanError(f"unknown CTE {plan.name!r}")
        return env[plan.name]
    kids = plan.children()
    if not kids:
        return plan
    return plan.with_children(tuple(inline_ctes(k, env) for k in kids))


def fold_constants(expr: E.Expr) -> E.Expr:
    """Fold deterministic subexpressions without column or clock references."""

    def fn(e: E.Expr) -> E.Expr | None:
        if isinstance(e, (E.Lit, E.Col, E.CurrentDate, E.CurrentTimestamp)):
            return None
        kids = e.children()
        if not kids or not all(isinstance(k, E.Lit) for k in kids):
            return None
        if isinstance(e, E.Func):
            fdef = E.lookup_function(e.name)
            if not fdef.deterministic or fdef.user_defined:
                return None
        try:
            typ = E.infer_type(e, Schema(()))
            value = E.evaluate_constant(e)
        except Exception:
            # leave anything that fails (overflow, bad types) for run time
            return None
        if typ is None:
            return None
        if value is not None and not V.python_type_matches(value, typ):
            return None
        return E.Lit(value, typ)

    return E.transform(expr, fn)


def _fold_node(p: Plan) -> Plan:
    return map_exprs(p, fold_constants)


def _is_identity(p: Project) -> bool:
    cols = p.child.schema.columns
    if len(p.items) != len(cols):
        return False
    for idx, ((name, e), col) in enumerate(zip(p.items, cols)):
        if name != col.name or not isinstance(e, E.Col):
            return False
        try:
            if p.child.schema.resolve(e.name) != idx:
                return False
        except PlanError:
            return False
    return True


def _collapse(outer: Project, inner: Project) -> Project | None:
    schema = inner.schema
    mapping_by_index = [e for _, e in inner.items]
    uses = [0] * len(mapping_by_index)

    def sub(e: E.Expr) -> E.Expr:
        def fn(x: E.Expr) -> E.Expr | None:
            if isinstance(x, E.Col):
                i = schema.resolve(x.name)
                uses[i] += 1
                return mapping_by_index[i]
            return None

        return E.transform(e, fn)

    items = tuple((n, sub(e)) for n, e in outer.items)
    for i, e in enumerate(mapping_by_index):
        if uses[i] > 1 and E.has_nondeterministic_call(e):
            return None
    # a clock or random call that vanishes is fine; one duplicated is not
    return Project(inner.child, items)


def _rewrite(p: Plan) -> Plan:
    """One rule application at this node, or the node itself."""
    if isinstance(p, Filter) and isinstance(p.child, Filter):
        return Filter(p.child.child, E.and_(p.predicate, p.child.predicate))
    if isinstance(p, Project) and isinstance(p.child, Project):
        merged = _collapse(p, p.child)
        if merged is not None:
            return merged
    if isinstance(p, Project) and _is_identity(p):
        return p.child
    if isinstance(p, UnionAll) and any(isinstance(k, UnionAll) for k in p.inputs):
        flat: list[Plan] = []
        for k in p.inputs:
            flat.extend(k.inputs if isinstance(k, UnionAll) else [k])
        return UnionAll(tuple(flat))
    folded = _fold_node(p)
    if folded != p:
        return folded
    return p


def _pass(p: Plan) -> Plan:
    q = _rewrite(p)
    kids = q.children()
    if kids:
        q = q.with_children(tuple(_pass(k) for k in kids))
    return q


def normalize(plan: Plan, version: int = NORMALIZATION_VERSION, catalog=None) -> NormalizedPlan:
    """Return the fixpoint of the rule set; schemas re-inferred on the result."""
    if version not in SUPPORTED_VERSIONS:
        raise PlanError(f"unsupported normalization version {version}")
    tables = _scan_catalog(plan, catalog)
    current = infer_schema(inline_ctes(strip_schemas(plan)), tables)
    for _ in range(MAX_ITERATIONS):
        nxt = infer_schema(strip_schemas(_pass(current)), tables)
        if nxt == current:
            return NormalizedPlan(nxt, version)
        current = nxt
    raise NormalizationDidNotConverge(f"no fixpoint after {MAX_ITERATIONS} iterations")


def is_normalized(plan: Plan) -> bool:
    for p in walk_plan(plan):
        if isinstance(p, (With, CteRef)):
            return False
        if isinstance(p, Filter) and isinstance(p.child, Filter):
            return False
        if isinstance(p, Project) and isinstance(p.child, Project):
            return False
    return True


__all__ = [
    "NORMALIZATION_VERSION",
    "NormalizedPlan",
    "fold_constants",
    "inline_ctes",
    "is_normalized",
    "normalize",
]
