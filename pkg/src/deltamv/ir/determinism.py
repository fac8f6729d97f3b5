"""Per-node determinism classification."""

from __future__ import annotations

from dataclasses import dataclass, field

from deltamv.ir.expr import has_nondeterministic_call, has_time_function
from deltamv.ir.plan import Aggregate, Filter, Plan, Window, walk_plan

DETERMINISTIC = "deterministic"
REWRITABLE = "rewritable"
TIME_DEPENDENT = "time_dependent"
OPAQUE = "opaque_nondeterministic"

_RANK = {DETERMINISTIC: 0, REWRITABLE: 1, TIME_DEPENDENT: 2, OPAQUE: 3}


@dataclass
class NodeClass:
    path: tuple[int, ...]
    label: str
    classification: str
    reason: str = ""


@dataclass
class DeterminismReport:
    nodes: list[NodeClass] = field(default_factory=list)

    @property
    def full_recompute_only(self) -> bool:
        return any(n.classification == OPAQUE for n in self.nodes)

    @property
    def overall(self) -> str:
        worst = DETERMINISTIC
        for n in self.nodes:
            if _RANK[n.classification] > _RANK[worst]:
                worst = n.classification
        return worst

    def at(self, path: tuple[int, ...]) -> str:
        for n in self.nodes:
            if n.path == path:
                return n.classification
        raise KeyError(path)

    def reasons(self) -> list[str]:
        return [f"{n.label}: {n.reason}" for n in self.nodes if n.reason]


def _classify_node(node: Plan) -> tuple[str, str]:
    exprs = node.exprs()
    if any(has_nondeterministic_call(e) for e in exprs):
        return OPAQUE, "non-deterministic function call"
    if any(has_time_function(e) for e in exprs):
        if isinstance(node, Filter):
            return TIME_DEPENDENT, "clock-dependent filter predicate"
        return OPAQUE, "clock-dependent expression outside a filter"
    if isinstance(node, Aggregate):
        for _, a in node.aggs:
            if a.kind in ("COLLECT_LIST", "COLLECT_SET"):
                return REWRITABLE, f"{a.kind} output order; explicit local sort"
            if a.kind == "FIRST":
                if a.order is None:
                    return OPAQUE, "FIRST without an ordering key"
                return REWRITABLE, "FIRST rewritten to MIN over (order, value)"
    if isinstance(node, Window):
        if node.order and any(w.kind in ("ROW_NUMBER", "RANK", "DENSE_RANK") for _, w in node.funcs):
            return REWRITABLE, "order ties broken by row identifier"
    return DETERMINISTIC, ""


def classify_determinism(plan: Plan) -> DeterminismReport:
    report = DeterminismReport()

    def visit(node: Plan, path: tuple[int, ...]) -> None:
        cls, reason = _classify_node(node)
        from deltamv.ir.plan import describe

        report.nodes.append(NodeClass(path, describe(node), cls, reason))
        for i, kid in enumerate(node.children()):
            visit(kid, path + (i,))

    visit(plan, ())
    return report


def plan_is_deterministic(plan: Plan) -> bool:
    return all(_classify_node(n)[0] in (DETERMINISTIC, REWRITABLE) for n in walk_plan(plan))
