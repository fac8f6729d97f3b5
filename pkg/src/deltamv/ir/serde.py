"""Canonical JSON (de)serialization of expressions and plans.

Every node serializes as an object with ``kind``, ``children`` and ``exprs``
plus node-specific attributes; ``dumps`` sorts keys so output is byte-stable.
"""

from __future__ import annotations

import json
from typing import Any

from deltamv import values as V
from deltamv.errors import PlanError
from deltamv.ir import expr as E
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
    WinCall,
    Window,
    With,
)


def expr_to_json(e: E.Expr | None) -> Any:
    if e is None:
        return None
    if isinstance(e, E.Col):
        return {"kind": "col", "name": e.name}
    if isinstance(e, E.Lit):
        return {"kind": "lit", "type": e.type, "value": V.encode_tagged(e.value)}
    if isinstance(e, E.BinOp):
        return {"kind": "arith", "op": e.op, "args": [expr_to_json(e.left), expr_to_json(e.right)]}
    if isinstance(e, E.Cmp):
        return {"kind": "cmp", "op": e.op, "args": [expr_to_json(e.left), expr_to_json(e.right)]}
    if isinstance(e, E.And):
        return {"kind": "and", "args": [expr_to_json(a) for a in e.args]}
    if isinstance(e, E.Or):
        return {"kind": "or", "args": [expr_to_json(a) for a in e.args]}
    if isinstance(e, E.Not):
        return {"kind": "not", "args": [expr_to_json(e.arg)]}
    if isinstance(e, E.IsNull):
        return {"kind": "is_null", "negated": e.negated, "args": [expr_to_json(e.arg)]}
    if isinstance(e, E.InList):
        return {
            "kind": "in",
            "negated": e.negated,
            "args": [expr_to_json(e.arg)],
            "values": [expr_to_json(v) for v in e.values],
        }
    if isinstance(e, E.Case):
        return {
            "kind": "case",
            "whens": [[expr_to_json(c), expr_to_json(v)] for c, v in e.whens],
            "else": expr_to_json(e.else_),
        }
    if isinstance(e, E.Func):
        return {"kind": "func", "name": e.name, "args": [expr_to_json(a) for a in e.args]}
    if isinstance(e, E.CurrentDate):
        return {"kind": "current_date"}
    if isinstance(e, E.CurrentTimestamp):
        return {"kind": "current_timestamp"}
    raise PlanError(f"cannot serialize expression {e!r}")


def expr_from_json(d: Any) -> E.Expr | None:
    if d is None:
        return None
    k = d["kind"]
    if k == "col":
        return E.Col(d["name"])
    if k == "lit":
        return E.Lit(V.decode_tagged(d["value"]), d["type"])
    args = [expr_from_json(a) for a in d.get("args", [])]
    if k == "arith":
        return E.BinOp(d["op"], args[0], args[1])
    if k == "cmp":
        return E.Cmp(d["op"], args[0], args[1])
    if k == "and":
        return E.And(tuple(args))
    if k == "or":
        return E.Or(tuple(args))
    if k == "not":
        return E.Not(args[0])
    if k == "is_null":
        return E.IsNull(args[0], d.get("negated", False))
    if k == "in":
        return E.InList(args[0], tuple(expr_from_json(v) for v in d["values"]), d.get("negated", False))
    if k == "case":
        return E.Case(tuple((expr_from_json(c), expr_from_json(v)) for c, v in d["whens"]), expr_from_json(d.get("else")))
    if k == "func":
        return E.Func(d["name"], tuple(args))
    if k == "current_date":
        return E.CurrentDate()
    if k == "current_timestamp":
        return E.CurrentTimestamp()
    raise PlanError(f"unknown expression kind {k!r}")


def _agg_to_json(name: str, a: AggCall) -> dict:
    return {
        "name": name,
        "agg": a.kind,
        "arg": expr_to_json(a.arg),
        "order": expr_to_json(a.order),
        "sorted": a.sorted,
    }


def _agg_from_json(d: dict) -> tuple[str, AggCall]:
    return d["name"], AggCall(d["agg"], expr_from_json(d.get("arg")), expr_from_json(d.get("order")), d.get("sorted", False))


def plan_to_json(p: Plan) -> dict:
    out: dict[str, Any] = {"kind": p.kind, "children": [plan_to_json(k) for k in p.children()], "exprs": []}
    if isinstance(p, Scan):
        out.update(table=p.table, alias=p.alias, version=p.version)
    elif isinstance(p, Project):
        out["exprs"] = [{"name": n, "expr": expr_to_json(e)} for n, e in p.items]
    elif isinstance(p, Filter):
        out["exprs"] = [{"expr": expr_to_json(p.predicate)}]
    elif isinstance(p, Aggregate):
        out["exprs"] = [{"name": n, "key": expr_to_json(e)} for n, e in p.keys] + [
            _agg_to_json(n, a) for n, a in p.aggs
        ]
    elif isinstance(p, Window):
        out["exprs"] = (
            [{"partition": expr_to_json(e)} for e in p.partition]
            + [{"order": expr_to_json(e), "ascending": asc} for e, asc in p.order]
            + [{"name": n, "window": w.kind, "arg": expr_to_json(w.arg)} for n, w in p.funcs]
        )
    elif isinstance(p, Join):
        out["join_kind"] = p.join_kind
        out["exprs"] = [{"condition": expr_to_json(p.condition)}] if p.condition is not None else []
    elif isinstance(p, With):
        out["names"] = [n for n, _ in p.bindings]
    elif isinstance(p, CteRef):
        out["name"] = p.name
    elif isinstance(p, KeyFilter):
        out["exprs"] = [{"key": expr_to_json(e)} for e in p.keys]
        out["key_set"] = sorted((V.encode_tagged(k) for k in p.key_set), key=lambda x: json.dumps(x))
        if p.slot is not None:
            out["slot"] = p.slot
    return out


def plan_from_json(d: dict) -> Plan:
    k = d["kind"]
    kids = [plan_from_json(c) for c in d.get("children", [])]
    exprs = d.get("exprs", [])
    if k == "scan":
        return Scan(d["table"], d.get("alias"), d.get("version"))
    if k == "project":
        return Project(kids[0], tuple((x["name"], expr_from_json(x["expr"])) for x in exprs))
    if k == "filter":
        return Filter(kids[0], expr_from_json(exprs[0]["expr"]))
    if k == "aggregate":
        keys = tuple((x["name"], expr_from_json(x["key"])) for x in exprs if "key" in x)
        aggs = tuple(_agg_from_json(x) for x in exprs if "agg" in x)
        return Aggregate(kids[0], keys, aggs)
    if k == "window":
        part = tuple(expr_from_json(x["partition"]) for x in exprs if "partition" in x)
        order = tuple((expr_from_json(x["order"]), x.get("ascending", True)) for x in exprs if "order" in x)
        funcs = tuple((x["name"], WinCall(x["window"], expr_from_json(x.get("arg")))) for x in exprs if "window" in x)
        return Window(kids[0], part, order, funcs)
    if k == "join":
        cond = expr_from_json(exprs[0]["condition"]) if exprs else None
        return Join(kids[0], kids[1], d["join_kind"], cond)
    if k == "union_all":
        return UnionAll(tuple(kids))
    if k == "distinct":
        return Distinct(kids[0])
    if k == "with":
        names = d["names"]
        return With(tuple(zip(names, kids[: len(names)])), kids[len(names)])
    if k == "cte_ref":
        return CteRef(d["name"])
    if k == "key_filter":
        keys = tuple(expr_from_json(x["key"]) for x in exprs)
        return KeyFilter(kids[0], keys, frozenset(V.decode_tagged(x) for x in d["key_set"]), d.get("slot"))
    raise PlanError(f"unknown plan kind {k!r}")


def dumps(obj: Any) -> str:
    """Canonical JSON text: alphabetical keys, no insignificant whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def plan_dumps(p: Plan) -> str:
    return dumps(plan_to_json(p))


def plan_loads(text: str) -> Plan:
    return plan_from_json(json.loads(text))


_PREC = {"or": 1, "and": 2, "not": 3, "cmp": 4, "+": 5, "-": 5, "*": 6, "/": 6}


def _lit_text(e: E.Lit) -> str:
    v = e.value
    if v is None:
        return "NULL"
    if e.type == V.STRING:
        return "'" + v.replace("'", "''") + "'"
    if e.type == V.BOOL:
        return "TRUE" if v else "FALSE"
    if e.type == V.DATE:
        return f"DATE '{v.isoformat()}'"
    if e.type == V.TIMESTAMP:
        return f"TIMESTAMP '{V.format_timestamp(v)}'"
    if e.type == V.INTERVAL:
        if v.seconds == 0 and v.microseconds == 0:
            return f"INTERVAL {v.days} DAY"
        return f"INTERVAL {int(v.total_seconds())} SECOND"
    return repr(v)


def expr_to_text(e: E.Expr | None, parent: int = 0) -> str:
    """SQL-like rendering that the CLI parser reads back."""
    if e is None:
        return "NULL"
    if isinstance(e, E.Col):
        return e.name
    if isinstance(e, E.Lit):
        return _lit_text(e)
    if isinstance(e, E.CurrentDate):
        return "CURRENT_DATE"
    if isinstance(e, E.CurrentTimestamp):
        return "CURRENT_TIMESTAMP"
    if isinstance(e, E.BinOp):
        p = _PREC[e.op]
        s = f"{expr_to_text(e.left, p)} {e.op} {expr_to_text(e.right, p + 1)}"
    elif isinstance(e, E.Cmp):
        p = _PREC["cmp"]
        op = "<>" if e.op == "!=" else e.op
        s = f"{expr_to_text(e.left, p + 1)} {op} {expr_to_text(e.right, p + 1)}"
    elif isinstance(e, E.And):
        p = _PREC["and"]
        s = " AND ".join(expr_to_text(a, p + 1) for a in e.args)
    elif isinstance(e, E.Or):
        p = _PREC["or"]
        s = " OR ".join(expr_to_text(a, p + 1) for a in e.args)
    elif isinstance(e, E.Not):
        p = _PREC["not"]
        s = f"NOT {expr_to_text(e.arg, p)}"
    elif isinstance(e, E.IsNull):
        p = _PREC["cmp"]
        s = f"{expr_to_text(e.arg, p + 1)} IS {'NOT ' if e.negated else ''}NULL"
    elif isinstance(e, E.InList):
        p = _PREC["cmp"]
        vals = ", ".join(expr_to_text(v) for v in e.values)
        s = f"{expr_to_text(e.arg, p + 1)} {'NOT ' if e.negated else ''}IN ({vals})"
    elif isinstance(e, E.Case):
        parts = ["CASE"]
        for c, v in e.whens:
            parts.append(f"WHEN {expr_to_text(c)} THEN {expr_to_text(v)}")
        if e.else_ is not None:
            parts.append(f"ELSE {expr_to_text(e.else_)}")
        parts.append("END")
        return " ".join(parts)
    elif isinstance(e, E.Func):
        return f"{e.name}({', '.join(expr_to_text(a) for a in e.args)})"
    else:
        raise PlanError(f"cannot render {e!r}")
    return f"({s})" if p < parent else s
