"""Logical plan / expression IR."""

from deltamv.ir.determinism import (
    DETERMINISTIC,
    OPAQUE,
    REWRITABLE,
    TIME_DEPENDENT,
    DeterminismReport,
    classify_determinism,
)
from deltamv.ir.expr import (
    And,
    BinOp,
    Case,
    Cmp,
    Col,
    CurrentDate,
    CurrentTimestamp,
    Expr,
    Func,
    InList,
    IsNull,
    Lit,
    Not,
    Or,
    and_,
    lit,
    register_udf,
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
    WinCall,
    Window,
    With,
    bind,
    infer_schema,
)
from deltamv.ir.schema import Column, Schema
from deltamv.ir.serde import plan_dumps, plan_from_json, plan_loads, plan_to_json

__all__ = [
    "AggCall",
    "Aggregate",
    "And",
    "BinOp",
    "Case",
    "Cmp",
    "Col",
    "Column",
    "CteRef",
    "CurrentDate",
    "CurrentTimestamp",
    "DETERMINISTIC",
    "DeterminismReport",
    "Distinct",
    "Expr",
    "Filter",
    "Func",
    "InList",
    "IsNull",
    "Join",
    "KeyFilter",
    "Lit",
    "Not",
    "OPAQUE",
    "Or",
    "Plan",
    "Project",
    "REWRITABLE",
    "Scan",
    "Schema",
    "TIME_DEPENDENT",
    "UnionAll",
    "WinCall",
    "Window",
    "With",
    "and_",
    "bind",
    "classify_determinism",
    "infer_schema",
    "lit",
    "plan_dumps",
    "plan_from_json",
    "plan_loads",
    "plan_to_json",
    "register_udf",
]
