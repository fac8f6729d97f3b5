"""Scalar expression trees: construction, typing, determinism and compilation."""

from __future__ import annotations

import datetime as dt
import hashlib
import math
import operator
import random
from dataclasses import dataclass
from typing import Any, Callable, Iterator

from deltamv import values as V
from deltamv.errors import RuntimeTypeError, TypeMismatch
from deltamv.ir.schema import Schema


class Expr:
    """Base for expression nodes. Subclasses are frozen dataclasses."""

    def children(self) -> tuple["Expr", ...]:
        return ()

    def with_children(self, kids: tuple["Expr", ...]) -> "Expr":
        return self


@dataclass(frozen=True)
class Col(Expr):
    name: str


@dataclass(frozen=True)
class Lit(Expr):
    value: Any
    type: str


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # + - * /
    left: Expr
    right: Expr

    def children(self):
        return (self.left, self.right)

    def with_children(self, kids):
        return BinOp(self.op, kids[0], kids[1])


@dataclass(frozen=True)
class Cmp(Expr):
    op: str  # = != < <= > >=
    left: Expr
    right: Expr

    def children(self):
        return (self.left, self.right)

    def with_children(self, kids):
        return Cmp(self.op, kids[0], kids[1])


@dataclass(frozen=True)
class And(Expr):
    args: tuple[Expr, ...]

    def children(self):
        return self.args

    def with_children(self, kids):
        return And(tuple(kids))


@dataclass(frozen=True)
class Or(Expr):
    args: tuple[Expr, ...]

    def children(self):
        return self.args

    def with_children(self, kids):
        return Or(tuple(kids))


@dataclass(frozen=True)
class Not(Expr):
    arg: Expr

    def children(self):
        return (self.arg,)

    def with_children(self, kids):
        return Not(kids[0])


@dataclass(frozen=True)
class IsNull(Expr):
    arg: Expr
    negated: bool = False

    def children(self):
        return (self.arg,)

    def with_children(self, kids):
        return IsNull(kids[0], self.negated)


@dataclass(frozen=True)
class InList(Expr):
    arg: Expr
    values: tuple[Expr, ...]
    negated: bool = False

    def children(self):
        return (self.arg,) + self.values

    def with_children(self, kids):
        return InList(kids[0], tuple(kids[1:]), self.negated)


@dataclass(frozen=True)
class Case(Expr):
    whens: tuple[tuple[Expr, Expr], ...]
    else_: Expr | None = None

    def children(self):
        out: list[Expr] = []
        for cond, val in self.whens:
            out += [cond, val]
        if self.else_ is not None:
            out.append(self.else_)
        return tuple(out)

    def with_children(self, kids):
        n = len(self.whens)
        whens = tuple((kids[2 * i], kids[2 * i + 1]) for i in range(n))
        else_ = kids[2 * n] if self.else_ is not None else None
        return Case(whens, else_)


@dataclass(frozen=True)
class Func(Expr):
    name: str
    args: tuple[Expr, ...] = ()

    def children(self):
        return self.args

    def with_children(self, kids):
        return Func(self.name, tuple(kids))


@dataclass(frozen=True)
class CurrentDate(Expr):
    pass


@dataclass(frozen=True)
class CurrentTimestamp(Expr):
    pass


TIME_FUNCTIONS = (CurrentDate, CurrentTimestamp)
COMMUTATIVE_ARITH = ("+", "*")
MIRROR_CMP = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "=": "=", "!=": "!="}


def lit(value: Any) -> Lit:
    """Literal with its type inferred from the Python value."""
    if value is None:
        raise ValueError("use Lit(None, type) for typed nulls")
    if isinstance(value, bool):
        return Lit(value, V.BOOL)
    if isinstance(value, int):
        return Lit(value, V.INT64)
    if isinstance(value, float):
        return Lit(value, V.FLOAT64)
    if isinstance(value, str):
        return Lit(value, V.STRING)
    if isinstance(value, dt.datetime):
        return Lit(value, V.TIMESTAMP)
    if isinstance(value, dt.date):
        return Lit(value, V.DATE)
    if isinstance(value, dt.timedelta):
        return Lit(value, V.INTERVAL)
    raise TypeError(f"unsupported literal {value!r}")


def and_(*args: Expr) -> Expr:
    flat: list[Expr] = []
    for a in args:
        if isinstance(a, And):
            flat.extend(a.args)
        else:
            flat.append(a)
    return flat[0] if len(flat) == 1 else And(tuple(flat))


def walk(expr: Expr) -> Iterator[Expr]:
    yield expr
    for kid in expr.children():
        yield from walk(kid)


def transform(expr: Expr, fn: Callable[[Expr], Expr | None]) -> Expr:
    """Bottom-up rewrite; ``fn`` returns a replacement or None to keep the node."""
    kids = expr.children()
    if kids:
        new_kids = tuple(transform(k, fn) for k in kids)
        if any(a is not b for a, b in zip(new_kids, kids)):
            expr = expr.with_children(new_kids)
    out = fn(expr)
    return expr if out is None else out


def columns_used(expr: Expr) -> set[str]:
    return {e.name for e in walk(expr) if isinstance(e, Col)}


def substitute(expr: Expr, mapping: dict[str, Expr]) -> Expr:
    return transform(expr, lambda e: mapping.get(e.name) if isinstance(e, Col) else None)


# ---------------------------------------------------------------------------
# scalar functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FunctionDef:
    name: str
    impl: Callable[..., Any]
    return_type: Callable[[list[str]], str] | str
    deterministic: bool = True
    # Null in -> null out, without calling impl.
    strict: bool = True
    user_defined: bool = False
    # digest of the implementation; part of any fingerprint that calls it
    signature: str = ""

    def result_type(self, arg_types: list[str]) -> str:
        if callable(self.return_type):
            return self.return_type(arg_types)
        return self.return_type


def _numeric_passthrough(types: list[str]) -> str:
    if len(types) != 1 or types[0] not in V.NUMERIC_TYPES:
        raise TypeMismatch(f"abs expects one numeric argument, got {types}")
    return types[0]


def _same_type(types: list[str]) -> str:
    real = [t for t in types if t is not None]
    if not real:
        raise TypeMismatch("coalesce needs at least one typed argument")
    if all(t in V.NUMERIC_TYPES for t in real):
        return V.FLOAT64 if V.FLOAT64 in real else V.INT64
    if len(set(real)) != 1:
        raise TypeMismatch(f"coalesce arguments disagree: {types}")
    return real[0]


def _expect(name: str, want: list[str], result: str) -> Callable[[list[str]], str]:
    def check(types: list[str]) -> str:
        if len(types) != len(want) or any(t != w and not (w == V.FLOAT64 and t == V.INT64) for t, w in zip(types, want)):
            raise TypeMismatch(f"{name} expects {want}, got {types}")
        return result

    return check


_rng = random.Random()


def stddev_from_sums(s: Any, sq: Any, n: Any) -> float | None:
    """Sample standard deviation from (sum x, sum x^2, n)."""
    if n is None or n < 2 or s is None or sq is None:
        return None
    var = (sq - s * s / n) / (n - 1)
    return math.sqrt(var) if var > 0 else 0.0


def _coalesce(*args):
    for a in args:
        if a is not None:
            return a
    return None


BUILTINS: dict[str, FunctionDef] = {
    "abs": FunctionDef("abs", lambda x: V.check_int(abs(x)) if isinstance(x, int) else abs(x), _numeric_passthrough),
    "upper": FunctionDef("upper", str.upper, _expect("upper", [V.STRING], V.STRING)),
    "lower": FunctionDef("lower", str.lower, _expect("lower", [V.STRING], V.STRING)),
    "length": FunctionDef("length", len, _expect("length", [V.STRING], V.INT64)),
    "concat": FunctionDef("concat", lambda a, b: a + b, _expect("concat", [V.STRING, V.STRING], V.STRING)),
    "year": FunctionDef("year", lambda d: d.year, _expect("year", [V.DATE], V.INT64)),
    "coalesce": FunctionDef("coalesce", _coalesce, _same_type, strict=False),
    "stddev_from_sums": FunctionDef(
        "stddev_from_sums",
        stddev_from_sums,
        _expect("stddev_from_sums", [V.FLOAT64, V.FLOAT64, V.INT64], V.FLOAT64),
        strict=False,
    ),
    "rand": FunctionDef("rand", lambda: _rng.random(), V.FLOAT64, deterministic=False, strict=False),
}

UDFS: dict[str, FunctionDef] = {}


def code_signature(fn: Callable[..., Any]) -> str:
    """Digest of a Python function's compiled body and constants."""
    code = getattr(fn, "__code__", None)
    h = hashlib.sha256()
    if code is None:
        h.update(repr(fn).encode())
    else:
        h.update(code.co_code)
        h.update(repr(code.co_consts).encode())
        h.update(repr(code.co_names).encode())
    return h.hexdigest()


def register_udf(
    name: str,
    fn: Callable[..., Any],
    return_type: str,
    deterministic: bool,
    signature: str | None = None,
) -> FunctionDef:
    """Register an opaque scalar user function with an explicit determinism flag."""
    if name.lower() in BUILTINS:
        raise TypeMismatch(f"{name!r} is a builtin function")
    sig = signature if signature is not None else code_signature(fn)
    fdef = FunctionDef(name, fn, return_type, deterministic=deterministic, user_defined=True, signature=sig)
    UDFS[name] = fdef
    return fdef


def udf_signatures() -> dict[str, str]:
    return {name: f.signature for name, f in UDFS.items()}


def lookup_function(name: str) -> FunctionDef:
    key = name.lower()
    if key in BUILTINS:
        return BUILTINS[key]
    if name in UDFS:
        return UDFS[name]
    raise TypeMismatch(f"unknown function {name!r}")


# ---------------------------------------------------------------------------
# determinism
# ---------------------------------------------------------------------------


def has_time_function(expr: Expr) -> bool:
    return any(isinstance(e, TIME_FUNCTIONS) for e in walk(expr))


def has_nondeterministic_call(expr: Expr) -> bool:
    for e in walk(expr):
        if isinstance(e, Func) and not lookup_function(e.name).deterministic:
            return True
    return False


def is_deterministic(expr: Expr) -> bool:
    return not has_time_function(expr) and not has_nondeterministic_call(expr)


def udf_names(expr: Expr) -> set[str]:
    out = set()
    for e in walk(expr):
        if isinstance(e, Func) and e.name.lower() not in BUILTINS:
            out.add(e.name)
    return out


# ---------------------------------------------------------------------------
# typing
# ---------------------------------------------------------------------------


def _comparable(a: str | None, b: str | None) -> bool:
    if a is None or b is None:
        return True
    if a in V.NUMERIC_TYPES and b in V.NUMERIC_TYPES:
        return True
    return a == b


def infer_type(expr: Expr, schema: Schema) -> str | None:
    """Result type of ``expr``; None only for an untyped null literal."""
    if isinstance(expr, Col):
        return schema.columns[schema.resolve(expr.name)].type
    if isinstance(expr, Lit):
        return expr.type
    if isinstance(expr, BinOp):
        lt, rt = infer_type(expr.left, schema), infer_type(expr.right, schema)
        return _binop_type(expr.op, lt, rt)
    if isinstance(expr, Cmp):
        lt, rt = infer_type(expr.left, schema), infer_type(expr.right, schema)
        if not _comparable(lt, rt):
            raise TypeMismatch(f"cannot compare {lt} {expr.op} {rt}")
        return V.BOOL
    if isinstance(expr, (And, Or)):
        for a in expr.args:
            t = infer_type(a, schema)
            if t not in (V.BOOL, None):
                raise TypeMismatch(f"boolean operator over {t}")
        return V.BOOL
    if isinstance(expr, Not):
        t = infer_type(expr.arg, schema)
        if t not in (V.BOOL, None):
            raise TypeMismatch(f"NOT over {t}")
        return V.BOOL
    if isinstance(expr, IsNull):
        infer_type(expr.arg, schema)
        return V.BOOL
    if isinstance(expr, InList):
        t = infer_type(expr.arg, schema)
        for v in expr.values:
            if not _comparable(t, infer_type(v, schema)):
                raise TypeMismatch(f"IN list mixes {t} with {infer_type(v, schema)}")
        return V.BOOL
    if isinstance(expr, Case):
        out: str | None = None
        branches = [v for _, v in expr.whens] + ([expr.else_] if expr.else_ is not None else [])
        for cond, _ in expr.whens:
            if infer_type(cond, schema) not in (V.BOOL, None):
                raise TypeMismatch("CASE condition must be boolean")
        for b in branches:
            t = infer_type(b, schema)
            if t is None:
                continue
            if out is None:
                out = t
            elif out != t:
                if out in V.NUMERIC_TYPES and t in V.NUMERIC_TYPES:
                    out = V.FLOAT64
                else:
                    raise TypeMismatch(f"CASE branches disagree: {out} vs {t}")
        return out
    if isinstance(expr, Func):
        fdef = lookup_function(expr.name)
        return fdef.result_type([infer_type(a, schema) for a in expr.args])
    if isinstance(expr, CurrentDate):
        return V.DATE
    if isinstance(expr, CurrentTimestamp):
        return V.TIMESTAMP
    raise TypeMismatch(f"unknown expression {expr!r}")


def _binop_type(op: str, lt: str | None, rt: str | None) -> str | None:
    if lt is None or rt is None:
        known = lt or rt
        if op == "/":
            return V.FLOAT64
        return known
    if lt in V.NUMERIC_TYPES and rt in V.NUMERIC_TYPES:
        if op == "/":
            return V.FLOAT64
        return V.FLOAT64 if V.FLOAT64 in (lt, rt) else V.INT64
    if op in ("+", "-") and lt in (V.DATE, V.TIMESTAMP) and rt == V.INTERVAL:
        return lt
    if op == "+" and lt == V.INTERVAL and rt in (V.DATE, V.TIMESTAMP):
        return rt
    if op == "-" and lt == V.DATE and rt == V.DATE:
        return V.INT64
    raise TypeMismatch(f"cannot apply {op} to {lt} and {rt}")


def infer_nullable(expr: Expr, schema: Schema) -> bool:
    if isinstance(expr, Col):
        return schema.columns[schema.resolve(expr.name)].nullable
    if isinstance(expr, Lit):
        return expr.value is None
    if isinstance(expr, (CurrentDate, CurrentTimestamp, IsNull)):
        return False
    if isinstance(expr, BinOp) and expr.op == "/":
        return True
    if isinstance(expr, Case):
        return True
    if isinstance(expr, Func):
        return True
    return any(infer_nullable(k, schema) for k in expr.children())


# ---------------------------------------------------------------------------
# compilation
# ---------------------------------------------------------------------------

RowFn = Callable[[tuple], Any]

_CMP_OPS = {
    "=": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


def _arith(op: str, a: Any, b: Any) -> Any:
    if op == "+":
        r = a + b
    elif op == "-":
        r = a - b
    elif op == "*":
        r = a * b
    else:
        if b == 0:
            return None
        if isinstance(a, dt.timedelta) or isinstance(b, dt.timedelta):
            raise RuntimeTypeError("interval division unsupported")
        return float(a) / float(b)
    if type(r) is int:
        V.check_int(r)
    elif isinstance(r, dt.timedelta):
        # date - date
        return r.days
    return r


def compile_expr(expr: Expr, schema: Schema, now: dt.datetime | None = None) -> RowFn:
    """Compile ``expr`` to a closure over row tuples with ``now`` fixed."""
    if isinstance(expr, Col):
        return operator.itemgetter(schema.resolve(expr.name))
    if isinstance(expr, Lit):
        value = expr.value
        return lambda row: value
    if isinstance(expr, CurrentDate):
        if now is None:
            raise RuntimeTypeError("current_date evaluated without a bound clock")
        today = now.date()
        return lambda row: today
    if isinstance(expr, CurrentTimestamp):
        if now is None:
            raise RuntimeTypeError("current_timestamp evaluated without a bound clock")
        stamp = now
        return lambda row: stamp
    if isinstance(expr, BinOp):
        lf, rf = compile_expr(expr.left, schema, now), compile_expr(expr.right, schema, now)
        op = expr.op

        def binop(row):
            a = lf(row)
            if a is None:
                return None
            b = rf(row)
            if b is None:
                return None
            return _arith(op, a, b)

        return binop
    if isinstance(expr, Cmp):
        lf, rf = compile_expr(expr.left, schema, now), compile_expr(expr.right, schema, now)
        cmp = _CMP_OPS[expr.op]

        def compare(row):
            a = lf(row)
            if a is None:
                return None
            b = rf(row)
            if b is None:
                return None
            return cmp(a, b)

        return compare
    if isinstance(expr, And):
        fns = [compile_expr(a, schema, now) for a in expr.args]

        def conj(row):
            unknown = False
            for f in fns:
                v = f(row)
                if v is False:
                    return False
                if v is None:
                    unknown = True
            return None if unknown else True

        return conj
    if isinstance(expr, Or):
        fns = [compile_expr(a, schema, now) for a in expr.args]

        def disj(row):
            unknown = False
            for f in fns:
                v = f(row)
                if v is True:
                    return True
                if v is None:
                    unknown = True
            return None if unknown else False

        return disj
    if isinstance(expr, Not):
        f = compile_expr(expr.arg, schema, now)

        def neg(row):
            v = f(row)
            return None if v is None else not v

        return neg
    if isinstance(expr, IsNull):
        f = compile_expr(expr.arg, schema, now)
        if expr.negated:
            return lambda row: f(row) is not None
        return lambda row: f(row) is None
    if isinstance(expr, InList):
        f = compile_expr(expr.arg, schema, now)
        consts = [v.value for v in expr.values if isinstance(v, Lit)]
        if len(consts) == len(expr.values):
            has_null = any(c is None for c in consts)
            members = {V.canon(c) for c in consts if c is not None}
            negated = expr.negated

            def in_const(row):
                v = f(row)
                if v is None:
                    return None
                if V.canon(v) in members:
                    return not negated
                if has_null:
                    return None
                return negated

            return in_const
        item_fns = [compile_expr(v, schema, now) for v in expr.values]
        negated = expr.negated

        def in_list(row):
            v = f(row)
            if v is None:
                return None
            unknown = False
            for g in item_fns:
                w = g(row)
                if w is None:
                    unknown = True
                elif w == v:
                    return not negated
            return None if unknown else negated

        return in_list
    if isinstance(expr, Case):
        pairs = [(compile_expr(c, schema, now), compile_expr(v, schema, now)) for c, v in expr.whens]
        else_fn = compile_expr(expr.else_, schema, now) if expr.else_ is not None else (lambda row: None)
        out_type = infer_type(expr, schema)
        widen = out_type == V.FLOAT64

        def case(row):
            for c, v in pairs:
                if c(row) is True:
                    r = v(row)
                    break
            else:
                r = else_fn(row)
            if widen and type(r) is int:
                return float(r)
            return r

        return case
    if isinstance(expr, Func):
        fdef = lookup_function(expr.name)
        arg_fns = [compile_expr(a, schema, now) for a in expr.args]
        impl = fdef.impl
        if fdef.strict:

            def call(row):
                args = [g(row) for g in arg_fns]
                if any(a is None for a in args):
                    return None
                return impl(*args)

            return call
        return lambda row: impl(*[g(row) for g in arg_fns])
    raise RuntimeTypeError(f"cannot compile {expr!r}")


def compile_predicate(expr: Expr, schema: Schema, now: dt.datetime | None = None) -> Callable[[tuple], bool]:
    f = compile_expr(expr, schema, now)
    return lambda row: f(row) is True


def evaluate_constant(expr: Expr) -> Any:
    return compile_expr(expr, Schema(()))(())
