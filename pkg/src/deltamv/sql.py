"""A small SQL-like front end that produces plans.

Supported: SELECT [DISTINCT] ... FROM ... [JOIN ... ON ...] [WHERE]
[GROUP BY] [HAVING], window functions with OVER (PARTITION BY ... ORDER BY
...), UNION ALL, WITH, and subqueries in FROM. Plus two statements for
defining pipelines:

    CREATE TABLE t (a INT64 NOT NULL, b STRING) [PARTITIONED BY (a)]
    CREATE MATERIALIZED VIEW v [PARTITIONED BY (c)] AS SELECT ...

Column references inside a FROM subquery are unqualified.
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass

from deltamv import values as V
from deltamv.errors import SqlSyntaxError
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
    Scan,
    UnionAll,
    WinCall,
    Window,
    With,
)
from deltamv.ir.schema import Column, Schema

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+|--[^\n]*)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<str>'(?:[^']|'')*')
  | (?P<qid>"[^"]+"|`[^`]+`)
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|<>|!=|[=<>+\-*/(),.;])
    """,
    re.VERBOSE,
)

KEYWORDS = {
    "select", "distinct", "from", "where", "group", "by", "having", "join", "inner", "left", "right",
    "full", "outer", "cross", "on", "as", "and", "or", "not", "is", "null", "in", "between", "case",
    "when", "then", "else", "end", "union", "all", "with", "over", "partition", "order", "asc", "desc",
    "true", "false", "date", "timestamp", "interval", "current_date", "current_timestamp", "create",
    "table", "materialized", "view", "partitioned", "limit",
}

AGGREGATES = {"sum", "count", "min", "max", "avg", "stddev", "first", "collect_list", "collect_set"}
RANKING = {"row_number", "rank", "dense_rank"}

TYPE_NAMES = {
    "int": V.INT64, "integer": V.INT64, "bigint": V.INT64, "int64": V.INT64,
    "float": V.FLOAT64, "double": V.FLOAT64, "float64": V.FLOAT64, "real": V.FLOAT64,
    "string": V.STRING, "text": V.STRING, "varchar": V.STRING,
    "bool": V.BOOL, "boolean": V.BOOL,
    "date": V.DATE, "timestamp": V.TIMESTAMP,
}

# keywords that still work as column names when no literal follows
SOFT_KEYWORDS = {"date", "timestamp"}

_UNITS = {"day": 86400, "days": 86400, "hour": 3600, "hours": 3600, "minute": 60, "minutes": 60, "second": 1, "seconds": 1, "week": 604800, "weeks": 604800}


@dataclass(frozen=True)
class Tok:
    kind: str  # num str id kw op eof
    text: str
    pos: int


def tokenize(text: str) -> list[Tok]:
    out: list[Tok] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise SqlSyntaxError(f"unexpected character {text[pos]!r} at offset {pos}")
        kind = m.lastgroup
        val = m.group()
        if kind == "id" and val.lower() in KEYWORDS:
            out.append(Tok("kw", val.lower(), pos))
        elif kind == "qid":
            out.append(Tok("id", val[1:-1], pos))
        elif kind != "ws":
            out.append(Tok(kind, val, pos))
        pos = m.end()
    out.append(Tok("eof", "", len(text)))
    return out


# parse-time expression nodes that do not exist in the IR
@dataclass(frozen=True)
class _Agg(E.Expr):
    call: AggCall


@dataclass(frozen=True)
class _Win(E.Expr):
    call: WinCall
    partition: tuple
    order: tuple


@dataclass
class _Item:
    expr: E.Expr
    alias: str | None


class Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0
        self._ctes: set[str] = set()

    # token helpers -----------------------------------------------------

    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def error(self, msg: str) -> SqlSyntaxError:
        t = self.tok
        near = t.text or "end of input"
        return SqlSyntaxError(f"{msg} near {near!r} at offset {t.pos}")

    def at(self, *words: str) -> bool:
        t = self.tok
        return (t.kind == "kw" and t.text in words) or (t.kind == "op" and t.text in words)

    def accept(self, *words: str) -> bool:
        if self.at(*words):
            self.i += 1
            return True
        return False

    def expect(self, word: str) -> None:
        if not self.accept(word):
            raise self.error(f"expected {word.upper()}")

    def ident(self) -> str:
        t = self.tok
        if t.kind == "kw" and t.text in SOFT_KEYWORDS:
            self.i += 1
            return t.text
        if t.kind != "id":
            raise self.error("expected an identifier")
        self.i += 1
        return t.text

    def done(self) -> None:
        self.accept(";")
        if self.tok.kind != "eof":
            raise self.error("unexpected trailing input")

    # statements --------------------------------------------------------

    def statement(self):
        if self.accept("create"):
            if self.accept("table"):
                return self.create_table()
            if self.accept("materialized"):
                self.expect("view")
                return self.create_view()
            raise self.error("expected TABLE or MATERIALIZED VIEW")
        return ("query", self.query())

    def create_table(self):
        name = self.ident()
        self.expect("(")
        cols = []
        while True:
            cname = self.ident()
            t = self.tok
            if t.kind not in ("id", "kw") or t.text.lower() not in TYPE_NAMES:
                raise self.error("expected a column type")
            self.i += 1
            nullable = True
            if self.accept("not"):
                self.expect("null")
                nullable = False
            cols.append(Column(cname, TYPE_NAMES[t.text.lower()], nullable))
            if not self.accept(","):
                break
        self.expect(")")
        parts = self.partitioned()
        return ("table", name, Schema(tuple(cols)), parts)

    def partitioned(self) -> tuple[str, ...]:
        if not self.accept("partitioned"):
            return ()
        self.expect("by")
        self.expect("(")
        names = [self.ident()]
        while self.accept(","):
            names.append(self.ident())
        self.expect(")")
        return tuple(names)

    def create_view(self):
        name = self.ident()
        parts = self.partitioned()
        self.expect("as")
        start = self.tok.pos
        q = self.query()
        return ("mv", name, q, parts, self.text[start:self.tok.pos].strip().rstrip(";"))

    # queries -----------------------------------------------------------

    def query(self) -> Plan:
        if self.accept("with"):
            bindings = []
            while True:
                name = self.ident()
                self.expect("as")
                self.expect("(")
                bindings.append((name, self.query()))
                self._ctes.add(name)
                self.expect(")")
                if not self.accept(","):
                    break
            return With(tuple(bindings), self.query())
        parts = [self.select()]
        while self.accept("union"):
            self.expect("all")
            parts.append(self.select())
        if self.at("order", "limit"):
            raise self.error("views are unordered bags; ORDER BY / LIMIT are not supported")
        return parts[0] if len(parts) == 1 else UnionAll(tuple(parts))

    def select(self) -> Plan:
        if self.accept("("):
            q = self.query()
            self.expect(")")
            return q
        self.expect("select")
        distinct = self.accept("distinct")
        star = False
        items: list[_Item] = []
        if self.accept("*"):
            star = True
        else:
            while True:
                e = self.expr()
                alias = None
                if self.accept("as"):
                    alias = self.ident()
                elif self.tok.kind == "id":
                    alias = self.ident()
                items.append(_Item(e, alias))
                if not self.accept(","):
                    break
        self.expect("from")
        src = self.from_clause()
        if self.accept("where"):
            src = Filter(src, self.expr())
        groups: list[E.Expr] = []
        if self.accept("group"):
            self.expect("by")
            groups.append(self.expr())
            while self.accept(","):
                groups.append(self.expr())
        having = self.expr() if self.accept("having") else None
        plan = _assemble(src, items, star, groups, having)
        return Distinct(plan) if distinct else plan

    def from_clause(self) -> Plan:
        left = self.table_ref()
        while True:
            if self.accept("cross"):
                self.expect("join")
                left = Join(left, self.table_ref(), "inner", None)
                continue
            if self.at(","):
                self.i += 1
                left = Join(left, self.table_ref(), "inner", None)
                continue
            kind = None
            if self.accept("join"):
                kind = "inner"
            elif self.accept("inner"):
                self.expect("join")
                kind = "inner"
            elif self.at("left", "right", "full"):
                word = self.tok.text
                self.i += 1
                self.accept("outer")
                self.expect("join")
                kind = {"left": "left_outer", "right": "right_outer", "full": "full_outer"}[word]
            if kind is None:
                return left
            right = self.table_ref()
            self.expect("on")
            left = Join(left, right, kind, self.expr())

    def table_ref(self) -> Plan:
        if self.accept("("):
            q = self.query()
            self.expect(")")
            if self.accept("as") or self.tok.kind == "id":
                self.ident()
            return q
        name = self.ident()
        alias = None
        if self.accept("as"):
            alias = self.ident()
        elif self.tok.kind == "id":
            alias = self.ident()
        if name in self._ctes:
            return CteRef(name)
        return Scan(name, alias=alias)

    # expressions -------------------------------------------------------

    def expr(self) -> E.Expr:
        return self.or_()

    def or_(self) -> E.Expr:
        args = [self.and_()]
        while self.accept("or"):
            args.append(self.and_())
        return args[0] if len(args) == 1 else E.Or(tuple(args))

    def and_(self) -> E.Expr:
        args = [self.not_()]
        while self.accept("and"):
            args.append(self.not_())
        return args[0] if len(args) == 1 else E.And(tuple(args))

    def not_(self) -> E.Expr:
        if self.accept("not"):
            return E.Not(self.not_())
        return self.comparison()

    def comparison(self) -> E.Expr:
        left = self.additive()
        if self.at("=", "<>", "!=", "<", "<=", ">", ">="):
            op = self.tok.text
            self.i += 1
            return E.Cmp("!=" if op == "<>" else op, left, self.additive())
        if self.accept("is"):
            neg = self.accept("not")
            self.expect("null")
            return E.IsNull(left, neg)
        neg = self.accept("not")
        if self.accept("in"):
            self.expect("(")
            vals = [self.expr()]
            while self.accept(","):
                vals.append(self.expr())
            self.expect(")")
            return E.InList(left, tuple(vals), neg)
        if self.accept("between"):
            lo = self.additive()
            self.expect("and")
            hi = self.additive()
            e = E.And((E.Cmp(">=", left, lo), E.Cmp("<=", left, hi)))
            return E.Not(e) if neg else e
        if neg:
            raise self.error("expected IN or BETWEEN after NOT")
        return left

    def additive(self) -> E.Expr:
        left = self.term()
        while self.at("+", "-"):
            op = self.tok.text
            self.i += 1
            left = E.BinOp(op, left, self.term())
        return left

    def term(self) -> E.Expr:
        left = self.unary()
        while self.at("*", "/"):
            op = self.tok.text
            self.i += 1
            left = E.BinOp(op, left, self.unary())
        return left

    def unary(self) -> E.Expr:
        if self.accept("-"):
            inner = self.unary()
            if isinstance(inner, E.Lit) and inner.type in V.NUMERIC_TYPES:
                return E.Lit(-inner.value, inner.type)
            if isinstance(inner, E.Lit) and inner.type == V.INTERVAL:
                return E.Lit(-inner.value, inner.type)
            return E.BinOp("-", E.Lit(0, V.INT64), inner)
        self.accept("+")
        return self.primary()

    def primary(self) -> E.Expr:
        t = self.tok
        if t.kind == "num":
            self.i += 1
            if re.fullmatch(r"\d+", t.text):
                return E.Lit(int(t.text), V.INT64)
            return E.Lit(float(t.text), V.FLOAT64)
        if t.kind == "str":
            self.i += 1
            return E.Lit(t.text[1:-1].replace("''", "'"), V.STRING)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if self.accept("true"):
            return E.Lit(True, V.BOOL)
        if self.accept("false"):
            return E.Lit(False, V.BOOL)
        if self.accept("null"):
            return E.Lit(None, None)
        if self.at("date", "timestamp") and self.toks[self.i + 1].kind == "str":
            self.i += 1
            if t.text == "date":
                return E.Lit(dt.date.fromisoformat(self.string()), V.DATE)
            return E.Lit(V.parse_timestamp(self.string()), V.TIMESTAMP)
        if self.accept("interval"):
            return self.interval()
        if self.accept("current_date"):
            self._empty_parens()
            return E.CurrentDate()
        if self.accept("current_timestamp"):
            self._empty_parens()
            return E.CurrentTimestamp()
        if self.accept("case"):
            return self.case()
        if t.kind == "id" or (t.kind == "kw" and t.text in SOFT_KEYWORDS):
            name = self.ident()
            if self.at("("):
                return self.call(name)
            if self.accept("."):
                return E.Col(f"{name}.{self.ident()}")
            return E.Col(name)
        raise self.error("expected an expression")

    def string(self) -> str:
        t = self.tok
        if t.kind != "str":
            raise self.error("expected a quoted literal")
        self.i += 1
        return t.text[1:-1].replace("''", "'")

    def _empty_parens(self) -> None:
        if self.accept("("):
            self.expect(")")

    def interval(self) -> E.Expr:
        t = self.tok
        if t.kind == "str":
            amount = float(self.string())
        elif t.kind == "num":
            self.i += 1
            amount = float(t.text)
        else:
            raise self.error("expected an interval amount")
        unit = self.tok
        if unit.kind not in ("id", "kw") or unit.text.lower() not in _UNITS:
            raise self.error("expected an interval unit")
        self.i += 1
        return E.Lit(dt.timedelta(seconds=amount * _UNITS[unit.text.lower()]), V.INTERVAL)

    def case(self) -> E.Expr:
        whens = []
        while self.accept("when"):
            c = self.expr()
            self.expect("then")
            whens.append((c, self.expr()))
        if not whens:
            raise self.error("CASE needs at least one WHEN")
        else_ = self.expr() if self.accept("else") else None
        self.expect("end")
        return E.Case(tuple(whens), else_)

    def call(self, name: str) -> E.Expr:
        low = name.lower()
        self.expect("(")
        args: list[E.Expr] = []
        order_key = None
        star = False
        if self.accept("*"):
            star = True
        elif not self.at(")"):
            if self.accept("distinct"):
                raise self.error("DISTINCT inside aggregates is not supported")
            args.append(self.expr())
            while self.accept(","):
                args.append(self.expr())
            if self.accept("order"):
                self.expect("by")
                order_key = self.expr()
        self.expect(")")
        if self.accept("over"):
            return self.over(low, args, star)
        if low in AGGREGATES:
            if star:
                if low != "count":
                    raise self.error(f"{name}(*) is not valid")
                return _Agg(AggCall("COUNT_STAR"))
            if len(args) != 1:
                raise self.error(f"{name} takes one argument")
            if low == "first" and order_key is None:
                raise self.error("FIRST needs ORDER BY inside the call")
            return _Agg(AggCall(low.upper(), args[0], order_key))
        if star or order_key is not None:
            raise self.error(f"unexpected syntax in call to {name}")
        return E.Func(low if low in E.BUILTINS else name, tuple(args))

    def over(self, low: str, args: list[E.Expr], star: bool) -> E.Expr:
        self.expect("(")
        part: list[E.Expr] = []
        order: list[tuple[E.Expr, bool]] = []
        if self.accept("partition"):
            self.expect("by")
            part.append(self.expr())
            while self.accept(","):
                part.append(self.expr())
        if self.accept("order"):
            self.expect("by")
            while True:
                e = self.expr()
                asc = not self.accept("desc")
                if asc:
                    self.accept("asc")
                order.append((e, asc))
                if not self.accept(","):
                    break
        self.expect(")")
        kind = low.upper()
        if low in RANKING:
            call = WinCall(kind)
        elif star and low == "count":
            call = WinCall("COUNT")
        elif low in ("sum", "count", "min", "max") and len(args) == 1:
            call = WinCall(kind, args[0])
        else:
            raise self.error(f"unsupported window function {low}")
        return _Win(call, tuple(part), tuple(order))


# ---------------------------------------------------------------------------
# SELECT assembly
# ---------------------------------------------------------------------------


def _walk(e: E.Expr):
    yield e
    if isinstance(e, _Agg):
        for x in e.call.exprs():
            yield from _walk(x)
        return
    if isinstance(e, _Win):
        return
    for k in e.children():
        yield from _walk(k)


def _replace(e: E.Expr, table: dict) -> E.Expr:
    """Substitute whole subexpressions found in ``table`` (outermost first)."""
    if e in table:
        return table[e]
    if isinstance(e, (_Agg, _Win)):
        return e
    kids = e.children()
    if not kids:
        return e
    return e.with_children(tuple(_replace(k, table) for k in kids))


def _base_name(e: E.Expr) -> str | None:
    if isinstance(e, E.Col):
        return e.name.split(".")[-1]
    return None


def _default_name(e: E.Expr, i: int) -> str:
    b = _base_name(e)
    if b:
        return b
    if isinstance(e, _Agg):
        arg = _base_name(e.call.arg) if e.call.arg is not None else None
        kind = "count" if e.call.kind == "COUNT_STAR" else e.call.kind.lower()
        return f"{kind}_{arg}" if arg else kind
    if isinstance(e, _Win):
        return e.call.kind.lower()
    return f"_c{i}"


def _assemble(src: Plan, items: list[_Item], star: bool, groups: list[E.Expr], having: E.Expr | None) -> Plan:
    if star:
        if groups or having is not None:
            raise SqlSyntaxError("SELECT * cannot be combined with GROUP BY / HAVING")
        return src
    names = []
    for i, it in enumerate(items):
        names.append(it.alias or _default_name(it.expr, i))
    aggs = [x for it in items for x in _walk(it.expr) if isinstance(x, _Agg)]
    if having is not None:
        aggs += [x for x in _walk(having) if isinstance(x, _Agg)]
    plan = src
    subst: dict = {}
    if groups or aggs:
        keys = []
        used: set[str] = set()
        for i, g in enumerate(groups):
            name = _base_name(g)
            if name is None:
                name = next((n for it, n in zip(items, names) if it.expr == g), f"_k{i}")
            while name in used:
                name = f"{name}_{i}"
            used.add(name)
            keys.append((name, g))
            subst[g] = E.Col(name)
            if isinstance(g, E.Col) and "." in g.name:
                subst[E.Col(g.name.split(".")[-1])] = E.Col(name)
        agg_items = []
        for a in dict.fromkeys(aggs):
            name = next((n for it, n in zip(items, names) if it.expr == a), None)
            if name is None or name in used:
                name = f"_agg{len(agg_items)}"
            used.add(name)
            agg_items.append((name, a.call))
            subst[a] = E.Col(name)
        plan = Aggregate(plan, tuple(keys), tuple(agg_items))
        if having is not None:
            plan = Filter(plan, _replace(having, subst))
    elif having is not None:
        raise SqlSyntaxError("HAVING needs GROUP BY or aggregates")
    wins = [x for it in items for x in _walk(it.expr) if isinstance(x, _Win)]
    if wins:
        specs: dict = {}
        for w in dict.fromkeys(wins):
            spec = (tuple(_replace(p, subst) for p in w.partition), tuple((_replace(e, subst), a) for e, a in w.order))
            specs.setdefault(spec, []).append(w)
        n = 0
        for (part, order), ws in specs.items():
            funcs = []
            for w in ws:
                name = next((nm for it, nm in zip(items, names) if it.expr == w), None) or f"_w{n}"
                n += 1
                arg = _replace(w.call.arg, subst) if w.call.arg is not None else None
                funcs.append((name, WinCall(w.call.kind, arg)))
                subst[w] = E.Col(name)
            plan = Window(plan, part, order, tuple(funcs))
    out = tuple((n, _replace(it.expr, subst)) for it, n in zip(items, names))
    for _, e in out:
        for x in _walk(e):
            if isinstance(x, (_Agg, _Win)):
                raise SqlSyntaxError("aggregate or window call in an unsupported position")
    return Project(plan, out)


def parse_query(text: str) -> Plan:
    p = Parser(text)
    q = p.query()
    p.done()
    return q


def parse_expr(text: str) -> E.Expr:
    p = Parser(text)
    e = p.expr()
    p.done()
    for x in _walk(e):
        if isinstance(x, (_Agg, _Win)):
            raise SqlSyntaxError("aggregates are not allowed here")
    return e


def parse_statement(text: str):
    """``("table", name, schema, partitions)``, ``("mv", name, plan, partitions, sql)`` or ``("query", plan)``."""
    p = Parser(text)
    st = p.statement()
    p.done()
    return st


def split_statements(text: str) -> list[str]:
    """Split a script on top-level semicolons, ignoring those in strings."""
    out, buf, quoted = [], [], False
    for ch in text:
        if ch == "'":
            quoted = not quoted
        if ch == ";" and not quoted:
            if "".join(buf).strip():
                out.append("".join(buf).strip())
            buf = []
        else:
            buf.append(ch)
    if "".join(buf).strip():
        out.append("".join(buf).strip())
    return out


__all__ = ["parse_expr", "parse_query", "parse_statement", "split_statements", "tokenize"]
