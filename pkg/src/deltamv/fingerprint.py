"""Stable digests of normalized view definitions, with multi-version history.

Column references are replaced by lineage descriptors (what a column *is*,
not what it is called), so intermediate aliases and join-input order do not
matter. Commutative joins, UNION ALL inputs and commutative expression
operands are sorted; ``>``/``>=`` are mirrored to ``<``/``<=``; right outer
joins become left outer joins with swapped inputs.

A fingerprint version is ``100 * normalization_version + canon_version``.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from deltamv import values as V
from deltamv.errors import MissingUdfSignature, PlanError
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
    walk_plan,
)
from deltamv.ir.schema import Schema
from deltamv.normalize import NormalizedPlan

CANON_VERSIONS = (1, 2)
# Versions this engine can compute, newest last. An upgrade appends one.
SUPPORTED_VERSIONS: tuple[int, ...] = (101,)
# beyond this many self-join relabelings, number scans in plan order instead
MAX_RELABELINGS = 720


def _dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def _h(obj: Any) -> str:
    return hashlib.sha256(_dumps(obj).encode()).hexdigest()


@dataclass(frozen=True)
class Fingerprint:
    version: int
    digest: str

    def to_json(self) -> dict:
        return {"v": self.version, "d": self.digest}

    @classmethod
    def from_json(cls, d: Mapping) -> "Fingerprint":
        return cls(int(d["v"]), str(d["d"]))


@dataclass
class FingerprintHistory:
    """Recorded fingerprints, newest first."""

    entries: list[Fingerprint] = field(default_factory=list)

    def digest_for(self, version: int) -> str | None:
        for f in self.entries:
            if f.version == version:
                return f.digest
        return None

    def record(self, fp: Fingerprint) -> None:
        self.entries = [fp] + [f for f in self.entries if f.version != fp.version]

    def to_json(self) -> list[dict]:
        return [f.to_json() for f in self.entries]

    @classmethod
    def from_json(cls, data: Iterable[Mapping]) -> "FingerprintHistory":
        return cls([Fingerprint.from_json(d) for d in data])


# ---------------------------------------------------------------------------
# canonical form
# ---------------------------------------------------------------------------


class _Canon:
    def __init__(self, canon_version: int):
        if canon_version not in CANON_VERSIONS:
            raise PlanError(f"unsupported canonicalization version {canon_version}")
        self.cv = canon_version
        # scan instance number per tree path, so self-joins stay distinguishable without aliases
        self.instance: dict[tuple, int] = {}

    # expressions -------------------------------------------------------

    def expr(self, e: E.Expr | None, schema: Schema, descs: list[str]) -> Any:
        if e is None:
            return None
        if isinstance(e, E.Col):
            return {"ref": descs[schema.resolve(e.name)]}
        if isinstance(e, E.Lit):
            return {"lit": V.encode_tagged(e.value), "t": e.type}
        if isinstance(e, E.Cmp):
            op, left, right = e.op, e.left, e.right
            if op in (">", ">="):
                op, left, right = E.MIRROR_CMP[op], right, left
            args = [self.expr(left, schema, descs), self.expr(right, schema, descs)]
            if op in ("=", "!="):
                args.sort(key=_dumps)
            return {"cmp": op, "args": args}
        if isinstance(e, E.BinOp):
            args = [self.expr(e.left, schema, descs), self.expr(e.right, schema, descs)]
            if e.op in E.COMMUTATIVE_ARITH:
                args.sort(key=_dumps)
            return {"arith": e.op, "args": args}
        if isinstance(e, (E.And, E.Or)):
            kind = "and" if isinstance(e, E.And) else "or"
            flat: list[E.Expr] = []
            stack = list(e.args)
            while stack:
                a = stack.pop(0)
                if type(a) is type(e):
                    stack = list(a.args) + stack
                else:
                    flat.append(a)
            args = sorted({_dumps(self.expr(a, schema, descs)) for a in flat})
            return {kind: [json.loads(a) for a in args]}
        if isinstance(e, E.Not):
            return {"not": self.expr(e.arg, schema, descs)}
        if isinstance(e, E.IsNull):
            return {"is_null": self.expr(e.arg, schema, descs), "neg": e.negated}
        if isinstance(e, E.InList):
            vals = sorted({_dumps(self.expr(v, schema, descs)) for v in e.values})
            return {"in": self.expr(e.arg, schema, descs), "vals": [json.loads(v) for v in vals], "neg": e.negated}
        if isinstance(e, E.Case):
            return {
                "case": [[self.expr(c, schema, descs), self.expr(v, schema, descs)] for c, v in e.whens],
                "else": self.expr(e.else_, schema, descs),
            }
        if isinstance(e, E.Func):
            return {"fn": e.name.lower() if e.name.lower() in E.BUILTINS else e.name,
                    "args": [self.expr(a, schema, descs) for a in e.args]}
        if isinstance(e, E.CurrentDate):
            return {"clock": "date"}
        if isinstance(e, E.CurrentTimestamp):
            return {"clock": "timestamp"}
        raise PlanError(f"cannot canonicalize {e!r}")

    # plans -------------------------------------------------------------

    def node(self, p: Plan, path: tuple = ()) -> tuple[dict, list[str]]:
        """Canonical JSON of ``p`` and a lineage descriptor per output column."""
        if isinstance(p, Scan):
            n = self.instance.get(path, 0)
            descs = [_h(["scan", p.table, n, c.name]) for c in p.schema.columns]
            return {"scan": p.table, "i": n}, descs
        if isinstance(p, Filter):
            kid, descs = self.node(p.child, path + (0,))
            return {"filter": self.expr(p.predicate, p.child.schema, descs), "in": kid}, descs
        if isinstance(p, KeyFilter):
            kid, descs = self.node(p.child, path + (0,))
            keys = [self.expr(k, p.child.schema, descs) for k in p.keys]
            return {"key_filter": keys, "set": sorted(_dumps(V.encode_tagged(k)) for k in p.key_set), "in": kid}, descs
        if isinstance(p, Project):
            kid, cdescs = self.node(p.child, path + (0,))
            exprs = [self.expr(e, p.child.schema, cdescs) for _, e in p.items]
            return {"project": exprs, "in": kid}, [_h(["expr", x]) for x in exprs]
        if isinstance(p, Aggregate):
            kid, cdescs = self.node(p.child, path + (0,))
            keys = [self.expr(e, p.child.schema, cdescs) for _, e in p.keys]
            aggs = [
                {
                    "agg": a.kind,
                    "arg": self.expr(a.arg, p.child.schema, cdescs),
                    "order": self.expr(a.order, p.child.schema, cdescs),
                }
                for _, a in p.aggs
            ]
            grouping = _h(["group", sorted(_dumps(k) for k in keys), kid])
            descs = [_h(["key", grouping, k]) for k in keys] + [_h(["agg", grouping, a]) for a in aggs]
            return {"aggregate": aggs, "keys": keys, "in": kid}, descs
        if isinstance(p, Window):
            kid, cdescs = self.node(p.child, path + (0,))
            part = sorted((self.expr(e, p.child.schema, cdescs) for e in p.partition), key=_dumps)
            order = [[self.expr(e, p.child.schema, cdescs), asc] for e, asc in p.order]
            funcs = [{"win": w.kind, "arg": self.expr(w.arg, p.child.schema, cdescs)} for _, w in p.funcs]
            frame = _h(["window", part, order, kid])
            descs = list(cdescs) + [_h(["win", frame, f]) for f in funcs]
            return {"window": funcs, "partition": part, "order": order, "in": kid}, descs
        if isinstance(p, Join):
            left, right, kind = p.left, p.right, p.join_kind
            lj, ld = self.node(left, path + (0,))
            rj, rd = self.node(right, path + (1,))
            descs = ld + rd
            combined = Schema(tuple(left.schema.columns) + tuple(right.schema.columns))
            cond = self.expr(p.condition, combined, descs)
            if kind == "right_outer":
                kind, (lj, rj) = "left_outer", (rj, lj)
            inputs = [lj, rj]
            if kind in ("inner", "full_outer"):
                inputs.sort(key=_dumps)
            return {"join": kind, "on": cond, "inputs": inputs}, descs
        if isinstance(p, UnionAll):
            kids = [self.node(k, path + (i,)) for i, k in enumerate(p.inputs)]
            descs = [_h(["union", sorted(d[i] for _, d in kids)]) for i in range(len(p.schema))]
            inputs = sorted((j for j, _ in kids), key=_dumps)
            return {"union_all": inputs}, descs
        if isinstance(p, Distinct):
            kid, cdescs = self.node(p.child, path + (0,))
            return {"distinct": kid}, [_h(["distinct", d]) for d in cdescs]
        raise PlanError(f"cannot canonicalize {p.kind}")

    def document(self, plan: Plan) -> dict:
        # Instance numbers are a relabeling; the smallest document over all
        # relabelings is independent of input order and aliases.
        groups: dict[str, list[tuple]] = {}
        for path, p in _walk_paths(plan):
            if isinstance(p, Scan):
                groups.setdefault(p.table, []).append(path)
        choices = [list(itertools.permutations(range(len(paths)))) for paths in groups.values()]
        if math.prod(len(c) for c in choices) > MAX_RELABELINGS:
            choices = [[tuple(range(len(paths)))] for paths in groups.values()]
        best = None
        for combo in itertools.product(*choices):
            self.instance = {
                path: n for paths, perm in zip(groups.values(), combo) for path, n in zip(paths, perm)
            }
            doc = self._document(plan)
            text = _dumps(doc)
            if best is None or text < best[0]:
                best = (text, doc)
        return best[1]

    def _document(self, plan: Plan) -> dict:
        body, _ = self.node(plan)
        outputs = [[c.name, c.type] for c in plan.schema.columns]
        if self.cv == 1:
            return {"plan": body, "outputs": outputs}
        # v2: same equivalence classes, different layout (counts nodes too)
        return {"c": 2, "n": sum(1 for _ in walk_plan(plan)), "out": outputs, "root": body}


def _walk_paths(plan: Plan, path: tuple = ()):
    yield path, plan
    for i, kid in enumerate(plan.children()):
        yield from _walk_paths(kid, path + (i,))


def canonicalize(plan: NormalizedPlan | Plan, canon_version: int = 1) -> dict:
    p = plan.plan if isinstance(plan, NormalizedPlan) else plan
    if p.schema is None:
        raise PlanError("canonicalize needs an annotated plan")
    return _Canon(canon_version).document(p)


def canonical_text(plan: NormalizedPlan | Plan, canon_version: int = 1) -> str:
    return _dumps(canonicalize(plan, canon_version))


def used_udfs(plan: Plan) -> set[str]:
    out: set[str] = set()
    for p in walk_plan(plan):
        for e in p.exprs():
            out |= E.udf_names(e)
    return out


def fingerprint(
    plan: NormalizedPlan,
    udf_signatures: Mapping[str, str] | None = None,
    version: int | None = None,
) -> Fingerprint:
    version = version if version is not None else SUPPORTED_VERSIONS[-1]
    norm_v, canon_v = divmod(version, 100)
    if norm_v != plan.version:
        raise PlanError(f"fingerprint version {version} needs normalization v{norm_v}, plan has v{plan.version}")
    sigs = dict(udf_signatures if udf_signatures is not None else E.udf_signatures())
    needed = sorted(used_udfs(plan.plan))
    missing = [n for n in needed if n not in sigs]
    if missing:
        raise MissingUdfSignature(f"no signature for user function(s) {missing}")
    h = hashlib.sha256()
    h.update(canonical_text(plan, canon_v).encode())
    for name in needed:
        h.update(b"\x00udf:" + name.encode() + b"=" + sigs[name].encode())
    return Fingerprint(version, h.hexdigest())


def check_unchanged(
    history: FingerprintHistory,
    plan: NormalizedPlan,
    udf_signatures: Mapping[str, str] | None = None,
    supported: Iterable[int] | None = None,
) -> bool:
    """True iff some supported version's digest matches the recorded one.

    On a match, digests for every other supported version are recorded so a
    later engine that drops the old version still recognizes the view.
    """
    versions = list(supported if supported is not None else SUPPORTED_VERSIONS)
    matched = False
    computed = []
    for v in versions:
        fp = fingerprint(plan, udf_signatures, v)
        computed.append(fp)
        if history.digest_for(v) == fp.digest:
            matched = True
    if matched:
        for fp in computed:
            if history.digest_for(fp.version) is None:
                history.record(fp)
    return matched


def current_fingerprints(plan: NormalizedPlan, udf_signatures=None, supported: Iterable[int] | None = None) -> list[Fingerprint]:
    versions = sorted(supported if supported is not None else SUPPORTED_VERSIONS, reverse=True)
    return [fingerprint(plan, udf_signatures, v) for v in versions]


__all__ = [
    "Fingerprint",
    "FingerprintHistory",
    "SUPPORTED_VERSIONS",
    "canonical_text",
    "canonicalize",
    "check_unchanged",
    "current_fingerprints",
    "fingerprint",
]
