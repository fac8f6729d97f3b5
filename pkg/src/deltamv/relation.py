"""Bags of rows and signed changesets over them.

A Relation is a bag of row tuples with an optional parallel list of row ids.
A Changeset is a bag of ``(row, sign, row_id)`` entries, sign in {+1, -1}.
Both are plain values; nothing here mutates its inputs.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator

from deltamv import faults
from deltamv import values as V
from deltamv.errors import IvmError
from deltamv.ir.schema import Schema


@dataclass
class Relation:
    schema: Schema
    rows: list[tuple] = field(default_factory=list)
    ids: list[Any] | None = None

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[tuple]:
        return iter(self.rows)

    def with_ids(self) -> Iterator[tuple[tuple, Any]]:
        ids = self.ids if self.ids is not None else [None] * len(self.rows)
        return zip(self.rows, ids)

    def counter(self, with_ids: bool = False) -> Counter:
        if with_ids:
            return Counter((V.canon_row(r), V.canon_id(i)) for r, i in self.with_ids())
        return Counter(V.canon_row(r) for r in self.rows)

    def sorted_rows(self) -> list[tuple]:
        return sorted(self.rows, key=V.row_sort_key)

    def to_dicts(self) -> list[dict]:
        names = self.schema.names
        return [dict(zip(names, r)) for r in self.rows]


@dataclass
class Changeset:
    schema: Schema
    entries: list[tuple[tuple, int, Any]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def inserts(self) -> list[tuple[tuple, Any]]:
        return [(r, i) for r, s, i in self.entries if s > 0]

    @property
    def deletes(self) -> list[tuple[tuple, Any]]:
        return [(r, i) for r, s, i in self.entries if s < 0]

    def has_ids(self) -> bool:
        return any(i is not None for _, _, i in self.entries)

    def zset(self, with_ids: bool = True) -> Counter:
        out: Counter = Counter()
        for r, s, i in self.entries:
            key = (V.canon_row(r), V.canon_id(i)) if with_ids else V.canon_row(r)
            out[key] += s
        return _drop_zero(out)

    def negate(self) -> "Changeset":
        return Changeset(self.schema, [(r, -s, i) for r, s, i in self.entries])

    def is_effectivized(self) -> bool:
        seen: dict = {}
        for r, s, i in self.entries:
            key = (V.canon_row(r), V.canon_id(i))
            prev = seen.get(key)
            if prev is not None and prev != s:
                return False
            seen[key] = s
        return True


def _drop_zero(c: Counter) -> Counter:
    return Counter({k: v for k, v in c.items() if v != 0})


def concat(schema: Schema, parts: Iterable[Changeset]) -> Changeset:
    out: list = []
    for p in parts:
        out.extend(p.entries)
    return Changeset(schema, out)


def effectivize(cs: Changeset) -> Changeset:
    """Net each (row, row id) group's signs; emit |net| entries of sign(net).

    Grouping includes the row id when entries carry one: two equal rows with
    distinct ids are distinct rows of the relation and must not cancel.
    """
    faults.check(faults.EFFECTIVIZATION)
    if faults.active(faults.BROKEN_EFFECTIVIZE):
        return Changeset(cs.schema, list(cs.entries))
    net: dict = {}
    first: dict = {}
    for r, s, i in cs.entries:
        key = (V.canon_row(r), V.canon_id(i))
        if key in net:
            net[key] += s
        else:
            net[key] = s
            first[key] = (r, i)
    out = []
    for key, n in net.items():
        if n == 0:
            continue
        r, i = first[key]
        sign = 1 if n > 0 else -1
        out.extend([(r, sign, i)] * abs(n))
    return Changeset(cs.schema, out)


def bag_difference(post: Relation, pre: Relation, with_ids: bool = True) -> Changeset:
    """``post - pre`` as a changeset (the recompute-and-diff formulation)."""
    counts: dict = {}
    first: dict = {}
    for sign, rel in ((1, post), (-1, pre)):
        for r, i in rel.with_ids():
            key = (V.canon_row(r), V.canon_id(i) if with_ids else None)
            counts[key] = counts.get(key, 0) + sign
            first.setdefault(key, (r, i if with_ids else None))
    out = []
    for key, n in counts.items():
        if n:
            r, i = first[key]
            out.extend([(r, 1 if n > 0 else -1, i)] * abs(n))
    return Changeset(post.schema, out)


class NegativeMultiplicity(IvmError):
    pass


def apply_changeset(rel: Relation, cs: Changeset, match_ids: bool = True) -> Relation:
    """Apply ``cs`` to ``rel`` as a bag; a deletion of an absent row is an error."""
    counts: dict = {}
    first: dict = {}
    order: list = []
    for r, i in rel.with_ids():
        key = (V.canon_row(r), V.canon_id(i) if match_ids else None)
        if key not in counts:
            order.append(key)
            first[key] = (r, i)
            counts[key] = 0
        counts[key] += 1
    for r, s, i in cs.entries:
        key = (V.canon_row(r), V.canon_id(i) if match_ids else None)
        if key not in counts:
            order.append(key)
            first[key] = (r, i)
            counts[key] = 0
        counts[key] += s
    rows, ids = [], []
    for key in order:
        n = counts[key]
        if n < 0:
            raise NegativeMultiplicity(f"changeset deletes absent row {first[key][0]!r}")
        r, i = first[key]
        rows.extend([r] * n)
        ids.extend([i] * n)
    return Relation(rel.schema, rows, ids if rel.ids is not None or cs.has_ids() else None)


def zset_of(rel: Relation, with_ids: bool = False) -> Counter:
    return rel.counter(with_ids)


def bags_equal(a: Relation, b: Relation, rel_tol: float = 0.0) -> bool:
    """Bag equality of rows; floats compared within ``rel_tol`` relative."""
    if len(a.rows) != len(b.rows):
        return False
    if a.counter() == b.counter():
        return True
    if rel_tol <= 0:
        return False
    ra, rb = a.sorted_rows(), b.sorted_rows()
    for x, y in zip(ra, rb):
        if len(x) != len(y) or not all(V.values_close(u, v, rel_tol) for u, v in zip(x, y)):
            return False
    return True


def describe_bag_diff(a: Relation, b: Relation, limit: int = 5) -> str:
    ca, cb = a.counter(), b.counter()
    only_a = list((ca - cb).elements())[:limit]
    only_b = list((cb - ca).elements())[:limit]
    return f"only in left: {only_a}; only in right: {only_b}"
