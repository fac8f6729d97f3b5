"""Write refresh results into a view's backing table, one atomic commit each.

Every apply writes a single commit whose metadata records the provenance of
the new contents: the view's fingerprints, the source versions it reflects,
the refresh clock and captured parameters. The next refresh reads that
record to decide where its change window starts.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from deltamv import faults
from deltamv import values as V
from deltamv.enable import ROW_ID_COLUMN, EnabledPlan, MergeSpec
from deltamv.ir.schema import Schema
from deltamv.errors import NegativeGroupCount, RowOutsidePartition, StaleProvenance
from deltamv.relation import Changeset, Relation, effectivize
from deltamv.storage import Store, Table

PROVENANCE_KEY = "enzyme.provenance"


@dataclass
class Provenance:
    fingerprint_history: list[dict] = field(default_factory=list)
    source_versions: dict[str, int] = field(default_factory=dict)
    # clock of the refresh that wrote this version; the next refresh's previous clock
    prev_refresh_time: str | None = None
    captured_params: dict[str, Any] = field(default_factory=dict)
    strategy: str = ""
    cost_feedback_ref: str | None = None
    # logical source name -> physical table read, so replaced upstream storage is noticed
    source_tables: dict[str, str] = field(default_factory=dict)

    @property
    def prev_refresh_datetime(self) -> dt.datetime | None:
        return V.parse_timestamp(self.prev_refresh_time) if self.prev_refresh_time else None

    def to_text(self) -> str:
        return json.dumps(
            {
                "captured_params": self.captured_params,
                "cost_feedback_ref": self.cost_feedback_ref,
                "fingerprint_history": self.fingerprint_history,
                "prev_refresh_time": self.prev_refresh_time,
                "source_tables": self.source_tables,
                "source_versions": self.source_versions,
                "strategy": self.strategy,
            },
            sort_keys=True,
            default=str,
        )

    @classmethod
    def from_text(cls, text: str) -> "Provenance":
        d = json.loads(text)
        return cls(
            fingerprint_history=list(d.get("fingerprint_history", [])),
            source_versions={k: int(v) for k, v in d.get("source_versions", {}).items()},
            prev_refresh_time=d.get("prev_refresh_time"),
            captured_params=dict(d.get("captured_params", {})),
            strategy=d.get("strategy", ""),
            cost_feedback_ref=d.get("cost_feedback_ref"),
            source_tables=dict(d.get("source_tables", {})),
        )


def read_provenance(store: Store, backing: str | Table) -> Provenance | None:
    found = store.table(backing).latest_metadata(PROVENANCE_KEY)
    return Provenance.from_text(found[1]) if found else None


@dataclass
class ApplyResult:
    version: int
    inserted: int
    deleted: int

    @property
    def rows_written(self) -> int:
        return self.inserted + self.deleted


def check_provenance(store: Store, backing: str | Table, from_versions: Mapping[str, int]) -> Provenance:
    """The stored contents must reflect exactly the versions the delta starts from."""
    prov = read_provenance(store, backing)
    if prov is None:
        raise StaleProvenance(f"{store.table(backing).name} has no provenance; it was never refreshed")
    for t, v in from_versions.items():
        if prov.source_versions.get(t) != v:
            raise StaleProvenance(
                f"{store.table(backing).name} reflects {t}@{prov.source_versions.get(t)}, delta starts at {t}@{v}"
            )
    return prov


def _id_index(t: Table) -> dict[str, list[int]]:
    col = t.schema.resolve(ROW_ID_COLUMN)
    out: dict[str, list[int]] = {}
    for row, rid in t.snapshot().with_ids():
        out.setdefault(row[col], []).append(rid)
    return out


def _commit(store: Store, t: Table, inserts, deleted, prov: Provenance, truncate: bool = False) -> ApplyResult:
    faults.check(faults.APPLY_COMMIT)
    # a crash here, after the plan is fixed but before the single commit, must leave no trace
    faults.check(faults.APPLY_BETWEEN_PHASES)
    c = store.commit_raw(t, inserts, deleted, {PROVENANCE_KEY: prov.to_text()}, truncate=truncate)
    return ApplyResult(c.version, len(c.inserted), len(c.deleted))


def _backing_row(row: tuple, rid: Any) -> tuple:
    return tuple(row) + (V.encode_row_id(rid),)


def apply_replace_where(
    store: Store,
    backing: str | Table,
    delta: Changeset,
    prov: Provenance,
    effectivized: bool = False,
) -> ApplyResult:
    """Delete the rows whose ids the delta retracts, insert what it adds.

    Reinserting an id reuses its storage row id so a row that changed in
    place reads as an update downstream.
    """
    t = store.table(backing)
    cs = delta if effectivized else effectivize(delta)
    index = _id_index(t)
    deleted: list[int] = []
    freed: dict[str, list[int]] = {}
    for _, sign, rid in cs.entries:
        if sign > 0:
            continue
        key = V.encode_row_id(rid)
        live = index.get(key)
        if not live:
            continue  # retracting a row that is already gone
        sid = live.pop()
        deleted.append(sid)
        freed.setdefault(key, []).append(sid)
    inserts: list[tuple[int | None, tuple]] = []
    for row, sign, rid in cs.entries:
        if sign < 0:
            continue
        key = V.encode_row_id(rid)
        reuse = freed.get(key)
        inserts.append((reuse.pop() if reuse else None, _backing_row(row, rid)))
    return _commit(store, t, inserts, deleted, prov)


def _add(a: Any, b: Any) -> Any:
    if a is None:
        return b
    if b is None:
        return a
    if isinstance(a, float) or isinstance(b, float):
        return float(a) + float(b)
    return V.check_int(a + b)


def apply_merge_aggregate(
    store: Store,
    backing: str | Table,
    spec: MergeSpec,
    adjustments: Changeset,
    prov: Provenance,
) -> ApplyResult:
    """Add signed per-group adjustments onto the stored group rows."""
    t = store.table(backing)
    schema = t.schema
    aschema = adjustments.schema.unqualified()
    index = _id_index(t)
    kinds = dict(spec.columns)
    companions = dict(spec.null_when_zero)
    cnt_pos = schema.resolve(spec.count_column)
    deleted: list[int] = []
    inserts: list[tuple[int | None, tuple]] = []
    for adj, sign, rid in adjustments.entries:
        key = V.encode_row_id(rid)
        live = index.get(key)
        sid = live[0] if live else None
        if sid is None:
            old = None
        else:
            old = t.lookup(sid)
        values = list(old) if old is not None else [None] * len(schema)
        for name in aschema.names:
            pos = schema.resolve(name)
            a = adj[aschema.resolve(name)]
            if name in kinds:
                a = a * sign if a is not None else None
                base = values[pos] if old is not None else 0
                values[pos] = _add(base if base is not None else 0, a)
            elif old is None:
                values[pos] = a
        for s, c in companions.items():
            if values[schema.resolve(c)] == 0:
                values[schema.resolve(s)] = None
        values[schema.resolve(ROW_ID_COLUMN)] = key
        cnt = values[cnt_pos]
        if cnt is not None and cnt < 0:
            raise NegativeGroupCount(f"group {V.decode_row_id(key)!r} would have count {cnt}")
        if sid is not None:
            deleted.append(sid)
        if cnt == 0 and not spec.is_global:
            continue
        inserts.append((sid, tuple(values)))
    return _commit(store, t, inserts, deleted, prov)


def apply_partition_overwrite(
    store: Store,
    backing: str | Table,
    column: str,
    partitions: Iterable[Any],
    replacement: Relation,
    prov: Provenance,
) -> ApplyResult:
    """Replace the rows of each listed partition with ``replacement``.

    Every replacement row must fall in one of ``partitions``.
    """
    t = store.table(backing)
    pos = t.schema.resolve(column)
    rpos = replacement.schema.unqualified().resolve(column)
    touched = {V.canon(p) for p in partitions}
    deleted: list[int] = []
    freed: dict[str, list[int]] = {}
    id_pos = t.schema.resolve(ROW_ID_COLUMN)
    for row, sid in t.snapshot().with_ids():
        if V.canon(row[pos]) in touched:
            deleted.append(sid)
            freed.setdefault(row[id_pos], []).append(sid)
    inserts: list[tuple[int | None, tuple]] = []
    for row, rid in replacement.with_ids():
        if V.canon(row[rpos]) not in touched:
            raise RowOutsidePartition(f"row {row!r} lies outside the overwritten partitions")
        key = V.encode_row_id(rid)
        reuse = freed.get(key)
        inserts.append((reuse.pop() if reuse else None, _backing_row(row, rid)))
    return _commit(store, t, inserts, deleted, prov)


def partition_replacement(column: str, delta: Changeset) -> tuple[set, Relation]:
    """Split a partition recompute delta into (partitions touched, new partition contents)."""
    pos = delta.schema.unqualified().resolve(column)
    parts = {r[pos] for r, _, _ in delta.entries}
    new = [(r, i) for r, s, i in delta.entries if s > 0]
    return parts, Relation(delta.schema, [r for r, _ in new], [i for _, i in new])


def full_recompute(store: Store, backing: str | Table, contents: Relation, prov: Provenance) -> ApplyResult:
    """Truncate and rewrite the backing table in one commit."""
    t = store.table(backing)
    inserts = [(None, _backing_row(r, i)) for r, i in contents.with_ids()]
    return _commit(store, t, inserts, (), prov, truncate=True)


def stored_contents(store: Store, backing: str | Table, enabled: EnabledPlan | None = None) -> Relation:
    """Backing rows without the row-id column, carrying their derived ids."""
    t = store.table(backing)
    snap = t.snapshot()
    pos = t.schema.resolve(ROW_ID_COLUMN)
    keep = [i for i in range(len(t.schema)) if i != pos]
    schema = Schema(tuple(t.schema.columns[i] for i in keep))
    rows = [tuple(r[i] for i in keep) for r in snap.rows]
    ids = [V.decode_row_id(r[pos]) for r in snap.rows]
    return Relation(schema, rows, ids)


__all__ = [
    "ApplyResult",
    "PROVENANCE_KEY",
    "Provenance",
    "apply_merge_aggregate",
    "apply_partition_overwrite",
    "apply_replace_where",
    "check_provenance",
    "full_recompute",
    "partition_replacement",
    "read_provenance",
    "stored_contents",
]
