"""Versioned append-log table store with row tracking, time travel and change feeds.

On disk each table is a directory::

    <root>/<table>/meta.json              schema, partition columns, next row id, version
    <root>/<table>/commits/<version>.jsonl one JSON object per entry + trailing metadata

A commit file is written to a temporary name and renamed into place, so a
version is either fully present or absent. ``meta.json`` is a cache; the
commit files are authoritative when a table is reopened.
"""

from __future__ import annotations

import datetime as dt
import json
import os
import tempfile
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from deltamv import faults
from deltamv import values as V
from deltamv.errors import (
    DuplicateTable,
    InvalidCommit,
    PredicateTypeError,
    SchemaMismatch,
    TypeMismatch,
    UnknownPartitionColumn,
    UnknownTable,
    UnresolvedColumn,
    VersionOutOfRange,
)
from deltamv.ir.expr import Expr, compile_predicate, infer_type
from deltamv.ir.schema import Schema, conform_row
from deltamv.relation import Changeset, Relation, effectivize

__all__ = ["Commit", "Store", "Table", "effectivize"]

_CACHE_SIZE = 8


@dataclass
class Commit:
    version: int
    inserted: list[tuple[int, tuple]] = field(default_factory=list)
    deleted: list[int] = field(default_factory=list)
    # values of the deleted rows, parallel to ``deleted``; feeds the CDF
    deleted_rows: list[tuple] = field(default_factory=list)
    metadata: dict[str, str] = field(default_factory=dict)
    truncate: bool = False


class Table:
    """One versioned table. Obtain through :class:`Store`."""

    def __init__(self, store: "Store", name: str, schema: Schema, partition_columns: Sequence[str]):
        self.store = store
        self.name = name
        self.schema = schema
        self.partition_columns = tuple(partition_columns)
        self.next_row_id = 1
        self.commits: list[Commit] = []
        self._live: dict[int, tuple] = {}
        self._cache: OrderedDict[int, dict[int, tuple]] = OrderedDict()
        self._relations: OrderedDict[int, Relation] = OrderedDict()
        self.lock = threading.RLock()

    def __repr__(self) -> str:
        return f"Table({self.name!r}, v{self.version})"

    @property
    def version(self) -> int:
        return len(self.commits)

    @property
    def path(self) -> Path | None:
        return None if self.store.root is None else self.store.root / self.name

    def live_count(self) -> int:
        return len(self._live)

    # -- state ---------------------------------------------------------------

    def _apply(self, state: dict[int, tuple], c: Commit) -> None:
        if c.truncate:
            state.clear()
        else:
            for rid in c.deleted:
                del state[rid]
        for rid, row in c.inserted:
            state[rid] = row

    def _state_at(self, at: int) -> dict[int, tuple]:
        if at == self.version:
            return self._live
        if at in self._cache:
            self._cache.move_to_end(at)
            return self._cache[at]
        base_v, base = 0, {}
        for v in self._cache:
            if v <= at and v > base_v:
                base_v, base = v, self._cache[v]
        state = dict(base)
        for c in self.commits[base_v:at]:
            self._apply(state, c)
        self._cache[at] = state
        if len(self._cache) > _CACHE_SIZE:
            self._cache.popitem(last=False)
        return state

    def snapshot(self, at: int | None = None) -> Relation:
        with self.lock:
            at = self.version if at is None else at
            if at < 0 or at > self.version:
                raise VersionOutOfRange(f"{self.name}: version {at} outside [0, {self.version}]")
            rel = self._relations.get(at)
            if rel is not None:
                self._relations.move_to_end(at)
                return rel
            state = self._state_at(at)
            rel = Relation(self.schema, list(state.values()), list(state.keys()))
            self._relations[at] = rel
            if len(self._relations) > _CACHE_SIZE:
                self._relations.popitem(last=False)
            return rel

    def change_feed(self, start: int, end: int | None = None) -> Changeset:
        with self.lock:
            end = self.version if end is None else end
            if not (0 <= start <= end <= self.version):
                raise VersionOutOfRange(f"{self.name}: feed ({start}, {end}] outside [0, {self.version}]")
            entries: list = []
            for c in self.commits[start:end]:
                for rid, row in zip(c.deleted, c.deleted_rows):
                    entries.append((row, -1, rid))
                for rid, row in c.inserted:
                    entries.append((row, 1, rid))
            return Changeset(self.schema, entries)

    def feed_size(self, start: int, end: int | None = None) -> int:
        end = self.version if end is None else end
        return sum(len(c.deleted) + len(c.inserted) for c in self.commits[start:end])

    def metadata_at(self, version: int) -> dict[str, str]:
        if version == 0:
            return {}
        return dict(self.commits[version - 1].metadata)

    def latest_metadata(self, key: str) -> tuple[int, str] | None:
        for c in reversed(self.commits):
            if key in c.metadata:
                return c.version, c.metadata[key]
        return None

    def lookup(self, rid: int) -> tuple | None:
        return self._live.get(rid)

    # -- writes --------------------------------------------------------------

    def _record(self, c: Commit, persist: bool = True) -> None:
        if persist and self.store.root is not None:
            self.store._write_commit(self, c)
        self._apply(self._live, c)
        self.commits.append(c)
        for rid, _ in c.inserted:
            if rid >= self.next_row_id:
                self.next_row_id = rid + 1
        if persist and self.store.root is not None:
            self.store._write_meta(self)


class Store:
    """Catalog of versioned tables, optionally persisted under ``root``."""

    def __init__(self, root: str | os.PathLike | None = None):
        self.root = Path(root) if root is not None else None
        self._tables: dict[str, Table] = {}
        self._lock = threading.RLock()
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)

    # -- catalog -------------------------------------------------------------

    def _table_dir(self, name: str) -> Path:
        assert self.root is not None
        return self.root / name

    def has_table(self, name: str) -> bool:
        if name in self._tables:
            return True
        return self.root is not None and (self._table_dir(name) / "meta.json").exists()

    def table_names(self) -> list[str]:
        names = set(self._tables)
        if self.root is not None:
            for p in self.root.iterdir():
                if (p / "meta.json").exists():
                    names.add(p.name)
        return sorted(names)

    def create_table(self, name: str, schema: Schema, partition_columns: Sequence[str] = ()) -> Table:
        with self._lock:
            if not name or "/" in name or name.startswith("."):
                raise InvalidCommit(f"invalid table name {name!r}")
            if self.has_table(name):
                raise DuplicateTable(f"table {name!r} already exists")
            schema.check_unique()
            schema = schema.unqualified()
            for p in partition_columns:
                if p not in schema.names:
                    raise UnknownPartitionColumn(f"partition column {p!r} not in schema of {name!r}")
            table = Table(self, name, schema, partition_columns)
            if self.root is not None:
                (self._table_dir(name) / "commits").mkdir(parents=True, exist_ok=False)
                self._write_meta(table)
            self._tables[name] = table
            return table

    def table(self, name: str | Table) -> Table:
        if isinstance(name, Table):
            return name
        with self._lock:
            t = self._tables.get(name)
            if t is not None:
                return t
            if self.root is None or not (self._table_dir(name) / "meta.json").exists():
                raise UnknownTable(f"unknown table {name!r}")
            t = self._load(name)
            self._tables[name] = t
            return t

    def drop_cached(self, name: str) -> None:
        """Forget the in-memory copy so the next access re-reads disk."""
        with self._lock:
            self._tables.pop(name, None)

    # -- reads ---------------------------------------------------------------

    def table_schema(self, name: str) -> Schema:
        return self.table(name).schema

    def current_version(self, name: str | Table) -> int:
        return self.table(name).version

    def snapshot(self, table: str | Table, at: int | None = None) -> Relation:
        return self.table(table).snapshot(at)

    def change_feed(self, table: str | Table, start: int, end: int | None = None) -> Changeset:
        return self.table(table).change_feed(start, end)

    # Catalog protocol used by the evaluator.
    def scan(self, name: str, version: int) -> Relation:
        return self.snapshot(name, version)

    def changes(self, name: str, start: int, end: int) -> Changeset:
        return self.change_feed(name, start, end)

    # -- writes --------------------------------------------------------------

    def commit(
        self,
        table: str | Table,
        inserts: Iterable[Sequence] = (),
        delete_predicate: Expr | None = None,
        metadata: Mapping[str, str] | None = None,
        updates: Mapping[int, Sequence] | None = None,
        now: dt.datetime | None = None,
    ) -> Commit:
        """Append one version: delete live rows matching the predicate, apply
        in-place ``updates`` (row id -> new values), insert fresh rows."""
        t = self.table(table)
        with t.lock:
            rows = [conform_row(t.schema, r) for r in inserts]
            deleted: list[int] = []
            if delete_predicate is not None:
                try:
                    typ = infer_type(delete_predicate, t.schema)
                except (TypeMismatch, UnresolvedColumn) as exc:
                    raise PredicateTypeError(str(exc)) from exc
                if typ not in ("bool", None):
                    raise PredicateTypeError(f"delete predicate has type {typ}")
                pred = compile_predicate(delete_predicate, t.schema, now)
                deleted = [rid for rid, row in t._live.items() if pred(row)]
            reinserts: list[tuple[int | None, tuple]] = []
            if updates:
                dset = set(deleted)
                for rid, row in updates.items():
                    if rid not in t._live:
                        raise InvalidCommit(f"update of row id {rid} not live in {t.name!r}")
                    if rid in dset:
                        raise InvalidCommit(f"row id {rid} both deleted and updated")
                    deleted.append(rid)
                    reinserts.append((rid, conform_row(t.schema, row)))
            return self.commit_raw(t, reinserts + [(None, r) for r in rows], deleted, metadata)

    def commit_raw(
        self,
        table: str | Table,
        inserts: Sequence[tuple[int | None, tuple]],
        deleted_ids: Sequence[int],
        metadata: Mapping[str, str] | None = None,
        truncate: bool = False,
    ) -> Commit:
        """Low-level commit. Inserted ids must be None (fresh) or reuse an id
        removed by this same commit."""
        t = self.table(table)
        with t.lock:
            meta = {str(k): str(v) for k, v in (metadata or {}).items()}
            if truncate:
                if deleted_ids:
                    raise InvalidCommit("truncate commit cannot list explicit deletes")
                deleted = list(t._live.keys())
            else:
                deleted = list(deleted_ids)
            seen: set[int] = set()
            for rid in deleted:
                if rid not in t._live:
                    raise InvalidCommit(f"delete of row id {rid} not live in {t.name!r}")
                if rid in seen:
                    raise InvalidCommit(f"row id {rid} deleted twice")
                seen.add(rid)
            next_id = t.next_row_id
            final: list[tuple[int, tuple]] = []
            used: set[int] = set()
            for rid, row in inserts:
                row = conform_row(t.schema, row)
                if rid is None:
                    rid = next_id
                    next_id += 1
                elif rid not in seen:
                    raise InvalidCommit(f"inserted row id {rid} is neither fresh nor deleted in this commit")
                if rid in used:
                    raise InvalidCommit(f"row id {rid} inserted twice")
                used.add(rid)
                final.append((rid, row))
            c = Commit(
                version=t.version + 1,
                inserted=final,
                deleted=deleted,
                deleted_rows=[t._live[rid] for rid in deleted],
                metadata=meta,
                truncate=truncate,
            )
            t._record(c)
            t.next_row_id = max(t.next_row_id, next_id)
            return c

    # -- persistence ---------------------------------------------------------

    def _write_meta(self, t: Table) -> None:
        meta = {
            "current_version": t.version,
            "name": t.name,
            "next_row_id": t.next_row_id,
            "partition_columns": list(t.partition_columns),
            "schema": t.schema.to_json(),
        }
        _atomic_write(self._table_dir(t.name) / "meta.json", json.dumps(meta, sort_keys=True, indent=1))

    def _write_commit(self, t: Table, c: Commit) -> None:
        types = t.schema.types
        lines = []
        if c.truncate:
            lines.append(json.dumps({"op": "truncate"}))
        else:
            for rid, row in zip(c.deleted, c.deleted_rows):
                lines.append(json.dumps({"op": "delete", "row_id": rid, "values": _encode_row(row, types)}))
        for rid, row in c.inserted:
            lines.append(json.dumps({"op": "insert", "row_id": rid, "values": _encode_row(row, types)}))
        lines.append(json.dumps({"metadata": c.metadata}, sort_keys=True))
        path = self._table_dir(t.name) / "commits" / f"{c.version}.jsonl"
        if path.exists():
            raise InvalidCommit(f"commit file {path} already exists")
        _atomic_write(path, "\n".join(lines) + "\n", crash_point=faults.STORAGE_COMMIT_WRITE)

    def _load(self, name: str) -> Table:
        d = self._table_dir(name)
        meta = json.loads((d / "meta.json").read_text())
        schema = Schema.from_json(meta["schema"])
        t = Table(self, name, schema, meta.get("partition_columns", []))
        types = schema.types
        v = 1
        while True:
            path = d / "commits" / f"{v}.jsonl"
            if not path.exists():
                break
            c = Commit(version=v)
            for line in path.read_text().splitlines():
                if not line.strip():
                    continue
                obj = json.loads(line)
                if "metadata" in obj:
                    c.metadata = obj["metadata"]
                elif obj["op"] == "truncate":
                    c.truncate = True
                    c.deleted = list(t._live.keys())
                    c.deleted_rows = list(t._live.values())
                elif obj["op"] == "delete":
                    c.deleted.append(obj["row_id"])
                    c.deleted_rows.append(_decode_row(obj["values"], types))
                else:
                    c.inserted.append((obj["row_id"], _decode_row(obj["values"], types)))
            t._record(c, persist=False)
            v += 1
        t.next_row_id = max(t.next_row_id, int(meta.get("next_row_id", 1)))
        return t


def _encode_row(row: tuple, types: list[str]) -> list:
    return [V.to_json_value(v, t) for v, t in zip(row, types)]


def _decode_row(values: list, types: list[str]) -> tuple:
    return tuple(V.from_json_value(v, t) for v, t in zip(values, types))


def _atomic_write(path: Path, text: str, crash_point: str | None = None) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        if crash_point is not None:
            faults.check(crash_point)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def coerce_row(schema: Schema, values: Sequence[Any] | Mapping[str, Any]) -> tuple:
    """Loader helper: coerce CSV/JSON scalars into schema types."""
    if isinstance(values, Mapping):
        missing = [n for n in schema.names if n not in values]
        if missing:
            raise SchemaMismatch(f"missing columns {missing}")
        values = [values[n] for n in schema.names]
    if len(values) != len(schema.columns):
        raise SchemaMismatch(f"row arity {len(values)} != {len(schema.columns)}")
    try:
        return tuple(V.coerce(v, c.type) for v, c in zip(values, schema.columns))
    except (TypeError, ValueError, OverflowError) as exc:
        raise SchemaMismatch(str(exc)) from exc
