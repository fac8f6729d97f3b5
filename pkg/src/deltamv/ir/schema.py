from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from deltamv import values as V
from deltamv.errors import PlanError, SchemaMismatch, UnresolvedColumn


@dataclass(frozen=True)
class Column:
    name: str
    type: str
    nullable: bool = True
    # Table alias the column came from; plans use it to resolve ``alias.name``.
    qualifier: str | None = None

    def unqualified(self) -> "Column":
        return replace(self, qualifier=None)


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        for col in self.columns:
            if col.type not in V.COLUMN_TYPES:
                raise SchemaMismatch(f"column {col.name!r} has unsupported type {col.type!r}")

    @classmethod
    def of(cls, *cols: tuple | Column) -> "Schema":
        out = []
        for c in cols:
            if isinstance(c, Column):
                out.append(c)
            else:
                out.append(Column(*c))
        return cls(tuple(out))

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def types(self) -> list[str]:
        return [c.type for c in self.columns]

    def __len__(self) -> int:
        return len(self.columns)

    def __iter__(self):
        return iter(self.columns)

    def check_unique(self) -> None:
        seen = set()
        for c in self.columns:
            if c.name in seen:
                raise SchemaMismatch(f"duplicate column name {c.name!r}")
            seen.add(c.name)

    def qualified(self, qualifier: str | None) -> "Schema":
        return Schema(tuple(replace(c, qualifier=qualifier) for c in self.columns))

    def unqualified(self) -> "Schema":
        return Schema(tuple(c.unqualified() for c in self.columns))

    def resolve(self, ref: str) -> int:
        """Index of the column ``ref`` names (``name`` or ``qualifier.name``)."""
        hits = [i for i, c in enumerate(self.columns) if c.name == ref and c.qualifier is None]
        if not hits:
            hits = [i for i, c in enumerate(self.columns) if c.name == ref]
        if not hits and "." in ref:
            qual, name = ref.split(".", 1)
            hits = [i for i, c in enumerate(self.columns) if c.qualifier == qual and c.name == name]
        if len(hits) == 1:
            return hits[0]
        if not hits:
            raise UnresolvedColumn(f"column {ref!r} not found in {self.describe()}")
        raise UnresolvedColumn(f"column reference {ref!r} is ambiguous in {self.describe()}")

    def describe(self) -> str:
        parts = []
        for c in self.columns:
            q = f"{c.qualifier}." if c.qualifier else ""
            parts.append(f"{q}{c.name}:{c.type}")
        return "(" + ", ".join(parts) + ")"

    def to_json(self) -> list[dict]:
        return [{"name": c.name, "nullable": c.nullable, "type": c.type} for c in self.columns]

    @classmethod
    def from_json(cls, data: Iterable[dict]) -> "Schema":
        return cls(tuple(Column(d["name"], d["type"], d.get("nullable", True)) for d in data))


def parse_schema_text(text: str) -> Schema:
    """``"a:int64, b:string not null"`` -> Schema."""
    cols = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" not in part:
            raise PlanError(f"bad column spec {part!r}; expected name:type")
        name, rest = part.split(":", 1)
        tokens = rest.split()
        nullable = True
        if len(tokens) >= 3 and tokens[1].lower() == "not" and tokens[2].lower() == "null":
            nullable = False
        cols.append(Column(name.strip(), tokens[0].strip(), nullable))
    schema = Schema(tuple(cols))
    schema.check_unique()
    return schema


def conform_row(schema: Schema, row: Sequence) -> tuple:
    if len(row) != len(schema.columns):
        raise SchemaMismatch(f"row arity {len(row)} != schema arity {len(schema.columns)}")
    for value, col in zip(row, schema.columns):
        if value is None:
            if not col.nullable:
                raise SchemaMismatch(f"null in non-nullable column {col.name!r}")
        elif not V.python_type_matches(value, col.type):
            raise SchemaMismatch(f"value {value!r} does not match {col.name}:{col.type}")
    return tuple(row)
