"""Scalar types, canonical value encodings and orderings.

Every component that groups, sorts or serializes values goes through this
module so that null handling, float normalization and JSON encodings agree.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from typing import Any, Iterable

INT64 = "int64"
FLOAT64 = "float64"
STRING = "string"
BOOL = "bool"
DATE = "date"
TIMESTAMP = "timestamp"
# Only literals carry intervals; no column may be declared with it.
INTERVAL = "interval"

COLUMN_TYPES = (INT64, FLOAT64, STRING, BOOL, DATE, TIMESTAMP)
NUMERIC_TYPES = (INT64, FLOAT64)

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1


class _CanonicalNaN:
    """Single stand-in for every NaN so that grouping treats them as equal."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "NaN"

    def __hash__(self) -> int:
        return hash("__canonical_nan__")

    def __eq__(self, other: object) -> bool:
        return isinstance(other, _CanonicalNaN)


NAN = _CanonicalNaN()


def canon(value: Any) -> Any:
    """Canonical grouping form of a scalar: -0.0 -> 0.0, every NaN -> NAN."""
    if type(value) is float:
        if value != value:
            return NAN
        if value == 0.0:
            return 0.0
    return value


def canon_row(row: Iterable[Any]) -> tuple:
    return tuple(canon(v) for v in row)


def canon_id(rid: Any) -> Any:
    if isinstance(rid, tuple):
        return tuple(canon_id(x) for x in rid)
    return canon(rid)


def sort_key(value: Any) -> tuple:
    """Total order over scalars and nested tuples; null sorts first, NaN last."""
    if value is None:
        return (0,)
    if isinstance(value, tuple):
        return (3, tuple(sort_key(v) for v in value))
    if isinstance(value, _CanonicalNaN) or (type(value) is float and value != value):
        return (2,)
    if isinstance(value, bool):
        return (1, int(value))
    return (1, value)


def row_sort_key(row: Iterable[Any]) -> tuple:
    return tuple(sort_key(v) for v in row)


def check_int(value: int) -> int:
    if value < INT64_MIN or value > INT64_MAX:
        raise OverflowError(f"int64 overflow: {value}")
    return value


def python_type_matches(value: Any, typ: str) -> bool:
    if value is None:
        return True
    if typ == INT64:
        return isinstance(value, int) and not isinstance(value, bool)
    if typ == FLOAT64:
        return isinstance(value, float)
    if typ == STRING:
        return isinstance(value, str)
    if typ == BOOL:
        return isinstance(value, bool)
    if typ == TIMESTAMP:
        return isinstance(value, dt.datetime)
    if typ == DATE:
        return isinstance(value, dt.date) and not isinstance(value, dt.datetime)
    if typ == INTERVAL:
        return isinstance(value, dt.timedelta)
    return False


def coerce(value: Any, typ: str) -> Any:
    """Coerce a loosely typed input value (CSV cell, JSON scalar) to ``typ``."""
    if value is None or value == "" and typ != STRING:
        return None
    if typ == INT64:
        if isinstance(value, bool):
            raise TypeError("bool is not int64")
        return check_int(int(value))
    if typ == FLOAT64:
        return float(value)
    if typ == STRING:
        return str(value)
    if typ == BOOL:
        if isinstance(value, str):
            low = value.strip().lower()
            if low in ("true", "t", "1"):
                return True
            if low in ("false", "f", "0"):
                return False
            raise ValueError(f"not a bool: {value!r}")
        return bool(value)
    if typ == DATE:
        if isinstance(value, dt.datetime):
            return value.date()
        if isinstance(value, dt.date):
            return value
        return dt.date.fromisoformat(str(value))
    if typ == TIMESTAMP:
        if isinstance(value, dt.datetime):
            return to_utc_naive(value)
        return parse_timestamp(str(value))
    raise ValueError(f"unknown type {typ}")


def to_utc_naive(ts: dt.datetime) -> dt.datetime:
    if ts.tzinfo is not None:
        ts = ts.astimezone(dt.timezone.utc).replace(tzinfo=None)
    return ts


def parse_timestamp(text: str) -> dt.datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return to_utc_naive(dt.datetime.fromisoformat(text))


def format_timestamp(ts: dt.datetime) -> str:
    ts = to_utc_naive(ts)
    return ts.isoformat() + "Z"


def to_json_value(value: Any, typ: str) -> Any:
    if value is None:
        return None
    if typ == DATE:
        return value.isoformat()
    if typ == TIMESTAMP:
        return format_timestamp(value)
    return value


def from_json_value(value: Any, typ: str) -> Any:
    if value is None:
        return None
    if typ == DATE:
        return dt.date.fromisoformat(value)
    if typ == TIMESTAMP:
        return parse_timestamp(value)
    if typ == FLOAT64:
        return float(value)
    return value


def encode_tagged(value: Any) -> Any:
    """Self-describing JSON form of a scalar or nested tuple (row ids, literals)."""
    if value is None:
        return None
    if isinstance(value, tuple):
        return [encode_tagged(v) for v in value]
    if isinstance(value, _CanonicalNaN):
        return ["f", "nan"]
    if isinstance(value, bool):
        return ["b", value]
    if isinstance(value, int):
        return ["i", value]
    if isinstance(value, float):
        if value != value:
            return ["f", "nan"]
        return ["f", repr(canon(value))]
    if isinstance(value, str):
        return ["s", value]
    if isinstance(value, dt.datetime):
        return ["t", format_timestamp(value)]
    if isinstance(value, dt.date):
        return ["d", value.isoformat()]
    if isinstance(value, dt.timedelta):
        return ["v", value.days, value.seconds, value.microseconds]
    raise TypeError(f"cannot encode {value!r}")


_TAGS = {"b", "i", "f", "s", "t", "d", "v"}


def decode_tagged(obj: Any) -> Any:
    if obj is None:
        return None
    if isinstance(obj, list) and obj and isinstance(obj[0], str) and obj[0] in _TAGS and (
        len(obj) == 2 or obj[0] == "v"
    ):
        tag = obj[0]
        if tag == "b":
            return bool(obj[1])
        if tag == "i":
            return int(obj[1])
        if tag == "f":
            return float(obj[1])
        if tag == "s":
            return obj[1]
        if tag == "t":
            return parse_timestamp(obj[1])
        if tag == "d":
            return dt.date.fromisoformat(obj[1])
        return dt.timedelta(days=obj[1], seconds=obj[2], microseconds=obj[3])
    if isinstance(obj, list):
        return tuple(decode_tagged(v) for v in obj)
    raise TypeError(f"cannot decode {obj!r}")


def encode_row_id(rid: Any) -> str:
    """Stable text form of a derived row id, used for the hidden backing column."""
    if isinstance(rid, int) and not isinstance(rid, bool):
        return str(rid)
    return json.dumps(encode_tagged(rid), separators=(",", ":"))


def decode_row_id(text: str) -> Any:
    if text and (text[0].isdigit() or text[0] == "-"):
        return int(text)
    return decode_tagged(json.loads(text))


def values_close(a: Any, b: Any, rel_tol: float) -> bool:
    if type(a) is float and type(b) is float:
        if a != a and b != b:
            return True
        if math.isinf(a) or math.isinf(b):
            return a == b
        return math.isclose(a, b, rel_tol=rel_tol, abs_tol=0.0)
    return canon(a) == canon(b)
