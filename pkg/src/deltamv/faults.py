"""Named fault-injection points used by the fallback and atomicity tests."""

from __future__ import annotations

import contextlib
import threading
from typing import Iterator

# Points on the incremental refresh path. Each is checked exactly where the
# name says; a fault raised there must be absorbed by the full-recompute fallback.
STRATEGY_SELECTION = "strategy_selection"
PLAN_GENERATION = "plan_generation"
DELTA_EVALUATION = "delta_evaluation"
EFFECTIVIZATION = "effectivization"
APPLY_COMMIT = "apply_commit"

INCREMENTAL_POINTS = (
    STRATEGY_SELECTION,
    PLAN_GENERATION,
    DELTA_EVALUATION,
    EFFECTIVIZATION,
    APPLY_COMMIT,
)

# Crash between the delete and insert phases of an apply (atomicity test).
APPLY_BETWEEN_PHASES = "apply_between_phases"
# Crash after a commit file is written but before it is renamed into place.
STORAGE_COMMIT_WRITE = "storage_commit_write"
# Harness self-test: effectivization that forgets to cancel pairs.
BROKEN_EFFECTIVIZE = "broken_effectivize"

_active: dict[str, int] = {}
_lock = threading.Lock()


class InjectedFault(RuntimeError):
    pass


class SimulatedCrash(BaseException):
    """Process death stand-in; deliberately not an Exception so nothing catches it."""


@contextlib.contextmanager
def inject(point: str, times: int = -1) -> Iterator[None]:
    """Activate ``point``; ``times`` < 0 means fire on every check."""
    with _lock:
        _active[point] = times
    try:
        yield
    finally:
        with _lock:
            _active.pop(point, None)


def active(point: str) -> bool:
    return point in _active


def check(point: str) -> None:
    if point not in _active:
        return
    with _lock:
        remaining = _active.get(point)
        if remaining is None:
            return
        if remaining == 0:
            return
        if remaining > 0:
            _active[point] = remaining - 1
    if point in (APPLY_BETWEEN_PHASES, STORAGE_COMMIT_WRITE):
        raise SimulatedCrash(point)
    raise InjectedFault(point)
