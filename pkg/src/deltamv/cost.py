"""Refresh cost model: operator-level estimates grounded by execution history.

Terms, in abstract units proportional to rows processed:

    scan       alpha * rows read
    join       beta * (|L| + |R|) + gamma * |output|
    aggregate  delta * input + gamma * groups        (windows and distinct too)
    write      omega * rows written
    effectivize epsilon * rows netted
    overhead   c0 per refresh

Incremental estimates charge state-side subplans in proportion to the
fraction of keys a change touches, so a change to every row costs at least
as much as recomputing. When the history holds executions of the same
(view, strategy, plan shape), the estimate is scaled by the median observed
over estimated ratio.
"""

from __future__ import annotations

import hashlib
import json
import statistics
import threading
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from deltamv.enable import EnabledPlan
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
)
from deltamv.ir.expr import has_time_function

HISTORY_MATCHED = "history_matched"
DEFAULT_PARAMETERS = "default_parameters"
HISTORY_CAPACITY = 20
# share of a temporal window assumed to move between refreshes
WINDOW_SHIFT = 0.05


@dataclass(frozen=True)
class CostParams:
    alpha: float = 1.0
    beta: float = 1.2
    gamma: float = 1.0
    delta: float = 1.5
    omega: float = 2.0
    epsilon: float = 0.5
    c0: float = 10.0

    @classmethod
    def load(cls, root: str | Path | None) -> "CostParams":
        if root is None:
            return cls()
        path = Path(root) / "_enzyme" / "cost_params.json"
        if not path.exists():
            return cls()
        return cls(**json.loads(path.read_text()))

    def save(self, root: str | Path) -> Path:
        path = Path(root) / "_enzyme" / "cost_params.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(asdict(self), indent=1, sort_keys=True))
        return path


@dataclass(frozen=True)
class SourceStats:
    rows_changed: int
    rows_total: int
    effectivized_estimate: int

    def __post_init__(self) -> None:
        if self.rows_changed < 0 or self.rows_total < 0:
            raise ValueError("row counts must be non-negative")
        if self.effectivized_estimate > self.rows_changed:
            raise ValueError("effectivized estimate exceeds raw change count")


@dataclass
class ChangeStats:
    sources: dict[str, SourceStats] = field(default_factory=dict)
    # current row count of the view, when known
    mv_rows: int | None = None
    # whether the refresh clock advanced; clock-bound windows only shift if it did
    clock_moved: bool = True

    def changed(self, table: str) -> int:
        s = self.sources.get(table)
        return s.rows_changed if s else 0

    def total(self, table: str) -> int:
        s = self.sources.get(table)
        return s.rows_total if s else 0


@dataclass
class CostEstimate:
    breakdown: dict[str, float]
    provenance: str = DEFAULT_PARAMETERS
    # rows the view holds afterwards and rows of change it emits downstream
    output_rows: float = 0.0
    feed_rows: float = 0.0

    @property
    def total(self) -> float:
        return sum(self.breakdown.values())

    def render(self) -> str:
        parts = [f"{k}={v:.1f}" for k, v in self.breakdown.items()]
        return f"{self.total:.1f} ({', '.join(parts)}) [{self.provenance}]"

    def to_json(self) -> dict:
        return {
            "breakdown": dict(self.breakdown),
            "feed_rows": self.feed_rows,
            "output_rows": self.output_rows,
            "provenance": self.provenance,
            "total": self.total,
        }


# ---------------------------------------------------------------------------
# history
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Observation:
    mv: str
    strategy: str
    shape: str
    estimated: float
    observed: float
    wall_ms: float = 0.0
    rows_in: int = 0
    rows_out: int = 0


class CostHistory:
    """Last ``capacity`` observations per (view, strategy, shape).

    With a path, observations are appended to a JSON-lines file; the file
    keeps everything and the in-memory view keeps the newest ``capacity``.
    """

    def __init__(self, path: str | Path | None = None, capacity: int = HISTORY_CAPACITY):
        self.path = Path(path) if path is not None else None
        self.capacity = capacity
        self._entries: dict[tuple[str, str, str], deque] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            for line in self.path.read_text().splitlines():
                if line.strip():
                    self._remember(Observation(**json.loads(line)))

    @classmethod
    def for_root(cls, root: str | Path | None, capacity: int = HISTORY_CAPACITY) -> "CostHistory":
        if root is None:
            return cls(None, capacity)
        return cls(Path(root) / "_enzyme" / "cost_history.jsonl", capacity)

    def _remember(self, obs: Observation) -> None:
        key = (obs.mv, obs.strategy, obs.shape)
        q = self._entries.get(key)
        if q is None:
            q = self._entries[key] = deque(maxlen=self.capacity)
        q.append(obs)

    def append(self, obs: Observation) -> None:
        with self._lock:
            self._remember(obs)
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a") as fh:
                    fh.write(json.dumps(asdict(obs), sort_keys=True) + "\n")

    def lookup(self, mv: str, strategy: str, shape: str) -> list[Observation]:
        return list(self._entries.get((mv, strategy, shape), ()))

    def __len__(self) -> int:
        return sum(len(q) for q in self._entries.values())


# ---------------------------------------------------------------------------
# plan skeletons
# ---------------------------------------------------------------------------


def _skeleton(p: Plan) -> list:
    return [p.kind, len(p.children())] + [_skeleton(k) for k in p.children()]


def _delta_skeleton(d) -> list:
    return [d.rule, len(d.children())] + [_delta_skeleton(k) for k in d.children()]


def shape_digest(strategy, plan: EnabledPlan | Plan | None) -> str:
    """Digest of operator kinds and arities only; literals never matter."""
    cp = getattr(strategy, "change_plan", None)
    if cp is not None:
        body: Any = _delta_skeleton(cp.delta)
    else:
        p = plan.plan if isinstance(plan, EnabledPlan) else plan
        body = _skeleton(p) if p is not None else []
    text = json.dumps([strategy.label, body], separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------------


class _Model:
    def __init__(self, stats: ChangeStats, params: CostParams, root: Plan):
        self.stats = stats
        self.p = params
        self.root = root
        self._card: dict[int, float] = {}

    def card(self, p: Plan) -> float:
        key = id(p)
        if key in self._card:
            return self._card[key]
        if isinstance(p, Scan):
            n = float(self.stats.total(p.table))
        elif isinstance(p, (Filter, Project, KeyFilter, Window)):
            n = self.card(p.children()[0])
        elif isinstance(p, Join):
            n = max(self.card(p.left), self.card(p.right))
        elif isinstance(p, UnionAll):
            n = sum(self.card(k) for k in p.inputs)
        elif isinstance(p, (Aggregate, Distinct)):
            n = self.groups(p)
        else:
            n = self.card(p.children()[0]) if p.children() else 0.0
        self._card[key] = n
        return n

    def groups(self, p: Plan) -> float:
        if p is self.root and self.stats.mv_rows is not None:
            return float(self.stats.mv_rows)
        if isinstance(p, Aggregate) and not p.keys:
            return 1.0
        n = self.card(p.children()[0])
        return n if isinstance(p, Distinct) else max(1.0, n / 10.0) if n else 0.0

    # full evaluation ------------------------------------------------------

    def full(self, p: Plan, out: dict[str, float], scale: float = 1.0) -> None:
        pr = self.p
        for k in p.children():
            self.full(k, out, scale)
        if isinstance(p, Scan):
            _add(out, "scan", pr.alpha * self.card(p) * scale)
        elif isinstance(p, Join):
            _add(out, "join", (pr.beta * (self.card(p.left) + self.card(p.right)) + pr.gamma * self.card(p)) * scale)
        elif isinstance(p, (Aggregate, Distinct)):
            _add(out, "aggregate", (pr.delta * self.card(p.children()[0]) + pr.gamma * self.card(p)) * scale)
        elif isinstance(p, Window):
            n = self.card(p.child)
            _add(out, "window", (pr.delta * n + pr.gamma * n) * scale)

    # incremental -----------------------------------------------------------

    def changed_rows(self, p: Plan) -> float:
        return float(sum(self.stats.changed(s.table) for s in _scans(p)))

    def delta(self, p: Plan, out: dict[str, float]) -> float:
        """Add the cost of computing ``p``'s delta; return its estimated size."""
        pr = self.p
        if not self.changed_rows(p) and not (self.stats.clock_moved and _has_temporal(p)):
            return 0.0
        if isinstance(p, Scan):
            d = float(self.stats.changed(p.table))
            _add(out, "scan", pr.alpha * d)
            return d
        if isinstance(p, Filter):
            d = self.delta(p.child, out)
            if self.stats.clock_moved and has_time_function(p.predicate):
                self.full(p.child, out)
                d += WINDOW_SHIFT * self.card(p.child)
            return d
        if isinstance(p, (Project, KeyFilter)):
            return self.delta(p.children()[0], out)
        if isinstance(p, UnionAll):
            return sum(self.delta(k, out) for k in p.inputs)
        if isinstance(p, Join):
            return self.join(p, out)
        if isinstance(p, (Aggregate, Window, Distinct)):
            child = p.children()[0]
            dc = self.delta(child, out)
            frac = _frac(dc, self.card(child))
            groups = self.card(p) if not isinstance(p, Window) else self.card(child)
            for _ in range(2):  # pre and post
                self.full(child, out, frac)
                kind = "window" if isinstance(p, Window) else "aggregate"
                _add(out, kind, pr.delta * self.card(child) * frac + pr.gamma * groups * frac)
            return 2.0 * groups * frac
        return self.changed_rows(p)

    def join(self, p: Join, out: dict[str, float]) -> float:
        pr = self.p
        nl, nr, nj = self.card(p.left), self.card(p.right), self.card(p)
        d = 0.0
        dl = self.delta(p.left, out)
        dr = self.delta(p.right, out)
        for dx, nx, other, nother in ((dl, nl, p.right, nr), (dr, nr, p.left, nl)):
            if not dx:
                continue
            frac = _frac(dx, nx)
            self.full(other, out, frac)
            produced = dx * max(1.0, nj / nx if nx else 1.0)
            _add(out, "join", pr.beta * (dx + nother * frac) + pr.gamma * produced)
            d += produced
        if p.join_kind != "inner":
            frac = _frac(dl + dr, nl + nr)
            for _ in range(2):
                self.full(p.left, out, frac)
                self.full(p.right, out, frac)
                _add(out, "join", pr.beta * (nl + nr) * frac + pr.gamma * nj * frac)
            d += 2.0 * nj * frac
        return d


def _frac(changed: float, total: float) -> float:
    if changed <= 0:
        return 0.0
    if total <= 0:
        return 1.0
    return min(1.0, changed / total)


def _add(out: dict[str, float], key: str, value: float) -> None:
    if value:
        out[key] = out.get(key, 0.0) + value


def _scans(p: Plan) -> list[Scan]:
    out = []
    stack = [p]
    while stack:
        n = stack.pop()
        if isinstance(n, Scan):
            out.append(n)
        stack.extend(n.children())
    return out


def _has_temporal(p: Plan) -> bool:
    stack = [p]
    while stack:
        n = stack.pop()
        if isinstance(n, Filter) and has_time_function(n.predicate):
            return True
        stack.extend(n.children())
    return False


def raw_estimate(strategy, plan: EnabledPlan | Plan, stats: ChangeStats, params: CostParams | None = None) -> CostEstimate:
    """Estimate from the model alone (default parameters, no history)."""
    pr = params or CostParams()
    root = plan.plan if isinstance(plan, EnabledPlan) else plan
    m = _Model(stats, pr, root)
    out: dict[str, float] = {"overhead": pr.c0}
    n_out = m.card(root)
    kind = strategy.kind
    if kind == "full_recompute":
        m.full(root, out)
        _add(out, "write", pr.omega * n_out)
        return CostEstimate(out, DEFAULT_PARAMETERS, n_out, 2.0 * n_out)
    if kind == "partition_overwrite":
        src = strategy.source
        frac = _frac(stats.changed(src), stats.total(src))
        _add(out, "scan", pr.alpha * stats.changed(src))
        m.full(root, out, frac)
        _add(out, "write", pr.omega * 2.0 * n_out * frac)
        return CostEstimate(out, DEFAULT_PARAMETERS, n_out, 2.0 * n_out * frac)
    mode = getattr(strategy, "apply_mode", "replace_where")
    if mode == "merge_aggregate" and isinstance(root, Aggregate):
        dc = m.delta(root.child, out)
        touched = min(m.card(root), dc) if root.keys else (1.0 if dc else 0.0)
        _add(out, "aggregate", pr.delta * dc + pr.gamma * touched)
        # MERGE INTO matches adjustments against stored groups
        _add(out, "join", pr.beta * 2.0 * touched)
        _add(out, "write", pr.omega * touched)
        return CostEstimate(out, DEFAULT_PARAMETERS, n_out, 2.0 * touched)
    d = m.delta(root, out)
    _add(out, "effectivize", pr.epsilon * d)
    _add(out, "write", pr.omega * d)
    return CostEstimate(out, DEFAULT_PARAMETERS, n_out, d)


def estimate(
    strategy,
    plan: EnabledPlan | Plan,
    stats: ChangeStats,
    history: CostHistory | None = None,
    mv: str = "",
    params: CostParams | None = None,
) -> CostEstimate:
    est = raw_estimate(strategy, plan, stats, params)
    if history is None:
        return est
    past = history.lookup(mv, strategy.label, shape_digest(strategy, plan))
    ratios = [o.observed / o.estimated for o in past if o.estimated > 0]
    if not ratios:
        return est
    k = statistics.median(ratios)
    return CostEstimate({n: v * k for n, v in est.breakdown.items()}, HISTORY_MATCHED, est.output_rows, est.feed_rows)


def downstream_penalty(est: CostEstimate, downstream: int | Sequence, params: CostParams | None = None) -> float:
    """Cost consumers pay to read the change feed this refresh produces."""
    n = downstream if isinstance(downstream, int) else len(downstream)
    return n * (params or CostParams()).alpha * est.feed_rows


def choose(mv: str, candidates: Sequence[tuple[Any, CostEstimate]], downstream: int | Sequence = 0, stats=None, params=None):
    """Minimize own cost plus downstream feed cost; ties go to incremental."""
    if not candidates:
        raise ValueError("no candidate strategies")

    def key(item):
        strategy, est = item
        return (est.total + downstream_penalty(est, downstream, params), strategy.kind == "full_recompute")

    return min(candidates, key=key)[0]


def observed_units(rows_in: Mapping[str, int], rows_written: int, params: CostParams | None = None) -> float:
    """Work actually done, in the estimate's units."""
    pr = params or CostParams()
    units = pr.c0 + pr.omega * rows_written
    units += pr.alpha * (rows_in.get("scan", 0) + rows_in.get("change_feed", 0))
    units += pr.beta * rows_in.get("join", 0)
    units += pr.delta * (rows_in.get("aggregate", 0) + rows_in.get("distinct", 0) + rows_in.get("window", 0))
    return units


def record_feedback(history: CostHistory, mv: str, strategy, plan, observed: Mapping[str, Any]) -> Observation:
    """Append one execution; later estimates for the same shape use it.

    ``observed`` holds ``estimated`` (the unscaled model estimate), ``units``
    (see :func:`observed_units`) and optionally wall time and cardinalities.
    """
    obs = Observation(
        mv=mv,
        strategy=strategy.label,
        shape=shape_digest(strategy, plan),
        estimated=float(observed["estimated"]),
        observed=float(observed["units"]),
        wall_ms=float(observed.get("wall_ms", 0.0)),
        rows_in=int(observed.get("rows_in", 0)),
        rows_out=int(observed.get("rows_out", 0)),
    )
    history.append(obs)
    return obs


__all__ = [
    "ChangeStats",
    "CostEstimate",
    "CostHistory",
    "CostParams",
    "DEFAULT_PARAMETERS",
    "HISTORY_MATCHED",
    "Observation",
    "SourceStats",
    "choose",
    "downstream_penalty",
    "estimate",
    "observed_units",
    "raw_estimate",
    "record_feedback",
    "shape_digest",
]
