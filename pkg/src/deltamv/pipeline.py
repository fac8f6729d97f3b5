"""View catalog and refresh orchestration.

A pipeline is a set of source tables and materialized views. Views may read
sources and other views. ``Pipeline.run`` refreshes every view in dependency
order, running independent views of one layer concurrently. Each view
refresh follows the same path:

    fingerprint check -> enable -> candidate strategies -> cost choice
      -> delta evaluation -> apply -> cost feedback

Any error on the incremental part of that path falls back to a full
recompute, and the report says so.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import threading
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from deltamv import cost as C
from deltamv import fingerprint as F
from deltamv import values as V
from deltamv.apply import (
    ApplyResult,
    Provenance,
    apply_merge_aggregate,
    apply_partition_overwrite,
    apply_replace_where,
    check_provenance,
    full_recompute,
    partition_replacement,
    read_provenance,
)
from deltamv.deltagen import (
    FullRecompute,
    PartitionOverwrite,
    RefreshContext,
    RowIncremental,
    MERGE_AGGREGATE,
    explain_change_plan,
    select_strategy,
)
from deltamv.enable import META_PREFIX, ROW_ID_COLUMN, EnabledPlan, enable
from deltamv.errors import CycleDetected, NotIncrementalizable, PlanError, RefreshFailed
from deltamv.eval import EvalCache, evaluate, evaluate_changeset
from deltamv.ir import expr as E
from deltamv.ir.plan import Plan, Project, bind, explain_tree, infer_schema, source_tables, strip_schemas
from deltamv.ir.schema import Column, Schema
from deltamv.ir.serde import expr_to_text, plan_from_json, plan_to_json
from deltamv.normalize import NormalizedPlan, normalize
from deltamv.relation import Changeset, Relation
from deltamv.storage import Store

BACKING_PREFIX = "__enzyme_mv_"
STATE_DIR = "_enzyme"
SPEC_FILE = "pipeline.json"
MAX_PARALLELISM = 4
STRATEGY_POLICIES = ("cost", "incremental", "full")

OK = "ok"
FELL_BACK = "fell_back"
FAILED = "failed"


# ---------------------------------------------------------------------------
# pipeline definition
# ---------------------------------------------------------------------------


@dataclass
class SourceDecl:
    name: str
    schema: Schema
    partition_columns: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {"name": self.name, "schema": self.schema.to_json(), "partition_columns": list(self.partition_columns)}

    @classmethod
    def from_json(cls, d: Mapping) -> "SourceDecl":
        return cls(d["name"], Schema.from_json(d["schema"]), tuple(d.get("partition_columns", ())))


@dataclass
class MvDecl:
    name: str
    plan: Plan
    partition_columns: tuple[str, ...] = ()
    schedule: str | None = None
    # original SQL-like text, kept for display when the view was defined that way
    text: str | None = None

    def to_json(self) -> dict:
        d: dict[str, Any] = {"name": self.name, "plan": plan_to_json(strip_schemas(self.plan))}
        if self.partition_columns:
            d["partition_columns"] = list(self.partition_columns)
        if self.schedule:
            d["schedule"] = self.schedule
        if self.text:
            d["sql"] = self.text
        return d

    @classmethod
    def from_json(cls, d: Mapping) -> "MvDecl":
        if "plan" in d:
            plan = plan_from_json(d["plan"])
        elif "sql" in d:
            from deltamv.sql import parse_query

            plan = parse_query(d["sql"])
        else:
            raise PlanError(f"view {d.get('name')!r} needs a 'plan' or 'sql' definition")
        return cls(d["name"], plan, tuple(d.get("partition_columns", ())), d.get("schedule"), d.get("sql"))


@dataclass
class PipelineSpec:
    sources: list[SourceDecl] = field(default_factory=list)
    mvs: list[MvDecl] = field(default_factory=list)

    def source(self, name: str) -> SourceDecl | None:
        return next((s for s in self.sources if s.name == name), None)

    def mv(self, name: str) -> MvDecl:
        for m in self.mvs:
            if m.name == name:
                return m
        raise PlanError(f"unknown view {name!r}")

    def is_mv(self, name: str) -> bool:
        return any(m.name == name for m in self.mvs)

    def dependencies(self) -> dict[str, list[str]]:
        return {m.name: source_tables(m.plan) for m in self.mvs}

    def downstream(self, name: str) -> list[str]:
        return [m for m, deps in self.dependencies().items() if name in deps]

    def validate(self, existing_tables: Iterable[str] = ()) -> None:
        names = [s.name for s in self.sources] + [m.name for m in self.mvs]
        dup = [n for n, k in Counter(names).items() if k > 1]
        if dup:
            raise PlanError(f"duplicate names in pipeline: {sorted(dup)}")
        for n in names:
            if n.startswith(META_PREFIX):
                raise PlanError(f"name {n!r} uses the reserved prefix {META_PREFIX}")
        known = set(names) | set(existing_tables)
        for mv, deps in self.dependencies().items():
            missing = [d for d in deps if d not in known]
            if missing:
                raise PlanError(f"view {mv!r} reads unknown table(s) {missing}")
        plan_run(self)

    def to_json(self) -> dict:
        return {"sources": [s.to_json() for s in self.sources], "mvs": [m.to_json() for m in self.mvs]}

    @classmethod
    def from_json(cls, d: Mapping) -> "PipelineSpec":
        return cls([SourceDecl.from_json(s) for s in d.get("sources", [])], [MvDecl.from_json(m) for m in d.get("mvs", [])])

    @classmethod
    def load(cls, path: str | Path) -> "PipelineSpec":
        return cls.from_json(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.to_json(), indent=1, sort_keys=True))
        tmp.replace(path)


def spec_path(root: str | Path) -> Path:
    return Path(root) / STATE_DIR / SPEC_FILE


def plan_run(spec: PipelineSpec, catalog_state: Any = None) -> list[list[str]]:
    """Topological layers of views; views in one layer are independent."""
    deps = {mv: {d for d in ds if spec.is_mv(d)} for mv, ds in spec.dependencies().items()}
    done: set[str] = set()
    layers: list[list[str]] = []
    while len(done) < len(deps):
        ready = sorted(m for m, ds in deps.items() if m not in done and ds <= done)
        if not ready:
            stuck = sorted(m for m in deps if m not in done)
            raise CycleDetected(f"dependency cycle among views {stuck}")
        layers.append(ready)
        done.update(ready)
    return layers


# ---------------------------------------------------------------------------
# layouts and the view-aware catalog
# ---------------------------------------------------------------------------


@dataclass
class Layout:
    """How one view is stored and maintained."""

    name: str
    normalized: NormalizedPlan
    # evaluated for full recomputes; produces backing rows without the row id
    plan: Plan
    enabled: EnabledPlan | None
    not_incrementalizable: str | None
    backing_name: str
    backing_schema: Schema
    user_schema: Schema
    top_level_projection: tuple[tuple[str, E.Expr], ...]
    sources: list[str]

    def __post_init__(self) -> None:
        self._fns = [E.compile_expr(e, self.backing_schema) for _, e in self.top_level_projection]

    def project(self, rows: Iterable[tuple]) -> list[tuple]:
        fns = self._fns
        return [tuple(f(r) for f in fns) for r in rows]


def _opaque_layout(plan: Plan) -> tuple[Plan, tuple[tuple[str, E.Expr], ...]]:
    cols = plan.schema.columns
    names = [c.name for c in cols]
    if len(set(names)) == len(names):
        return plan, tuple((c.name, E.Col(c.name)) for c in cols)
    items = tuple((f"{META_PREFIX}c{i}_{c.name}", E.Col(f"{c.qualifier}.{c.name}" if c.qualifier else c.name)) for i, c in enumerate(cols))
    return Project(strip_schemas(plan), items), tuple((c.name, E.Col(n)) for c, (n, _) in zip(cols, items))


def _backing_name(name: str, schema: Schema) -> str:
    digest = hashlib.sha256(json.dumps(schema.to_json(), sort_keys=True).encode()).hexdigest()[:8]
    return f"{BACKING_PREFIX}{name}__{digest}"


class PipelineCatalog:
    """Catalog over sources and views; a view reads as its user-visible columns.

    View rows carry their backing table's storage row ids, and a view's
    version is its backing table's version.
    """

    def __init__(self, store: Store, spec: PipelineSpec):
        self.store = store
        self.spec = spec
        self._layouts: dict[str, Layout] = {}
        self._lock = threading.RLock()

    def layout(self, name: str) -> Layout:
        with self._lock:
            lay = self._layouts.get(name)
            if lay is None:
                lay = self._layouts[name] = self._build_layout(name)
            return lay

    def _build_layout(self, name: str) -> Layout:
        decl = self.spec.mv(name)
        norm = normalize(decl.plan, catalog=self.table_schema)
        enabled: EnabledPlan | None
        try:
            enabled = enable(norm)
            reason = None
        except NotIncrementalizable as exc:
            enabled, reason = None, str(exc)
        if enabled is not None:
            plan = enabled.plan
            backing = enabled.backing_schema
            top = enabled.top_level_projection
            user = enabled.user_schema
        else:
            plan, top = _opaque_layout(norm.plan)
            plan = infer_schema(strip_schemas(plan), self.table_schema)
            backing = Schema(tuple(c.unqualified() for c in plan.schema.columns) + (Column(ROW_ID_COLUMN, V.STRING, False),))
            user = Schema(tuple(c.unqualified() for c in norm.plan.schema.columns))
        return Layout(
            name=name,
            normalized=norm,
            plan=plan,
            enabled=enabled,
            not_incrementalizable=reason,
            backing_name=_backing_name(name, backing),
            backing_schema=backing,
            user_schema=user,
            top_level_projection=tuple(top),
            sources=source_tables(norm.plan),
        )

    def physical(self, name: str) -> str:
        return self.layout(name).backing_name if self.spec.is_mv(name) else name

    def has_backing(self, name: str) -> bool:
        return self.store.has_table(self.layout(name).backing_name)

    # catalog protocol --------------------------------------------------

    def table_schema(self, name: str) -> Schema:
        if self.spec.is_mv(name):
            return self.layout(name).user_schema
        return self.store.table_schema(name)

    def current_version(self, name: str) -> int:
        return self.store.current_version(self.physical(name))

    def live_count(self, name: str) -> int:
        return self.store.table(self.physical(name)).live_count()

    def scan(self, name: str, version: int) -> Relation:
        if not self.spec.is_mv(name):
            return self.store.scan(name, version)
        lay = self.layout(name)
        snap = self.store.snapshot(lay.backing_name, version)
        return Relation(lay.user_schema, lay.project(snap.rows), list(snap.ids))

    def changes(self, name: str, start: int, end: int) -> Changeset:
        if not self.spec.is_mv(name):
            return self.store.changes(name, start, end)
        lay = self.layout(name)
        feed = self.store.change_feed(lay.backing_name, start, end)
        rows = lay.project(r for r, _, _ in feed.entries)
        return Changeset(lay.user_schema, [(row, s, i) for row, (_, s, i) in zip(rows, feed.entries)])


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class MvReport:
    mv: str
    outcome: str = OK
    strategy: str = ""
    reason: str = ""
    error: str | None = None
    estimates: dict[str, dict] = field(default_factory=dict)
    rows_read: int = 0
    rows_written: int = 0
    changeset_raw: int = 0
    changeset_effective: int = 0
    wall_ms: float = 0.0
    version: int = 0

    def to_json(self) -> dict:
        return {
            "changeset_effective": self.changeset_effective,
            "changeset_raw": self.changeset_raw,
            "error": self.error,
            "estimates": self.estimates,
            "mv": self.mv,
            "outcome": self.outcome,
            "reason": self.reason,
            "rows_read": self.rows_read,
            "rows_written": self.rows_written,
            "strategy": self.strategy,
            "version": self.version,
            "wall_ms": round(self.wall_ms, 3),
        }


@dataclass
class RefreshReport:
    entries: list[MvReport] = field(default_factory=list)
    batches: list[list[str]] = field(default_factory=list)

    def entry(self, mv: str) -> MvReport:
        for e in self.entries:
            if e.mv == mv:
                return e
        raise KeyError(mv)

    @property
    def ok(self) -> bool:
        return all(e.outcome != FAILED for e in self.entries)

    def to_json(self) -> dict:
        return {"batches": self.batches, "entries": [e.to_json() for e in self.entries], "ok": self.ok}

    def render(self) -> str:
        head = ("mv", "outcome", "strategy", "rows_read", "rows_written", "changes", "ms")
        rows = [
            (e.mv, e.outcome, e.strategy, str(e.rows_read), str(e.rows_written), f"{e.changeset_effective}/{e.changeset_raw}", f"{e.wall_ms:.1f}")
            for e in self.entries
        ]
        widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(head)]
        lines = ["  ".join(h.ljust(w) for h, w in zip(head, widths))]
        lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
        for e in self.entries:
            if e.error:
                lines.append(f"{e.mv}: {e.error}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# refresh
# ---------------------------------------------------------------------------


def _net_size(feed: Changeset) -> int:
    net: Counter = Counter()
    for r, s, i in feed.entries:
        net[(V.canon_row(r), V.canon_id(i))] += s
    return sum(abs(n) for n in net.values())


@dataclass
class _Prepared:
    layout: Layout
    prov: Provenance | None
    history: F.FingerprintHistory
    to_versions: dict[str, int]
    full_reason: str | None
    ctx: RefreshContext | None = None
    stats: C.ChangeStats | None = None


class Pipeline:
    """Refreshes the views of a :class:`PipelineSpec` stored in a :class:`Store`."""

    def __init__(
        self,
        store: Store,
        spec: PipelineSpec,
        history: C.CostHistory | None = None,
        params: C.CostParams | None = None,
        parallelism: int | None = None,
        effectivize: str = "auto",
        fingerprint_versions: Iterable[int] | None = None,
        strategy_policy: str = "cost",
    ):
        """``strategy_policy`` is ``cost`` (let the model decide), or
        ``incremental`` / ``full`` to force that choice whenever it is a
        candidate; the differential harness forces the incremental path."""
        if strategy_policy not in STRATEGY_POLICIES:
            raise ValueError(f"strategy_policy must be one of {STRATEGY_POLICIES}")
        self.store = store
        self.spec = spec
        self.catalog = PipelineCatalog(store, spec)
        self.history = history if history is not None else C.CostHistory.for_root(store.root)
        self.params = params or C.CostParams.load(store.root)
        self.parallelism = parallelism
        self.effectivize = effectivize
        self.fingerprint_versions = tuple(fingerprint_versions) if fingerprint_versions is not None else None
        self.strategy_policy = strategy_policy
        spec.validate(store.table_names())

    @classmethod
    def open(cls, root: str | Path, **kw) -> "Pipeline":
        store = Store(root)
        return cls(store, PipelineSpec.load(spec_path(root)), **kw)

    def create_sources(self) -> None:
        for s in self.spec.sources:
            if not self.store.has_table(s.name):
                self.store.create_table(s.name, s.schema, s.partition_columns)

    @property
    def versions(self) -> tuple[int, ...]:
        return self.fingerprint_versions or F.SUPPORTED_VERSIONS

    # -- reading ---------------------------------------------------------

    def contents(self, name: str) -> Relation:
        """User-visible contents of a view as currently stored."""
        return self.catalog.scan(name, self.catalog.current_version(name))

    def recompute(self, name: str, versions: Mapping[str, int] | None = None, now: dt.datetime | None = None) -> Relation:
        """Evaluate the view's definition from scratch (the correctness oracle).

        Defaults to the source versions and clock recorded by the view's last
        refresh, so the result is what the stored contents should equal.
        """
        lay = self.catalog.layout(name)
        prov = read_provenance(self.store, lay.backing_name) if self.catalog.has_backing(name) else None
        if versions is None:
            versions = prov.source_versions if prov else {s: self.catalog.current_version(s) for s in lay.sources}
        if now is None and prov is not None:
            now = prov.prev_refresh_datetime
        return evaluate(bind(lay.normalized.plan, versions), self.catalog, now)

    # -- planning ----------------------------------------------------------

    def _ensure_backing(self, lay: Layout) -> None:
        if not self.store.has_table(lay.backing_name):
            try:
                self.store.create_table(lay.backing_name, lay.backing_schema, self.spec.mv(lay.name).partition_columns)
            except Exception:
                if not self.store.has_table(lay.backing_name):
                    raise

    def _prepare(self, name: str, now: dt.datetime) -> _Prepared:
        lay = self.catalog.layout(name)
        self._ensure_backing(lay)
        to_versions = {s: self.catalog.current_version(s) for s in lay.sources}
        prov = read_provenance(self.store, lay.backing_name)
        hist = F.FingerprintHistory.from_json(prov.fingerprint_history) if prov else F.FingerprintHistory()
        tables = {s: self.catalog.physical(s) for s in lay.sources}
        reason = None
        if prov is None:
            reason = "first refresh"
        elif not F.check_unchanged(hist, lay.normalized, supported=self.versions):
            reason = "definition changed"
            hist = F.FingerprintHistory(F.current_fingerprints(lay.normalized, supported=self.versions))
        elif prov.source_tables and prov.source_tables != tables:
            reason = "upstream storage replaced"
        elif lay.enabled is None:
            reason = f"not incrementalizable: {lay.not_incrementalizable}"
        elif any(s not in prov.source_versions or prov.source_versions[s] > v for s, v in to_versions.items()):
            reason = "source history unavailable"
        elif prov.prev_refresh_datetime is not None and prov.prev_refresh_datetime > now:
            reason = "refresh clock moved backwards"
        if prov is None:
            hist = F.FingerprintHistory(F.current_fingerprints(lay.normalized, supported=self.versions))
        return _Prepared(lay, prov, hist, to_versions, reason)

    def _context(self, prep: _Prepared, now: dt.datetime) -> None:
        lay, prov = prep.layout, prep.prov
        assert prov is not None
        versions = {s: (prov.source_versions[s], v) for s, v in prep.to_versions.items()}
        sizes: dict[str, tuple[int, int]] = {}
        sources: dict[str, C.SourceStats] = {}
        for s, (a, b) in versions.items():
            feed = self.catalog.changes(s, a, b)
            raw, eff = len(feed), _net_size(feed)
            sizes[s] = (raw, eff)
            sources[s] = C.SourceStats(raw, self.catalog.live_count(s), eff)
        prep.ctx = RefreshContext(
            versions,
            prov.prev_refresh_datetime,
            now,
            captured_params=self._captured(now),
            change_sizes=sizes,
            effectivize=self.effectivize,
        )
        prep.stats = C.ChangeStats(sources, self.store.table(lay.backing_name).live_count(), prep.ctx.clock_moved)

    def _captured(self, now: dt.datetime) -> dict[str, Any]:
        return {"current_timestamp": V.format_timestamp(now)}

    def _choose(self, prep: _Prepared):
        lay = prep.layout
        decl = self.spec.mv(lay.name)
        src_parts = {s: self.spec.source(s).partition_columns for s in lay.sources if self.spec.source(s) is not None}
        chosen, scored = select_strategy(
            lay.enabled,
            prep.ctx,
            prep.stats,
            self.history,
            mv=lay.name,
            mv_partition_columns=decl.partition_columns,
            source_partitions=src_parts,
            downstream=len(self.spec.downstream(lay.name)),
            params=self.params,
            source_plan=lay.plan,
        )
        if self.strategy_policy != "cost":
            want_full = self.strategy_policy == "full"
            forced = [s for s, _ in scored if isinstance(s, FullRecompute) == want_full]
            if forced:
                chosen = forced[0]
        return chosen, scored

    def _provenance(self, prep: _Prepared, now: dt.datetime, strategy) -> Provenance:
        lay = prep.layout
        return Provenance(
            fingerprint_history=prep.history.to_json(),
            source_versions=dict(prep.to_versions),
            prev_refresh_time=V.format_timestamp(now),
            captured_params=self._captured(now),
            strategy=strategy.label,
            cost_feedback_ref=f"{lay.name}:{strategy.label}:{C.shape_digest(strategy, lay.enabled or lay.plan)}",
            source_tables={s: self.catalog.physical(s) for s in lay.sources},
        )

    # -- executing ---------------------------------------------------------

    def _run_incremental(self, prep: _Prepared, strategy, now: dt.datetime, cache: EvalCache, rep: MvReport) -> ApplyResult:
        lay = prep.layout
        ctx = prep.ctx
        assert ctx is not None and lay.enabled is not None
        delta = evaluate_changeset(strategy.change_plan.delta, self.catalog, ctx.prev_refresh_time, now, cache)
        rep.changeset_raw = len(delta)
        rep.changeset_effective = _net_size(delta)
        check_provenance(self.store, lay.backing_name, ctx.from_versions)
        prov = self._provenance(prep, now, strategy)
        if isinstance(strategy, PartitionOverwrite):
            parts, replacement = partition_replacement(strategy.column, delta)
            return apply_partition_overwrite(self.store, lay.backing_name, strategy.column, parts, replacement, prov)
        if strategy.apply_mode == MERGE_AGGREGATE and lay.enabled.merge is not None:
            return apply_merge_aggregate(self.store, lay.backing_name, lay.enabled.merge, delta, prov)
        return apply_replace_where(self.store, lay.backing_name, delta, prov)

    def _run_full(self, prep: _Prepared, now: dt.datetime, cache: EvalCache, strategy=None) -> ApplyResult:
        lay = prep.layout
        contents = evaluate(bind(lay.plan, prep.to_versions), self.catalog, now, cache)
        prov = self._provenance(prep, now, strategy or FullRecompute())
        return full_recompute(self.store, lay.backing_name, contents, prov)

    def _feedback(self, prep: _Prepared, strategy, cache: EvalCache, result: ApplyResult, wall_ms: float) -> None:
        if prep.stats is None:
            return
        plan = prep.layout.enabled or prep.layout.plan
        est = C.raw_estimate(strategy, plan, prep.stats, self.params)
        C.record_feedback(
            self.history,
            prep.layout.name,
            strategy,
            plan,
            {
                "estimated": est.total,
                "units": C.observed_units(cache.rows_in, result.rows_written, self.params),
                "wall_ms": wall_ms,
                "rows_in": cache.total_rows(),
                "rows_out": result.rows_written,
            },
        )

    def refresh(self, name: str, now: dt.datetime | None = None) -> MvReport:
        """Refresh one view; upstream views must already be refreshed."""
        now = V.to_utc_naive(now or dt.datetime.now(dt.timezone.utc))
        rep = MvReport(name)
        t0 = time.perf_counter()
        try:
            prep = self._prepare(name, now)
        except Exception as exc:
            rep.outcome, rep.error = FAILED, f"{type(exc).__name__}: {exc}"
            rep.wall_ms = (time.perf_counter() - t0) * 1000
            return rep
        reason = prep.full_reason
        cache = EvalCache()
        result: ApplyResult | None = None
        strategy: Any = None
        if reason is None:
            try:
                self._context(prep, now)
                strategy, scored = self._choose(prep)
                rep.estimates = {s.label: e.to_json() for s, e in scored}
                if isinstance(strategy, (RowIncremental, PartitionOverwrite)):
                    result = self._run_incremental(prep, strategy, now, cache, rep)
                else:
                    reason = "cost model chose full recompute"
            except Exception as exc:
                rep.outcome, rep.error = FELL_BACK, f"{type(exc).__name__}: {exc}"
                reason = "fallback after incremental failure"
                cache = EvalCache()
                result = None
        if result is None:
            strategy = FullRecompute(reason or "")
            try:
                result = self._run_full(prep, now, cache, strategy)
            except Exception as exc:
                rep.outcome = FAILED
                rep.error = (rep.error + "; " if rep.error else "") + f"{type(exc).__name__}: {exc}"
        rep.strategy = strategy.label
        rep.reason = reason or ""
        rep.rows_read = cache.total_rows()
        rep.wall_ms = (time.perf_counter() - t0) * 1000
        if result is not None:
            rep.rows_written = result.rows_written
            rep.version = result.version
            try:
                self._feedback(prep, strategy, cache, result, rep.wall_ms)
            except Exception:
                pass  # feedback is advisory
        return rep

    def run(self, now: dt.datetime | None = None, only: Iterable[str] | None = None) -> RefreshReport:
        """Refresh every view (or those in ``only``) layer by layer."""
        now = V.to_utc_naive(now or dt.datetime.now(dt.timezone.utc))
        self.create_sources()
        layers = plan_run(self.spec)
        if only is not None:
            keep = set(only)
            layers = [[m for m in layer if m in keep] for layer in layers]
            layers = [layer for layer in layers if layer]
        report = RefreshReport(batches=layers)
        width = max((len(layer) for layer in layers), default=1)
        workers = min(self.parallelism or MAX_PARALLELISM, width, MAX_PARALLELISM)
        for layer in layers:
            if workers <= 1 or len(layer) == 1:
                report.entries.extend(self.refresh(m, now) for m in layer)
            else:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    report.entries.extend(pool.map(lambda m: self.refresh(m, now), layer))
        return report

    def run_or_raise(self, now: dt.datetime | None = None) -> RefreshReport:
        report = self.run(now)
        if not report.ok:
            failed = [e for e in report.entries if e.outcome == FAILED]
            raise RefreshFailed("; ".join(f"{e.mv}: {e.error}" for e in failed))
        return report

    # -- explain -----------------------------------------------------------

    def explain(self, name: str, now: dt.datetime | None = None) -> dict:
        """Everything the next refresh of ``name`` would decide, without applying it."""
        now = V.to_utc_naive(now or dt.datetime.now(dt.timezone.utc))
        self.create_sources()
        lay = self.catalog.layout(name)
        out: dict[str, Any] = {
            "mv": name,
            "normalized": explain_tree(lay.normalized.plan),
            "plan": plan_to_json(strip_schemas(lay.normalized.plan)),
            "fingerprints": [f.to_json() for f in F.current_fingerprints(lay.normalized, supported=self.versions)],
            "backing_table": lay.backing_name,
            "backing_schema": lay.backing_schema.to_json(),
            "top_level_projection": [[n, expr_to_text(e)] for n, e in lay.top_level_projection],
            "rewrites": list(lay.enabled.rewrites) if lay.enabled else [],
            "not_incrementalizable": lay.not_incrementalizable,
        }
        prep = self._prepare(name, now)
        out["full_reason"] = prep.full_reason
        if prep.full_reason is not None:
            out["candidates"] = [{"strategy": "full_recompute"}]
            out["chosen"] = "full_recompute"
            out["change_plan"] = None
            return out
        self._context(prep, now)
        strategy, scored = self._choose(prep)
        out["candidates"] = [
            {"strategy": s.label, "estimate": e.to_json(), "breakdown": e.render()} for s, e in scored
        ]
        out["chosen"] = strategy.label
        # the chosen strategy's change plan, else the first candidate's for reference
        cps = [s.change_plan for s in [strategy] + [s for s, _ in scored] if getattr(s, "change_plan", None) is not None]
        out["change_plan"] = explain_change_plan(cps[0]) if cps else None
        return out


__all__ = [
    "FAILED",
    "FELL_BACK",
    "Layout",
    "MvDecl",
    "MvReport",
    "OK",
    "Pipeline",
    "PipelineCatalog",
    "PipelineSpec",
    "RefreshReport",
    "SourceDecl",
    "plan_run",
    "spec_path",
]
