"""Desk-scale refresh benchmark.

A synthetic brokerage workload stands in for the TPC-DI pipeline: customers
and accounts change CDC-style, trades and weekly market quotes are append
only, and a prospect list is re-supplied every batch so almost every row's
last-seen date moves. Four views sit on top:

``regional_avg``
    average trade value per region, filtered to three regions
``market_52wk``
    52-week high and low for every (symbol, week)
``prospect_last_seen``
    the prospect list with a derived income band; rewritten nearly whole
``dim_account``
    accounts enriched with their owner's tier and region

Every batch is applied identically to three in-memory stores. One refreshes
with the incremental path forced, one with full recompute forced and one
lets the cost model choose, so each refresh is timed against a shadow copy
that saw exactly the same history.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import random
import statistics
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

from deltamv import values as V
from deltamv.cost import CostHistory
from deltamv.errors import Mismatch
from deltamv.ir import expr as E
from deltamv.ir.schema import Schema
from deltamv.pipeline import MvDecl, Pipeline, PipelineSpec, SourceDecl
from deltamv.relation import bags_equal, describe_bag_diff
from deltamv.sql import parse_query
from deltamv.storage import Store

SCALES = {
    "tiny": dict(customers=400, accounts=800, trades=5000, symbols=16, weeks=104, prospects=2000),
    "small": dict(customers=4000, accounts=8000, trades=50000, symbols=60, weeks=104, prospects=20000),
}
REGIONS = ("us-east", "us-west", "asia", "europe", "latam")
TIERS = (1, 2, 3)
START = dt.date(2022, 1, 3)
REL_TOL = 1e-9

SOURCES = {
    "customer": Schema.of(("c_id", V.INT64, False), ("name", V.STRING), ("region", V.STRING), ("tier", V.INT64)),
    "account": Schema.of(("a_id", V.INT64, False), ("c_id", V.INT64), ("status", V.STRING), ("balance", V.FLOAT64)),
    "trade": Schema.of(
        ("t_id", V.INT64, False), ("c_id", V.INT64), ("symbol", V.STRING), ("qty", V.INT64), ("price", V.FLOAT64), ("t_date", V.DATE)
    ),
    "market": Schema.of(("symbol", V.STRING), ("m_date", V.DATE), ("high", V.FLOAT64), ("low", V.FLOAT64)),
    "prospect": Schema.of(("p_id", V.INT64, False), ("name", V.STRING), ("income", V.FLOAT64), ("last_seen", V.DATE)),
}
KEYS = {"customer": "c_id", "account": "a_id", "trade": "t_id", "prospect": "p_id"}

VIEWS = {
    "regional_avg": """
        SELECT c.region, AVG(t.qty * t.price) AS avg_trade_value, COUNT(*) AS trades
        FROM customer c JOIN trade t ON c.c_id = t.c_id
        GROUP BY c.region
        HAVING c.region IN ('us-east', 'us-west', 'asia')
    """,
    "market_52wk": """
        SELECT m.symbol, m.m_date, MAX(h.high) AS high_52wk, MIN(h.low) AS low_52wk
        FROM market m JOIN market h
          ON h.symbol = m.symbol AND h.m_date > m.m_date - INTERVAL 364 DAY AND h.m_date <= m.m_date
        GROUP BY m.symbol, m.m_date
    """,
    "prospect_last_seen": """
        SELECT p.p_id, p.name, p.last_seen,
               CASE WHEN p.income >= 100000 THEN 'high' ELSE 'standard' END AS band
        FROM prospect p
    """,
    "dim_account": """
        SELECT a.a_id, a.status, a.balance, c.name, c.tier, c.region
        FROM account a JOIN customer c ON a.c_id = c.c_id
    """,
}


@dataclass
class TableChange:
    """One table's part of a batch; updates and deletes are addressed by key."""

    table: str
    inserts: list[tuple] = field(default_factory=list)
    updates: dict[Any, tuple] = field(default_factory=dict)
    deletes: list[Any] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.inserts) + len(self.updates) + len(self.deletes)


@dataclass
class BenchBatch:
    label: str
    clock: dt.datetime
    changes: list[TableChange]

    def size(self, table: str) -> int:
        return sum(len(c) for c in self.changes if c.table == table)


@dataclass
class BenchWorkspace:
    scale: str
    seed: int
    spec: PipelineSpec
    batches: list[BenchBatch]

    def row_count(self) -> int:
        return sum(len(c.inserts) for c in self.batches[0].changes)


class _Gen:
    def __init__(self, sizes: dict[str, int], seed: int):
        self.rng = random.Random(seed)
        self.n = sizes
        self.symbols = [f"S{i:03d}" for i in range(sizes["symbols"])]
        self.last_close = {s: self.rng.uniform(20, 200) for s in self.symbols}
        self.customers: dict[int, tuple] = {}
        self.accounts: dict[int, tuple] = {}
        self.prospects: dict[int, tuple] = {}
        self.next_trade = 1
        self.week = 0

    def customer(self, cid: int) -> tuple:
        return (cid, f"cust{cid}", self.rng.choice(REGIONS), self.rng.choice(TIERS))

    def account(self, aid: int) -> tuple:
        return (aid, self.rng.randint(1, self.n["customers"]), self.rng.choice(["open", "open", "open", "closed"]), round(self.rng.uniform(0, 1e5), 2))

    def trade(self, day: dt.date) -> tuple:
        t = (
            self.next_trade,
            self.rng.randint(1, self.n["customers"]),
            self.rng.choice(self.symbols),
            self.rng.randint(1, 500),
            round(self.rng.uniform(5, 300), 2),
            day,
        )
        self.next_trade += 1
        return t

    def quotes(self) -> list[tuple]:
        day = START + dt.timedelta(weeks=self.week)
        self.week += 1
        out = []
        for s in self.symbols:
            c = self.last_close[s] = max(1.0, self.last_close[s] * self.rng.uniform(0.93, 1.07))
            out.append((s, day, round(c * self.rng.uniform(1.0, 1.05), 2), round(c * self.rng.uniform(0.95, 1.0), 2)))
        return out

    def prospect(self, pid: int, day: dt.date) -> tuple:
        return (pid, f"prospect{pid}", float(self.rng.randrange(20000, 200000, 500)), day)

    def historical(self) -> list[TableChange]:
        self.customers = {c: self.customer(c) for c in range(1, self.n["customers"] + 1)}
        self.accounts = {a: self.account(a) for a in range(1, self.n["accounts"] + 1)}
        weeks = self.n["weeks"]
        market = [q for _ in range(weeks) for q in self.quotes()]
        last = START + dt.timedelta(weeks=weeks - 1)
        span = (last - START).days
        trades = [self.trade(START + dt.timedelta(days=self.rng.randint(0, span))) for _ in range(self.n["trades"])]
        self.prospects = {p: self.prospect(p, last) for p in range(1, self.n["prospects"] + 1)}
        return [
            TableChange("customer", list(self.customers.values())),
            TableChange("account", list(self.accounts.values())),
            TableChange("trade", trades),
            TableChange("market", market),
            TableChange("prospect", list(self.prospects.values())),
        ]

    def incremental(self) -> list[TableChange]:
        """One new week: new quotes and trades, a few CDC updates, a re-supplied prospect list."""
        quotes = self.quotes()
        day = quotes[0][1]
        trades = [self.trade(day) for _ in range(max(1, self.n["trades"] // 200))]
        cust = TableChange("customer")
        for cid in self.rng.sample(sorted(self.customers), max(1, self.n["customers"] // 100)):
            old = self.customers[cid]
            new = (cid, old[1], old[2], self.rng.choice(TIERS))
            cust.updates[cid] = self.customers[cid] = new
        acct = TableChange("account")
        for aid in self.rng.sample(sorted(self.accounts), max(1, self.n["accounts"] // 100)):
            old = self.accounts[aid]
            new = (aid, old[1], old[2], round(self.rng.uniform(0, 1e5), 2))
            acct.updates[aid] = self.accounts[aid] = new
        for _ in range(max(1, self.n["accounts"] // 200)):
            aid = len(self.accounts) + 1
            self.accounts[aid] = self.account(aid)
            acct.inserts.append(self.accounts[aid])
        # more than 95% of prospects reappear, so their last-seen date moves
        pros = TableChange("prospect")
        ids = sorted(self.prospects)
        for pid in ids:
            if self.rng.random() < 0.97:
                p = self.prospects[pid]
                pros.updates[pid] = self.prospects[pid] = (pid, p[1], p[2], day)
        for _ in range(max(1, len(ids) // 100)):
            pid = max(self.prospects) + 1
            self.prospects[pid] = self.prospect(pid, day)
            pros.inserts.append(self.prospects[pid])
        return [cust, acct, TableChange("trade", trades), TableChange("market", quotes), pros]


def bench_spec() -> PipelineSpec:
    return PipelineSpec(
        [SourceDecl(n, s) for n, s in SOURCES.items()],
        [MvDecl(n, parse_query(q), text=" ".join(q.split())) for n, q in VIEWS.items()],
    )


def generate_bench(scale: str = "tiny", seed: int = 0, incremental_batches: int = 2) -> BenchWorkspace:
    """A historical load followed by ``incremental_batches`` one-week batches."""
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {sorted(SCALES)}")
    g = _Gen(SCALES[scale], seed)
    hist = g.historical()
    clock = dt.datetime.combine(START + dt.timedelta(weeks=g.week - 1), dt.time(23))
    batches = [BenchBatch("historical", clock, hist)]
    for i in range(incremental_batches):
        changes = g.incremental()
        clock = clock + dt.timedelta(weeks=1)
        batches.append(BenchBatch(f"incremental-{i + 1}", clock, changes))
    return BenchWorkspace(scale, seed, bench_spec(), batches)


def apply_batch(store: Store, batch: BenchBatch) -> None:
    for ch in batch.changes:
        if not len(ch):
            continue
        updates: dict[int, tuple] = {}
        if ch.updates or ch.deletes:
            t = store.table(ch.table)
            kpos = t.schema.resolve(KEYS[ch.table])
            by_key = {row[kpos]: rid for row, rid in t.snapshot().with_ids()}
            updates = {by_key[k]: row for k, row in ch.updates.items()}
        if ch.deletes:
            pred = E.InList(E.Col(KEYS[ch.table]), tuple(E.lit(k) for k in ch.deletes))
            store.commit(ch.table, delete_predicate=pred)
        store.commit(ch.table, ch.inserts, updates=updates)


# ---------------------------------------------------------------------------
# measurement
# ---------------------------------------------------------------------------


@dataclass
class BenchEntry:
    mv: str
    batch: int
    strategy: str
    t_incr_ms: float
    t_full_ms: float
    speedup: float
    cost_model_correct: bool
    incremental_strategy: str = ""
    rows_changed: int = 0
    rows_total: int = 0


@dataclass
class BenchReport:
    scale: str
    seed: int
    entries: list[BenchEntry]
    load_ms: dict[str, float]
    wall_s: float

    @property
    def totals(self) -> dict[str, float]:
        ti = sum(e.t_incr_ms for e in self.entries)
        tf = sum(e.t_full_ms for e in self.entries)
        return {"t_incr_ms": round(ti, 3), "t_full_ms": round(tf, 3), "speedup": round(tf / ti, 3) if ti else 0.0}

    def per_mv(self) -> dict[str, dict]:
        """Speedup over all incremental batches and whether the model's usual pick was the faster one."""
        out = {}
        for mv in dict.fromkeys(e.mv for e in self.entries):
            es = [e for e in self.entries if e.mv == mv]
            ti = sum(e.t_incr_ms for e in es)
            tf = sum(e.t_full_ms for e in es)
            chosen = Counter(e.strategy for e in es).most_common(1)[0][0]
            speedup = tf / ti if ti else 0.0
            faster = "full_recompute" if speedup < 1 else "incremental"
            picked = "full_recompute" if chosen == "full_recompute" else "incremental"
            out[mv] = {
                "speedup": round(speedup, 3),
                "chosen": chosen,
                "faster": faster,
                "cost_model_correct": picked == faster,
                "batches_correct": sum(e.cost_model_correct for e in es),
                "batches": len(es),
            }
        return out

    def accuracy(self) -> tuple[int, int]:
        s = self.per_mv()
        return sum(v["cost_model_correct"] for v in s.values()), len(s)

    def to_json(self) -> dict:
        return {
            "scale": self.scale,
            "seed": self.seed,
            "entries": [asdict(e) for e in self.entries],
            "per_mv": self.per_mv(),
            "totals": self.totals,
            "load_ms": self.load_ms,
            "wall_s": round(self.wall_s, 3),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        fields = list(BenchEntry.__dataclass_fields__)
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for e in self.entries:
            w.writerow(asdict(e))
        return buf.getvalue()

    def render(self) -> str:
        head = f"{'mv':<20} {'batch':>5} {'strategy':<32} {'incr ms':>10} {'full ms':>10} {'speedup':>8}  model"
        lines = [head, "-" * len(head)]
        for e in self.entries:
            lines.append(
                f"{e.mv:<20} {e.batch:>5} {e.strategy:<32} {e.t_incr_ms:>10.1f} {e.t_full_ms:>10.1f} {e.speedup:>8.2f}  "
                + ("right" if e.cost_model_correct else "wrong")
            )
        t = self.totals
        lines.append("-" * len(head))
        lines.append(f"{'total':<20} {'':>5} {'':<32} {t['t_incr_ms']:>10.1f} {t['t_full_ms']:>10.1f} {t['speedup']:>8.2f}")
        ok, n = self.accuracy()
        lines.append(f"cost model agreed with the faster strategy on {ok} of {n} views")
        return "\n".join(lines)

    def write(self, out_dir: str | Path, plot: bool = True) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"json": out / "bench.json", "csv": out / "bench.csv"}
        paths["json"].write_text(json.dumps(self.to_json(), indent=2))
        paths["csv"].write_text(self.to_csv())
        if plot:
            from deltamv.plotting import plot_speedups

            paths["png"] = plot_speedups(self, out / "bench.png")
        return paths


def _refresh(pipe: Pipeline, mv: str, now: dt.datetime):
    rep = pipe.refresh(mv, now)
    if rep.outcome != "ok":
        raise RuntimeError(f"{mv}: refresh {rep.outcome}: {rep.error}")
    return rep


def _check(pipe: Pipeline, mv: str, label: str) -> None:
    got, want = pipe.contents(mv), pipe.recompute(mv)
    if not bags_equal(got, want, REL_TOL):
        raise Mismatch(f"bench {label}: {mv} differs from recompute: {describe_bag_diff(got, want)}")


def run_bench(ws: BenchWorkspace, check: bool = True, views: Sequence[str] | None = None) -> BenchReport:
    """Time incremental against full refresh for every view and incremental batch.

    Runs sequentially so timings are not perturbed by other refreshes.
    """
    t0 = time.perf_counter()
    policies = ("incremental", "full", "cost")
    pipes: dict[str, Pipeline] = {}
    for pol in policies:
        store = Store()
        pipes[pol] = Pipeline(store, ws.spec, history=CostHistory(None), parallelism=1, strategy_policy=pol)
        pipes[pol].create_sources()
    names = list(views) if views else [m.name for m in ws.spec.mvs]
    entries: list[BenchEntry] = []
    load_ms: dict[str, float] = {}
    for bi, batch in enumerate(ws.batches):
        for p in pipes.values():
            apply_batch(p.store, batch)
        for mv in names:
            reps = {pol: _refresh(pipes[pol], mv, batch.clock) for pol in policies}
            if check:
                for pol in policies:
                    _check(pipes[pol], mv, f"{batch.label} ({pol})")
            if bi == 0:
                load_ms[mv] = round(reps["full"].wall_ms, 3)
                continue
            ti, tf = reps["incremental"].wall_ms, reps["full"].wall_ms
            chosen = reps["cost"].strategy
            faster_full = tf < ti
            lay = pipes["cost"].catalog.layout(mv)
            changed = sum(batch.size(s) for s in lay.sources)
            total = sum(pipes["cost"].catalog.live_count(s) for s in lay.sources)
            entries.append(
                BenchEntry(
                    mv,
                    bi,
                    chosen,
                    round(ti, 3),
                    round(tf, 3),
                    round(tf / ti, 3) if ti else 0.0,
                    (chosen == "full_recompute") == faster_full,
                    reps["incremental"].strategy,
                    changed,
                    total,
                )
            )
    return BenchReport(ws.scale, ws.seed, entries, load_ms, time.perf_counter() - t0)


def median_speedups(reports: Sequence[BenchReport]) -> dict[str, float]:
    """Per-view median speedup across repeated runs."""
    views = dict.fromkeys(mv for r in reports for mv in r.per_mv())
    return {mv: statistics.median(r.per_mv()[mv]["speedup"] for r in reports) for mv in views}


__all__ = [
    "BenchBatch",
    "BenchEntry",
    "BenchReport",
    "BenchWorkspace",
    "SCALES",
    "TableChange",
    "VIEWS",
    "apply_batch",
    "bench_spec",
    "generate_bench",
    "median_speedups",
    "run_bench",
]
