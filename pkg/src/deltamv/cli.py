"""Command-line front end.

    deltamv --root WS create defs.sql
    deltamv --root WS load trades trades.csv
    deltamv --root WS refresh
    deltamv --root WS explain region_avg
    deltamv bench --scale tiny --out bench_out
    deltamv rqg --seeds 0..999

Exit codes: 0 success, 1 usage error, 2 refresh failure, 3 RQG mismatch.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import os
import sys
from pathlib import Path

from deltamv import values as V
from deltamv.errors import IvmError
from deltamv.pipeline import MvDecl, Pipeline, PipelineSpec, SourceDecl, spec_path
from deltamv.storage import Store, coerce_row

ROOT_ENV = "DELTAMV_ROOT"

EXIT_OK, EXIT_USAGE, EXIT_REFRESH, EXIT_MISMATCH = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 means refresh failure here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _root(args) -> Path:
    root = args.root or os.environ.get(ROOT_ENV)
    if not root:
        raise UsageError(f"no workspace: pass --root or set {ROOT_ENV}")
    return Path(root)


def _load_spec(root: Path) -> PipelineSpec:
    path = spec_path(root)
    if not path.exists():
        raise UsageError(f"{root} has no pipeline; run 'create' first")
    return PipelineSpec.load(path)


def _now(text: str | None) -> dt.datetime:
    if text is None:
        return V.to_utc_naive(dt.datetime.now(dt.timezone.utc)).replace(microsecond=0)
    try:
        return V.parse_timestamp(text)
    except ValueError as exc:
        raise UsageError(f"bad --now {text!r}: {exc}") from exc


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, default=str))
    else:
        print(text)


def _definitions(path: Path) -> tuple[list[SourceDecl], list[MvDecl]]:
    text = path.read_text()
    if path.suffix == ".json":
        spec = PipelineSpec.from_json(json.loads(text))
        return list(spec.sources), list(spec.mvs)
    from deltamv.sql import parse_statement, split_statements

    sources, mvs = [], []
    for stmt in split_statements(text):
        parsed = parse_statement(stmt)
        if parsed[0] == "table":
            _, name, schema, parts = parsed
            sources.append(SourceDecl(name, schema, tuple(parts)))
        elif parsed[0] == "mv":
            _, name, plan, parts, sql = parsed
            mvs.append(MvDecl(name, plan, tuple(parts), text=sql))
        else:
            raise UsageError(f"{path}: only CREATE TABLE and CREATE MATERIALIZED VIEW are accepted")
    return sources, mvs


def cmd_create(args) -> int:
    root = _root(args)
    path = spec_path(root)
    spec = PipelineSpec.load(path) if path.exists() else PipelineSpec([], [])
    for f in args.files:
        sources, mvs = _definitions(Path(f))
        for s in sources:
            if spec.source(s.name) is not None:
                if not args.replace:
                    raise UsageError(f"table {s.name!r} already exists (use --replace)")
                spec.sources = [x for x in spec.sources if x.name != s.name]
            spec.sources.append(s)
        for m in mvs:
            if spec.is_mv(m.name):
                if not args.replace:
                    raise UsageError(f"view {m.name!r} already exists (use --replace)")
                spec.mvs = [x for x in spec.mvs if x.name != m.name]
            spec.mvs.append(m)
    store = Store(root)
    spec.validate(store.table_names())
    spec.save(path)
    Pipeline(store, spec).create_sources()
    payload = {"sources": [s.name for s in spec.sources], "mvs": [m.name for m in spec.mvs]}
    _emit(args, payload, f"{len(spec.sources)} tables, {len(spec.mvs)} views in {root}")
    return EXIT_OK


def _read_rows(path: Path, fmt: str | None):
    fmt = fmt or ("csv" if path.suffix == ".csv" else "jsonl")
    with path.open(newline="") as fh:
        if fmt == "csv":
            yield from csv.DictReader(fh)
        else:
            for n, line in enumerate(fh, 1):
                if line.strip():
                    try:
                        yield json.loads(line)
                    except json.JSONDecodeError as exc:
                        raise UsageError(f"{path}:{n}: {exc}") from exc


def cmd_load(args) -> int:
    root = _root(args)
    spec = _load_spec(root)
    if spec.source(args.table) is None:
        raise UsageError(f"unknown source table {args.table!r}")
    store = Store(root)
    Pipeline(store, spec).create_sources()
    schema = store.table_schema(args.table)
    rows = [coerce_row(schema, r) for r in _read_rows(Path(args.file), args.format)]
    c = store.commit(args.table, rows)
    _emit(args, {"table": args.table, "version": c.version, "rows": len(rows)}, f"{args.table}@v{c.version}: {len(rows)} rows")
    return EXIT_OK


def cmd_refresh(args) -> int:
    root = _root(args)
    pipe = Pipeline(Store(root), _load_spec(root), effectivize=args.effectivize, strategy_policy=args.policy)
    only = args.mv or None
    for m in only or ():
        if not pipe.spec.is_mv(m):
            raise UsageError(f"unknown view {m!r}")
    report = pipe.run(_now(args.now), only=only)
    _emit(args, report.to_json(), report.render())
    return EXIT_OK if report.ok else EXIT_REFRESH


def _render_explain(out: dict) -> str:
    lines = [f"view {out['mv']}", "", "normalized plan:", out["normalized"], ""]
    for fp in out["fingerprints"]:
        lines.append(f"fingerprint v{fp['v']}: {fp['d']}")
    lines.append(f"backing table: {out['backing_table']}")
    if out["rewrites"]:
        lines.append("rewrites:")
        lines.extend(f"  {r}" for r in out["rewrites"])
    if out["not_incrementalizable"]:
        lines.append(f"not incrementalizable: {out['not_incrementalizable']}")
    if out["full_reason"]:
        lines.append(f"next refresh recomputes fully: {out['full_reason']}")
    lines.append("")
    lines.append("candidates:")
    for c in out["candidates"]:
        lines.append(f"  {c['strategy']}")
        if "breakdown" in c:
            lines.extend("    " + ln for ln in c["breakdown"].splitlines())
    lines.append(f"chosen: {out['chosen']}")
    if out["change_plan"]:
        lines += ["", "change plan:", out["change_plan"]]
    return "\n".join(lines)


def cmd_explain(args) -> int:
    root = _root(args)
    pipe = Pipeline(Store(root), _load_spec(root))
    if not pipe.spec.is_mv(args.mv):
        raise UsageError(f"unknown view {args.mv!r}")
    out = pipe.explain(args.mv, _now(args.now))
    _emit(args, out, _render_explain(out))
    return EXIT_OK


def cmd_bench(args) -> int:
    from deltamv.bench import generate_bench, run_bench

    ws = generate_bench(args.scale, args.seed, args.batches)
    report = run_bench(ws, check=not args.no_check)
    paths = report.write(args.out, plot=not args.no_plot) if args.out else {}
    payload = report.to_json()
    payload["files"] = {k: str(v) for k, v in paths.items()}
    text = report.render()
    if paths:
        text += "\n" + "\n".join(f"wrote {p}" for p in paths.values())
    _emit(args, payload, text)
    return EXIT_OK


def cmd_rqg(args) -> int:
    from deltamv.rqg import Limits, parse_seed_range, run_seeds

    try:
        seeds = parse_seed_range(args.seeds)
    except ValueError as exc:
        raise UsageError(f"bad --seeds {args.seeds!r}") from exc
    limits = Limits(batches=args.max_batches)
    summary = run_seeds(seeds, limits, workers=args.workers, temporal=args.temporal)
    if args.out and summary["mismatches"]:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for m in summary["mismatches"]:
            (out / f"repro_{m['seed']}.json").write_text(json.dumps(m["repro"], indent=1, default=str))
    lines = [f"{summary['passed']}/{summary['cases']} cases agree ({summary['oracle_checks']} delta oracle checks, {summary['elapsed_s']}s)"]
    lines.append("coverage: " + ", ".join(f"{k}={v}" for k, v in summary["coverage"].items()))
    if "term_hits" in summary:
        lines.append("temporal terms: " + ", ".join(f"{k}={v}" for k, v in summary["term_hits"].items()))
    for m in summary["mismatches"]:
        lines.append(f"MISMATCH seed {m['seed']}: {m['message']}")
    _emit(args, summary, "\n".join(lines))
    return EXIT_MISMATCH if summary["mismatches"] else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="deltamv", description="Incremental materialized view maintenance.")
    p.add_argument("--root", help=f"workspace directory (default ${ROOT_ENV})")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    # the same options after the subcommand; SUPPRESS keeps them from resetting the top-level values
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--root", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("create", parents=[common], help="register tables and views from .sql or .json definitions")
    c.add_argument("files", nargs="+")
    c.add_argument("--replace", action="store_true", help="redefine existing tables and views")
    c.set_defaults(func=cmd_create)

    ld = sub.add_parser("load", parents=[common], help="append CSV or JSON-lines rows to a source table as one commit")
    ld.add_argument("table")
    ld.add_argument("file")
    ld.add_argument("--format", choices=["csv", "jsonl"])
    ld.set_defaults(func=cmd_load)

    r = sub.add_parser("refresh", parents=[common], help="refresh views in dependency order")
    r.add_argument("mv", nargs="*", help="only these views (default all)")
    r.add_argument("--now", help="refresh clock, ISO timestamp (default: current UTC time)")
    r.add_argument("--policy", choices=["cost", "incremental", "full"], default="cost")
    r.add_argument("--effectivize", choices=["auto", "always", "never"], default="auto")
    r.set_defaults(func=cmd_refresh)

    e = sub.add_parser("explain", parents=[common], help="show the plan, fingerprints, costed candidates and change plan")
    e.add_argument("mv")
    e.add_argument("--now")
    e.set_defaults(func=cmd_explain)

    b = sub.add_parser("bench", parents=[common], help="run the desk-scale benchmark")
    b.add_argument("--scale", choices=["tiny", "small"], default="tiny")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--batches", type=int, default=2, help="incremental batches after the historical load")
    b.add_argument("--out", help="directory for bench.json, bench.csv and bench.png")
    b.add_argument("--no-plot", action="store_true")
    b.add_argument("--no-check", action="store_true", help="skip the per-batch recompute comparison")
    b.set_defaults(func=cmd_bench)

    q = sub.add_parser("rqg", parents=[common], help="differential test of random views")
    q.add_argument("--seeds", default="0..99", help="A..B inclusive, or one seed")
    q.add_argument("--workers", type=int, default=1)
    q.add_argument("--max-batches", type=int, default=5)
    q.add_argument("--temporal", action="store_true", help="rolling-window cases only")
    q.add_argument("--out", help="directory for minimized repro files")
    q.set_defaults(func=cmd_rqg)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"deltamv: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IvmError, OSError) as exc:
        print(f"deltamv: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE if args.command in ("create", "load", "explain") else EXIT_REFRESH


if __name__ == "__main__":
    sys.exit(main())
