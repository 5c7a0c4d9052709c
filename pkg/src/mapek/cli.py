"""Command-line entry point.

    mapek run --scenario s.yaml --config c.yaml --ticks 100 [--seed 7]
              [--serve 127.0.0.1:8700] [--cycle-interval 0.25] [--journal out.ndjson]
    mapek replay --journal out.ndjson
    mapek report --journal out.ndjson [--out report_dir]
    mapek ingest --trace samples.ndjson --config c.yaml [--journal out.ndjson]
    mapek serve --journal out.ndjson [--addr 127.0.0.1:8700]
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import controller as controller_mod
from . import gateway as gateway_mod
from .config import load_config
from .detectors import AnalyzeStage
from .errors import ConfigError, JournalCorruptError, JournalWriteError, ScenarioError
from .knowledge import KnowledgeBase, replay
from .report import generate_report
from .simenv import load_scenario
from .telemetry import CollaborationEvent, MetricSample, Monitor


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mapek",
                                     description="self-managing control plane for a simulated microservice mesh")
    sub = parser.add_subparsers(dest="cmd", required=True)

    run_p = sub.add_parser("run", help="run the control loop against a scenario")
    run_p.add_argument("--scenario", required=True)
    run_p.add_argument("--config", default=None)
    run_p.add_argument("--ticks", type=int, required=True)
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--journal", default=None, help="override kb.journal_path")
    run_p.add_argument("--serve", default=None, metavar="HOST:PORT",
                       help="serve the gateway while the loop runs")
    run_p.add_argument("--cycle-interval", type=float, default=0.0,
                       help="seconds to sleep between cycles (for live serving)")
    run_p.set_defaults(func=cmd_run)

    replay_p = sub.add_parser("replay", help="rebuild KB state from a journal and print its digest")
    replay_p.add_argument("--journal", required=True)
    replay_p.set_defaults(func=cmd_replay)

    report_p = sub.add_parser("report", help="write CSV summaries and figures for a journal")
    report_p.add_argument("--journal", required=True)
    report_p.add_argument("--out", default=None)
    report_p.set_defaults(func=cmd_report)

    ingest_p = sub.add_parser("ingest", help="offline monitor/analyze replay of a trace file")
    ingest_p.add_argument("--trace", required=True)
    ingest_p.add_argument("--config", default=None)
    ingest_p.add_argument("--journal", default=None, help="override kb.journal_path")
    ingest_p.set_defaults(func=cmd_ingest)

    serve_p = sub.add_parser("serve", help="read-only gateway over an existing journal")
    serve_p.add_argument("--journal", required=True)
    serve_p.add_argument("--addr", default="127.0.0.1:8700", metavar="HOST:PORT")
    serve_p.set_defaults(func=cmd_serve)
    return parser


def _split_addr(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    return host or "127.0.0.1", int(port)


def cmd_run(args: argparse.Namespace) -> int:
    if args.ticks < 1:
        print("error: --ticks must be >= 1", file=sys.stderr)
        return 2
    overrides: dict = {}
    if args.seed is not None:
        overrides.setdefault("sim", {})["seed"] = args.seed
    if args.journal is not None:
        overrides.setdefault("kb", {})["journal_path"] = args.journal
    cfg = load_config(args.config, overrides)
    scenario = load_scenario(args.scenario)
    ctl = controller_mod.build_controller(cfg, scenario)

    server = None
    if args.serve:
        host, port = _split_addr(args.serve)
        app = gateway_mod.create_app(controller=ctl, cfg=cfg)
        server, _ = gateway_mod.serve(app, host, port)
        print(f"gateway serving on http://{host}:{port}")

    interval = args.cycle_interval
    if interval > 0:
        def pace(_record):
            time.sleep(interval)
        summary = ctl.run(args.ticks, on_cycle=pace)
    else:
        summary = ctl.run(args.ticks)
    ctl.kb.close()
    if server is not None:
        server.should_exit = True

    print(f"ticks:        {summary['ticks']}")
    print(f"anomalies:    {summary['anomalies']}")
    print(f"plans:        {summary['plans']}")
    print(f"executions:   {summary['executions']}")
    print(f"escalations:  {summary['escalations']}")
    print(f"pending:      {summary['approvals_pending']}")
    print(f"digest:       {summary['digest']}")
    print(f"journal:      {ctl.kb.journal_path}")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    path = Path(args.journal)
    if not path.exists():
        print(f"error: journal not found: {path}", file=sys.stderr)
        return 1
    kb = replay(path)
    print(f"entries: {len(kb.entries)}")
    print(f"digest:  {kb.digest()}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    path = Path(args.journal)
    if not path.exists():
        print(f"error: journal not found: {path}", file=sys.stderr)
        return 1
    out_dir = Path(args.out) if args.out else path.parent / "report"
    summary = generate_report(path, out_dir)
    print(f"entries: {summary['entries']}")
    for kind, count in sorted(summary["counts"].items()):
        print(f"  {kind}: {count}")
    ap = summary["approvals"]
    print(f"approvals: total={ap['total']} pending={ap['pending']} approved={ap['approved']} "
          f"rejected={ap['rejected']} expired={ap['expired']}")
    if ap["mean_latency_ticks"] is not None:
        print(f"mean approval latency: {ap['mean_latency_ticks']:.1f} ticks")
    print(f"escalations: {summary['escalations']}")
    if summary["audit_problems"]:
        print("audit problems:")
        for problem in summary["audit_problems"]:
            print(f"  {problem}")
    else:
        print("audit: clean")
    print(f"report written to {summary['out_dir']}")
    for figure in summary["figures"]:
        print(f"  {figure}")
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    trace = Path(args.trace)
    if not trace.exists():
        print(f"error: trace file not found: {trace}", file=sys.stderr)
        return 1
    overrides: dict = {}
    if args.journal is not None:
        overrides.setdefault("kb", {})["journal_path"] = args.journal
    cfg = load_config(args.config, overrides)

    by_tick: dict[int, list] = {}
    with trace.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                print(f"error: bad trace record at line {lineno}: {exc}", file=sys.stderr)
                return 1
            if "contributor_id" in rec:
                sample = CollaborationEvent(rec["contributor_id"], rec["service_id"],
                                            int(rec["tick"]))
            else:
                sample = MetricSample(rec["service_id"], rec["metric"],
                                      rec.get("layer", "dynamic"),
                                      float(rec["value"]), int(rec["tick"]))
            by_tick.setdefault(sample.tick, []).append(sample)

    window_len = cfg["monitor"]["window_len"]
    monitor = Monitor(window_len, known_services=None,
                      filters=cfg["monitor"]["filters"],
                      buffer_factor=cfg["monitor"]["buffer_factor"])
    analyze = AnalyzeStage(cfg, cfg["goals"])
    kb = KnowledgeBase(cfg["kb"]["journal_path"], digest_algo=cfg["kb"]["digest_algo"])

    accepted = 0
    anomalies = 0
    max_tick = max(by_tick) if by_tick else 0
    for tick in range(0, max_tick + 1):
        batch = by_tick.get(tick, [])
        accepted += monitor.ingest(batch)
        if tick >= window_len and tick % window_len == 0:
            start = tick - window_len
            aggregates, events = monitor.close_window(start)
            kb.append(tick, tick, "telemetry_summary", {
                "window": [start, tick],
                "aggregates": [a.to_payload() for a in aggregates],
                "collaboration_events": len(events),
            })
            for report in analyze.on_window_close(aggregates, events, tick, tick):
                kb.append(tick, tick, "anomaly", report.to_payload())
                anomalies += 1
        for sample in batch:
            if isinstance(sample, MetricSample):
                analyze.observe_sample(sample.service_id, sample.metric, sample.value)
    kb.close()
    print(f"accepted: {accepted}")
    print(f"dropped:  {dict(sorted(monitor.drops.items()))}")
    print(f"anomalies: {anomalies}")
    print(f"journal:   {kb.journal_path}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    path = Path(args.journal)
    if not path.exists():
        print(f"error: journal not found: {path}", file=sys.stderr)
        return 1
    import uvicorn

    host, port = _split_addr(args.addr)
    app = gateway_mod.create_app(journal_path=path)
    print(f"read-only gateway on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except JournalCorruptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except JournalWriteError as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
