"""Journal reporting: delimited summaries plus rendered figures.

Reads a journal file and writes, into an output directory: counts per entry
kind, the anomaly timeline, escalations and approval latencies as CSV, and
matching matplotlib figures (entry-kind bar chart, anomalies per cycle,
window-mean traces per metric, approval latency histogram when there were
any decisions). The audit scan runs as part of the report and its findings
are included in the returned summary.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .knowledge import audit, iter_journal


def generate_report(journal_path: str | Path, out_dir: str | Path) -> dict:
    entries = list(iter_journal(journal_path))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    counts: dict[str, int] = {}
    anomalies_per_cycle: dict[int, int] = {}
    escalations = []
    approvals: dict[str, dict] = {}
    # (service, metric) -> [(window_end, mean)]
    traces: dict[tuple[str, str], list[tuple[int, float]]] = {}

    for e in entries:
        counts[e.kind] = counts.get(e.kind, 0) + 1
        p = e.payload
        if e.kind == "anomaly":
            anomalies_per_cycle[e.cycle] = anomalies_per_cycle.get(e.cycle, 0) + 1
        elif e.kind == "escalation":
            escalations.append({
                "escalation_id": p["escalation_id"],
                "cycle": e.cycle,
                "reason": p["reason"],
                "service_id": p.get("service_id", ""),
            })
        elif e.kind == "approval_request":
            approvals[p["request_id"]] = {
                "request_id": p["request_id"],
                "plan_id": p["plan_id"],
                "requested_tick": e.tick,
                "decision": "pending",
                "decided_tick": None,
            }
        elif e.kind == "approval_decision":
            req = approvals.get(p["request_id"])
            if req is not None:
                req["decision"] = p["decision"]
                req["decided_tick"] = e.tick
        elif e.kind == "telemetry_summary":
            for agg in p.get("aggregates", []):
                key = (agg["service_id"], agg["metric"])
                traces.setdefault(key, []).append((agg["window"][1], agg["mean"]))

    _write_csv(out / "counts_per_kind.csv", ["kind", "count"],
               sorted(counts.items()))
    _write_csv(out / "anomalies_per_cycle.csv", ["cycle", "count"],
               sorted(anomalies_per_cycle.items()))
    _write_csv(out / "escalations.csv",
               ["escalation_id", "cycle", "reason", "service_id"],
               [(x["escalation_id"], x["cycle"], x["reason"], x["service_id"])
                for x in escalations])

    latencies = []
    approval_rows = []
    for req in sorted(approvals.values(), key=lambda r: r["request_id"]):
        latency = (None if req["decided_tick"] is None
                   else req["decided_tick"] - req["requested_tick"])
        approval_rows.append((req["request_id"], req["plan_id"], req["requested_tick"],
                              req["decision"], req["decided_tick"], latency))
        if latency is not None:
            latencies.append(latency)
    _write_csv(out / "approvals.csv",
               ["request_id", "plan_id", "requested_tick", "decision",
                "decided_tick", "latency_ticks"],
               approval_rows)

    figures = [
        _fig_counts(out, counts),
        _fig_anomalies(out, anomalies_per_cycle),
        _fig_traces(out, traces),
    ]
    if latencies:
        figures.append(_fig_latencies(out, latencies))

    problems = audit(entries)
    return {
        "entries": len(entries),
        "counts": counts,
        "escalations": len(escalations),
        "approvals": {
            "total": len(approvals),
            "pending": sum(1 for r in approvals.values() if r["decision"] == "pending"),
            "approved": sum(1 for r in approvals.values() if r["decision"] == "approved"),
            "rejected": sum(1 for r in approvals.values() if r["decision"] == "rejected"),
            "expired": sum(1 for r in approvals.values() if r["decision"] == "expired"),
            "mean_latency_ticks": (sum(latencies) / len(latencies)) if latencies else None,
        },
        "audit_problems": problems,
        "out_dir": str(out),
        "figures": [str(f) for f in figures if f is not None],
    }


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fig_counts(out: Path, counts: dict[str, int]) -> Path:
    fig, ax = plt.subplots(figsize=(8, 4))
    kinds = sorted(counts)
    ax.bar(kinds, [counts[k] for k in kinds], color="#33658a")
    ax.set_ylabel("entries")
    ax.set_title("journal entries per kind")
    ax.tick_params(axis="x", rotation=45)
    fig.tight_layout()
    path = out / "counts_per_kind.png"
    fig.savefig(path)
    plt.close(fig)
    return path


def _fig_anomalies(out: Path, per_cycle: dict[int, int]) -> Path:
    fig, ax = plt.subplots(figsize=(8, 3))
    if per_cycle:
        cycles = sorted(per_cycle)
        ax.stem(cycles, [per_cycle[c] for c in cycles], basefmt=" ")
    ax.set_xlabel("cycle")
    ax.set_ylabel("anomalies")
    ax.set_title("anomalies per cycle")
    fig.tight_layout()
    path = out / "anomalies_per_cycle.png"
    fig.savefig(path)
    plt.close(fig)
    return path


def _fig_traces(out: Path, traces: dict[tuple[str, str], list[tuple[int, float]]]) -> Path | None:
    metrics = sorted({metric for _, metric in traces})
    if not metrics:
        return None
    fig, axes = plt.subplots(len(metrics), 1, figsize=(8, 2.2 * len(metrics)),
                             sharex=True, squeeze=False)
    for ax, metric in zip(axes[:, 0], metrics):
        for (service, m), points in sorted(traces.items()):
            if m != metric:
                continue
            xs = [t for t, _ in points]
            ys = [v for _, v in points]
            ax.plot(xs, ys, marker="o", markersize=2, label=service)
        ax.set_ylabel(metric)
        ax.legend(fontsize=7, loc="upper left")
    axes[-1, 0].set_xlabel("window end tick")
    fig.suptitle("window means per metric")
    fig.tight_layout()
    path = out / "metric_means.png"
    fig.savefig(path)
    plt.close(fig)
    return path


def _fig_latencies(out: Path, latencies: list[int]) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.hist(latencies, bins=min(20, max(3, len(set(latencies)))), color="#86bbd8")
    ax.set_xlabel("ticks from request to decision")
    ax.set_ylabel("requests")
    ax.set_title("approval latency")
    fig.tight_layout()
    path = out / "approval_latency.png"
    fig.savefig(path)
    plt.close(fig)
    return path
