"""Operator-facing request/response surface over the running loop.

Endpoints expose state, anomalies, approvals, escalations, the journal and
the effective config; the only mutations are posting an approval decision
and acknowledging an escalation, both of which are queued and consumed by
the controller at the next cycle boundary - no handler touches controller
state directly. Every response carries schema_version. The gateway also runs
in read-only mode over a journal file (no controller, POSTs rejected), which
is how `mapek serve --journal` works.
"""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .controller import Controller
from .knowledge import iter_journal, replay

SCHEMA_VERSION = 1


def _ok(payload: dict) -> JSONResponse:
    return JSONResponse({"schema_version": SCHEMA_VERSION, **payload})


def _err(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(
        {"schema_version": SCHEMA_VERSION, "error": code, "message": message},
        status_code=status,
    )


def create_app(controller: Controller | None = None, cfg: dict | None = None,
               journal_path: str | Path | None = None) -> FastAPI:
    """App factory. Live mode needs a controller; read-only mode a journal."""
    if controller is None and journal_path is None:
        raise ValueError("gateway needs a controller or a journal path")
    if journal_path is None and controller is not None:
        journal_path = controller.kb.journal_path
    cfg = cfg or (controller.cfg if controller is not None else {})

    app = FastAPI(title="mapek gateway")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    inflight: set[str] = set()
    inflight_lock = threading.Lock()

    def current_view() -> dict:
        if controller is not None:
            return controller.snapshot()
        kb = replay(journal_path)
        return {
            "tick": kb.entries[-1].tick if kb.entries else 0,
            "cycle": kb.entries[-1].cycle if kb.entries else 0,
            "services": {},
            "approvals": [dict(r) for r in kb.approvals.values()],
            "escalations": [dict(e) for e in kb.escalations.values()],
            "plans": dict(kb.plans),
        }

    @app.get("/api/state")
    def get_state():
        view = current_view()
        return _ok({
            "tick": view["tick"],
            "cycle": view["cycle"],
            "services": view["services"],
            "read_only": controller is None,
        })

    @app.get("/api/anomalies")
    def get_anomalies(cycle_from: int = 0):
        items = []
        if Path(journal_path).exists():
            for entry in iter_journal(journal_path):
                if entry.kind == "anomaly" and entry.cycle >= cycle_from:
                    items.append({"seq": entry.seq, "cycle": entry.cycle,
                                  "tick": entry.tick, **entry.payload})
        return _ok({"anomalies": items})

    @app.get("/api/approvals")
    def get_approvals(status: str | None = None):
        view = current_view()
        plans = view.get("plans", {})
        items = []
        for request in view["approvals"]:
            if status is not None and request["status"] != status:
                continue
            items.append({**request, "plan": plans.get(request["plan_id"])})
        items.sort(key=lambda r: r["request_id"])
        return _ok({"approvals": items})

    @app.post("/api/approvals/{request_id}")
    async def post_approval(request_id: str, request: Request):
        if controller is None:
            return _err(409, "read_only", "gateway is serving a journal without a controller")
        body = await request.json()
        decision = body.get("decision")
        decider = (body.get("decider") or "").strip()
        if decision not in ("approved", "rejected"):
            return _err(400, "bad_decision", "decision must be 'approved' or 'rejected'")
        if not decider:
            return _err(400, "missing_decider", "decider must be a non-empty string")
        view = current_view()
        match = next((r for r in view["approvals"] if r["request_id"] == request_id), None)
        if match is None:
            return _err(404, "unknown_request", f"no approval request {request_id}")
        if match["status"] != "pending":
            return _err(409, "already_decided", f"request is {match['status']}")
        ttl = cfg.get("execute", {}).get("approval_ttl")
        if ttl is not None and view["tick"] - match["requested_tick"] >= ttl:
            return _err(409, "expired", "request has aged past the approval ttl")
        with inflight_lock:
            if request_id in inflight:
                return _err(409, "decision_pending", "a decision for this request is already queued")
            inflight.add(request_id)
        controller.submit_decision(request_id, decision, decider)
        return _ok({"request_id": request_id, "queued": decision})

    @app.get("/api/escalations")
    def get_escalations(acked: bool | None = None):
        view = current_view()
        items = [e for e in view["escalations"]
                 if acked is None or e.get("acked", False) == acked]
        items.sort(key=lambda e: e["escalation_id"])
        return _ok({"escalations": items})

    @app.post("/api/escalations/{escalation_id}")
    async def post_escalation_ack(escalation_id: str, request: Request):
        if controller is None:
            return _err(409, "read_only", "gateway is serving a journal without a controller")
        body = await request.json()
        decider = (body.get("decider") or "").strip()
        if not decider:
            return _err(400, "missing_decider", "decider must be a non-empty string")
        view = current_view()
        match = next((e for e in view["escalations"]
                      if e["escalation_id"] == escalation_id), None)
        if match is None:
            return _err(404, "unknown_escalation", f"no escalation {escalation_id}")
        if match.get("acked"):
            return _err(409, "already_acked", "escalation is already acknowledged")
        controller.submit_ack(escalation_id, decider)
        return _ok({"escalation_id": escalation_id, "queued": "ack"})

    @app.get("/api/journal")
    def get_journal(from_seq: int = 0, limit: int = 100):
        entries = []
        if Path(journal_path).exists():
            for entry in iter_journal(journal_path):
                if entry.seq < from_seq:
                    continue
                entries.append(entry.to_record())
                if len(entries) >= limit:
                    break
        return _ok({"entries": entries})

    @app.get("/api/config")
    def get_config():
        return _ok({"config": cfg})

    return app


def serve(app: FastAPI, host: str, port: int):
    """Run the gateway in a daemon thread; returns the uvicorn server handle."""
    import uvicorn

    config = uvicorn.Config(app, host=host, port=port, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    return server, thread
