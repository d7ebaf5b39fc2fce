"""HTTP surface of the coordination plane.

Wraps OrchestratorCore + RolloutStorage in a FastAPI app. Besides the
node-facing endpoints (register, heartbeat, rollout upload) it serves
the operator console: node/task tables, log tails, verdict feed and a
server-push event stream.
"""

from __future__ import annotations

import json
import threading
import time
import httpx
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from .state import OrchestratorCore
from .storage import RolloutStorage


class RegisterRequest(BaseModel):
    address: str
    endpoint: str = ""
    hardware: dict = Field(default_factory=dict)
    roles: list[str] = Field(default_factory=lambda: ["rollout-worker"])


class HeartbeatRequest(BaseModel):
    address: str
    status: str = "idle"             # idle | busy
    metrics: dict = Field(default_factory=dict)
    logs: list[str] = Field(default_factory=list)
    task_done: str | None = None
    task_ok: bool = True


class TaskCreate(BaseModel):
    kind: str
    config: dict = Field(default_factory=dict)


class VerdictPost(BaseModel):
    file_id: str
    result: str
    failed_check: str | None = None
    details: str = ""
    node_address: str | None = None
    step: int | None = None


class ClaimRequest(BaseModel):
    validator_id: str


class AnnounceRequest(BaseModel):
    kind: str
    data: dict = Field(default_factory=dict)


class OrchestratorService:
    def __init__(self, core: OrchestratorCore, storage: RolloutStorage,
                 relay_urls: list[str] | None = None, origin_token: str = "",
                 sweep_interval: float | None = None):
        self.core = core
        self.storage = storage
        self.relay_urls = relay_urls or []
        self.origin_token = origin_token
        self.sweep_interval = sweep_interval or core.heartbeat_interval
        self._http = httpx.Client(timeout=5.0)
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    # -- side effects toward the rest of the fleet ----------------------

    def push_allowlist(self) -> None:
        payload = json.dumps(self.core.allowlist()).encode()
        for url in self.relay_urls:
            try:
                self._http.post(url + "/allowlist", content=payload,
                                headers={"x-origin-token": self.origin_token})
            except httpx.HTTPError:
                pass

    def deliver_invites(self) -> None:
        for endpoint, invite in self.core.pending_invites():
            if not endpoint:
                continue
            try:
                r = self._http.post(endpoint + "/invite", json=invite)
            except httpx.HTTPError:
                continue
            if r.status_code == 200:
                self.core.mark_invited(invite["node_address"])
                self.push_allowlist()

    def sweep_once(self) -> None:
        died = self.core.liveness_sweep()
        if died:
            self.push_allowlist()
        self.deliver_invites()

    def start_background(self) -> None:
        def loop():
            while not self._stop.wait(self.sweep_interval):
                self.sweep_once()
        t = threading.Thread(target=loop, daemon=True, name="sweep")
        t.start()
        self._threads.append(t)

    def stop(self) -> None:
        self._stop.set()

    # -- verdict handling -------------------------------------------------

    def handle_verdict(self, v: VerdictPost) -> dict:
        accepted = v.result == "accept"
        moved = self.storage.resolve(v.file_id, accepted)
        self.core.emit("verdict", v.model_dump())
        if accepted:
            if v.node_address:
                self.core.record_contribution(v.node_address, v.file_id)
        elif v.node_address:
            if self.core.slash(v.node_address, v.model_dump()):
                self.push_allowlist()
        return {"ok": True, "moved": str(moved) if moved else None}


def create_orchestrator_app(service: OrchestratorService) -> FastAPI:
    core = service.core
    app = FastAPI(title="orchestrator")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    @app.post("/register")
    def register(req: RegisterRequest) -> JSONResponse:
        result = core.register(req.address, req.endpoint, req.hardware,
                               req.roles)
        status = 200 if result.get("ok") else 403
        return JSONResponse(result, status_code=status)

    @app.post("/heartbeat")
    def heartbeat(req: HeartbeatRequest) -> JSONResponse:
        result = core.heartbeat(req.address, req.status, req.metrics,
                                req.logs, req.task_done, req.task_ok)
        return JSONResponse(result, status_code=result.pop("code", 200))

    @app.get("/nodes")
    def nodes() -> list[dict]:
        return core.node_views()

    @app.get("/nodes/{address}/logs")
    def node_logs(address: str) -> dict:
        return {"address": address, "lines": core.node_logs(address)}

    @app.post("/nodes/{address}/restart")
    def restart(address: str) -> JSONResponse:
        ok = core.request_restart(address)
        return JSONResponse({"ok": ok}, status_code=200 if ok else 404)

    @app.post("/tasks")
    def create_task(req: TaskCreate) -> dict:
        return core.create_task(req.kind, req.config).public_view()

    @app.get("/tasks")
    def tasks() -> list[dict]:
        return core.task_views()

    @app.post("/verdicts")
    def verdicts(v: VerdictPost) -> dict:
        return service.handle_verdict(v)

    @app.get("/ledger")
    def ledger() -> dict:
        return {"events": [e.to_record() for e in core.ledger.events]}

    @app.get("/events")
    def events(after: int = -1, wait: float = 0.0) -> dict:
        return {"events": core.events_after(after, wait=min(wait, 10.0))}

    @app.get("/events/stream")
    def events_stream(after: int = -1) -> StreamingResponse:
        def gen():
            last = after
            while True:
                batch = core.events_after(last, wait=5.0)
                for ev in batch:
                    last = ev["seq"]
                    yield f"data: {json.dumps(ev)}\n\n"
                if not batch:
                    yield ": keepalive\n\n"
        return StreamingResponse(gen(), media_type="text/event-stream")

    @app.post("/announce")
    def announce(req: AnnounceRequest) -> dict:
        core.emit(req.kind, req.data)
        return {"ok": True}

    @app.put("/rollouts/{step}/{address}/{sub}")
    async def upload(step: int, address: str, sub: int, request: Request):
        data = await request.body()
        file_id = service.storage.store(step, address, sub, data)
        core.emit("upload", {"file_id": file_id, "step": step,
                             "node_address": address})
        return {"ok": True, "file_id": file_id}

    @app.post("/rollouts/claim")
    def claim(req: ClaimRequest) -> dict:
        lease = service.storage.claim(req.validator_id)
        return {"lease": lease}

    @app.get("/allowlist")
    def allowlist() -> list[str]:
        return core.allowlist()

    return app
