"""Trainer process: step counter + metrics endpoints around the loop.

The training loop runs in the main thread; the HTTP surface runs in a
uvicorn thread and shares state under a lock, so the step counter stays
responsive mid-update. The counter advances the moment a batch is
assembled, before the optimizer runs -- that is what lets generation
for the next step overlap training and broadcast.
"""

from __future__ import annotations

import json
import signal
import threading
import time
from pathlib import Path

import httpx
from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse

from ..broadcast import OriginPublisher
from ..broadcast.relay import HttpTransport
from ..harness.netsim import ShapedClient
from ..harness.serve import serve_in_thread
from ..harness.wiring import Wiring
from ..policy import init_params
from ..tasks import load_dataset
from ..wire import canonical_json
from .collector import collect_step
from .loop import METRIC_COLUMNS, MetricsLog, TrainHalt, TrainerLoop
from .steps import StepLedger

QUOTA_CAP = 8   # max multiple of the base submission quota per step


class TrainerState:
    def __init__(self, ledger: StepLedger, loop: TrainerLoop, wiring: Wiring):
        self.ledger = ledger
        self.loop = loop
        self.wiring = wiring
        self.total_steps = int(wiring["steps"])
        self.metrics = loop.metrics
        self.done = False
        self.stop = threading.Event()
        self._lock = threading.Lock()

    def step_info(self) -> dict:
        with self._lock:
            step = self.ledger.counter()
            finished = self.done or step > self.total_steps
            return {
                "step": step,
                "version": self.loop.generation_version(step),
                "submissions": self.ledger.status(step).submissions_per_worker,
                "group_size": self.loop.tcfg.group_size,
                "prompts_per_file": int(self.wiring["prompts_per_file"]),
                "done": finished,
            }


def create_trainer_app(state: TrainerState) -> FastAPI:
    app = FastAPI(title="trainer")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    @app.get("/step")
    def step() -> dict:
        return state.step_info()

    @app.get("/metrics")
    def metrics(after: int = -1) -> dict:
        rows = state.metrics.rows
        return {"columns": METRIC_COLUMNS, "rows": rows[after + 1:],
                "next": len(rows) - 1}

    @app.get("/metrics/stream")
    def metrics_stream(after: int = -1) -> StreamingResponse:
        def gen():
            last = after
            while not state.stop.is_set():
                rows = state.metrics.rows
                while last + 1 < len(rows):
                    last += 1
                    yield f"data: {json.dumps(rows[last])}\n\n"
                time.sleep(0.25)
                yield ": keepalive\n\n"
        return StreamingResponse(gen(), media_type="text/event-stream")

    @app.get("/healthz")
    def healthz() -> dict:
        return {"ok": True, "done": state.done}

    return app


class _Fleet:
    """Tracks which expected workers are currently in the pool."""

    def __init__(self, orchestrator_url: str, expected: list[str]):
        self.url = orchestrator_url
        self.expected = list(expected)
        self._client = httpx.Client(timeout=5.0)
        self._cache: list[str] = []
        self._cached_at = 0.0

    def states(self) -> dict[str, str]:
        nodes = self._client.get(self.url + "/nodes").json()
        return {n["address"]: n["state"] for n in nodes}

    def alive(self, max_age: float = 0.5) -> list[str]:
        now = time.monotonic()
        if now - self._cached_at > max_age:
            try:
                states = self.states()
                self._cache = [a for a in self.expected
                               if states.get(a) in ("invited", "active")]
                self._cached_at = now
            except httpx.HTTPError:
                pass
        return self._cache

    def wait_for_all(self, stop: threading.Event) -> None:
        while not stop.is_set():
            try:
                states = self.states()
                if all(states.get(a) == "active" for a in self.expected):
                    return
            except httpx.HTTPError:
                pass
            stop.wait(0.1)


def announce(client: httpx.Client, url: str, kind: str, data: dict) -> None:
    try:
        client.post(url + "/announce", json={"kind": kind, "data": data})
    except httpx.HTTPError:
        pass


def run_trainer(wiring: Wiring) -> None:
    run_dir = wiring.run_dir
    mcfg = wiring.model_config()
    tcfg = wiring.train_config()
    dataset = load_dataset(wiring["dataset_path"])
    params = init_params(mcfg, seed=wiring.seed, scale=tcfg.init_scale,
                         eos_bias=tcfg.init_eos_bias)
    metrics = MetricsLog(run_dir / "metrics.csv")
    loop = TrainerLoop(mcfg, tcfg, params, dataset, metrics,
                       run_dir / "checkpoints", wiring.budgets)
    ledger = StepLedger(required_groups=tcfg.prompts_per_step,
                        base_submissions=int(wiring["submissions_per_worker"]))
    state = TrainerState(ledger, loop, wiring)
    signal.signal(signal.SIGTERM, lambda *a: state.stop.set())
    server = serve_in_thread(create_trainer_app(state), "127.0.0.1",
                             int(wiring["port"]))

    link = wiring.link("origin")
    session = ShapedClient(rate=link["rate"], latency=link["latency"])
    relay_urls = dict(wiring["relay_urls"])
    transport = HttpTransport(relay_urls, session,
                              origin_token=wiring["origin_token"])
    origin = OriginPublisher(transport, sorted(relay_urls),
                             int(wiring["shard_size"]), wiring.trainer_key())
    http = httpx.Client(timeout=5.0)
    orch_url = wiring["orchestrator_url"]

    blob = loop.save_checkpoint(0)
    timing = origin.publish(blob, 0)
    announce(http, orch_url, "checkpoint",
             {"version": 0, "num_shards": len(timing["shard_done"])})

    fleet = _Fleet(orch_url, wiring.worker_addresses())
    fleet.wait_for_all(state.stop)

    consumed_log = open(run_dir / "consumed.jsonl", "wb")
    try:
        for step in range(1, state.total_steps + 1):
            if state.stop.is_set():
                return
            status = ledger.status(step)
            while True:
                if state.stop.is_set():
                    return
                alive = fleet.alive()
                result = collect_step(
                    run_dir, step, alive, status.submissions_per_worker,
                    tcfg.prompts_per_step, current_version=step - 1,
                    staleness_window=tcfg.staleness_window)
                if result.ready:
                    break
                if result.quota_exhausted and alive and (
                        status.submissions_per_worker
                        < QUOTA_CAP * ledger.base_submissions):
                    ledger.raise_quota(step)
                    announce(http, orch_url, "quota",
                             {"step": step,
                              "submissions": status.submissions_per_worker})
                time.sleep(0.02)
            ledger.mark_consumed(step, len(result.all_groups),
                                 len(result.batch))
            consumed_log.write(canonical_json({
                "step": step,
                "groups": [{
                    "node_address": g.node_address,
                    "submission_index": g.submission_index,
                    "group_index": g.group_index,
                    "task_id": g.task_id,
                    "rewards": [r.r_total for r in g.records],
                } for g in result.batch],
            }) + b"\n")
            consumed_log.flush()
            try:
                loop.train_step(step, result.batch, result.all_groups,
                                result.degenerate,
                                version_used=loop.generation_version(step))
            except TrainHalt as e:
                (run_dir / "HALTED").write_text(str(e))
                announce(http, orch_url, "halt", {"step": step,
                                                  "reason": str(e)})
                return
            blob = loop.save_checkpoint(step)
            timing = origin.publish(blob, step)
            announce(http, orch_url, "checkpoint",
                     {"version": step,
                      "num_shards": len(timing["shard_done"])})
        state.done = True
        (run_dir / "DONE").write_text("ok")
        state.stop.wait()    # keep serving /step until the harness stops us
    finally:
        consumed_log.close()
        state.stop.set()
        server.should_exit = True
