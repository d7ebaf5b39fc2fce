"""Generic pool node: the process shell workers and validators run in.

A node starts an invite listener, registers with the orchestrator, and
waits. Once a signed invite for its address and pool arrives it starts
heartbeating; workloads arrive through heartbeat responses (pull, never
push) and run in a background thread. The orchestrator can flag a
restart, which tears the workload down and starts it fresh.
"""

from __future__ import annotations

import json
import signal
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import httpx
import numpy as np

from .broadcast import DownloadClient
from .broadcast.client import DownloadError
from .broadcast.relay import HttpTransport
from .harness.netsim import ShapedClient
from .harness.wiring import Wiring
from .keys import SigningKey
from .orchestrator.state import verify_invite
from .policy import params_from_bytes
from .tasks import load_dataset
from .validator import CheckContext, validate_file
from .validator.adversaries import Forge
from .worker.files import build_rollout_file
from .worker.rollout import build_submission


class NodeShell:
    def __init__(self, wiring: Wiring, key: SigningKey, port: int,
                 roles: list[str], heartbeat_interval: float | None = None):
        self.wiring = wiring
        self.key = key
        self.port = port
        self.roles = roles
        self.orch_url = wiring["orchestrator_url"]
        self.interval = heartbeat_interval or float(
            wiring.get("heartbeat_interval", 2.0))
        self.http = httpx.Client(timeout=10.0)
        self.invited = threading.Event()
        self.stop = threading.Event()
        self.restart_generation = 0
        self.task: dict | None = None
        self.task_done_report: str | None = None
        self.task_thread: threading.Thread | None = None
        self._log_lines: list[str] = []
        self._log_lock = threading.Lock()

    # -- logging --------------------------------------------------------

    def log(self, line: str) -> None:
        with self._log_lock:
            self._log_lines.append(line)

    def drain_logs(self) -> list[str]:
        with self._log_lock:
            lines, self._log_lines = self._log_lines, []
            return lines

    # -- invite listener ---------------------------------------------------

    def start_invite_listener(self) -> ThreadingHTTPServer:
        shell = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                if self.path != "/invite":
                    self.send_response(404)
                    self.end_headers()
                    return
                length = int(self.headers.get("content-length", 0))
                try:
                    invite = json.loads(self.rfile.read(length))
                except json.JSONDecodeError:
                    invite = {}
                ok = verify_invite(invite, shell.wiring.pool_key().address,
                                   shell.key.address, shell.wiring["pool_id"])
                if ok:
                    shell.invited.set()
                    shell.log("invite accepted")
                self.send_response(200 if ok else 403)
                self.end_headers()

            def log_message(self, *args):
                pass

        server = ThreadingHTTPServer(("127.0.0.1", self.port), Handler)
        threading.Thread(target=server.serve_forever, daemon=True,
                         name="invites").start()
        return server

    # -- lifecycle ---------------------------------------------------------

    def register(self) -> None:
        while not self.stop.is_set():
            try:
                r = self.http.post(self.orch_url + "/register", json={
                    "address": self.key.address,
                    "endpoint": f"http://127.0.0.1:{self.port}",
                    "hardware": {"cpus": 1, "kind": "toy"},
                    "roles": self.roles,
                })
                if r.status_code == 200:
                    return
                if r.status_code == 403:
                    self.log("registration refused: slashed")
                    self.stop.set()
                    return
            except httpx.HTTPError:
                pass
            self.stop.wait(0.2)

    def heartbeat_loop(self) -> None:
        while not self.stop.is_set():
            busy = self.task_thread is not None and self.task_thread.is_alive()
            payload = {
                "address": self.key.address,
                "status": "busy" if busy else "idle",
                "metrics": {"generation": self.restart_generation},
                "logs": self.drain_logs(),
            }
            if self.task_done_report and not busy:
                payload["task_done"] = self.task_done_report
            try:
                r = self.http.post(self.orch_url + "/heartbeat", json=payload)
            except httpx.HTTPError:
                self.stop.wait(self.interval)
                continue
            if r.status_code in (404, 410):
                self.invited.clear()
                self.register()
                self.stop.wait(self.interval)
                continue
            if r.status_code == 403:
                self.log("evicted from pool")
                self.stop.set()
                return
            body = r.json()
            if payload.get("task_done"):
                self.task_done_report = None
            if body.get("restart"):
                self.restart_workload()
            if "task" in body and not busy:
                self.start_task(body["task"])
            self.stop.wait(self.interval)

    def start_task(self, task: dict) -> None:
        self.task = task
        self.log(f"task {task['task_id']} ({task['kind']}) started")
        generation = self.restart_generation

        def run():
            try:
                if task["kind"] == "rollout-worker":
                    self.run_rollout_workload(task, generation)
                else:
                    self.run_validator_workload(task, generation)
                self.task_done_report = task["task_id"]
            except Exception as e:      # crash marks the task failed
                self.log(f"task failed: {e}")
                self.task_done_report = task["task_id"]

        self.task_thread = threading.Thread(target=run, daemon=True,
                                            name="workload")
        self.task_thread.start()

    def restart_workload(self) -> None:
        self.restart_generation += 1
        self.log(f"restart requested; generation {self.restart_generation}")
        if self.task is not None:
            task = self.task
            if self.task_thread and self.task_thread.is_alive():
                # workload threads watch the generation counter and exit
                deadline = time.monotonic() + 5.0
                while self.task_thread.is_alive() and time.monotonic() < deadline:
                    time.sleep(0.02)
            self.start_task(task)

    # -- rollout workload -------------------------------------------------

    def run_rollout_workload(self, task: dict, generation: int) -> None:
        w = self.wiring
        mcfg = w.model_config()
        tcfg = w.train_config()
        dataset = load_dataset(w["dataset_path"])
        trainer_url = w["trainer_url"]
        link = w.link("worker")
        session = ShapedClient(rate=link["rate"], latency=link["latency"])
        transport = HttpTransport(dict(w["relay_urls"]), session,
                                  client_address=self.key.address)
        client = DownloadClient(sorted(w["relay_urls"]), transport,
                                w.trainer_key().address,
                                rng_seed=int.from_bytes(
                                    self.key.public_bytes[:4], "little"))
        adversary = task.get("config", {}).get("adversary")
        checkpoints: dict[int, object] = {}
        submitted: dict[int, int] = {}

        def fetch_params(version: int):
            if version not in checkpoints:
                data = client.download_version(version)
                got_cfg, params = params_from_bytes(data)
                if got_cfg != mcfg:
                    raise DownloadError("checkpoint model shape mismatch")
                checkpoints[version] = params
                for v in sorted(checkpoints)[:-6]:
                    del checkpoints[v]
            return checkpoints[version]

        while not self.stop.is_set() and generation == self.restart_generation:
            try:
                info = self.http.get(trainer_url + "/step").json()
            except (httpx.HTTPError, json.JSONDecodeError):
                self.stop.wait(0.2)
                continue
            if info.get("done"):
                self.log("trainer done; workload exiting")
                return
            step, version = int(info["step"]), int(info["version"])
            quota = int(info["submissions"])
            mine = submitted.get(step, 0)
            if mine >= quota:
                self.stop.wait(0.03)
                continue
            try:
                params = fetch_params(version)
            except DownloadError as e:
                self.log(f"checkpoint {version} unavailable: {e}")
                self.stop.wait(0.2)
                continue
            client.healing_tick()
            blob = self.build_file(params, mcfg, tcfg, dataset, step, mine,
                                   version, info, adversary)
            if self.upload(step, mine, blob):
                submitted[step] = mine + 1
                self.log(f"submitted step={step} sub={mine}")

    def build_file(self, params, mcfg, tcfg, dataset, step, sub, version,
                   info, adversary) -> bytes:
        if adversary:
            quantized = params.copy()
            for a in quantized.arrays():
                np.round(a, 2, out=a)
            forge = Forge(
                params=params, stale_params=quantized, other_params=quantized,
                mcfg=mcfg, dataset=dataset, key=self.key,
                checkpoint_version=version,
                group_size=int(info["group_size"]),
                prompts_per_file=int(info["prompts_per_file"]),
                temperature=tcfg.temperature, alpha=tcfg.alpha,
                budgets=self.wiring.budgets, eos_floor=tcfg.eos_prob_floor)
            return forge.generate(adversary, step, sub)
        file = build_submission(
            params, mcfg, dataset, self.key.address, step, sub, version,
            prompts_per_file=int(info["prompts_per_file"]),
            group_size=int(info["group_size"]),
            temperature=tcfg.temperature, alpha=tcfg.alpha,
            budgets=self.wiring.budgets, adv_eps=tcfg.adv_eps,
            adv_norm=tcfg.adv_norm, eos_floor=tcfg.eos_prob_floor)
        return build_rollout_file(file, self.key)

    def upload(self, step: int, sub: int, blob: bytes) -> bool:
        url = (f"{self.orch_url}/rollouts/{step}/{self.key.address}/{sub}")
        for attempt in (0, 1):
            try:
                r = self.http.put(url, content=blob)
                if r.status_code == 200:
                    return True
            except httpx.HTTPError:
                pass
        self.log(f"upload failed step={step} sub={sub}; dropping")
        return False

    # -- validator workload -------------------------------------------------

    def run_validator_workload(self, task: dict, generation: int) -> None:
        w = self.wiring
        mcfg = w.model_config()
        tcfg = w.train_config()
        checkpoint_dir = w.run_dir / "checkpoints"

        def load_checkpoint(version: int):
            path = checkpoint_dir / f"v{version:05d}.bin"
            if not path.exists():
                return None
            _, params = params_from_bytes(path.read_bytes())
            return params

        ctx = CheckContext(
            mcfg=mcfg, dataset=load_dataset(w["dataset_path"]),
            alpha=tcfg.alpha, budgets=w.budgets,
            group_size=tcfg.group_size, adv_eps=tcfg.adv_eps,
            adv_norm=tcfg.adv_norm, eos_prob_floor=tcfg.eos_prob_floor,
            commit_q=float(w.get("commit_q", 1.0)),
            q_seed=w.seed, load_checkpoint=load_checkpoint)
        trainer_url = w["trainer_url"]
        while not self.stop.is_set() and generation == self.restart_generation:
            try:
                lease = self.http.post(self.orch_url + "/rollouts/claim",
                                       json={"validator_id": self.key.address}
                                       ).json().get("lease")
            except (httpx.HTTPError, json.JSONDecodeError):
                self.stop.wait(0.2)
                continue
            if lease is None:
                try:
                    done = self.http.get(trainer_url + "/step").json().get("done")
                except (httpx.HTTPError, json.JSONDecodeError):
                    done = False
                if done:
                    self.log("trainer done; validator exiting")
                    return
                self.stop.wait(0.02)
                continue
            data = open(lease["path"], "rb").read()
            verdict = validate_file(
                data, ctx,
                expected_identity=(lease["node_address"], lease["step"],
                                   lease["submission_index"]))
            # the orchestrator tracks files by their storage id, and the
            # uploader owns the slot whatever the file claims
            verdict.file_id = lease["file_id"]
            verdict.node_address = lease["node_address"]
            verdict.step = lease["step"]
            try:
                self.http.post(self.orch_url + "/verdicts",
                               json=verdict.to_record())
                self.log(f"verdict {verdict.result} {verdict.file_id}"
                         + (f" ({verdict.failed_check})"
                            if verdict.failed_check else ""))
            except httpx.HTTPError:
                self.log(f"verdict post failed for {verdict.file_id}")

    # -- main ---------------------------------------------------------------

    def run(self) -> None:
        signal.signal(signal.SIGTERM, lambda *a: self.stop.set())
        server = self.start_invite_listener()
        try:
            self.register()
            if self.stop.is_set():
                return
            while not self.invited.wait(0.1):
                if self.stop.is_set():
                    return
            self.heartbeat_loop()
        finally:
            server.shutdown()


def run_node(wiring: Wiring, role: str, index: int, port: int) -> None:
    if role == "rollout-worker":
        key = wiring.worker_key(index)
    else:
        key = wiring.validator_key(index)
    NodeShell(wiring, key, port, [role]).run()
