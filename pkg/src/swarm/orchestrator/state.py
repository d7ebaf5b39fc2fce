"""Coordination-plane state machine, clock-injected for testability.

Node lifecycle: discovered -> invited -> active -> {dead, slashed};
dead nodes may re-register, slashed nodes are out for good. All
mutating entry points hold one lock, which is what makes task
assignment linearizable: a task can never be handed to two nodes.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, field

from ..keys import SigningKey, verify_signature
from ..wire import canonical_json
from .ledger import Ledger

NODE_STATES = ("discovered", "invited", "active", "dead", "slashed")
TASK_KINDS = ("rollout-worker", "validator")


@dataclass
class NodeRecord:
    address: str
    endpoint: str
    hardware: dict
    roles: list[str]
    state: str = "discovered"
    missed_heartbeats: int = 0
    last_heartbeat: float = 0.0
    current_task: str | None = None
    restart_pending: bool = False
    logs: deque = field(default_factory=lambda: deque(maxlen=200))

    def public_view(self) -> dict:
        return {
            "address": self.address, "state": self.state,
            "hardware": self.hardware, "roles": self.roles,
            "missed_heartbeats": self.missed_heartbeats,
            "current_task": self.current_task,
        }


@dataclass
class TaskSpec:
    task_id: str
    kind: str
    config: dict
    assigned_node: str | None = None
    status: str = "pending"    # pending | running | failed | done

    def public_view(self) -> dict:
        return {"task_id": self.task_id, "kind": self.kind,
                "status": self.status, "assigned_node": self.assigned_node,
                "config": self.config}


def build_invite(key: SigningKey, node_address: str, pool_id: str,
                 domain_id: str) -> dict:
    payload = {"node_address": node_address, "pool_id": pool_id,
               "domain_id": domain_id}
    return {**payload, "signature": key.sign(canonical_json(payload)).hex()}


def verify_invite(invite: dict, pool_owner: str, my_address: str,
                  pool_id: str) -> bool:
    payload = {k: invite.get(k) for k in ("node_address", "pool_id", "domain_id")}
    if payload["node_address"] != my_address or payload["pool_id"] != pool_id:
        return False
    try:
        sig = bytes.fromhex(invite["signature"])
    except (KeyError, ValueError):
        return False
    return verify_signature(pool_owner, canonical_json(payload), sig)


class OrchestratorCore:
    def __init__(self, pool_key: SigningKey, pool_id: str, domain_id: str,
                 ledger: Ledger, heartbeat_interval: float = 2.0,
                 max_missed: int = 3, clock=time.monotonic):
        self.pool_key = pool_key
        self.pool_id = pool_id
        self.domain_id = domain_id
        self.ledger = ledger
        self.heartbeat_interval = heartbeat_interval
        self.max_missed = max_missed
        self.clock = clock
        self.nodes: dict[str, NodeRecord] = {}
        self.tasks: dict[str, TaskSpec] = {}
        self.events: list[dict] = []
        self._task_counter = 0
        self._lock = threading.RLock()
        self._event_cond = threading.Condition(self._lock)

    # -- events --------------------------------------------------------

    def emit(self, kind: str, data: dict) -> None:
        with self._event_cond:
            self.events.append({"seq": len(self.events), "kind": kind,
                                "data": data})
            self._event_cond.notify_all()

    def events_after(self, seq: int, wait: float = 0.0) -> list[dict]:
        with self._event_cond:
            if wait and len(self.events) <= seq + 1:
                self._event_cond.wait(wait)
            return self.events[seq + 1:]

    # -- registration and invites ---------------------------------------

    def register(self, address: str, endpoint: str, hardware: dict,
                 roles: list[str]) -> dict:
        with self._lock:
            existing = self.nodes.get(address)
            if existing and existing.state == "slashed":
                return {"ok": False, "error": "address is slashed"}
            if existing and existing.state in ("discovered", "invited", "active"):
                # repeated registration refreshes metadata only
                existing.endpoint, existing.hardware = endpoint, hardware
                existing.roles = list(roles)
                return {"ok": True, "state": existing.state}
            # fresh node, or a dead one coming back as discovered
            self.nodes[address] = NodeRecord(
                address=address, endpoint=endpoint, hardware=hardware,
                roles=list(roles))
            self.ledger.append("register", {"address": address,
                                            "roles": list(roles)})
            self.emit("node", self.nodes[address].public_view())
            return {"ok": True, "state": "discovered"}

    def pending_invites(self) -> list[tuple[str, dict]]:
        """(endpoint, invite) for every node awaiting one."""
        with self._lock:
            out = []
            for node in self.nodes.values():
                if node.state == "discovered":
                    out.append((node.endpoint, build_invite(
                        self.pool_key, node.address, self.pool_id,
                        self.domain_id)))
            return out

    def mark_invited(self, address: str) -> None:
        with self._lock:
            node = self.nodes.get(address)
            if node and node.state == "discovered":
                node.state = "invited"
                node.last_heartbeat = self.clock()
                self.emit("node", node.public_view())

    # -- heartbeats and tasks -------------------------------------------

    def heartbeat(self, address: str, status: str, metrics: dict,
                  logs: list[str], task_done: str | None = None,
                  task_ok: bool = True) -> dict:
        with self._lock:
            node = self.nodes.get(address)
            if node is None:
                return {"ok": False, "error": "unknown node", "code": 404}
            if node.state == "slashed":
                return {"ok": False, "error": "node is slashed", "code": 403}
            if node.state == "dead":
                return {"ok": False, "error": "node marked dead, re-register",
                        "code": 410}
            if node.state == "invited":
                node.state = "active"
                self.ledger.append("invite_accept", {"address": address})
                self.emit("node", node.public_view())
            node.missed_heartbeats = 0
            node.last_heartbeat = self.clock()
            for line in logs:
                node.logs.append(line)
            if task_done is not None:
                task = self.tasks.get(task_done)
                if task and task.assigned_node == address:
                    task.status = "done" if task_ok else "failed"
                    node.current_task = None
                    self.emit("task", task.public_view())
            response: dict = {"ok": True}
            if node.restart_pending:
                node.restart_pending = False
                response["restart"] = True
            if status == "idle" and node.current_task is None:
                task = self._next_task_for(node)
                if task is not None:
                    task.assigned_node = address
                    task.status = "running"
                    node.current_task = task.task_id
                    response["task"] = task.public_view()
                    self.emit("task", task.public_view())
            return response

    def _next_task_for(self, node: NodeRecord) -> TaskSpec | None:
        for task in self.tasks.values():
            if task.status == "pending" and task.kind in node.roles:
                return task
        return None

    def create_task(self, kind: str, config: dict) -> TaskSpec:
        if kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {kind}")
        with self._lock:
            self._task_counter += 1
            task = TaskSpec(task_id=f"task-{self._task_counter}", kind=kind,
                            config=config)
            self.tasks[task.task_id] = task
            self.emit("task", task.public_view())
            return task

    def request_restart(self, address: str) -> bool:
        with self._lock:
            node = self.nodes.get(address)
            if node is None:
                return False
            node.restart_pending = True
            return True

    # -- liveness and slashing --------------------------------------------

    def liveness_sweep(self) -> list[str]:
        """One sweep tick: stale nodes accrue a missed heartbeat; at
        max_missed they are dead and their task is freed. Returns the
        addresses newly marked dead."""
        died = []
        with self._lock:
            now = self.clock()
            for node in self.nodes.values():
                if node.state not in ("active", "invited"):
                    continue
                if now - node.last_heartbeat <= self.heartbeat_interval:
                    continue
                node.missed_heartbeats += 1
                if node.missed_heartbeats >= self.max_missed:
                    node.state = "dead"
                    died.append(node.address)
                    self._release_task(node)
                self.emit("node", node.public_view())
        return died

    def _release_task(self, node: NodeRecord) -> None:
        if node.current_task:
            task = self.tasks.get(node.current_task)
            if task and task.assigned_node == node.address:
                task.status = "pending"
                task.assigned_node = None
                self.emit("task", task.public_view())
            node.current_task = None

    def slash(self, address: str, verdict: dict) -> bool:
        with self._lock:
            node = self.nodes.get(address)
            if node is None or node.state == "slashed":
                return False
            node.state = "slashed"
            self._release_task(node)
            self.ledger.append("slash", {
                "address": address,
                "file_id": verdict.get("file_id"),
                "failed_check": verdict.get("failed_check"),
            })
            self.emit("node", node.public_view())
            return True

    def record_contribution(self, address: str, file_id: str) -> None:
        with self._lock:
            self.ledger.append("contribution", {"address": address,
                                                "file_id": file_id})

    # -- views ------------------------------------------------------------

    def allowlist(self) -> list[str]:
        """Addresses allowed to pull checkpoints: live pool members."""
        with self._lock:
            return sorted(a for a, n in self.nodes.items()
                          if n.state in ("invited", "active"))

    def node_views(self) -> list[dict]:
        with self._lock:
            return [n.public_view() for n in self.nodes.values()]

    def task_views(self) -> list[dict]:
        with self._lock:
            return [t.public_view() for t in self.tasks.values()]

    def node_logs(self, address: str) -> list[str]:
        with self._lock:
            node = self.nodes.get(address)
            return list(node.logs) if node else []
