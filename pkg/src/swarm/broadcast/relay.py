"""Relay service: HTTP front end plus transports.

The routing logic lives in ``route_request`` so the FastAPI app and the
in-process transport used by simulations serve byte-identical responses.
"""

from __future__ import annotations

import json
import threading
import time

from fastapi import FastAPI, Request, Response

from .store import RelayCore


def route_request(core: RelayCore, method: str, path: str, body: bytes,
                  client: str, origin_ok: bool) -> tuple[int, bytes]:
    """Dispatch one request against a relay core. Returns (status, payload)."""
    parts = [p for p in path.split("/") if p]
    if method == "GET":
        if parts == ["probe"]:
            r = core.get_probe(client)
        elif len(parts) == 2 and parts[0] == "manifest":
            r = core.get_manifest(int(parts[1]), client)
        elif len(parts) == 3 and parts[0] == "shard":
            r = core.get_shard(int(parts[1]), int(parts[2]), client)
        elif parts == ["versions"]:
            return 200, json.dumps(core.stored_versions()).encode()
        else:
            return 404, b""
        return r.status, r.payload
    if method == "POST":
        if not origin_ok:
            return 403, b""
        if len(parts) == 2 and parts[0] == "manifest":
            r = core.put_manifest(int(parts[1]), body)
        elif len(parts) == 3 and parts[0] == "shard":
            r = core.put_shard(int(parts[1]), int(parts[2]), body)
        elif parts == ["allowlist"]:
            core.set_allowlist(json.loads(body or b"[]"))
            return 200, b""
        elif parts == ["fault"]:
            spec = json.loads(body)
            core.set_fault(int(spec["version"]), int(spec["index"]))
            return 200, b""
        else:
            return 404, b""
        return r.status, r.payload
    return 405, b""


def create_relay_app(core: RelayCore, origin_token: str) -> FastAPI:
    app = FastAPI(title=f"relay-{core.relay_id}")

    @app.api_route("/{path:path}", methods=["GET", "POST"])
    async def dispatch(path: str, request: Request) -> Response:
        client = request.headers.get("x-node-address", "")
        origin_ok = request.headers.get("x-origin-token", "") == origin_token
        body = await request.body()
        status, payload = route_request(core, request.method, "/" + path,
                                        body, client, origin_ok)
        return Response(content=payload, status_code=status,
                        media_type="application/octet-stream")

    return app


class HttpTransport:
    """Transport over real sockets; ``session`` may be a shaped client."""

    def __init__(self, base_urls: dict[str, str], session,
                 client_address: str = "", origin_token: str = ""):
        self.base_urls = dict(base_urls)
        self.session = session
        self.headers = {"x-node-address": client_address,
                        "x-origin-token": origin_token}

    def get(self, relay_id: str, path: str) -> tuple[int, bytes]:
        r = self.session.get(self.base_urls[relay_id] + path, headers=self.headers)
        return r.status_code, r.content

    def post(self, relay_id: str, path: str, data: bytes) -> tuple[int, bytes]:
        r = self.session.post(self.base_urls[relay_id] + path, content=data,
                              headers=self.headers)
        return r.status_code, r.content


class DirectTransport:
    """In-process transport over RelayCore objects with optional link
    shaping: per-relay bytes/s caps (one transfer at a time per link)
    and fixed latency. Lets simulations run thousands of downloads with
    real admission-control and integrity behavior but no sockets."""

    def __init__(self, cores: dict[str, RelayCore], client_address: str = "",
                 origin_token_ok: bool = True,
                 rate: dict[str, float] | None = None, latency: float = 0.0):
        self.cores = cores
        self.client_address = client_address
        self.origin_token_ok = origin_token_ok
        self.rate = rate or {}
        self.latency = latency
        self._links = {r: threading.Lock() for r in cores}

    def _shaped(self, relay_id: str, nbytes: int) -> None:
        if self.latency:
            time.sleep(self.latency)
        bps = self.rate.get(relay_id)
        if bps:
            with self._links[relay_id]:
                time.sleep(nbytes / bps)

    def get(self, relay_id: str, path: str) -> tuple[int, bytes]:
        status, payload = route_request(self.cores[relay_id], "GET", path, b"",
                                        self.client_address, False)
        self._shaped(relay_id, len(payload))
        return status, payload

    def post(self, relay_id: str, path: str, data: bytes) -> tuple[int, bytes]:
        self._shaped(relay_id, len(data))
        return route_request(self.cores[relay_id], "POST", path, data,
                             self.client_address, self.origin_token_ok)
