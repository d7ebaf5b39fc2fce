"""Link shaping for experiments.

Real sockets, shaped timing: a ShapedClient enforces a bytes/s cap and
a fixed latency on its own traffic by sleeping around the actual HTTP
call. Upload bytes are charged before the request is sent (the payload
must cross the link before the far end stores it), download bytes
after the response arrives (the caller cannot see data sooner than the
link could carry it). That is enough to give pipelining and
relay-selection measurements real meaning on loopback.
"""

from __future__ import annotations

import threading
import time

import httpx


class ShapedClient:
    def __init__(self, rate: float | None = None, latency: float = 0.0,
                 timeout: float = 30.0):
        self.rate = rate
        self.latency = latency
        self._client = httpx.Client(timeout=timeout)
        self._lock = threading.Lock()   # one transfer at a time per link

    def _charge(self, nbytes: int) -> None:
        if self.rate and nbytes:
            with self._lock:
                time.sleep(nbytes / self.rate)

    def request(self, method: str, url: str, *, content: bytes | None = None,
                json=None, headers=None) -> httpx.Response:
        if self.latency:
            time.sleep(self.latency)
        self._charge(len(content) if content else 0)
        r = self._client.request(method, url, content=content, json=json,
                                 headers=headers)
        self._charge(len(r.content))
        return r

    def get(self, url: str, **kw) -> httpx.Response:
        return self.request("GET", url, **kw)

    def post(self, url: str, **kw) -> httpx.Response:
        return self.request("POST", url, **kw)

    def put(self, url: str, **kw) -> httpx.Response:
        return self.request("PUT", url, **kw)

    def close(self) -> None:
        self._client.close()
