"""Run a FastAPI app in a background uvicorn server thread."""

from __future__ import annotations

import threading
import time

import uvicorn


def serve_in_thread(app, host: str, port: int) -> uvicorn.Server:
    config = uvicorn.Config(app, host=host, port=port, log_level="warning",
                            access_log=False)
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True, name=f"uvicorn:{port}")
    thread.start()
    deadline = time.monotonic() + 15.0
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError(f"server on port {port} failed to start")
        time.sleep(0.01)
    return server
