"""HTTP/1.1 JSON front end for the Return Prediction Service.

Models and the feature store are loaded once and only read by handlers; the
metrics counters are the only shared mutable state and sit behind a lock.
"""
from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .scoring import BadRequest, Predictor, cart_from_request, response_body

MAX_BODY = 1 << 20


class Metrics:
    def __init__(self, keep: int = 100_000):
        self._lock = threading.Lock()
        self._keep = keep
        self.requests = 0
        self.ok = 0
        self.client_errors = 0
        self.server_errors = 0
        self._latency: list[float] = []

    def record(self, status: int, latency_ms: float | None) -> None:
        with self._lock:
            self.requests += 1
            if status < 400:
                self.ok += 1
            elif status < 500:
                self.client_errors += 1
            else:
                self.server_errors += 1
            if latency_ms is not None:
                self._latency.append(latency_ms)
                if len(self._latency) > self._keep:
                    del self._latency[: len(self._latency) - self._keep]

    def snapshot(self) -> dict:
        with self._lock:
            lat = np.array(self._latency)
            counters = {"requests": self.requests, "ok": self.ok,
                        "client_errors": self.client_errors, "server_errors": self.server_errors}
        pct = ({f"p{q}": float(np.percentile(lat, q)) for q in (50, 95, 99)} if lat.size
               else {"p50": None, "p95": None, "p99": None})
        return {"counters": counters, "latency_ms": pct}


class PredictionServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, predictor: Predictor, clock=time.time):
        self.predictor = predictor
        self.metrics = Metrics()
        self.clock = clock
        self.started = time.time()
        super().__init__(address, _Handler)


class _Handler(BaseHTTPRequestHandler):
    server: PredictionServer
    protocol_version = "HTTP/1.1"

    def log_message(self, format, *args):  # quiet by default
        pass

    def _send(self, status: int, body: bytes, ctype: str = "application/json") -> None:
        self.send_response(status)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _json(self, status: int, obj) -> None:
        self._send(status, json.dumps(obj, sort_keys=True).encode())

    def do_GET(self):
        if self.path == "/health":
            p = self.server.predictor
            snap = self.server.metrics.snapshot()
            self._json(200, {"status": "ok", "model_versions": p.versions,
                             "store_cutoff_ms": p.store_cutoff_ms, **snap})
        elif self.path == "/metrics":
            snap = self.server.metrics.snapshot()
            lines = [f"{k} {v}" for k, v in snap["counters"].items()]
            lines += [f"latency_ms_{k} {'nan' if v is None else f'{v:.6f}'}"
                      for k, v in snap["latency_ms"].items()]
            self._send(200, ("\n".join(lines) + "\n").encode(), "text/plain; charset=utf-8")
        else:
            self._json(404, {"error": f"no route {self.path}"})

    def do_POST(self):
        if self.path != "/predict":
            self._json(404, {"error": f"no route {self.path}"})
            return
        start = time.perf_counter()
        latency = None
        try:
            n = int(self.headers.get("Content-Length", "0"))
            if n <= 0 or n > MAX_BODY:
                raise BadRequest("missing or oversized body")
            req = json.loads(self.rfile.read(n))
            cart = cart_from_request(req, int(self.server.clock() * 1000))
            scored = self.server.predictor.score(cart)
            latency = (time.perf_counter() - start) * 1000.0
            status, body = 200, response_body(scored, self.server.predictor.versions, latency)
        except (BadRequest, json.JSONDecodeError, UnicodeDecodeError) as e:
            status, body = 400, {"error": str(e)}
        except Exception as e:  # keep serving; report the failure
            status, body = 500, {"error": f"{type(e).__name__}: {e}"}
        # counted before the reply leaves, so a client that has its answer also sees it in /health
        self.server.metrics.record(status, latency)
        self._json(status, body)


def make_server(predictor: Predictor, host: str = "127.0.0.1", port: int = 8080) -> PredictionServer:
    return PredictionServer((host, port), predictor)


def serve_in_thread(predictor: Predictor, host: str = "127.0.0.1", port: int = 0
                    ) -> tuple[PredictionServer, threading.Thread]:
    """Start a server on a background thread; port 0 picks a free port."""
    srv = make_server(predictor, host, port)
    t = threading.Thread(target=srv.serve_forever, daemon=True)
    t.start()
    return srv, t
