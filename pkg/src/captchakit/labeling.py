"""HTTP labeling service: the human side of the active-learning loop.

Serves the label task queue to a browser UI. All JSON bodies carry
``protocol_version: 1``. Endpoints:

    GET  /api/health             service liveness + protocol version
    GET  /api/rules              scheme labeling rules (charset, exclusions,
                                 length range) for client-side prevalidation
    GET  /api/batch?limit=N      assign up to N queued tasks to the caller
    POST /api/label              {task_id, label, submitter} -> updated task
    GET  /api/progress?round=N   round counters + confusion top-list + history
    GET  /images/<sample_id>.png task image bytes
    GET  /                       static UI assets when an assets dir is set
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .adapters import TaskError, TaskQueue

PROTOCOL_VERSION = 1

_PLACEHOLDER_PAGE = """<!doctype html>
<html><head><meta charset="utf-8"><title>labeling service</title></head>
<body><h1>Labeling service is running</h1>
<p>No UI assets are configured. The JSON API lives under <code>/api/</code>.</p>
</body></html>
"""

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".png": "image/png",
    ".svg": "image/svg+xml",
}


class LabelingService:
    """Threaded HTTP server around a TaskQueue.

    ``image_source`` maps sample_id -> PNG bytes; ``progress_source``
    (optional) returns extra progress context (confusion top-list,
    success-rate history) merged into /api/progress responses.
    """

    def __init__(self, queue: TaskQueue, rules: dict, image_source,
                 progress_source=None, assets_dir: str | None = None,
                 host: str = "127.0.0.1", port: int = 0):
        self.queue = queue
        self.rules = dict(rules)
        self.image_source = image_source
        self.progress_source = progress_source
        self.assets_dir = assets_dir
        service = self

        class Handler(BaseHTTPRequestHandler):
            # quiet: tests and campaigns do not want per-request stderr lines
            def log_message(self, fmt, *args):
                pass

            def _send_json(self, doc: dict, status: int = 200) -> None:
                doc = {"protocol_version": PROTOCOL_VERSION, **doc}
                body = json.dumps(doc).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def _send_bytes(self, body: bytes, content_type: str, status: int = 200) -> None:
                self.send_response(status)
                self.send_header("Content-Type", content_type)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self):
                parsed = urlparse(self.path)
                query = parse_qs(parsed.query)
                path = parsed.path
                try:
                    if path == "/api/health":
                        self._send_json({"status": "ok"})
                    elif path == "/api/rules":
                        self._send_json({"rules": service.rules})
                    elif path == "/api/batch":
                        limit = int(query.get("limit", ["20"])[0])
                        submitter = query.get("submitter", ["anonymous"])[0]
                        tasks = service.queue.fetch_batch(limit, submitter)
                        self._send_json({"tasks": [t.to_document() for t in tasks]})
                    elif path == "/api/progress":
                        round_no = int(query.get("round", ["-1"])[0])
                        doc = service.queue.progress(round_no)
                        if service.progress_source is not None:
                            doc = {**doc, **service.progress_source()}
                        self._send_json(doc)
                    elif path.startswith("/images/"):
                        sample_id = path[len("/images/"):]
                        if sample_id.endswith(".png"):
                            sample_id = sample_id[:-4]
                        png = service.image_source(sample_id)
                        if png is None:
                            self._send_json({"error": f"unknown image {sample_id!r}"}, 404)
                        else:
                            self._send_bytes(png, "image/png")
                    else:
                        self._serve_asset(path)
                except Exception as e:  # surface, never crash the thread
                    self._send_json({"error": str(e)}, 500)

            def _serve_asset(self, path: str) -> None:
                import os

                if service.assets_dir is None:
                    if path in ("/", "/index.html"):
                        self._send_bytes(_PLACEHOLDER_PAGE.encode(), "text/html; charset=utf-8")
                    else:
                        self._send_json({"error": "not found"}, 404)
                    return
                rel = "index.html" if path == "/" else path.lstrip("/")
                root = os.path.abspath(service.assets_dir)
                full = os.path.abspath(os.path.join(root, rel))
                if full != root and not full.startswith(root + os.sep):
                    self._send_json({"error": "not found"}, 404)
                    return
                if not os.path.isfile(full):
                    self._send_json({"error": "not found"}, 404)
                    return
                ext = os.path.splitext(full)[1]
                with open(full, "rb") as fh:
                    self._send_bytes(fh.read(), _CONTENT_TYPES.get(ext, "application/octet-stream"))

            def do_POST(self):
                parsed = urlparse(self.path)
                try:
                    length = int(self.headers.get("Content-Length", "0"))
                    doc = json.loads(self.rfile.read(length) or b"{}")
                    if parsed.path == "/api/label":
                        task = service.queue.submit_label(
                            doc["task_id"], doc.get("label", ""), doc.get("submitter", "anonymous")
                        )
                        self._send_json({"task": task.to_document()})
                    else:
                        self._send_json({"error": "not found"}, 404)
                except TaskError as e:
                    self._send_json({"error": str(e)}, 409)
                except (KeyError, json.JSONDecodeError) as e:
                    self._send_json({"error": f"bad request: {e}"}, 400)
                except Exception as e:
                    self._send_json({"error": str(e)}, 500)

        self._server = ThreadingHTTPServer((host, port), Handler)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def serve_forever(self) -> None:
        self._server.serve_forever()


def rules_for_scheme(cfg) -> dict:
    """The labeling rule document shared with the UI's prevalidator."""
    return {
        "scheme_id": cfg.scheme_id,
        "charset": cfg.charset,
        "excluded_chars": sorted(cfg.excluded_chars),
        "length_range": list(cfg.length_range),
    }
