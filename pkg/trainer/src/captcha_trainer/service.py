"""HTTP service exposing the trainer over adapter protocol v1.

Endpoints:

    GET  /health          plain JSON descriptor
    POST /train           framed; starts a recognizer training job
    POST /finetune        framed; starts a frozen-layer fine-tuning job
    POST /predict         framed; synchronous, images as img-NNNNN parts
    POST /synthesize      framed; starts a translation job
    POST /jobs/<job_id>   framed {"op": "poll"}; job status

Long-running work always answers {"status": "running", "job_id": ...}
immediately and is polled to completion; one training/translation job
runs at a time, the rest wait on the store lock. Failures inside a
request come back as HTTP 200 with a framed {"status": "error"} header
so clients get a parseable reason; only transport-level garbage (a body
that does not frame) earns a 400.

Predict responses must satisfy the greedy-consistency contract: the
returned label is recomputed from the float32-rounded logits actually
shipped on the wire, so the client's own greedy decode cannot disagree.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable

import numpy as np

from . import crnn, cyclegan, wire
from .crnn import FREEZE_SPECS, RecognizerBundle, TrainerError, train_recognizer, finetune_recognizer
from .cyclegan import SynthesizerBundle, synthesize_dataset
from .manifest import ManifestError, read_dataset

CAPABILITIES = ("train", "finetune", "predict", "synthesize")

_MODEL_FILE = re.compile(r"^(crnn|synth)-(\d{6})\.pt$")

#: hyperparameter names accepted over the wire, mapped to trainer names
_WIRE_HYPERPARAMS = {
    "optimizer": None,  # validated, not forwarded: adam is the only one
    "learning_rate": "learning_rate",
    "early_stop_patience": "early_stop_patience",
    "batch_size": "batch_size",
    "max_epochs": "max_epochs",
    "min_improvement": "min_improvement",
    "val_fraction": "val_fraction",
    "seed": "seed",
}


class ServiceError(RuntimeError):
    """Request-level failure reported as a structured error response."""


class ModelStore:
    """Directory of torch checkpoints with sequential ids per kind."""

    def __init__(self, root: str):
        self.root = root
        os.makedirs(root, exist_ok=True)
        self._lock = threading.Lock()
        self._cache: dict[str, object] = {}

    def _ids(self, kind: str) -> list[str]:
        out = []
        for name in os.listdir(self.root):
            m = _MODEL_FILE.match(name)
            if m and m.group(1) == kind:
                out.append(name[: -len(".pt")])
        return sorted(out)

    def path(self, model_id: str) -> str:
        return os.path.join(self.root, f"{model_id}.pt")

    def _next_id(self, kind: str) -> str:
        ids = self._ids(kind)
        seq = int(ids[-1].split("-")[1]) + 1 if ids else 1
        return f"{kind}-{seq:06d}"

    def save_recognizer(self, bundle: RecognizerBundle) -> str:
        with self._lock:
            model_id = self._next_id("crnn")
            bundle.save(self.path(model_id))
            if len(self._cache) >= 2:
                self._cache.pop(next(iter(self._cache)))
            self._cache[model_id] = bundle
        return model_id

    def save_synthesizer(self, bundle: SynthesizerBundle) -> str:
        with self._lock:
            model_id = self._next_id("synth")
            bundle.save(self.path(model_id))
        return model_id

    def _resolve(self, kind: str, model_id: str | None) -> str:
        if model_id is None:
            ids = self._ids(kind)
            if not ids:
                raise ServiceError(f"model store has no {kind} checkpoints yet")
            return ids[-1]
        if not os.path.exists(self.path(model_id)):
            raise ServiceError(f"unknown model {model_id!r}")
        return model_id

    def load_recognizer(self, model_id: str | None = None) -> tuple[str, RecognizerBundle]:
        with self._lock:
            model_id = self._resolve("crnn", model_id)
            if model_id not in self._cache:
                if len(self._cache) >= 2:  # predict touches at most base + tuned
                    self._cache.pop(next(iter(self._cache)))
                self._cache[model_id] = RecognizerBundle.load(self.path(model_id))
            return model_id, self._cache[model_id]

    def load_synthesizer(self, model_id: str | None = None) -> tuple[str, SynthesizerBundle]:
        with self._lock:
            model_id = self._resolve("synth", model_id)
        return model_id, SynthesizerBundle.load(self.path(model_id))


class JobBook:
    def __init__(self):
        self._lock = threading.Lock()
        self._jobs: dict[str, dict] = {}
        self._seq = 0

    def create(self) -> str:
        with self._lock:
            self._seq += 1
            job_id = f"{int(time.time() * 1000):013d}-{self._seq:04d}"
            self._jobs[job_id] = {"status": "running", "job_id": job_id}
            return job_id

    def finish(self, job_id: str, result: dict) -> None:
        with self._lock:
            self._jobs[job_id] = {"status": "done", "job_id": job_id, **result}

    def fail(self, job_id: str, error: str) -> None:
        with self._lock:
            self._jobs[job_id] = {"status": "failed", "job_id": job_id, "error": error}

    def status(self, job_id: str) -> dict:
        with self._lock:
            if job_id not in self._jobs:
                raise ServiceError(f"unknown job {job_id!r}")
            return dict(self._jobs[job_id])


def _map_hyperparams(incoming: dict) -> dict:
    out = {}
    for key, value in incoming.items():
        if key not in _WIRE_HYPERPARAMS:
            raise ServiceError(f"unknown hyperparameter {key!r}")
        if key == "optimizer":
            if value != "adam":
                raise ServiceError(f"unsupported optimizer {value!r}")
            continue
        out[_WIRE_HYPERPARAMS[key]] = value
    return out


class TrainerService:
    """Protocol handlers, independent of the HTTP plumbing."""

    def __init__(self, store: ModelStore, log: Callable[[str], None] = lambda line: None):
        self.store = store
        self.jobs = JobBook()
        self.log = log
        self._work_lock = threading.Lock()  # one heavy job at a time

    def health_doc(self) -> dict:
        return {
            "protocol_version": wire.PROTOCOL_VERSION,
            "capabilities": list(CAPABILITIES),
            "status": "ok",
        }

    def _spawn(self, job_id: str, work: Callable[[], dict]) -> dict:
        def run():
            try:
                with self._work_lock:
                    self.jobs.finish(job_id, work())
            except (ServiceError, TrainerError, ManifestError, cyclegan.SynthesisError) as e:
                self.jobs.fail(job_id, str(e))
            except Exception as e:  # keep the job book consistent no matter what
                self.jobs.fail(job_id, f"{type(e).__name__}: {e}")

        threading.Thread(target=run, daemon=True).start()
        return {"status": "running", "job_id": job_id}

    @staticmethod
    def _summary(model_id: str, bundle: RecognizerBundle) -> dict:
        return {
            "model_id": model_id,
            "epochs_run": int(bundle.config["epochs_run"]),
            "val_success_rate": float(bundle.config["val_success_rate"]),
            "trainable_parameters": bundle.trainable_parameters(),
            "charset": bundle.charset,
        }

    def handle_train(self, header: dict) -> dict:
        manifest_ref = header.get("manifest")
        if not manifest_ref:
            raise ServiceError("train request carries no manifest")
        hp = _map_hyperparams(header.get("hyperparams") or {})
        dataset = read_dataset(manifest_ref)  # eager: fail before the job starts
        job_id = self.jobs.create()

        def work() -> dict:
            self.log(f"job {job_id}: train on {manifest_ref} ({dataset.meta['count']} entries)")
            bundle = train_recognizer(dataset, hp, log=self.log)
            model_id = self.store.save_recognizer(bundle)
            return {"summary": self._summary(model_id, bundle)}

        return self._spawn(job_id, work)

    def handle_finetune(self, header: dict) -> dict:
        manifest_ref = header.get("manifest")
        base_id = header.get("base_model")
        freeze = header.get("freeze", "all_but_top_fc")
        if not manifest_ref or not base_id:
            raise ServiceError("finetune request needs manifest and base_model")
        if freeze not in FREEZE_SPECS:
            raise ServiceError(f"unknown freeze spec {freeze!r}")
        dataset = read_dataset(manifest_ref)
        base_id, base = self.store.load_recognizer(base_id)
        job_id = self.jobs.create()

        def work() -> dict:
            self.log(f"job {job_id}: finetune {base_id} on {manifest_ref} freeze={freeze}")
            bundle = finetune_recognizer(base, dataset, freeze_spec=freeze, log=self.log)
            model_id = self.store.save_recognizer(bundle)
            summary = self._summary(model_id, bundle)
            summary["base_model"] = base_id
            return {"summary": summary}

        return self._spawn(job_id, work)

    def handle_predict(self, header: dict, parts: dict[str, bytes]) -> tuple[dict, list[tuple[str, bytes]]]:
        count = header.get("count")
        if not isinstance(count, int) or count < 0:
            raise ServiceError("predict request carries no count")
        pngs = []
        for i in range(count):
            pid = f"img-{i:05d}"
            if pid not in parts:
                raise ServiceError(f"missing image part {pid!r}")
            pngs.append(parts[pid])
        _, bundle = self.store.load_recognizer(header.get("model"))

        predictions = []
        out_parts: list[tuple[str, bytes]] = []
        if pngs:
            _, per_image = crnn.predict_labels(bundle, pngs)
            for i, log_probs in enumerate(per_image):
                # round-trip through the wire dtype first so the label is
                # greedy-consistent with the logits the client receives
                lp32 = log_probs.numpy().astype(">f4").astype(np.float64)
                label = crnn.collapse_path(lp32.argmax(axis=1).tolist(), bundle.codec)
                confidence = float(np.exp(lp32.max(axis=1).mean()))
                part_id = f"logits-{i:05d}"
                out_parts.append((part_id, wire.encode_logits(lp32, bundle.charset)))
                predictions.append(
                    {"label": label, "confidence": confidence, "logits_part": part_id}
                )
        return {"predictions": predictions}, out_parts

    def handle_synthesize(self, header: dict) -> dict:
        manifest_ref = header.get("manifest")
        out_ref = header.get("out")
        if not manifest_ref or not out_ref:
            raise ServiceError("synthesize request needs manifest and out")
        dataset = read_dataset(manifest_ref)
        model_id, bundle = self.store.load_synthesizer(header.get("model"))
        job_id = self.jobs.create()

        def work() -> dict:
            self.log(f"job {job_id}: synthesize {manifest_ref} -> {out_ref} with {model_id}")
            synthesize_dataset(bundle, dataset, out_ref)
            return {"synthetic_manifest": out_ref}

        return self._spawn(job_id, work)

    def handle(self, path: str, header: dict, parts: dict[str, bytes]) -> tuple[dict, list[tuple[str, bytes]]]:
        if path == "/train":
            return self.handle_train(header), []
        if path == "/finetune":
            return self.handle_finetune(header), []
        if path == "/predict":
            return self.handle_predict(header, parts)
        if path == "/synthesize":
            return self.handle_synthesize(header), []
        if path.startswith("/jobs/"):
            if header.get("op") != "poll":
                raise ServiceError(f"unsupported job op {header.get('op')!r}")
            return self.jobs.status(path[len("/jobs/") :]), []
        raise ServiceError(f"unknown endpoint {path!r}")


class _Handler(BaseHTTPRequestHandler):
    service: TrainerService  # set by make_server

    def log_message(self, fmt, *args):  # route through the service logger
        self.service.log(f"http: {fmt % args}")

    def _send(self, code: int, body: bytes, content_type: str) -> None:
        self.send_response(code)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_framed(self, header: dict, parts: list[tuple[str, bytes]] | None = None) -> None:
        self._send(200, wire.pack_message(header, parts), "application/octet-stream")

    def do_GET(self):
        if self.path == "/health":
            self._send(200, json.dumps(self.service.health_doc()).encode(), "application/json")
        else:
            self._send(404, b"not found", "text/plain")

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        blob = self.rfile.read(length)
        try:
            header, parts = wire.unpack_message(blob)
        except wire.WireError as e:
            self._send(400, str(e).encode(), "text/plain")
            return
        try:
            resp, resp_parts = self.service.handle(self.path, header, parts)
            self._send_framed(resp, resp_parts)
        except (ServiceError, TrainerError, ManifestError, cyclegan.SynthesisError) as e:
            self._send_framed({"status": "error", "error": str(e)})
        except Exception as e:
            self._send_framed({"status": "error", "error": f"{type(e).__name__}: {e}"})


def make_server(bind: str, model_store_dir: str, log: Callable[[str], None] = lambda line: None) -> ThreadingHTTPServer:
    host, _, port = bind.rpartition(":")
    service = TrainerService(ModelStore(model_store_dir), log=log)
    handler = type("BoundHandler", (_Handler,), {"service": service})
    return ThreadingHTTPServer((host or "127.0.0.1", int(port)), handler)
