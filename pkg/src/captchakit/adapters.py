"""Adapter gateway: wire-protocol client for external trainer processes,
a deterministic in-process stub adapter for tests and dry runs, and the
label-task state machine behind the human labeling service.

The remote protocol (v1) talks HTTP POST with framed bodies (see the wire
module). Endpoints: /health (plain JSON GET), /train, /finetune,
/predict, /synthesize, /jobs/<job_id> (poll).
"""

from __future__ import annotations

import hashlib
import threading
import time
from dataclasses import dataclass, field

from . import store
from .ctc import LogitsMatrix, greedy_decode
from .wire import PROTOCOL_VERSION, pack_message, unpack_message

CAPABILITIES = ("train", "finetune", "predict", "synthesize")


class AdapterError(RuntimeError):
    """Remote adapter failure or capability mismatch."""


class ContractViolation(AdapterError):
    """A predict response's logits disagree with its decoded string."""


@dataclass(frozen=True)
class AdapterDescriptor:
    endpoint: str
    capabilities: frozenset[str]
    protocol_version: int
    healthy: bool


@dataclass(frozen=True)
class Prediction:
    label: str
    confidence: float
    logits: LogitsMatrix | None
    latency_ms: float


@dataclass(frozen=True)
class TrainSummary:
    job_id: str
    model_id: str
    epochs_run: int
    val_success_rate: float
    trainable_parameters: int
    details: dict = field(default_factory=dict)


DEFAULT_TRAIN_HYPERPARAMS = {
    "optimizer": "adam",
    "learning_rate": 7e-4,
    "early_stop_patience": 10,
}


def _check_capability(descriptor: AdapterDescriptor, op: str) -> None:
    if op not in descriptor.capabilities:
        raise AdapterError(f"adapter at {descriptor.endpoint} lacks capability {op!r}")


class HttpAdapter:
    """Client for a remote trainer speaking adapter protocol v1."""

    def __init__(self, endpoint: str, timeout: float = 600.0, poll_interval: float = 2.0):
        import requests

        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.poll_interval = poll_interval
        self._session = requests.Session()
        self._descriptor: AdapterDescriptor | None = None

    def describe(self) -> AdapterDescriptor:
        import requests

        try:
            resp = self._session.get(f"{self.endpoint}/health", timeout=self.timeout)
            resp.raise_for_status()
            doc = resp.json()
        except requests.RequestException as e:
            raise AdapterError(f"health probe failed: {e}") from e
        version = doc.get("protocol_version")
        if version != PROTOCOL_VERSION:
            raise AdapterError(f"unsupported adapter protocol_version {version!r}")
        self._descriptor = AdapterDescriptor(
            endpoint=self.endpoint,
            capabilities=frozenset(doc.get("capabilities", [])),
            protocol_version=version,
            healthy=doc.get("status") == "ok",
        )
        return self._descriptor

    def _descriptor_cached(self) -> AdapterDescriptor:
        return self._descriptor or self.describe()

    def _call(self, path: str, header: dict, parts=None) -> tuple[dict, dict[str, bytes]]:
        import requests

        body = pack_message(header, parts)
        try:
            resp = self._session.post(
                f"{self.endpoint}{path}",
                data=body,
                headers={"Content-Type": "application/octet-stream"},
                timeout=self.timeout,
            )
        except requests.RequestException as e:
            raise AdapterError(f"{path}: transport failure: {e}") from e
        if resp.status_code != 200:
            raise AdapterError(f"{path}: HTTP {resp.status_code}: {resp.text[:500]}")
        head, resp_parts = unpack_message(resp.content)
        if head.get("status") == "error":
            raise AdapterError(f"{path}: remote error: {head.get('error')}")
        return head, resp_parts

    def _await_job(self, head: dict) -> dict:
        while head.get("status") == "running":
            time.sleep(self.poll_interval)
            head, _ = self._call(f"/jobs/{head['job_id']}", {"op": "poll"})
        if head.get("status") == "failed":
            raise AdapterError(f"job {head.get('job_id')}: {head.get('error')}")
        return head

    @staticmethod
    def _summary(head: dict) -> TrainSummary:
        s = head["summary"]
        return TrainSummary(
            job_id=head.get("job_id", ""),
            model_id=s["model_id"],
            epochs_run=s["epochs_run"],
            val_success_rate=s["val_success_rate"],
            trainable_parameters=s["trainable_parameters"],
            details={k: v for k, v in s.items() if k not in {
                "model_id", "epochs_run", "val_success_rate", "trainable_parameters"}},
        )

    def train(self, manifest_ref: str, hyperparams: dict | None = None) -> TrainSummary:
        _check_capability(self._descriptor_cached(), "train")
        merged = {**DEFAULT_TRAIN_HYPERPARAMS, **(hyperparams or {})}
        head, _ = self._call("/train", {"op": "train", "manifest": manifest_ref, "hyperparams": merged})
        return self._summary(self._await_job(head))

    def finetune(self, base_model_id: str, manifest_ref: str, freeze_spec: str = "all_but_top_fc") -> TrainSummary:
        _check_capability(self._descriptor_cached(), "finetune")
        head, _ = self._call(
            "/finetune",
            {"op": "finetune", "base_model": base_model_id, "manifest": manifest_ref, "freeze": freeze_spec},
        )
        return self._summary(self._await_job(head))

    def predict(self, images: list[bytes], decode: str = "greedy", model_id: str | None = None,
                check_contract: bool = True) -> list[Prediction]:
        _check_capability(self._descriptor_cached(), "predict")
        parts = [(f"img-{i:05d}", png) for i, png in enumerate(images)]
        started = time.perf_counter()
        head, resp_parts = self._call(
            "/predict",
            {"op": "predict", "count": len(images), "decode": decode, "model": model_id},
            parts,
        )
        elapsed_ms = (time.perf_counter() - started) * 1000.0 / max(1, len(images))
        out = []
        for rec in head["predictions"]:
            logits = None
            if rec.get("logits_part"):
                from .wire import decode_logits

                logits = decode_logits(resp_parts[rec["logits_part"]])
                if check_contract:
                    decoded = greedy_decode(logits).label
                    if decoded != rec["label"]:
                        raise ContractViolation(
                            f"adapter label {rec['label']!r} != greedy decode {decoded!r}"
                        )
            out.append(
                Prediction(
                    label=rec["label"],
                    confidence=float(rec.get("confidence", 0.0)),
                    logits=logits,
                    latency_ms=elapsed_ms,
                )
            )
        return out

    def synthesize(self, manifest_ref: str, out_ref: str) -> str:
        _check_capability(self._descriptor_cached(), "synthesize")
        head, _ = self._call("/synthesize", {"op": "synthesize", "manifest": manifest_ref, "out": out_ref})
        head = self._await_job(head)
        return head["synthetic_manifest"]


def _unit_hash(*fields) -> float:
    """Deterministic uniform [0,1) from hashable fields (test stub noise)."""
    h = hashlib.sha256("\x1f".join(str(f) for f in fields).encode()).digest()
    return int.from_bytes(h[:8], "big") / 2**64


#: Scripted success-rate schedule keyed by fine-tuning set size.
STUB_SCHEDULE = {0: 0.55, 100: 0.62, 200: 0.70, 300: 0.78, 400: 0.86, 500: 0.93}


class StubAdapter:
    """Deterministic in-process test double for a remote trainer.

    Predictions come from a digest->label truth table (built from a
    manifest), corrupted by a scripted error model: overall accuracy
    follows a schedule keyed by fine-tuning set size, and characters in
    the confusion set are swapped pairwise with high probability, which
    makes samples containing them reliably "hard".
    """

    def __init__(self, truth_by_digest: dict[str, str], alphabet: str,
                 confusion_pairs: tuple[tuple[str, str], ...] = (),
                 schedule: dict[int, float] | None = None,
                 seed: int = 0, emit_logits: bool = True,
                 identity_generator: bool = True):
        self.truth = dict(truth_by_digest)
        self.alphabet = alphabet
        self.confusion = {}
        for a, b in confusion_pairs:
            self.confusion[a] = b
            self.confusion[b] = a
        self.schedule = dict(schedule or STUB_SCHEDULE)
        self.seed = seed
        self.emit_logits = emit_logits
        self.identity_generator = identity_generator
        self.training_size = 0
        self.base_trained = False
        self._jobs = 0
        self.endpoint = "stub://local"

    @classmethod
    def from_manifest(cls, manifest: store.DatasetManifest, alphabet: str, **kwargs) -> "StubAdapter":
        truth = {e.digest: e.label for e in manifest.entries if e.label is not None}
        return cls(truth, alphabet, **kwargs)

    def describe(self) -> AdapterDescriptor:
        return AdapterDescriptor(
            endpoint=self.endpoint,
            capabilities=frozenset(CAPABILITIES),
            protocol_version=PROTOCOL_VERSION,
            healthy=True,
        )

    def _job_id(self) -> str:
        self._jobs += 1
        return f"job-{self._jobs:06d}"

    def _accuracy(self) -> float:
        keys = [k for k in sorted(self.schedule) if k <= self.training_size]
        return self.schedule[keys[-1]] if keys else min(self.schedule.values())

    def train(self, manifest_ref: str, hyperparams: dict | None = None) -> TrainSummary:
        self.base_trained = True
        self.training_size = 0
        return TrainSummary(
            job_id=self._job_id(),
            model_id="stub-base",
            epochs_run=1,
            val_success_rate=self._accuracy(),
            trainable_parameters=1000,
        )

    def finetune(self, base_model_id: str, manifest_ref: str, freeze_spec: str = "all_but_top_fc") -> TrainSummary:
        if not self.base_trained:
            raise AdapterError("no base model trained")
        manifest = store.read_manifest(manifest_ref)
        self.training_size = len(manifest.entries)
        return TrainSummary(
            job_id=self._job_id(),
            model_id=f"stub-ft-{self.training_size}",
            epochs_run=1,
            val_success_rate=self._accuracy(),
            trainable_parameters=100,  # fewer than train(): frozen backbone
        )

    def _predict_label(self, truth: str, digest: str) -> str:
        acc = self._accuracy()
        out = list(truth)
        confused = [i for i, c in enumerate(truth) if c in self.confusion]
        if confused:
            # confusion-set characters flip pairwise with high probability,
            # decaying slowly as the fine-tuned set grows
            flip_p = max(0.10, 0.90 - 0.10 * (self.training_size / 100.0))
            for i in confused:
                if _unit_hash("flip", self.seed, digest, i, self.training_size) < flip_p:
                    out[i] = self.confusion[truth[i]]
        if out == list(truth):
            # clean path: miss uniformly at 1 - accuracy; the substitute
            # must stay out of the confusion set or cold samples would
            # masquerade as confusion-hard ones
            if _unit_hash("miss", self.seed, digest, self.training_size) >= acc:
                pos = int(_unit_hash("pos", self.seed, digest) * len(truth))
                step = 1
                cur = self.alphabet.index(truth[pos])
                while self.alphabet[(cur + step) % len(self.alphabet)] in self.confusion:
                    step += 1
                out[pos] = self.alphabet[(cur + step) % len(self.alphabet)]
        return "".join(out)

    def _one_hot_logits(self, label: str) -> LogitsMatrix:
        import numpy as np

        blank = len(self.alphabet)
        frames = [blank]
        for c in label:
            frames.append(self.alphabet.index(c))
            frames.append(blank)
        probs = np.zeros((len(frames), blank + 1))
        probs[range(len(frames)), frames] = 1.0
        return LogitsMatrix.from_probs(probs, self.alphabet)

    def predict(self, images: list[bytes], decode: str = "greedy", model_id: str | None = None,
                check_contract: bool = True) -> list[Prediction]:
        out = []
        for png in images:
            digest = hashlib.sha256(png).hexdigest()
            truth = self.truth.get(digest)
            if truth is None:
                raise AdapterError(f"stub has no truth for image digest {digest[:12]}")
            label = self._predict_label(truth, digest)
            logits = self._one_hot_logits(label) if self.emit_logits else None
            out.append(Prediction(label=label, confidence=1.0, logits=logits, latency_ms=0.0))
        return out

    def synthesize(self, manifest_ref: str, out_ref: str) -> str:
        if not self.identity_generator:
            raise AdapterError("no trained generator: run train_synthesizer first")
        manifest = store.read_manifest(manifest_ref)
        entries = [
            {
                "sample_id": e.sample_id,
                "png_bytes": manifest.load_png_bytes(e),
                "label": e.label,
                "seed": e.seed,
                "split": e.split,
            }
            for e in manifest.entries
        ]
        store.write_dataset(
            entries,
            meta={
                "dataset_id": f"{manifest.dataset_id}-synthetic",
                "scheme_id": manifest.scheme_id,
                "provenance": "synthetic",
                "master_seed": manifest.master_seed,
                "config_digest": manifest.config_digest,
            },
            out=out_ref,
        )
        return out_ref


# --- label task state machine ---------------------------------------------

TASK_STATUSES = ("queued", "assigned", "labeled", "rejected")
_ALLOWED_TRANSITIONS = {
    ("queued", "assigned"),
    ("assigned", "labeled"),
    ("assigned", "rejected"),
    ("rejected", "queued"),
}


class TaskError(RuntimeError):
    """Illegal label-task operation."""


@dataclass
class LabelTask:
    task_id: str
    round: int
    sample_id: str
    image_ref: str
    status: str = "queued"
    submitted_label: str | None = None
    submitter: str | None = None
    rejection_reason: str | None = None
    created_at: float = 0.0
    updated_at: float = 0.0

    def to_document(self) -> dict:
        return {
            "task_id": self.task_id,
            "round": self.round,
            "sample_id": self.sample_id,
            "image_ref": self.image_ref,
            "status": self.status,
            "submitted_label": self.submitted_label,
            "submitter": self.submitter,
            "rejection_reason": self.rejection_reason,
        }


class TaskQueue:
    """Serializes label-task state transitions for one campaign.

    The validator returns None for an acceptable label or a human-readable
    reason; rejected submissions bounce the task back to the queue with
    the reason attached. Queueing and submission are idempotent.
    """

    def __init__(self, validator):
        self.validator = validator
        self._lock = threading.Lock()
        self._tasks: dict[str, LabelTask] = {}
        self._by_key: dict[tuple[int, str], str] = {}
        self._counter = 0

    def _transition(self, task: LabelTask, new_status: str) -> None:
        if (task.status, new_status) not in _ALLOWED_TRANSITIONS:
            raise TaskError(f"task {task.task_id}: illegal transition {task.status} -> {new_status}")
        task.status = new_status
        task.updated_at = time.time()

    def queue_for_labeling(self, samples: list[tuple[str, str]], round_no: int) -> list[LabelTask]:
        """Queue (sample_id, image_ref) pairs; idempotent per (round, sample)."""
        with self._lock:
            out = []
            for sample_id, image_ref in samples:
                key = (round_no, sample_id)
                if key in self._by_key:
                    out.append(self._tasks[self._by_key[key]])
                    continue
                self._counter += 1
                task = LabelTask(
                    task_id=f"t{self._counter:06d}",
                    round=round_no,
                    sample_id=sample_id,
                    image_ref=image_ref,
                    created_at=time.time(),
                    updated_at=time.time(),
                )
                self._tasks[task.task_id] = task
                self._by_key[key] = task.task_id
                out.append(task)
            return out

    def fetch_batch(self, limit: int, submitter: str = "anonymous") -> list[LabelTask]:
        """Assign up to ``limit`` queued tasks to a labeler."""
        with self._lock:
            out = []
            for task in self._tasks.values():
                if len(out) >= limit:
                    break
                if task.status == "queued":
                    self._transition(task, "assigned")
                    task.submitter = submitter
                    out.append(task)
            return out

    def submit_label(self, task_id: str, label: str, submitter: str = "anonymous") -> LabelTask:
        """Validate and apply a label; invalid labels re-queue the task."""
        with self._lock:
            task = self._tasks.get(task_id)
            if task is None:
                raise TaskError(f"unknown task {task_id!r}")
            if task.status == "labeled":
                if task.submitted_label == label:
                    return task  # idempotent resubmission
                raise TaskError(f"task {task_id} already labeled")
            if not label:
                raise TaskError("label must be non-empty")
            if task.status == "queued":
                self._transition(task, "assigned")
                task.submitter = submitter
            reason = self.validator(label)
            if reason is None:
                task.submitted_label = label
                task.submitter = submitter
                self._transition(task, "labeled")
            else:
                task.rejection_reason = reason
                self._transition(task, "rejected")
                self._transition(task, "queued")
            return task

    def task(self, task_id: str) -> LabelTask:
        with self._lock:
            if task_id not in self._tasks:
                raise TaskError(f"unknown task {task_id!r}")
            return self._tasks[task_id]

    def progress(self, round_no: int) -> dict:
        with self._lock:
            tasks = [t for t in self._tasks.values() if t.round == round_no]
            return {
                "round": round_no,
                "total": len(tasks),
                "labeled": sum(t.status == "labeled" for t in tasks),
                "queued": sum(t.status == "queued" for t in tasks),
                "assigned": sum(t.status == "assigned" for t in tasks),
            }

    def labeled_for_round(self, round_no: int) -> dict[str, str]:
        with self._lock:
            return {
                t.sample_id: t.submitted_label
                for t in self._tasks.values()
                if t.round == round_no and t.status == "labeled"
            }


def make_label_validator(cfg):
    """Charset/length validator for a scheme; returns None or a reason."""
    allowed = set(cfg.effective_charset())
    excluded = set(cfg.excluded_chars)
    lo, hi = cfg.length_range

    def validate(label: str):
        if not (lo <= len(label) <= hi):
            return f"length {len(label)} outside [{lo}, {hi}]"
        for c in label:
            if c in excluded:
                return f"character {c!r} is excluded in this scheme"
            if c not in allowed:
                return f"character {c!r} not in the scheme charset"
        return None

    return validate
