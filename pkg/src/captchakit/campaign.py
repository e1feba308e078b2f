"""Active transfer-learning campaign: evaluate a recognizer, find its
confused characters, select hard samples, obtain labels, grow the
fine-tuning set to a cap, and track the success-rate trajectory.

A campaign runs against any adapter (remote trainer or the deterministic
stub) and either an oracle labeler (ground truth from the pool manifest)
or the human labeling service.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import store
from .adapters import TaskQueue, make_label_validator
from .schemes import SchemeConfig

EPSILON = "eps"  # stand-in for the empty side of an insertion/deletion pair

DEFAULT_BUDGETS = {"initial": 100, "per_round": 100, "cap": 500}
DEFAULT_VALIDATION_SIZE = 500
MIN_EXPOSURE = 5


class CampaignError(RuntimeError):
    """Campaign precondition or progression failure."""


class TerminalCampaign(CampaignError):
    """run_round called after the cap evaluation was recorded."""


@dataclass
class ConfusionStats:
    """Per-character misrecognition bookkeeping from one evaluation."""

    exposure: dict[str, int] = field(default_factory=dict)
    misrecognized: dict[str, int] = field(default_factory=dict)
    pairs: dict[tuple[str, str], int] = field(default_factory=dict)

    def observe(self, truth_char: str, pred_char: str) -> None:
        if truth_char != EPSILON:
            self.exposure[truth_char] = self.exposure.get(truth_char, 0) + 1
            if pred_char != truth_char:
                self.misrecognized[truth_char] = self.misrecognized.get(truth_char, 0) + 1
        if pred_char != truth_char:
            key = (truth_char, pred_char)
            self.pairs[key] = self.pairs.get(key, 0) + 1

    def rate(self, char: str) -> float:
        exp = self.exposure.get(char, 0)
        return self.misrecognized.get(char, 0) / exp if exp else 0.0

    def trusted_rates(self, min_exposure: int = MIN_EXPOSURE) -> dict[str, float]:
        return {
            c: self.misrecognized.get(c, 0) / e
            for c, e in self.exposure.items()
            if e >= min_exposure and self.misrecognized.get(c, 0) > 0
        }

    def top_confused(self, alphabet: str, limit: int = 10, min_exposure: int = MIN_EXPOSURE) -> list[dict]:
        order = {c: i for i, c in enumerate(alphabet)}
        rates = self.trusted_rates(min_exposure)
        ranked = sorted(
            rates,
            key=lambda c: (-rates[c], -self.misrecognized.get(c, 0), order.get(c, len(order))),
        )
        return [
            {
                "char": c,
                "rate": rates[c],
                "misrecognized": self.misrecognized.get(c, 0),
                "exposure": self.exposure.get(c, 0),
            }
            for c in ranked[:limit]
        ]

    def to_document(self) -> dict:
        return {
            "exposure": dict(sorted(self.exposure.items())),
            "misrecognized": dict(sorted(self.misrecognized.items())),
            "pairs": {f"{t}->{p}": n for (t, p), n in sorted(self.pairs.items())},
        }


def _align(truth: str, pred: str) -> list[tuple[str, str]]:
    """Minimum-edit-distance alignment as (truth_char|eps, pred_char|eps)
    pairs. Unit costs; ambiguous traces resolve substitution first, then
    deletion, then insertion."""
    n, m = len(truth), len(pred)
    dist = np.zeros((n + 1, m + 1), dtype=np.int64)
    dist[:, 0] = np.arange(n + 1)
    dist[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = dist[i - 1, j - 1] + (truth[i - 1] != pred[j - 1])
            dele = dist[i - 1, j] + 1
            ins = dist[i, j - 1] + 1
            dist[i, j] = min(sub, dele, ins)
    pairs = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i, j] == dist[i - 1, j - 1] + (truth[i - 1] != pred[j - 1]):
            pairs.append((truth[i - 1], pred[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and dist[i, j] == dist[i - 1, j] + 1:
            pairs.append((truth[i - 1], EPSILON))
            i -= 1
        else:
            pairs.append((EPSILON, pred[j - 1]))
            j -= 1
    pairs.reverse()
    return pairs


def evaluate_predictions(pred: list[str], truth: list[str]) -> tuple[float, ConfusionStats]:
    """Exact-match success rate plus per-character confusion statistics.

    A single wrong character fails the whole sample; character-level
    errors are attributed through edit-distance alignment.
    """
    if len(pred) != len(truth):
        raise CampaignError(f"prediction count {len(pred)} != truth count {len(truth)}")
    if not truth:
        raise CampaignError("empty evaluation input")
    stats = ConfusionStats()
    hits = 0
    for p, t in zip(pred, truth):
        if p == t:
            hits += 1
            for c in t:
                stats.observe(c, c)
        else:
            for tc, pc in _align(t, p):
                stats.observe(tc, pc)
    return hits / len(truth), stats


def select_hard_samples(pool: list[tuple[str, str]], stats: ConfusionStats, k: int, rng,
                        min_exposure: int = MIN_EXPOSURE) -> list[str]:
    """Pick the k hardest pool samples.

    ``pool`` holds (sample_id, characters) where the characters are the
    recognizer's current reading of the sample (truth works too when
    known). A sample's hardness is the maximum misrecognition rate over
    its characters, using only characters with enough exposure; ties and
    the no-signal case fall back to a seeded shuffle.
    """
    if len(pool) < k:
        raise CampaignError(f"pool exhausted: {len(pool)} remaining, {k} requested")
    rates = stats.trusted_rates(min_exposure)
    order = list(rng.permutation(len(pool)))
    if not rates:
        return [pool[i][0] for i in order[:k]]

    def hardness(item: tuple[str, str]) -> float:
        return max((rates.get(c, 0.0) for c in item[1]), default=0.0)

    ranked = sorted(order, key=lambda i: -hardness(pool[i]))  # stable: ties keep shuffle order
    return [pool[i][0] for i in ranked[:k]]


@dataclass(frozen=True)
class CampaignConfig:
    scheme: SchemeConfig
    budgets: dict[str, int]
    seed: int
    decode: str = "greedy"
    beam_width: int = 16
    labeler_mode: str = "oracle"
    validation_size: int = DEFAULT_VALIDATION_SIZE
    base_model: str | None = None
    train_base_manifest: str | None = None


def parse_campaign_config(document: dict | str) -> CampaignConfig:
    """Parse the campaign config document (JSON text or parsed object)."""
    from .schemes import SchemeError, resolve_scheme

    if isinstance(document, str):
        document = json.loads(document)
    if document.get("schema_version", 1) != 1:
        raise CampaignError(f"unsupported schema_version {document.get('schema_version')!r}")
    if "scheme" not in document:
        raise CampaignError("campaign config must name a scheme")
    try:
        scheme = resolve_scheme(document["scheme"])
    except SchemeError as e:
        raise CampaignError(f"bad scheme reference: {e}") from e
    budgets = {**DEFAULT_BUDGETS, **document.get("budgets", {})}
    for key in ("initial", "per_round", "cap"):
        if budgets[key] < 1:
            raise CampaignError(f"budgets.{key} must be >= 1")
    if budgets["cap"] < budgets["initial"]:
        raise CampaignError("budgets.cap must be >= budgets.initial")
    decode = document.get("decode", "greedy")
    if decode not in ("greedy", "beam"):
        raise CampaignError(f"unknown decode mode {decode!r}")
    labeler = document.get("labeler", "oracle")
    if labeler not in ("oracle", "human"):
        raise CampaignError(f"unknown labeler mode {labeler!r}")
    return CampaignConfig(
        scheme=scheme,
        budgets=budgets,
        seed=int(document.get("seed", 0)),
        decode=decode,
        beam_width=int(document.get("beam_width", 16)),
        labeler_mode=labeler,
        validation_size=int(document.get("validation_size", DEFAULT_VALIDATION_SIZE)),
        base_model=document.get("base_model"),
        train_base_manifest=document.get("train_base_manifest"),
    )


@dataclass
class CampaignState:
    round: int = 0
    training_ids: list[str] = field(default_factory=list)
    validation_ids: list[str] = field(default_factory=list)
    pool_ids: list[str] = field(default_factory=list)
    labels: dict[str, str] = field(default_factory=dict)
    history: list[float] = field(default_factory=list)
    confusion_history: list[ConfusionStats] = field(default_factory=list)
    budgets: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_BUDGETS))
    model_id: str | None = None
    finished: bool = False

    def check_invariants(self) -> None:
        train = set(self.training_ids)
        if train & set(self.validation_ids):
            raise CampaignError("training set intersects validation set")
        if train & set(self.pool_ids):
            raise CampaignError("training set intersects remaining pool")
        expected = min(
            self.budgets["initial"] + self.budgets["per_round"] * self.round,
            self.budgets["cap"],
        )
        if self.training_ids and len(train) != expected:
            raise CampaignError(f"training size {len(train)} != expected {expected}")


class OracleLabeler:
    """Labels straight from ground truth; stands in for the human."""

    def __init__(self, truth: dict[str, str]):
        self.truth = truth

    def label_batch(self, sample_ids: list[str], round_no: int) -> dict[str, str]:
        missing = [s for s in sample_ids if s not in self.truth]
        if missing:
            raise CampaignError(f"oracle has no labels for {missing[:3]}")
        return {s: self.truth[s] for s in sample_ids}


class QueueLabeler:
    """Blocks on a TaskQueue until a human labels the whole batch."""

    def __init__(self, queue: TaskQueue, image_refs: dict[str, str], poll_interval: float = 0.25,
                 timeout: float | None = None):
        self.queue = queue
        self.image_refs = image_refs
        self.poll_interval = poll_interval
        self.timeout = timeout

    def label_batch(self, sample_ids: list[str], round_no: int) -> dict[str, str]:
        import time

        self.queue.queue_for_labeling(
            [(sid, self.image_refs.get(sid, sid)) for sid in sample_ids], round_no
        )
        deadline = time.monotonic() + self.timeout if self.timeout else None
        wanted = set(sample_ids)
        while True:
            done = self.queue.labeled_for_round(round_no)
            if wanted <= set(done):
                return {s: done[s] for s in sample_ids}
            if deadline and time.monotonic() > deadline:
                raise CampaignError(
                    f"labeler timeout: round {round_no} has "
                    f"{len(wanted - set(done))} unlabeled tasks"
                )
            time.sleep(self.poll_interval)


class Campaign:
    """One active-learning campaign bound to its datasets and adapter."""

    def __init__(self, config: CampaignConfig, pool_manifest: store.DatasetManifest,
                 val_manifest: store.DatasetManifest, adapter, labeler=None, workdir: str = "."):
        self.config = config
        self.adapter = adapter
        self.workdir = workdir
        self.rng = np.random.default_rng(config.seed)

        self.pool_manifest = pool_manifest
        self.val_manifest = val_manifest
        self.pool_entries = {e.sample_id: e for e in pool_manifest.entries}
        self.val_entries = list(val_manifest.entries)
        if len(self.val_entries) != config.validation_size:
            raise CampaignError(
                f"validation set has {len(self.val_entries)} samples, "
                f"config requires exactly {config.validation_size}"
            )
        unlabeled_val = [e.sample_id for e in self.val_entries if e.label is None]
        if unlabeled_val:
            raise CampaignError(f"validation samples missing labels: {unlabeled_val[:3]}")
        overlap = set(self.pool_entries) & {e.sample_id for e in self.val_entries}
        if overlap:
            raise CampaignError(f"pool and validation share sample ids: {sorted(overlap)[:3]}")

        if labeler is None:
            truth = {e.sample_id: e.label for e in pool_manifest.entries if e.label}
            labeler = OracleLabeler(truth)
        self.labeler = labeler

        self.state = CampaignState(
            pool_ids=[e.sample_id for e in pool_manifest.entries],
            validation_ids=[e.sample_id for e in self.val_entries],
            budgets=dict(config.budgets),
        )
        self._png_cache: dict[str, bytes] = {}

    # -- data plumbing ------------------------------------------------

    def _pool_png(self, sample_id: str) -> bytes:
        png = self._png_cache.get(sample_id)
        if png is None:
            png = self.pool_manifest.load_png_bytes(self.pool_entries[sample_id])
            self._png_cache[sample_id] = png
        return png

    def _val_png(self, entry: store.ManifestEntry) -> bytes:
        key = f"val:{entry.sample_id}"
        png = self._png_cache.get(key)
        if png is None:
            png = self.val_manifest.load_png_bytes(entry)
            self._png_cache[key] = png
        return png

    def _predict(self, pngs: list[bytes]) -> list[str]:
        decode = self.config.decode
        preds = self.adapter.predict(pngs, decode=decode, model_id=self.state.model_id)
        if decode == "beam":
            from .ctc import beam_decode

            out = []
            for p in preds:
                out.append(beam_decode(p.logits, self.config.beam_width).label if p.logits else p.label)
            return out
        return [p.label for p in preds]

    def _evaluate_validation(self) -> tuple[float, ConfusionStats]:
        pngs = [self._val_png(e) for e in self.val_entries]
        preds = self._predict(pngs)
        truth = [e.label for e in self.val_entries]
        return evaluate_predictions(preds, truth)

    def _materialize_training(self, round_no: int) -> str:
        out = os.path.join(self.workdir, f"finetune-r{round_no:02d}")
        entries = [
            {
                "sample_id": sid,
                "png_bytes": self._pool_png(sid),
                "label": self.state.labels[sid],
                "seed": self.pool_entries[sid].seed,
                "split": "train",
            }
            for sid in sorted(self.state.training_ids)
        ]
        store.write_dataset(
            entries,
            meta={
                "dataset_id": f"finetune-r{round_no:02d}",
                "scheme_id": self.config.scheme.scheme_id,
                "provenance": self.pool_manifest.provenance,
                "master_seed": self.config.seed,
            },
            out=out,
        )
        return out

    def _grow_training(self, sample_ids: list[str], round_no: int) -> None:
        labels = self.labeler.label_batch(sample_ids, round_no)
        validate = make_label_validator(self.config.scheme)
        for sid in sample_ids:
            reason = validate(labels[sid])
            if reason is not None:
                raise CampaignError(f"label for {sid} rejected: {reason}")
            self.state.labels[sid] = labels[sid]
        taken = set(sample_ids)
        self.state.pool_ids = [s for s in self.state.pool_ids if s not in taken]
        self.state.training_ids.extend(sample_ids)

    # -- campaign steps -----------------------------------------------

    def seed_initial_batch(self) -> None:
        """Label the seeded-random initial batch before the first round."""
        if self.state.training_ids:
            raise CampaignError("initial batch already seeded")
        k = self.state.budgets["initial"]
        if len(self.state.pool_ids) < k:
            raise CampaignError("pool smaller than the initial budget")
        picks = [self.state.pool_ids[i] for i in self.rng.permutation(len(self.state.pool_ids))[:k]]
        self._grow_training(picks, round_no=0)
        self.state.check_invariants()

    def record_baseline(self) -> float:
        rate, stats = self._evaluate_validation()
        self.state.history.append(rate)
        self.state.confusion_history.append(stats)
        return rate

    def run_round(self) -> CampaignState:
        """One active-learning round: fine-tune, evaluate, select, label.

        The final round (training set at cap) records its evaluation and
        marks the campaign finished; a further call raises TerminalCampaign.
        """
        state = self.state
        if state.finished:
            raise TerminalCampaign("training cap reached and final evaluation recorded")
        if not state.training_ids:
            raise CampaignError("seed_initial_batch must run before rounds")

        round_no = state.round + 1
        manifest_ref = self._materialize_training(round_no)
        summary = self.adapter.finetune(
            state.model_id or self.config.base_model or "base",
            manifest_ref,
        )
        state.model_id = summary.model_id

        rate, stats = self._evaluate_validation()
        state.history.append(rate)
        state.confusion_history.append(stats)

        cap = state.budgets["cap"]
        if len(state.training_ids) < cap:
            k = min(state.budgets["per_round"], cap - len(state.training_ids))
            pool_pngs = [self._pool_png(sid) for sid in state.pool_ids]
            pool_reading = self._predict(pool_pngs)
            picks = select_hard_samples(
                list(zip(state.pool_ids, pool_reading)), stats, k, self.rng
            )
            self._grow_training(picks, round_no)
        else:
            state.finished = True

        state.round = round_no
        state.check_invariants()
        return state

    def run(self) -> "CampaignReport":
        """Full campaign: baseline, initial batch, rounds until the cap."""
        if self.config.train_base_manifest:
            summary = self.adapter.train(self.config.train_base_manifest)
            self.state.model_id = summary.model_id
        elif self.config.base_model:
            self.state.model_id = self.config.base_model
        elif hasattr(self.adapter, "base_trained"):
            self.adapter.train("")  # stub: establish the scripted base model
        self.record_baseline()
        self.seed_initial_batch()
        while not self.state.finished:
            self.run_round()
        return build_report(self.config, self.state)


@dataclass(frozen=True)
class CampaignReport:
    scheme_id: str
    budgets: dict[str, int]
    seed: int
    decode: str
    baseline: float
    sizes: tuple[int, ...]
    rates: tuple[float, ...]
    confusion_top: tuple[tuple[dict, ...], ...]

    def to_document(self) -> dict:
        return {
            "schema_version": 1,
            "scheme_id": self.scheme_id,
            "budgets": dict(self.budgets),
            "seed": self.seed,
            "decode": self.decode,
            "baseline_success_rate": self.baseline,
            "rounds": [
                {"training_size": s, "success_rate": r, "top_confused": list(c)}
                for s, r, c in zip(self.sizes, self.rates, self.confusion_top)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_document(), indent=2, sort_keys=True)

    def render_table(self) -> str:
        header = ["basic"] + [str(s) for s in self.sizes]
        values = [f"{self.baseline:.3f}"] + [f"{r:.3f}" for r in self.rates]
        width = max(len(c) for c in header + values) + 2
        line = "+" + "+".join("-" * width for _ in header) + "+"
        row1 = "|" + "|".join(c.center(width) for c in header) + "|"
        row2 = "|" + "|".join(v.center(width) for v in values) + "|"
        return "\n".join(["success rate by fine-tuning set size", line, row1, line, row2, line])


def build_report(config: CampaignConfig, state: CampaignState) -> CampaignReport:
    budgets = state.budgets
    sizes = []
    size = budgets["initial"]
    for _ in range(len(state.history) - 1):
        sizes.append(min(size, budgets["cap"]))
        size += budgets["per_round"]
    alphabet = config.scheme.effective_charset()
    return CampaignReport(
        scheme_id=config.scheme.scheme_id,
        budgets=dict(budgets),
        seed=config.seed,
        decode=config.decode,
        baseline=state.history[0],
        sizes=tuple(sizes),
        rates=tuple(state.history[1:]),
        confusion_top=tuple(
            tuple(stats.top_confused(alphabet)) for stats in state.confusion_history[1:]
        ),
    )
