"""CRNN recognizer: five conv stages, two bidirectional LSTMs, CTC head.

Geometry: input (3, 64, W); the pooling schedule (2,2),(2,2),(2,1),(2,1),(2,1)
reduces height 64 -> 2 and width W -> W/4, so the sequence has T = W/4
frames of 512 features (256 channels x 2 rows). The head projects the
LSTM output to C+1 classes with the blank LAST, matching the wire format.

Fine-tuning freezes named stages (default: everything but the top fully
connected layer). Frozen batch-norm stages also stop updating their
running statistics, so the frozen part of the network is bit-stable;
``parameter_digests`` hashes parameters and buffers to verify that.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .data import (
    INPUT_HEIGHT,
    WIDTH_STEP,
    LabelCodec,
    charset_from_labels,
    decode_image_uint8,
    holdout_split,
    labeled_entries,
    normalize_stack,
)
from .manifest import Dataset

CNN_CHANNELS = (32, 64, 128, 128, 256)
CNN_POOLS = ((2, 2), (2, 2), (2, 1), (2, 1), (2, 1))
LSTM_HIDDEN = 128

DEFAULT_HYPERPARAMS = {
    "learning_rate": 7e-4,
    "batch_size": 32,
    "max_epochs": 200,
    "early_stop_patience": 10,
    "min_improvement": 1e-4,
    "val_fraction": 0.05,
    "seed": 0,
}

FREEZE_SPECS = {
    "none": (),
    "all_but_top_fc": ("cnn", "lstm1", "lstm2"),
    "cnn_only": ("cnn",),
}


class TrainerError(RuntimeError):
    """Bad training inputs or an infeasible label/frame combination."""


class CRNN(nn.Module):
    def __init__(self, n_classes: int):
        super().__init__()
        stages = []
        in_ch = 3
        for out_ch, pool in zip(CNN_CHANNELS, CNN_POOLS):
            stages += [
                nn.Conv2d(in_ch, out_ch, 3, padding=1),
                nn.BatchNorm2d(out_ch),
                nn.LeakyReLU(0.1, inplace=True),
                nn.MaxPool2d(pool),
            ]
            in_ch = out_ch
        self.cnn = nn.Sequential(*stages)
        feat = CNN_CHANNELS[-1] * 2  # height collapses to 2 rows
        self.lstm1 = nn.LSTM(feat, LSTM_HIDDEN, bidirectional=True)
        self.lstm2 = nn.LSTM(LSTM_HIDDEN * 2, LSTM_HIDDEN, bidirectional=True)
        self.fc = nn.Linear(LSTM_HIDDEN * 2, n_classes)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """(N, 3, 64, W) -> per-frame log-probabilities (T, N, C+1)."""
        feat = self.cnn(images)                    # (N, 256, 2, W/4)
        n, c, h, w = feat.shape
        seq = feat.permute(3, 0, 1, 2).reshape(w, n, c * h)
        seq, _ = self.lstm1(seq)
        seq, _ = self.lstm2(seq)
        return torch.log_softmax(self.fc(seq), dim=2)


@dataclass
class RecognizerBundle:
    model: CRNN
    charset: str
    config: dict
    curve: list[float] = field(default_factory=list)

    @property
    def codec(self) -> LabelCodec:
        return LabelCodec(self.charset)

    def trainable_parameters(self) -> int:
        return sum(p.numel() for p in self.model.parameters() if p.requires_grad)

    def save(self, path: str) -> None:
        torch.save({
            "kind": "crnn",
            "charset": self.charset,
            "config": self.config,
            "curve": self.curve,
            "state_dict": self.model.state_dict(),
        }, path)

    @classmethod
    def load(cls, path: str) -> "RecognizerBundle":
        blob = torch.load(path, map_location="cpu", weights_only=False)
        if blob.get("kind") != "crnn":
            raise TrainerError(f"{path} is not a recognizer checkpoint")
        bundle = cls(model=CRNN(len(blob["charset"]) + 1), charset=blob["charset"],
                     config=blob["config"], curve=list(blob.get("curve", [])))
        bundle.model.load_state_dict(blob["state_dict"])
        bundle.model.eval()
        return bundle


def parameter_digests(model: nn.Module, prefixes: tuple[str, ...] = ()) -> dict[str, str]:
    """sha256 per named parameter and buffer, optionally prefix-filtered."""
    out = {}
    items = list(model.named_parameters()) + list(model.named_buffers())
    for name, tensor in items:
        if prefixes and not name.startswith(prefixes):
            continue
        data = tensor.detach().cpu().numpy()
        out[name] = hashlib.sha256(np.ascontiguousarray(data).tobytes()).hexdigest()
    return out


def apply_freeze(model: CRNN, freeze_spec: str) -> None:
    """Disable gradients (and BN stat updates) for the named stages."""
    if freeze_spec not in FREEZE_SPECS:
        raise TrainerError(
            f"unknown freeze spec {freeze_spec!r}; expected one of {sorted(FREEZE_SPECS)}"
        )
    prefixes = FREEZE_SPECS[freeze_spec]
    for name, param in model.named_parameters():
        # str.startswith(()) is always False, so the empty spec unfreezes all
        param.requires_grad = not name.startswith(prefixes)
    if "cnn" in prefixes:
        for module in model.cnn.modules():
            if isinstance(module, nn.BatchNorm2d):
                module.eval()  # keep running stats frozen too


def _frames_for_width(width: int) -> int:
    return width // WIDTH_STEP


def _required_frames(label_ids: list[int]) -> int:
    # CTC needs one extra frame (a blank) between adjacent repeats
    repeats = sum(1 for a, b in zip(label_ids, label_ids[1:]) if a == b)
    return len(label_ids) + repeats


def _decode_cache(dataset: Dataset, entries) -> list[np.ndarray]:
    return [decode_image_uint8(dataset.load_png(e)) for e in entries]


def _group_by_width(indices, arrays) -> list[list[int]]:
    groups: dict[int, list[int]] = {}
    for i in indices:
        groups.setdefault(arrays[i].shape[1], []).append(i)
    return list(groups.values())


def collapse_path(path: list[int], codec: LabelCodec) -> str:
    """CTC collapse of one frame path: merge repeats, drop blanks."""
    chars = []
    prev = None
    for cls in path:
        if cls != prev and cls != codec.blank:
            chars.append(codec.charset[cls])
        prev = cls
    return "".join(chars)


def greedy_labels(log_probs: torch.Tensor, codec: LabelCodec) -> list[str]:
    """Collapse per-frame argmax paths for a (T, N, C+1) batch."""
    return [collapse_path(p, codec) for p in log_probs.argmax(dim=2).T.tolist()]


def _evaluate(model: CRNN, arrays, labels, indices, codec: LabelCodec,
              batch_size: int) -> float:
    model.eval()
    hits = 0
    with torch.no_grad():
        for group in _group_by_width(indices, arrays):
            for k in range(0, len(group), batch_size):
                chunk = group[k : k + batch_size]
                batch = normalize_stack([arrays[i] for i in chunk])
                decoded = greedy_labels(model(batch), codec)
                hits += sum(decoded[j] == labels[chunk[j]] for j in range(len(chunk)))
    return hits / len(indices)


def train_recognizer(dataset: Dataset, hyperparams: dict | None = None,
                     base: RecognizerBundle | None = None,
                     freeze_spec: str = "none",
                     log=lambda msg: None) -> RecognizerBundle:
    """Train (or fine-tune, when ``base`` is given) a CRNN with CTC loss.

    Early-stops once validation exact-match success has not improved for
    ``early_stop_patience`` epochs; the zero-success warm-up before the
    first correct decode never counts as stagnation. Never trains past
    ``max_epochs``. The returned bundle's curve holds one validation
    success rate per epoch.
    """
    hp = {**DEFAULT_HYPERPARAMS, **(hyperparams or {})}
    torch.manual_seed(int(hp["seed"]))

    train_entries = labeled_entries(dataset, splits=("train", "pool"))
    val_entries = [e for e in dataset.by_split("val") if e.label]
    if not val_entries:
        train_entries, val_entries = holdout_split(train_entries, hp["val_fraction"])

    if base is None:
        charset = charset_from_labels(e.label for e in train_entries + val_entries)
        model = CRNN(len(charset) + 1)
    else:
        charset = base.charset
        model = CRNN(len(charset) + 1)
        model.load_state_dict(base.model.state_dict())
    codec = LabelCodec(charset)
    apply_freeze(model, freeze_spec)

    entries = list(train_entries) + list(val_entries)
    arrays = _decode_cache(dataset, entries)
    labels = [e.label for e in entries]
    train_idx = list(range(len(train_entries)))
    val_idx = list(range(len(train_entries), len(entries)))

    # fail fast on labels that cannot fit the frame budget
    for i in train_idx + val_idx:
        ids = codec.encode(labels[i])
        frames = _frames_for_width(arrays[i].shape[1])
        if _required_frames(ids) > frames:
            raise TrainerError(
                f"label {labels[i]!r} needs {_required_frames(ids)} frames, "
                f"image provides {frames}"
            )

    trainable = [p for p in model.parameters() if p.requires_grad]
    if not trainable:
        raise TrainerError(f"freeze spec {freeze_spec!r} leaves nothing trainable")
    optimizer = torch.optim.Adam(trainable, lr=hp["learning_rate"])
    loss_fn = nn.CTCLoss(blank=codec.blank, zero_infinity=True)
    batch_size = int(hp["batch_size"])
    rng = np.random.default_rng(int(hp["seed"]))

    bundle = RecognizerBundle(model=model, charset=charset,
                              config={"hyperparams": hp, "freeze": freeze_spec})
    best, since_best = -1.0, 0
    best_state = None
    for epoch in range(int(hp["max_epochs"])):
        model.train()
        if "cnn" in FREEZE_SPECS[freeze_spec]:
            for module in model.cnn.modules():
                if isinstance(module, nn.BatchNorm2d):
                    module.eval()
        order = train_idx.copy()
        rng.shuffle(order)
        for group in _group_by_width(order, arrays):
            for k in range(0, len(group), batch_size):
                chunk = group[k : k + batch_size]
                batch = normalize_stack([arrays[i] for i in chunk])
                targets, lengths = [], []
                for i in chunk:
                    ids = codec.encode(labels[i])
                    targets.extend(ids)
                    lengths.append(len(ids))
                log_probs = model(batch)
                t = log_probs.shape[0]
                loss = loss_fn(
                    log_probs,
                    torch.tensor(targets, dtype=torch.int32),
                    torch.full((len(chunk),), t, dtype=torch.int32),
                    torch.tensor(lengths, dtype=torch.int32),
                )
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()

        success = _evaluate(model, arrays, labels, val_idx, codec, batch_size)
        bundle.curve.append(success)
        log(f"epoch {epoch + 1}: val success {success:.4f}")
        if success > best + hp["min_improvement"]:
            best, since_best = success, 0
            best_state = {k: v.clone() for k, v in model.state_dict().items()}
        elif best > 0:
            # exact-match success sits at zero for many epochs while CTC
            # unwinds its all-blank alignment; counting that warm-up as
            # stagnation returns a useless model, so patience only runs
            # once something has decoded (max_epochs still caps the rest)
            since_best += 1
            if since_best >= int(hp["early_stop_patience"]):
                break

    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    bundle.config["val_success_rate"] = best if best >= 0 else 0.0
    bundle.config["epochs_run"] = len(bundle.curve)
    return bundle


def finetune_recognizer(base: RecognizerBundle, dataset: Dataset,
                        freeze_spec: str = "all_but_top_fc",
                        hyperparams: dict | None = None,
                        log=lambda msg: None) -> RecognizerBundle:
    """Fine-tune with frozen stages; only unfrozen parameters change."""
    return train_recognizer(dataset, hyperparams, base=base,
                            freeze_spec=freeze_spec, log=log)


def predict_labels(bundle: RecognizerBundle, pngs: list[bytes],
                   batch_size: int = 64) -> tuple[list[str], list[torch.Tensor]]:
    """Decode PNGs; returns (labels, per-image (T, C+1) log-prob matrices)."""
    codec = bundle.codec
    arrays = [decode_image_uint8(png) for png in pngs]
    labels: list[str | None] = [None] * len(arrays)
    matrices: list[torch.Tensor | None] = [None] * len(arrays)
    bundle.model.eval()
    with torch.no_grad():
        for group in _group_by_width(range(len(arrays)), arrays):
            for k in range(0, len(group), batch_size):
                chunk = group[k : k + batch_size]
                batch = normalize_stack([arrays[i] for i in chunk])
                log_probs = bundle.model(batch)  # (T, n, K)
                decoded = greedy_labels(log_probs, codec)
                for j, i in enumerate(chunk):
                    labels[i] = decoded[j]
                    matrices[i] = log_probs[:, j, :].clone()
    return labels, matrices
