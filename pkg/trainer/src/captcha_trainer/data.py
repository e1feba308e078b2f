"""Image decoding and label encoding for the recognizer.

The recognizer consumes height-normalized tensors: every image is
resized to height 64 with width scaled proportionally (snapped to a
multiple of 4 so the conv stack's frame count is stable across a batch
of equal-sized sources). Labels are encoded against a charset with the
CTC blank as the LAST class index, matching the wire format.
"""

from __future__ import annotations

import io

import numpy as np
import torch
from PIL import Image

from .manifest import Dataset, Entry

INPUT_HEIGHT = 64
WIDTH_STEP = 4  # one output frame per 4 input columns


class DataError(ValueError):
    """Bad image, label, or charset input."""


def decode_image_uint8(png_bytes: bytes) -> np.ndarray:
    """PNG bytes -> height-normalized uint8 array (64, W, 3).

    Kept in uint8 so a whole training set fits in memory; tensors are
    built batch by batch.
    """
    with Image.open(io.BytesIO(png_bytes)) as im:
        rgb = im.convert("RGB")
        w, h = rgb.size
        new_w = max(WIDTH_STEP, int(round(w * INPUT_HEIGHT / h / WIDTH_STEP)) * WIDTH_STEP)
        resized = rgb.resize((new_w, INPUT_HEIGHT), Image.BILINEAR)
    return np.asarray(resized, dtype=np.uint8)


def normalize_stack(arrays: list[np.ndarray]) -> torch.Tensor:
    """Equal-sized uint8 arrays -> float tensor (N, 3, 64, W) in [-1, 1]."""
    batch = np.stack(arrays).astype(np.float32) / 127.5 - 1.0
    return torch.from_numpy(batch).permute(0, 3, 1, 2)


def decode_image(png_bytes: bytes) -> torch.Tensor:
    """PNG bytes -> float tensor (3, 64, W) in [-1, 1]."""
    return normalize_stack([decode_image_uint8(png_bytes)])[0]


def charset_from_labels(labels) -> str:
    """Deterministic charset: sorted union of the label characters."""
    chars = set()
    for label in labels:
        chars.update(label)
    if not chars:
        raise DataError("no labeled samples to derive a charset from")
    return "".join(sorted(chars))


class LabelCodec:
    """Bidirectional label <-> class-index mapping; blank is last."""

    def __init__(self, charset: str):
        if len(set(charset)) != len(charset):
            raise DataError("charset has duplicate characters")
        self.charset = charset
        self.blank = len(charset)
        self._index = {c: i for i, c in enumerate(charset)}

    def encode(self, label: str) -> list[int]:
        try:
            return [self._index[c] for c in label]
        except KeyError as e:
            raise DataError(f"label character {e.args[0]!r} not in charset") from e

    def decode_indices(self, indices) -> str:
        return "".join(self.charset[i] for i in indices)


def labeled_entries(dataset: Dataset, splits=("train",)) -> list[Entry]:
    out = [e for e in dataset.entries if e.split in splits and e.label]
    if not out:
        raise DataError(f"dataset {dataset.dataset_id} has no labeled {splits} samples")
    return out


def holdout_split(entries: list[Entry], fraction: float = 0.05,
                  minimum: int = 1) -> tuple[list[Entry], list[Entry]]:
    """Deterministic train/val carve when the manifest lacks a val split.

    Sorts by sample_id and takes every k-th entry for validation, so the
    same dataset always yields the same split.
    """
    ordered = sorted(entries, key=lambda e: e.sample_id)
    count = max(minimum, int(len(ordered) * fraction))
    if count >= len(ordered):
        raise DataError("dataset too small to hold out a validation slice")
    step = len(ordered) / count
    val_idx = {int(i * step) for i in range(count)}
    train = [e for i, e in enumerate(ordered) if i not in val_idx]
    val = [e for i, e in enumerate(ordered) if i in val_idx]
    return train, val


def batch_tensors(dataset: Dataset, entries: list[Entry], codec: LabelCodec):
    """Decode a batch of equal-sized images into stacked tensors.

    Returns (images (N,3,64,W), targets flat IntTensor, target_lengths).
    Raises if the sources disagree on size; callers group by size first.
    """
    images = [decode_image(dataset.load_png(e)) for e in entries]
    widths = {img.shape[2] for img in images}
    if len(widths) != 1:
        raise DataError(f"mixed image widths in one batch: {sorted(widths)}")
    targets, lengths = [], []
    for e in entries:
        ids = codec.encode(e.label)
        targets.extend(ids)
        lengths.append(len(ids))
    return (
        torch.stack(images),
        torch.tensor(targets, dtype=torch.int32),
        torch.tensor(lengths, dtype=torch.int32),
    )
