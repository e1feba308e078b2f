"""Dataset manifest I/O.

The on-disk dataset format is the contract with the toolkit that renders
the data: a directory holding ``manifest.jsonl`` (or ``manifest.vN.jsonl``,
highest N wins) plus the image files it references. Line one is a header
record, every following line one entry record:

    {"record": "header", "schema_version": 1, "dataset_id": ..., "count": N, ...}
    {"record": "entry", "sample_id": ..., "path": ..., "label": ...,
     "seed": ..., "split": ..., "digest": <sha256 of the PNG bytes>}

This module parses and writes that format without importing the
rendering toolkit; the file format itself is the interface.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass

SCHEMA_VERSION = 1
SPLIT_TAGS = ("train", "val", "test", "pool")

_MANIFEST_RE = re.compile(r"^manifest(?:\.v(\d+))?\.jsonl$")


class ManifestError(RuntimeError):
    """Malformed, missing, or inconsistent manifest."""


@dataclass(frozen=True)
class Entry:
    sample_id: str
    path: str  # relative to the dataset root
    label: str | None
    seed: int | None
    split: str
    digest: str


@dataclass(frozen=True)
class Dataset:
    root: str
    dataset_id: str
    scheme_id: str
    provenance: str
    entries: tuple[Entry, ...]
    meta: dict  # the full header record, for provenance carry-over

    def image_path(self, entry: Entry) -> str:
        return os.path.join(self.root, entry.path)

    def load_png(self, entry: Entry) -> bytes:
        with open(self.image_path(entry), "rb") as fh:
            return fh.read()

    def by_split(self, tag: str) -> list[Entry]:
        return [e for e in self.entries if e.split == tag]


def _manifest_file(path: str) -> str:
    if os.path.isfile(path):
        return path
    if not os.path.isdir(path):
        raise ManifestError(f"no dataset at {path}")
    versions = []
    for name in os.listdir(path):
        m = _MANIFEST_RE.match(name)
        if m:
            versions.append((int(m.group(1) or 1), name))
    if not versions:
        raise ManifestError(f"no manifest file under {path}")
    return os.path.join(path, max(versions)[1])


def read_dataset(path: str) -> Dataset:
    """Load a dataset directory (or explicit manifest file path)."""
    file_path = _manifest_file(path)
    root = os.path.dirname(os.path.abspath(file_path))
    with open(file_path, encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("record") != "header":
        raise ManifestError(f"{file_path}: first record must be the header")
    header = lines[0]
    if header.get("schema_version") != SCHEMA_VERSION:
        raise ManifestError(f"unsupported schema_version {header.get('schema_version')!r}")
    entries = []
    seen: set[str] = set()
    for rec in lines[1:]:
        if rec.get("record") != "entry":
            raise ManifestError(f"unexpected record type {rec.get('record')!r}")
        sid = rec["sample_id"]
        if sid in seen:
            raise ManifestError(f"duplicate sample_id {sid!r}")
        seen.add(sid)
        if rec["split"] not in SPLIT_TAGS:
            raise ManifestError(f"sample {sid!r}: unknown split {rec['split']!r}")
        entries.append(
            Entry(sample_id=sid, path=rec["path"], label=rec.get("label"),
                  seed=rec.get("seed"), split=rec["split"], digest=rec["digest"])
        )
    if header.get("count") != len(entries):
        raise ManifestError(
            f"header count {header.get('count')} != {len(entries)} entries"
        )
    return Dataset(
        root=root,
        dataset_id=header.get("dataset_id", "unknown"),
        scheme_id=header.get("scheme_id", "unknown"),
        provenance=header.get("provenance", "imitation"),
        entries=tuple(entries),
        meta=dict(header),
    )


def write_dataset(records: list[dict], meta: dict, out: str) -> Dataset:
    """Write PNG records and their manifest under ``out``.

    Each record: {"sample_id", "png_bytes", "label", "seed", "split"}.
    """
    if not records:
        raise ManifestError("records must be non-empty")
    out = os.path.abspath(out)
    os.makedirs(os.path.join(out, "images"), exist_ok=True)
    manifest_path = os.path.join(out, "manifest.jsonl")
    if os.path.exists(manifest_path):
        raise ManifestError(f"manifest already exists: {manifest_path}")

    entries = []
    for rec in records:
        rel = os.path.join("images", f"{rec['sample_id']}.png")
        with open(os.path.join(out, rel), "wb") as fh:
            fh.write(rec["png_bytes"])
        entries.append(
            Entry(
                sample_id=rec["sample_id"],
                path=rel,
                label=rec.get("label"),
                seed=rec.get("seed"),
                split=rec.get("split", "train"),
                digest=hashlib.sha256(rec["png_bytes"]).hexdigest(),
            )
        )

    header = {
        "record": "header",
        "schema_version": SCHEMA_VERSION,
        "dataset_id": meta.get("dataset_id") or os.path.basename(out.rstrip("/")),
        "scheme_id": meta.get("scheme_id", "unknown"),
        "provenance": meta.get("provenance", "synthetic"),
        "tool_version": meta.get("tool_version", "captcha-trainer"),
        "master_seed": meta.get("master_seed"),
        "config_digest": meta.get("config_digest"),
        "count": len(entries),
    }
    tmp = manifest_path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for e in entries:
            fh.write(json.dumps({
                "record": "entry", "sample_id": e.sample_id, "path": e.path,
                "label": e.label, "seed": e.seed, "split": e.split,
                "digest": e.digest,
            }, sort_keys=True) + "\n")
    os.replace(tmp, manifest_path)
    return read_dataset(out)
