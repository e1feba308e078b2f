"""Persistent datasets: manifests, labels, splits, provenance, integrity.

On-disk layout of one dataset:

    <dataset_id>/
      manifest.jsonl          (first version)
      manifest.v2.jsonl       (later versions, e.g. after re-splitting)
      images/<sample_id>.png

A manifest is line-delimited JSON: one header record followed by one
record per sample. Manifest files are immutable once written; operations
that change tags write a new version file next to the old one, and
readers pick the highest version.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, replace

import numpy as np

SCHEMA_VERSION = 1
SPLIT_TAGS = ("train", "val", "test", "pool")

_MANIFEST_RE = re.compile(r"^manifest(?:\.v(\d+))?\.jsonl$")


class StoreError(RuntimeError):
    """Raised on I/O, schema, or integrity failures."""


@dataclass(frozen=True)
class ManifestEntry:
    sample_id: str
    path: str  # relative to the dataset root
    label: str | None
    seed: int | None
    split: str
    digest: str

    def to_record(self) -> dict:
        return {
            "record": "entry",
            "sample_id": self.sample_id,
            "path": self.path,
            "label": self.label,
            "seed": self.seed,
            "split": self.split,
            "digest": self.digest,
        }


@dataclass(frozen=True)
class DatasetManifest:
    dataset_id: str
    scheme_id: str
    provenance: str
    tool_version: str
    master_seed: int | None
    config_digest: str | None
    entries: tuple[ManifestEntry, ...]
    root: str  # dataset directory on disk

    def header_record(self) -> dict:
        return {
            "record": "header",
            "schema_version": SCHEMA_VERSION,
            "dataset_id": self.dataset_id,
            "scheme_id": self.scheme_id,
            "provenance": self.provenance,
            "tool_version": self.tool_version,
            "master_seed": self.master_seed,
            "config_digest": self.config_digest,
            "count": len(self.entries),
        }

    def image_path(self, entry: ManifestEntry) -> str:
        return os.path.join(self.root, entry.path)

    def load_image(self, entry: ManifestEntry) -> np.ndarray:
        from PIL import Image

        with Image.open(self.image_path(entry)) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)

    def load_png_bytes(self, entry: ManifestEntry) -> bytes:
        with open(self.image_path(entry), "rb") as fh:
            return fh.read()

    def by_split(self, tag: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == tag]


def _sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _entry_png(entry) -> tuple[str, bytes, str | None, int | None, str]:
    """Normalize a write_dataset input entry to (id, png, label, seed, split)."""
    if hasattr(entry, "to_png_bytes"):
        sid = getattr(entry, "sample_id", None)
        return sid, entry.to_png_bytes(), entry.label, entry.seed, "train"
    if isinstance(entry, dict):
        return (
            entry.get("sample_id"),
            entry["png_bytes"],
            entry.get("label"),
            entry.get("seed"),
            entry.get("split", "train"),
        )
    raise StoreError(f"unsupported entry type {type(entry).__name__}")


def write_dataset(entries, meta: dict, out: str) -> DatasetManifest:
    """Persist samples and their manifest under the ``out`` directory.

    ``entries`` are rendered samples (anything exposing to_png_bytes /
    label / seed) or dicts with png_bytes. ``meta`` carries scheme_id,
    provenance, master_seed, and optionally dataset_id / config_digest.
    """
    if not entries:
        raise StoreError("entries must be non-empty")
    from . import __version__

    out = os.path.abspath(out)
    dataset_id = meta.get("dataset_id") or os.path.basename(out.rstrip("/"))
    images_dir = os.path.join(out, "images")
    os.makedirs(images_dir, exist_ok=True)

    records: list[ManifestEntry] = []
    seen: set[str] = set()
    for i, entry in enumerate(entries):
        sid, png, label, seed, split = _entry_png(entry)
        if sid is None:
            sid = f"s{i:06d}"
        if sid in seen:
            raise StoreError(f"duplicate sample_id {sid!r}")
        seen.add(sid)
        if split not in SPLIT_TAGS:
            raise StoreError(f"sample {sid!r}: unknown split tag {split!r}")
        rel = os.path.join("images", f"{sid}.png")
        with open(os.path.join(out, rel), "wb") as fh:
            fh.write(png)
        records.append(
            ManifestEntry(
                sample_id=sid,
                path=rel,
                label=label,
                seed=seed,
                split=split,
                digest=_sha256_bytes(png),
            )
        )

    manifest = DatasetManifest(
        dataset_id=dataset_id,
        scheme_id=meta.get("scheme_id", "unknown"),
        provenance=meta.get("provenance", "imitation"),
        tool_version=__version__,
        master_seed=meta.get("master_seed"),
        config_digest=meta.get("config_digest"),
        entries=tuple(records),
        root=out,
    )
    _write_manifest_file(manifest, os.path.join(out, "manifest.jsonl"))
    return manifest


def _write_manifest_file(manifest: DatasetManifest, path: str) -> None:
    if os.path.exists(path):
        raise StoreError(f"manifest version already exists: {path}")
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest.header_record(), sort_keys=True) + "\n")
        for e in manifest.entries:
            fh.write(json.dumps(e.to_record(), sort_keys=True) + "\n")
    os.replace(tmp, path)


def _manifest_versions(root: str) -> list[tuple[int, str]]:
    versions = []
    for name in os.listdir(root):
        m = _MANIFEST_RE.match(name)
        if m:
            versions.append((int(m.group(1) or 1), os.path.join(root, name)))
    return sorted(versions)


def read_manifest(path: str) -> DatasetManifest:
    """Load a manifest from a dataset directory or an explicit file path.

    Given a directory, the highest manifest version wins. Structural
    invariants (unique ids, known split tags, count match) are enforced;
    content digests are checked separately by verify_integrity.
    """
    if os.path.isdir(path):
        versions = _manifest_versions(path)
        if not versions:
            raise StoreError(f"no manifest found under {path}")
        file_path = versions[-1][1]
        root = path
    else:
        file_path = path
        root = os.path.dirname(path)
    if not os.path.exists(file_path):
        raise StoreError(f"manifest file not found: {file_path}")

    header = None
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    with open(file_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise StoreError(f"{file_path}:{line_no}: bad record: {e}") from e
            kind = rec.get("record")
            if kind == "header":
                if header is not None:
                    raise StoreError(f"{file_path}:{line_no}: duplicate header")
                if rec.get("schema_version") != SCHEMA_VERSION:
                    raise StoreError(
                        f"unsupported manifest schema_version {rec.get('schema_version')!r}"
                    )
                header = rec
            elif kind == "entry":
                sid = rec["sample_id"]
                if sid in seen:
                    raise StoreError(f"duplicate sample_id {sid!r}")
                seen.add(sid)
                split = rec.get("split", "train")
                if split not in SPLIT_TAGS:
                    raise StoreError(f"sample {sid!r}: unknown split tag {split!r}")
                entries.append(
                    ManifestEntry(
                        sample_id=sid,
                        path=rec["path"],
                        label=rec.get("label"),
                        seed=rec.get("seed"),
                        split=split,
                        digest=rec["digest"],
                    )
                )
            else:
                raise StoreError(f"{file_path}:{line_no}: unknown record kind {kind!r}")
    if header is None:
        raise StoreError(f"{file_path}: missing header record")
    if header.get("count") != len(entries):
        raise StoreError(
            f"{file_path}: header count {header.get('count')} != {len(entries)} entries"
        )
    return DatasetManifest(
        dataset_id=header["dataset_id"],
        scheme_id=header.get("scheme_id", "unknown"),
        provenance=header.get("provenance", "imitation"),
        tool_version=header.get("tool_version", "unknown"),
        master_seed=header.get("master_seed"),
        config_digest=header.get("config_digest"),
        entries=tuple(entries),
        root=root,
    )


def split_dataset(manifest: DatasetManifest, counts: dict[str, int], seed: int, rest: str = "train", persist: bool = True) -> DatasetManifest:
    """Deterministically re-tag entries into splits.

    ``counts`` assigns exact sizes to named splits (e.g. {"test": 5000,
    "val": 5000}); every remaining entry gets the ``rest`` tag. The
    permutation is a seeded shuffle, so the same seed reproduces the same
    assignment. A new manifest version is written unless persist=False.
    """
    total = len(manifest.entries)
    asked = sum(counts.values())
    if asked > total:
        raise StoreError(f"split oversubscribed: {asked} requested of {total}")
    for tag in list(counts) + [rest]:
        if tag not in SPLIT_TAGS:
            raise StoreError(f"unknown split tag {tag!r}")

    order = np.random.default_rng(seed).permutation(total)
    tags = [rest] * total
    cursor = 0
    for tag, n in counts.items():
        for k in range(n):
            tags[order[cursor + k]] = tag
        cursor += n

    new_entries = tuple(
        replace(e, split=tags[i]) for i, e in enumerate(manifest.entries)
    )
    new_manifest = replace(manifest, entries=new_entries)
    if persist:
        versions = _manifest_versions(manifest.root)
        next_v = versions[-1][0] + 1 if versions else 1
        name = "manifest.jsonl" if next_v == 1 else f"manifest.v{next_v}.jsonl"
        _write_manifest_file(new_manifest, os.path.join(manifest.root, name))
    return new_manifest


def verify_integrity(manifest: DatasetManifest, cfg=None) -> list[str]:
    """Check digests and invariants; returns violations (empty when clean).

    With a scheme config supplied, labeled entries are also checked
    against its charset / exclusions / length range.
    """
    out: list[str] = []
    seen: set[str] = set()
    allowed = set(cfg.effective_charset()) if cfg is not None else None
    for e in manifest.entries:
        if e.sample_id in seen:
            out.append(f"{e.sample_id}: duplicate sample_id")
        seen.add(e.sample_id)
        if e.split not in SPLIT_TAGS:
            out.append(f"{e.sample_id}: unknown split tag {e.split!r}")
        full = manifest.image_path(e)
        if not os.path.exists(full):
            out.append(f"{e.sample_id}: image file missing ({e.path})")
        else:
            with open(full, "rb") as fh:
                if _sha256_bytes(fh.read()) != e.digest:
                    out.append(f"{e.sample_id}: content digest mismatch")
        if e.label is not None and cfg is not None:
            lo, hi = cfg.length_range
            if not (lo <= len(e.label) <= hi):
                out.append(f"{e.sample_id}: label length {len(e.label)} outside [{lo}, {hi}]")
            bad = sorted({c for c in e.label if c not in allowed})
            if bad:
                out.append(f"{e.sample_id}: label uses disallowed characters {bad}")
    return out
