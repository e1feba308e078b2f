from __future__ import annotations

import json
import os

import numpy as np
import pytest

from captchakit.render import generate_dataset, render_captcha
from captchakit.schemes import preset
from captchakit.store import (
    SPLIT_TAGS,
    StoreError,
    read_manifest,
    split_dataset,
    verify_integrity,
    write_dataset,
)


def _dicts(n, label="AB12CD", split="train"):
    out = []
    for i in range(n):
        png = render_captcha(preset(1), seed=1000 + i).to_png_bytes()
        out.append({"sample_id": f"x{i:04d}", "png_bytes": png, "label": label, "seed": 1000 + i, "split": split})
    return out


def test_write_then_read_roundtrip(tmp_path):
    root = tmp_path / "ds"
    written = write_dataset(_dicts(5), meta={"scheme_id": "preset-01", "master_seed": 9}, out=str(root))
    loaded = read_manifest(str(root))
    assert loaded.dataset_id == written.dataset_id == "ds"
    assert loaded.scheme_id == "preset-01"
    assert loaded.master_seed == 9
    assert [e.to_record() for e in loaded.entries] == [e.to_record() for e in written.entries]
    for e in loaded.entries:
        img = loaded.load_image(e)
        assert img.shape == (48, 120, 3)


def test_line_delimited_layout_with_header_first(tmp_path):
    root = tmp_path / "ds"
    write_dataset(_dicts(3), meta={"scheme_id": "s"}, out=str(root))
    lines = (root / "manifest.jsonl").read_text().splitlines()
    assert len(lines) == 4
    head = json.loads(lines[0])
    assert head["record"] == "header"
    assert head["count"] == 3
    assert head["schema_version"] == 1
    for line in lines[1:]:
        rec = json.loads(line)
        assert rec["record"] == "entry"
        assert set(rec) >= {"sample_id", "path", "label", "seed", "split", "digest"}


def test_write_rejects_duplicates_and_bad_splits(tmp_path):
    rows = _dicts(2)
    rows[1]["sample_id"] = rows[0]["sample_id"]
    with pytest.raises(StoreError):
        write_dataset(rows, meta={}, out=str(tmp_path / "a"))
    rows = _dicts(1, split="nope")
    with pytest.raises(StoreError):
        write_dataset(rows, meta={}, out=str(tmp_path / "b"))
    with pytest.raises(StoreError):
        write_dataset([], meta={}, out=str(tmp_path / "c"))


def test_write_refuses_to_clobber_existing_manifest(tmp_path):
    root = str(tmp_path / "ds")
    write_dataset(_dicts(2), meta={}, out=root)
    with pytest.raises(StoreError):
        write_dataset(_dicts(2), meta={}, out=root)


def test_read_rejects_corrupted_manifests(tmp_path):
    root = tmp_path / "ds"
    write_dataset(_dicts(2), meta={}, out=str(root))
    path = root / "manifest.jsonl"

    lines = path.read_text().splitlines()
    # count mismatch
    bad = tmp_path / "bad1.jsonl"
    bad.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(StoreError):
        read_manifest(str(bad))
    # duplicate entry
    bad2 = tmp_path / "bad2.jsonl"
    head = json.loads(lines[0])
    head["count"] = 3
    bad2.write_text("\n".join([json.dumps(head)] + lines[1:] + [lines[1]]) + "\n")
    with pytest.raises(StoreError):
        read_manifest(str(bad2))
    # missing header
    bad3 = tmp_path / "bad3.jsonl"
    bad3.write_text("\n".join(lines[1:]) + "\n")
    with pytest.raises(StoreError):
        read_manifest(str(bad3))
    # not json
    bad4 = tmp_path / "bad4.jsonl"
    bad4.write_text("{not json\n")
    with pytest.raises(StoreError):
        read_manifest(str(bad4))
    with pytest.raises(StoreError):
        read_manifest(str(tmp_path / "empty-dir"))


def test_split_is_seeded_exact_and_versioned(tmp_path):
    root = str(tmp_path / "ds")
    m = write_dataset(_dicts(20), meta={}, out=root)
    s1 = split_dataset(m, {"test": 6, "val": 4}, seed=5)
    s2 = split_dataset(read_manifest(root + "/manifest.jsonl"), {"test": 6, "val": 4}, seed=5, persist=False)
    assert [e.split for e in s1.entries] == [e.split for e in s2.entries]
    tags = [e.split for e in s1.entries]
    assert tags.count("test") == 6
    assert tags.count("val") == 4
    assert tags.count("train") == 10
    # ids and content untouched
    assert [e.sample_id for e in s1.entries] == [e.sample_id for e in m.entries]
    assert [e.digest for e in s1.entries] == [e.digest for e in m.entries]
    # versioned file written, original immutable
    assert os.path.exists(os.path.join(root, "manifest.v2.jsonl"))
    original = read_manifest(os.path.join(root, "manifest.jsonl"))
    assert all(e.split == "train" for e in original.entries)
    # directory read resolves to the newest version
    assert [e.split for e in read_manifest(root).entries] == tags


def test_split_different_seed_differs_and_oversubscription_fails(tmp_path):
    m = write_dataset(_dicts(20), meta={}, out=str(tmp_path / "ds"))
    a = split_dataset(m, {"test": 10}, seed=1, persist=False)
    b = split_dataset(m, {"test": 10}, seed=2, persist=False)
    assert [e.split for e in a.entries] != [e.split for e in b.entries]
    with pytest.raises(StoreError):
        split_dataset(m, {"test": 21}, seed=1, persist=False)
    with pytest.raises(StoreError):
        split_dataset(m, {"bogus": 1}, seed=1, persist=False)


def test_verify_integrity_flags_tampering(tmp_path):
    root = str(tmp_path / "ds")
    cfg = preset(1)
    m = generate_dataset(cfg, count=6, master_seed=3, out=root)
    assert verify_integrity(m, cfg) == []

    # flip one byte of one image
    path = m.image_path(m.entries[2])
    data = bytearray(open(path, "rb").read())
    data[-10] ^= 0xFF
    open(path, "wb").write(bytes(data))
    problems = verify_integrity(m, cfg)
    assert any("digest" in p for p in problems)

    os.remove(m.image_path(m.entries[4]))
    problems = verify_integrity(m, cfg)
    assert any("missing" in p for p in problems)


def test_verify_integrity_checks_labels_against_scheme(tmp_path):
    rows = _dicts(2, label="abc")  # lowercase: outside preset charset
    m = write_dataset(rows, meta={}, out=str(tmp_path / "ds"))
    cfg = preset(1)
    problems = verify_integrity(m, cfg)
    assert any("disallowed" in p for p in problems)
    assert any("length" in p for p in problems)
    assert verify_integrity(m) == []  # without a config only digests count


def test_split_tags_cover_the_protocol_vocabulary():
    assert {"train", "test", "val", "pool"} <= set(SPLIT_TAGS)
