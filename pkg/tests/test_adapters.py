from __future__ import annotations

import hashlib

import numpy as np
import pytest
from task_fuzz import run_task_fuzz

from captchakit.adapters import (
    STUB_SCHEDULE,
    AdapterError,
    StubAdapter,
    TaskError,
    TaskQueue,
    make_label_validator,
)
from captchakit.ctc import LogitsMatrix, greedy_decode
from captchakit.render import generate_dataset
from captchakit.schemes import preset, weibo
from captchakit.wire import (
    PROTOCOL_VERSION,
    WireError,
    decode_logits,
    encode_logits,
    pack_message,
    unpack_message,
)


# --- wire framing -----------------------------------------------------------


def test_pack_unpack_round_trip():
    parts = [("img-00000", b"\x89PNG..."), ("logits-00000", b"\x00" * 9)]
    blob = pack_message({"op": "predict", "decode": "greedy"}, parts)
    header, got = unpack_message(blob)
    assert header["op"] == "predict"
    assert header["protocol_version"] == PROTOCOL_VERSION
    assert [p["id"] for p in header["parts"]] == ["img-00000", "logits-00000"]
    assert got["img-00000"] == b"\x89PNG..."
    assert got["logits-00000"] == b"\x00" * 9


def test_pack_unpack_empty_parts():
    header, parts = unpack_message(pack_message({"op": "health"}))
    assert parts == {}
    assert header["parts"] == []


def test_unpack_rejects_malformed_frames():
    blob = pack_message({"op": "x"}, [("a", b"1234")])
    with pytest.raises(WireError):
        unpack_message(blob[:2])  # shorter than the length prefix
    with pytest.raises(WireError):
        unpack_message(blob[:10])  # header truncated
    with pytest.raises(WireError):
        unpack_message(blob[:-1])  # part truncated
    with pytest.raises(WireError):
        unpack_message(blob + b"zz")  # trailing bytes
    bad_version = pack_message({"op": "x"})
    # rewrite the version inside the header
    import json as _json
    import struct

    head_len = struct.unpack_from(">I", bad_version)[0]
    head = _json.loads(bad_version[4 : 4 + head_len])
    head["protocol_version"] = 2
    hb = _json.dumps(head).encode()
    with pytest.raises(WireError):
        unpack_message(struct.pack(">I", len(hb)) + hb)


def test_logits_wire_round_trip_preserves_decode():
    rng = np.random.default_rng(31)
    for _ in range(50):
        t = int(rng.integers(1, 12))
        alphabet = "abcXYZ09"[: int(rng.integers(1, 9))]
        p = rng.random((t, len(alphabet) + 1)) + 1e-3
        p /= p.sum(axis=1, keepdims=True)
        m = LogitsMatrix.from_probs(p, alphabet)
        again = decode_logits(encode_logits(m))
        assert again.alphabet == alphabet
        assert again.frames == t
        # rows re-normalize to exact distributions
        assert np.allclose(np.exp(again.log_probs).sum(axis=1), 1.0, atol=1e-9)
        assert greedy_decode(again).label == greedy_decode(m).label


def test_decode_logits_rejects_malformed_blobs():
    m = LogitsMatrix.from_probs(np.full((2, 2), 0.5), "a")
    blob = encode_logits(m)
    with pytest.raises(WireError):
        decode_logits(blob[:5])
    with pytest.raises(WireError):
        decode_logits(blob[:-4])
    # class count / alphabet mismatch
    bad = bytearray(blob)
    bad[7] = 9  # k field
    with pytest.raises(WireError):
        decode_logits(bytes(bad))


# --- stub adapter ------------------------------------------------------------


@pytest.fixture(scope="module")
def pool(tmp_path_factory):
    root = tmp_path_factory.mktemp("stubpool")
    cfg = preset(1)
    manifest = generate_dataset(cfg, count=400, master_seed=21, out=str(root / "ds"))
    return cfg, manifest


def test_stub_is_deterministic_and_schedule_driven(pool):
    cfg, manifest = pool
    images = [manifest.load_png_bytes(e) for e in manifest.entries]
    truth = [e.label for e in manifest.entries]

    a = StubAdapter.from_manifest(manifest, cfg.charset, seed=0)
    b = StubAdapter.from_manifest(manifest, cfg.charset, seed=0)
    a.train("")
    b.train("")
    pa = [p.label for p in a.predict(images)]
    pb = [p.label for p in b.predict(images)]
    assert pa == pb

    rate0 = sum(p == t for p, t in zip(pa, truth)) / len(truth)
    assert abs(rate0 - STUB_SCHEDULE[0]) < 0.08

    a.training_size = 500
    rate5 = sum(p.label == t for p, t in zip(a.predict(images), truth)) / len(truth)
    assert abs(rate5 - STUB_SCHEDULE[500]) < 0.05
    assert rate5 > rate0


def test_stub_predictions_are_greedy_consistent(pool):
    cfg, manifest = pool
    adapter = StubAdapter.from_manifest(manifest, cfg.charset, confusion_pairs=(("S", "5"),))
    adapter.train("")
    images = [manifest.load_png_bytes(e) for e in manifest.entries[:100]]
    for p in adapter.predict(images):
        assert p.logits is not None
        assert greedy_decode(p.logits).label == p.label


def test_stub_confusion_pairs_flip_often(pool):
    cfg, manifest = pool
    adapter = StubAdapter.from_manifest(manifest, cfg.charset, confusion_pairs=(("S", "5"),))
    adapter.train("")
    hit = [e for e in manifest.entries if set(e.label) & {"S", "5"}]
    assert len(hit) > 20
    images = [manifest.load_png_bytes(e) for e in hit]
    preds = adapter.predict(images)
    flipped = 0
    for e, p in zip(hit, preds):
        for i, c in enumerate(e.label):
            if c in "S5" and p.label[i] == {"S": "5", "5": "S"}[c]:
                flipped += 1
                break
    assert flipped / len(hit) > 0.6


def test_stub_requires_truth_and_base_model(pool):
    cfg, manifest = pool
    adapter = StubAdapter.from_manifest(manifest, cfg.charset)
    with pytest.raises(AdapterError):
        adapter.finetune("stub-base", "anywhere")
    with pytest.raises(AdapterError):
        adapter.predict([b"not a known image"])


def test_stub_finetune_tracks_manifest_size_and_freezes(pool, tmp_path):
    cfg, manifest = pool
    sub = [
        {
            "sample_id": e.sample_id,
            "png_bytes": manifest.load_png_bytes(e),
            "label": e.label,
            "seed": e.seed,
            "split": "train",
        }
        for e in manifest.entries[:200]
    ]
    from captchakit.store import write_dataset

    ft = write_dataset(sub, meta={"scheme_id": cfg.scheme_id}, out=str(tmp_path / "ft"))
    adapter = StubAdapter.from_manifest(manifest, cfg.charset)
    base = adapter.train("")
    summary = adapter.finetune(base.model_id, str(tmp_path / "ft"))
    assert adapter.training_size == 200
    assert summary.val_success_rate == STUB_SCHEDULE[200]
    assert summary.trainable_parameters < base.trainable_parameters


def test_stub_synthesize_copies_with_synthetic_provenance(pool, tmp_path):
    cfg, manifest = pool
    adapter = StubAdapter.from_manifest(manifest, cfg.charset)
    out = adapter.synthesize(manifest.root, str(tmp_path / "synth"))
    from captchakit.store import read_manifest

    synth = read_manifest(out)
    assert synth.provenance == "synthetic"
    assert [e.digest for e in synth.entries] == [e.digest for e in manifest.entries]
    assert [e.label for e in synth.entries] == [e.label for e in manifest.entries]


# --- label task queue ---------------------------------------------------------


def _queue():
    return TaskQueue(make_label_validator(weibo()))


def test_queue_is_idempotent_per_round_and_sample():
    q = _queue()
    t1 = q.queue_for_labeling([("s1", "/img/s1"), ("s2", "/img/s2")], round_no=1)
    t2 = q.queue_for_labeling([("s1", "/img/s1")], round_no=1)
    assert t2[0].task_id == t1[0].task_id
    t3 = q.queue_for_labeling([("s1", "/img/s1")], round_no=2)
    assert t3[0].task_id != t1[0].task_id  # same sample, new round


def test_fetch_assigns_and_respects_limit():
    q = _queue()
    q.queue_for_labeling([(f"s{i}", f"/img/s{i}") for i in range(5)], round_no=0)
    got = q.fetch_batch(3, submitter="w")
    assert len(got) == 3
    assert all(t.status == "assigned" and t.submitter == "w" for t in got)
    rest = q.fetch_batch(10)
    assert len(rest) == 2
    assert q.fetch_batch(10) == []


def test_submit_happy_path_and_idempotent_resubmit():
    q = _queue()
    (t,) = q.queue_for_labeling([("s1", "/img/s1")], round_no=0)
    q.fetch_batch(1)
    cfg = weibo()
    label = cfg.effective_charset()[:4]
    done = q.submit_label(t.task_id, label)
    assert done.status == "labeled"
    again = q.submit_label(t.task_id, label)
    assert again.status == "labeled"
    with pytest.raises(TaskError):
        q.submit_label(t.task_id, label[::-1])
    assert q.labeled_for_round(0) == {"s1": label}


def test_invalid_label_bounces_back_to_queue():
    q = _queue()
    (t,) = q.queue_for_labeling([("s1", "/img/s1")], round_no=0)
    q.fetch_batch(1)
    bad = "ab1o"  # weibo excludes o and 1
    bounced = q.submit_label(t.task_id, bad)
    assert bounced.status == "queued"
    assert bounced.rejection_reason
    # the same task is fetchable again and can then be labeled correctly
    (t2,) = q.fetch_batch(1)
    assert t2.task_id == t.task_id
    ok = q.submit_label(t.task_id, weibo().effective_charset()[:4])
    assert ok.status == "labeled"


def test_submit_errors():
    q = _queue()
    with pytest.raises(TaskError):
        q.submit_label("missing", "abcd")
    (t,) = q.queue_for_labeling([("s1", "/img/s1")], round_no=0)
    with pytest.raises(TaskError):
        q.submit_label(t.task_id, "")


def test_progress_counts():
    q = _queue()
    q.queue_for_labeling([(f"s{i}", f"/img/{i}") for i in range(4)], round_no=2)
    q.fetch_batch(2)
    prog = q.progress(2)
    assert prog == {"round": 2, "total": 4, "labeled": 0, "queued": 2, "assigned": 2}


def test_task_fuzz_short():
    counters = run_task_fuzz(2000, seed=97)
    # every interesting path must actually be exercised
    assert counters["submit_ok"] > 50
    assert counters["submit_reject"] > 50
    assert counters["submit_idempotent"] > 0
    assert counters["submit_conflict"] > 0
    assert counters["submit_unknown"] > 0
