"""Randomized driver for the label-task state machine.

Keeps a shadow model of every task and checks the queue's observable
state against it after each operation. Used by the unit tests and by the
acceptance suite (10^4 attempts there).
"""

from __future__ import annotations

import numpy as np

from captchakit.adapters import TaskError, TaskQueue, make_label_validator
from captchakit.schemes import weibo

OBSERVABLE_STATUSES = {"queued", "assigned", "labeled"}


def run_task_fuzz(attempts: int, seed: int) -> dict:
    """Run ``attempts`` random transitions; raises AssertionError on any
    invariant violation. Returns op counters for reporting."""
    cfg = weibo()
    validator = make_label_validator(cfg)
    queue = TaskQueue(validator)
    rng = np.random.default_rng(seed)
    alphabet = cfg.effective_charset()
    excluded = sorted(cfg.excluded_chars)

    model: dict[str, dict] = {}  # task_id -> {status, label, round, sample_id}
    by_key: dict[tuple[int, str], str] = {}
    counters = {"queue": 0, "fetch": 0, "submit_ok": 0, "submit_reject": 0,
                "submit_idempotent": 0, "submit_conflict": 0, "submit_unknown": 0}

    def random_label(valid: bool) -> str:
        if valid:
            idx = rng.integers(0, len(alphabet), size=4)
            return "".join(alphabet[int(i)] for i in idx)
        mode = int(rng.integers(0, 3))
        if mode == 0:  # excluded character
            idx = rng.integers(0, len(alphabet), size=3)
            core = "".join(alphabet[int(i)] for i in idx)
            return core + excluded[int(rng.integers(0, len(excluded)))]
        if mode == 1:  # wrong length
            idx = rng.integers(0, len(alphabet), size=int(rng.integers(1, 3)))
            return "".join(alphabet[int(i)] for i in idx)
        return "####"  # characters outside the charset

    def check_global():
        for tid, m in model.items():
            t = queue.task(tid)
            assert t.status in OBSERVABLE_STATUSES, f"{tid}: resting status {t.status}"
            assert t.status == m["status"], f"{tid}: {t.status} != model {m['status']}"
            if t.status == "labeled":
                assert t.submitted_label == m["label"]
                assert validator(t.submitted_label) is None, "labeled with invalid label"
            assert by_key[(t.round, t.sample_id)] == tid

    for _ in range(attempts):
        op = int(rng.integers(0, 10))
        if op <= 2:  # queue a batch, possibly with duplicate keys
            counters["queue"] += 1
            round_no = int(rng.integers(0, 3))
            n = int(rng.integers(1, 5))
            pairs = []
            for _ in range(n):
                sid = f"s{int(rng.integers(0, 60)):04d}"
                pairs.append((sid, f"/images/{sid}"))
            tasks = queue.queue_for_labeling(pairs, round_no)
            assert len(tasks) == len(pairs)
            for (sid, _), t in zip(pairs, tasks):
                key = (round_no, sid)
                if key in by_key:
                    assert t.task_id == by_key[key], "idempotence broke: new task for existing key"
                else:
                    assert t.status == "queued"
                    by_key[key] = t.task_id
                    model[t.task_id] = {"status": "queued", "label": None,
                                        "round": round_no, "sample_id": sid}
        elif op <= 4:  # fetch a batch
            counters["fetch"] += 1
            limit = int(rng.integers(0, 6))
            got = queue.fetch_batch(limit, submitter="fuzzer")
            assert len(got) <= limit
            for t in got:
                assert model[t.task_id]["status"] == "queued", "assigned a non-queued task"
                assert t.status == "assigned"
                model[t.task_id]["status"] = "assigned"
        else:  # submit a label
            known = list(model)
            if known and rng.random() < 0.95:
                tid = known[int(rng.integers(0, len(known)))]
            else:
                tid = "t999999"
            m = model.get(tid)
            if m is not None and m["status"] == "labeled" and rng.random() < 0.5:
                label = m["label"]  # exercise the idempotent resubmit path
            else:
                label = random_label(bool(rng.random() < 0.6))
            valid = validator(label) is None
            try:
                t = queue.submit_label(tid, label, submitter="fuzzer")
            except TaskError:
                if m is None:
                    counters["submit_unknown"] += 1
                else:
                    # only a conflicting resubmission of a labeled task may throw
                    assert m["status"] == "labeled" and label != m["label"], (
                        f"unexpected TaskError for {tid} in {m['status']}"
                    )
                    counters["submit_conflict"] += 1
            else:
                assert m is not None, "submit on unknown task did not raise"
                if m["status"] == "labeled":
                    assert label == m["label"], "conflicting resubmit accepted"
                    assert t.status == "labeled"
                    counters["submit_idempotent"] += 1
                elif valid:
                    assert t.status == "labeled" and t.submitted_label == label
                    m["status"], m["label"] = "labeled", label
                    counters["submit_ok"] += 1
                else:
                    assert t.status == "queued", "rejected task not re-queued"
                    assert t.rejection_reason
                    m["status"] = "queued"
                    counters["submit_reject"] += 1
        check_global()

    # terminal conservation: every created task is still reachable
    assert len(model) == len(by_key)
    for rnd in (0, 1, 2):
        prog = queue.progress(rnd)
        mine = [m for m in model.values() if m["round"] == rnd]
        assert prog["total"] == len(mine)
        assert prog["labeled"] == sum(m["status"] == "labeled" for m in mine)
    return counters
