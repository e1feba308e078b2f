"""Render a tiny pool/validation pair with disjoint sample ids, plus a
campaign config, under the directory given as argv[1]. Used by the
serve-labeler round-trip test."""

import json
import os
import sys

from captchakit import store
from captchakit.render import derive_seed, render_captcha
from captchakit.schemes import preset

SCHEME = preset(1)


def write_set(out: str, prefix: str, count: int, master_seed: int, split: str):
    entries = []
    for i in range(count):
        sample = render_captcha(SCHEME, derive_seed(master_seed, i))
        entries.append({
            "sample_id": f"{prefix}{i:04d}",
            "png_bytes": sample.to_png_bytes(),
            "label": sample.label,
            "seed": sample.seed,
            "split": split,
        })
    meta = {
        "dataset_id": os.path.basename(out),
        "scheme_id": SCHEME.scheme_id,
        "provenance": "synthetic",
        "master_seed": master_seed,
    }
    return store.write_dataset(entries, meta=meta, out=out)


def main() -> None:
    root = sys.argv[1]
    write_set(os.path.join(root, "pool"), "p", 6, 5150, "pool")
    write_set(os.path.join(root, "val"), "v", 2, 6160, "val")
    config = {
        "scheme": "preset-1",
        "budgets": {"initial": 2, "per_round": 2, "cap": 4},
        "seed": 1,
        "validation_size": 2,
        "labeler": "human",
        "adapter": {"kind": "stub"},
    }
    with open(os.path.join(root, "campaign.json"), "w", encoding="utf-8") as fh:
        json.dump(config, fh)
    print("OK", flush=True)


if __name__ == "__main__":
    main()
