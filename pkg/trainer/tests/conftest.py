"""Shared fixtures: tiny synthetic datasets and rendered corpora.

Unit tests use random noise PNGs (fast, no dependency on the rendering
toolkit). Interop tests shell out to the captchakit CLI, which must be
installed in the same environment; they are the point where the on-disk
manifest format and the wire protocol are checked against the other
side of the contract.
"""

from __future__ import annotations

import io
import shutil
import subprocess

import numpy as np
import pytest
from PIL import Image

from captcha_trainer.manifest import write_dataset

CHARSET = "2345789ABCDE"


def random_png(rng: np.random.Generator, size=(96, 40)) -> bytes:
    arr = rng.integers(0, 256, size=(size[1], size[0], 3), dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def make_noise_dataset(out, n, seed, label_len=4, splits=("train",), size=(96, 40)):
    """n random-noise PNGs, split round-robin.

    Labels cycle through CHARSET deterministically so any two datasets
    built this way share one charset (fine-tuning needs that).
    """
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        label = "".join(
            CHARSET[(i * label_len + j) % len(CHARSET)] for j in range(label_len)
        )
        records.append(
            {
                "sample_id": f"s{i:05d}",
                "png_bytes": random_png(rng, size),
                "label": label,
                "seed": seed + i,
                "split": splits[i % len(splits)],
            }
        )
    return write_dataset(
        records,
        meta={"dataset_id": f"noise-{seed}", "scheme_id": "noise", "master_seed": seed},
        out=str(out),
    )


def captchakit_available() -> bool:
    return shutil.which("captchakit") is not None


def render_dataset(out, scheme: str, count: int, seed: int) -> None:
    subprocess.run(
        ["captchakit", "gen", "--scheme", scheme, "--count", str(count),
         "--seed", str(seed), "--out", str(out)],
        check=True, capture_output=True, text=True,
    )


@pytest.fixture(scope="session")
def rendered_dataset(tmp_path_factory):
    """A small corpus from the rendering toolkit (skips if absent)."""
    if not captchakit_available():
        pytest.skip("captchakit CLI not installed")
    out = tmp_path_factory.mktemp("rendered") / "set"
    render_dataset(out, "preset-1", 40, 1234)
    return str(out)
