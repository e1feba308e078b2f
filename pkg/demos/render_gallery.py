"""
Render one sample from every preset scheme
==========================================

Writes a PNG per preset into ./gallery-out and prints the label next to
the mechanisms that produced it.
"""

import os

from captchakit.render import derive_seed, render_captcha
from captchakit.schemes import preset, weibo

OUT_DIR = "gallery-out"
MASTER_SEED = 20260818

os.makedirs(OUT_DIR, exist_ok=True)

configs = [(f"preset-{no:02d}", preset(no)) for no in range(1, 13)]
configs.append(("weibo", weibo()))

for i, (name, cfg) in enumerate(configs):
    sample = render_captcha(cfg, derive_seed(MASTER_SEED, i))
    path = os.path.join(OUT_DIR, f"{name}.png")
    with open(path, "wb") as fh:
        fh.write(sample.to_png_bytes())
    on = [m for m, v in cfg.mechanism_flags().items() if v]
    print(f"{name:10s}  label={sample.label:10s}  mechanisms={', '.join(on) or 'none'}")

print(f"\nwrote {len(configs)} images under {OUT_DIR}/")
