"""Unpaired image-to-image translation for synthetic-to-real rendering.

Two generators (G: imitation -> real, F: real -> imitation) and two
PatchGAN discriminators trained with least-squares adversarial losses
plus an L1 cycle-consistency term. Generators downsample the input
through three stride-2 stages to a 256-channel bottleneck, run residual
blocks there, and upsample with sub-pixel (PixelShuffle) convolutions.

Both nets are fully convolutional: training samples random 64x64 crops
(style is local, and crops keep the step cost flat), while application
runs whole images at native resolution, reflect-padded to the stride
multiple and trimmed back, so no resampling blur ever touches output.

Training is batch-1 with alternating generator/discriminator steps.
The per-epoch trace records the three generator-objective components
(both adversarial terms and the weighted cycle term); their sum is the
logged total, and both sides are accumulated independently so the
equality is a checkable invariant rather than a tautology.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch
from PIL import Image
from torch import nn

from . import metrics_lite
from .manifest import Dataset, write_dataset

CROP = 64
BOTTLENECK_CHANNELS = 256
RESIDUAL_BLOCKS = 3

DEFAULT_SYNTH_HYPERPARAMS = {
    "learning_rate": 2e-4,
    "cycle_weight": 10.0,
    "epochs": 4,
    "pairs_per_epoch": 0,  # 0: one pass over the smaller domain
    "seed": 0,
}


class SynthesisError(RuntimeError):
    pass


def _norm(channels: int) -> nn.Module:
    # batch size is 1 throughout, so instance norm is the only sane choice
    return nn.InstanceNorm2d(channels, affine=True)


class _Residual(nn.Module):
    def __init__(self, channels: int) -> None:
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1, padding_mode="reflect"),
            _norm(channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, padding=1, padding_mode="reflect"),
            _norm(channels),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.body(x)


class _Upsample(nn.Module):
    """Conv to 4x channels then PixelShuffle(2): doubles H and W."""

    def __init__(self, c_in: int, c_out: int) -> None:
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(c_in, c_out * 4, 3, padding=1),
            nn.PixelShuffle(2),
            _norm(c_out),
            nn.ReLU(inplace=True),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x)


class Generator(nn.Module):
    def __init__(self) -> None:
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv2d(3, 32, 7, padding=3, padding_mode="reflect"),
            _norm(32),
            nn.ReLU(inplace=True),
        )
        down = []
        c = 32
        while c < BOTTLENECK_CHANNELS:
            down += [nn.Conv2d(c, c * 2, 3, stride=2, padding=1), _norm(c * 2), nn.ReLU(inplace=True)]
            c *= 2
        self.down = nn.Sequential(*down)
        self.blocks = nn.Sequential(*[_Residual(c) for _ in range(RESIDUAL_BLOCKS)])
        self.up = nn.Sequential(
            _Upsample(256, 128), _Upsample(128, 64), _Upsample(64, 32)
        )
        self.head = nn.Sequential(
            nn.Conv2d(32, 3, 7, padding=3, padding_mode="reflect"), nn.Tanh()
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        z = self.down(self.stem(x))
        return self.head(self.up(self.blocks(z)))

    def bottleneck(self, x: torch.Tensor) -> torch.Tensor:
        return self.down(self.stem(x))


class Discriminator(nn.Module):
    """PatchGAN: per-patch real/fake scores, no global pooling."""

    def __init__(self) -> None:
        super().__init__()
        layers: list[nn.Module] = [nn.Conv2d(3, 64, 4, stride=2, padding=1), nn.LeakyReLU(0.2, inplace=True)]
        for c_in, c_out in ((64, 128), (128, 256)):
            layers += [
                nn.Conv2d(c_in, c_out, 4, stride=2, padding=1),
                _norm(c_out),
                nn.LeakyReLU(0.2, inplace=True),
            ]
        layers.append(nn.Conv2d(256, 1, 4, padding=1))
        self.body = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x)


def _to_tensor(png_bytes: bytes) -> torch.Tensor:
    """Native-resolution (3, H, W) tensor in [-1, 1]; never resamples."""
    with Image.open(io.BytesIO(png_bytes)) as img:
        arr = np.asarray(img.convert("RGB"))
    t = torch.from_numpy(arr.astype(np.float32) / 127.5 - 1.0)
    return t.permute(2, 0, 1)


def _to_png(t: torch.Tensor) -> bytes:
    arr = ((t.clamp(-1, 1) + 1.0) * 127.5).round().to(torch.uint8)
    img = Image.fromarray(arr.permute(1, 2, 0).numpy())
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def _pad_to_multiple(t: torch.Tensor, multiple: int = 8) -> torch.Tensor:
    h, w = t.shape[-2:]
    ph = (multiple - h % multiple) % multiple
    pw = (multiple - w % multiple) % multiple
    if ph == 0 and pw == 0:
        return t
    return nn.functional.pad(t, (0, pw, 0, ph), mode="reflect")


def _random_crop(t: torch.Tensor, rng: np.random.Generator) -> torch.Tensor:
    h, w = t.shape[-2:]
    if h < CROP or w < CROP:
        t = nn.functional.pad(
            t, (0, max(0, CROP - w), 0, max(0, CROP - h)), mode="reflect"
        )
        h, w = t.shape[-2:]
    top = int(rng.integers(0, h - CROP + 1))
    left = int(rng.integers(0, w - CROP + 1))
    return t[..., top : top + CROP, left : left + CROP]


def _domain_tensors(dataset: Dataset, splits: Sequence[str]) -> list[torch.Tensor]:
    out = []
    for entry in dataset.entries:
        if entry.split in splits:
            out.append(_to_tensor(dataset.load_png(entry)))
    if not out:
        raise SynthesisError(f"no images in splits {list(splits)}")
    return out


@dataclass
class SynthesizerBundle:
    g: Generator
    f: Generator
    d_real: Discriminator
    d_imit: Discriminator
    config: dict
    trace: list[dict] = field(default_factory=list)

    def save(self, path: str) -> None:
        torch.save(
            {
                "kind": "cyclegan",
                "config": self.config,
                "trace": self.trace,
                "g": self.g.state_dict(),
                "f": self.f.state_dict(),
                "d_real": self.d_real.state_dict(),
                "d_imit": self.d_imit.state_dict(),
            },
            path,
        )

    @classmethod
    def load(cls, path: str) -> "SynthesizerBundle":
        blob = torch.load(path, map_location="cpu", weights_only=False)
        if blob.get("kind") != "cyclegan":
            raise SynthesisError(f"not a synthesizer checkpoint: {path}")
        bundle = cls(Generator(), Generator(), Discriminator(), Discriminator(), blob["config"], blob["trace"])
        bundle.g.load_state_dict(blob["g"])
        bundle.f.load_state_dict(blob["f"])
        bundle.d_real.load_state_dict(blob["d_real"])
        bundle.d_imit.load_state_dict(blob["d_imit"])
        return bundle


def train_synthesizer(
    imitation: Dataset,
    real: Dataset,
    hyperparams: dict | None = None,
    log: Callable[[str], None] = lambda line: None,
    splits: Sequence[str] = ("train", "pool"),
) -> SynthesizerBundle:
    """Fit G (imitation -> real) and F (real -> imitation) on unpaired sets."""
    hp = dict(DEFAULT_SYNTH_HYPERPARAMS)
    hp.update(hyperparams or {})
    lam = float(hp["cycle_weight"])
    torch.manual_seed(int(hp["seed"]))
    rng = np.random.default_rng(int(hp["seed"]))

    xs = _domain_tensors(imitation, splits)
    ys = _domain_tensors(real, splits)
    pairs = int(hp["pairs_per_epoch"]) or min(len(xs), len(ys))

    g, f = Generator(), Generator()
    d_real, d_imit = Discriminator(), Discriminator()
    lr = float(hp["learning_rate"])
    opt_g = torch.optim.Adam(list(g.parameters()) + list(f.parameters()), lr=lr, betas=(0.5, 0.999))
    opt_d = torch.optim.Adam(
        list(d_real.parameters()) + list(d_imit.parameters()), lr=lr, betas=(0.5, 0.999)
    )
    mse = nn.MSELoss()
    l1 = nn.L1Loss()

    trace: list[dict] = []
    for epoch in range(int(hp["epochs"])):
        sums = {"adv_g": 0.0, "adv_f": 0.0, "cycle": 0.0, "total": 0.0}
        order_x = rng.permutation(len(xs))
        order_y = rng.permutation(len(ys))
        for step in range(pairs):
            x = _random_crop(xs[order_x[step % len(xs)]], rng).unsqueeze(0)
            y = _random_crop(ys[order_y[step % len(ys)]], rng).unsqueeze(0)

            # generator step
            opt_g.zero_grad()
            fake_y = g(x)
            fake_x = f(y)
            score_y = d_real(fake_y)
            score_x = d_imit(fake_x)
            adv_g = mse(score_y, torch.ones_like(score_y))
            adv_f = mse(score_x, torch.ones_like(score_x))
            cycle = lam * (l1(f(fake_y), x) + l1(g(fake_x), y))
            loss_g = adv_g + adv_f + cycle
            loss_g.backward()
            opt_g.step()

            # discriminator step on the same pair, detached fakes
            opt_d.zero_grad()
            real_y = d_real(y)
            real_x = d_imit(x)
            fake_y_score = d_real(fake_y.detach())
            fake_x_score = d_imit(fake_x.detach())
            loss_d = 0.5 * (
                mse(real_y, torch.ones_like(real_y))
                + mse(fake_y_score, torch.zeros_like(fake_y_score))
                + mse(real_x, torch.ones_like(real_x))
                + mse(fake_x_score, torch.zeros_like(fake_x_score))
            )
            loss_d.backward()
            opt_d.step()

            sums["adv_g"] += adv_g.item()
            sums["adv_f"] += adv_f.item()
            sums["cycle"] += cycle.item()
            sums["total"] += loss_g.item()

        row = {k: v / pairs for k, v in sums.items()}
        row["epoch"] = epoch
        trace.append(row)
        log(
            f"epoch {epoch}: adv_g={row['adv_g']:.4f} adv_f={row['adv_f']:.4f} "
            f"cycle={row['cycle']:.4f} total={row['total']:.4f}"
        )

    config = dict(hp)
    config["imitation_dataset"] = imitation.meta.get("dataset_id", "")
    config["real_dataset"] = real.meta.get("dataset_id", "")
    return SynthesizerBundle(g, f, d_real, d_imit, config, trace)


def translate_png(bundle: SynthesizerBundle, png_bytes: bytes) -> bytes:
    """Push one imitation image through G at native size."""
    t = _to_tensor(png_bytes)
    h, w = t.shape[-2:]
    bundle.g.eval()
    with torch.no_grad():
        out = bundle.g(_pad_to_multiple(t).unsqueeze(0))[0]
    return _to_png(out[..., :h, :w])


def synthesize_dataset(bundle: SynthesizerBundle, imitation: Dataset, out_dir: str) -> Dataset:
    """Translate every imitation image; labels, ids and splits carry over."""
    records = []
    for entry in imitation.entries:
        records.append(
            {
                "sample_id": entry.sample_id,
                "png_bytes": translate_png(bundle, imitation.load_png(entry)),
                "label": entry.label,
                "seed": entry.seed,
                "split": entry.split,
            }
        )
    meta = {
        "dataset_id": imitation.meta.get("dataset_id", "dataset") + "-translated",
        "scheme_id": imitation.meta.get("scheme_id", ""),
        "provenance": "synthetic",
        "tool_version": imitation.meta.get("tool_version", ""),
        "master_seed": imitation.meta.get("master_seed", 0),
        "config_digest": imitation.meta.get("config_digest", ""),
    }
    return write_dataset(records, meta, out_dir)


_HIGHER_BETTER = {"ssim": True, "psnr": True, "mi": True, "nrmse": False, "pl": False}


def checkpoint_metrics(
    bundle: SynthesizerBundle,
    imitation: Dataset,
    real: Dataset,
    sample_cap: int = 12,
) -> dict[str, float]:
    """Mean pairwise metric values between translated and real images.

    Pairwise metrics need equal shapes; each pair is compared on its
    common top-left window (domains of one scheme share a size anyway).
    """
    imit_pngs = [imitation.load_png(e) for e in imitation.entries[:sample_cap]]
    real_arrs = [
        np.asarray(Image.open(io.BytesIO(real.load_png(e))).convert("RGB"))
        for e in real.entries[:sample_cap]
    ]
    bundle.g.eval()
    fake_arrs = []
    with torch.no_grad():
        for png in imit_pngs:
            t = _to_tensor(png)
            h, w = t.shape[-2:]
            out = bundle.g(_pad_to_multiple(t).unsqueeze(0))[0][..., :h, :w]
            fake_arrs.append(((out.clamp(-1, 1) + 1) * 127.5).round().to(torch.uint8).permute(1, 2, 0).numpy())
    vals = {name: [] for name in _HIGHER_BETTER}
    for fake_full in fake_arrs:
        for ref_full in real_arrs:
            h = min(fake_full.shape[0], ref_full.shape[0])
            w = min(fake_full.shape[1], ref_full.shape[1])
            fake, ref = fake_full[:h, :w], ref_full[:h, :w]
            vals["ssim"].append(metrics_lite.ssim(fake, ref))
            p = metrics_lite.psnr(fake, ref)
            vals["psnr"].append(min(p, 99.0))  # identical pairs would give inf
            vals["mi"].append(metrics_lite.mutual_information(fake, ref))
            vals["nrmse"].append(metrics_lite.nrmse(fake, ref))
            vals["pl"].append(metrics_lite.perceptual(fake, ref))
    return {name: float(np.mean(v)) for name, v in vals.items()}


def select_synthesizer(
    candidates: Sequence[SynthesizerBundle],
    imitation: Dataset,
    real: Dataset,
    sample_cap: int = 12,
) -> tuple[int, list[dict[str, float]]]:
    """Rank checkpoints by a composite of min-max normalized metrics.

    Higher-is-better metrics enter as-is, lower-is-better ones negated;
    each column is normalized across candidates before averaging so no
    single scale dominates. Returns (best index, per-candidate metrics).
    """
    if not candidates:
        raise SynthesisError("no candidates to select from")
    rows = [checkpoint_metrics(c, imitation, real, sample_cap) for c in candidates]
    names = sorted(_HIGHER_BETTER)
    scores = np.zeros(len(candidates))
    for name in names:
        col = np.array([r[name] if _HIGHER_BETTER[name] else -r[name] for r in rows])
        spread = col.max() - col.min()
        if spread > 0:
            scores += (col - col.min()) / spread
    scores /= len(names)
    return int(np.argmax(scores)), rows
