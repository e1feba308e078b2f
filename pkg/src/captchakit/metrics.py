"""Image-population similarity and quality metrics.

Six metrics over 8-bit rasters: structural similarity (SSIM), peak
signal-to-noise ratio (PSNR), normalized root-mean-square error (NRMSE),
Shannon entropy (EN), mutual information (MI), and a perceptual feature
distance (PL). A group-evaluation protocol compares an imitation and a
synthetic population against a real population over incrementally grown
sample groups.

All metrics operate on single-channel images; RGB inputs are converted
with the standard luma weighting (0.299, 0.587, 0.114) first. Every
function is pure: identical inputs give bit-identical outputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import convolve as _ndconvolve

#: SSIM stabilization constants from the original formulation.
SSIM_K1 = 0.01
SSIM_K2 = 0.03
#: Dynamic range of 8-bit images.
DYNAMIC_RANGE = 255.0
#: SSIM sliding window is WINDOW x WINDOW, uniform weights, stride 1.
SSIM_WINDOW = 8

#: Orientation count and pyramid depth of the perceptual filter bank.
PERCEPTUAL_ORIENTATIONS = 4
PERCEPTUAL_SCALES = 3
#: Seed fixing the filter bank's phase jitter; part of the metric definition.
PERCEPTUAL_BANK_SEED = 90125

PERCEPTUAL_NOTE = (
    "PL is a fixed seeded Gabor filter-bank distance, not a pretrained "
    "network feature distance."
)


class MetricError(ValueError):
    """Raised on dimension mismatches or degenerate metric inputs."""


def luma(image) -> np.ndarray:
    """Convert a raster to a float64 single-channel image.

    Parameters
    ----------
    image : array_like
      2-D grayscale array, or 3-D H x W x 3 RGB array (any numeric dtype,
      values on the 0..255 scale).

    Returns
    -------
    ndarray
      2-D float64 array on the 0..255 scale.
    """
    arr = np.asarray(image)
    if arr.ndim == 2:
        return arr.astype(np.float64)
    if arr.ndim == 3 and arr.shape[2] == 3:
        w = np.array([0.299, 0.587, 0.114])
        return arr.astype(np.float64) @ w
    raise MetricError(f"expected HxW or HxWx3 raster, got shape {arr.shape}")


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    ga, gb = luma(a), luma(b)
    if ga.shape != gb.shape:
        raise MetricError(f"dimension mismatch: {ga.shape} vs {gb.shape}")
    return ga, gb


def _window_sums(img: np.ndarray, w: int) -> np.ndarray:
    """Sliding w x w window sums at stride 1 via a 2-D summed-area table."""
    s = np.zeros((img.shape[0] + 1, img.shape[1] + 1), dtype=np.float64)
    np.cumsum(np.cumsum(img, axis=0), axis=1, out=s[1:, 1:])
    return s[w:, w:] - s[:-w, w:] - s[w:, :-w] + s[:-w, :-w]


def ssim(a, b) -> float:
    """Mean local structural similarity between two rasters.

    Local SSIM is computed on every full ``SSIM_WINDOW`` square window at
    stride 1 with uniform weights and population (biased) moments:

      SSIM = (2 mu_a mu_b + C1)(2 cov_ab + C2)
             / ((mu_a^2 + mu_b^2 + C1)(var_a + var_b + C2))

    with C1 = (K1 L)^2, C2 = (K2 L)^2, L = 255. The result is the
    arithmetic mean over windows and lies in [-1, 1]; ssim(a, a) = 1.

    Parameters
    ----------
    a, b : array_like
      Rasters of equal shape, both dimensions >= ``SSIM_WINDOW``.

    Returns
    -------
    float
    """
    ga, gb = _pair(a, b)
    w = SSIM_WINDOW
    if ga.shape[0] < w or ga.shape[1] < w:
        raise MetricError(f"image smaller than the {w}x{w} SSIM window")
    n = float(w * w)
    c1 = (SSIM_K1 * DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * DYNAMIC_RANGE) ** 2

    mu_a = _window_sums(ga, w) / n
    mu_b = _window_sums(gb, w) / n
    # population moments: E[x^2] - E[x]^2, E[xy] - E[x]E[y]
    var_a = _window_sums(ga * ga, w) / n - mu_a * mu_a
    var_b = _window_sums(gb * gb, w) / n - mu_b * mu_b
    cov = _window_sums(ga * gb, w) / n - mu_a * mu_b

    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in decibels.

    10 log10(L^2 / MSE) with L = 255. Identical images give the +inf
    sentinel (``math.inf``); higher values mean less distortion.
    """
    ga, gb = _pair(a, b)
    mse = float(np.mean((ga - gb) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(DYNAMIC_RANGE * DYNAMIC_RANGE / mse)


def nrmse(a, ref) -> float:
    """Root-mean-square error normalized by the reference intensity range.

    RMSE(a, ref) / (max(ref) - min(ref)). Zero iff a equals ref; a
    constant reference makes the normalization degenerate and is an error.
    """
    ga, gref = _pair(a, ref)
    spread = float(gref.max() - gref.min())
    if spread == 0.0:
        raise MetricError("constant reference image: range normalization is degenerate")
    rmse = math.sqrt(float(np.mean((ga - gref) ** 2)))
    return rmse / spread


def _hist_indices(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img), 0, 255).astype(np.intp)


def entropy(a) -> float:
    """Shannon entropy of the 256-bin intensity histogram, in bits.

    0 log 0 := 0; a constant image has entropy 0, a uniform histogram
    over all 256 levels has entropy 8.
    """
    ga = luma(a)
    counts = np.bincount(_hist_indices(ga).ravel(), minlength=256)
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log2(p)).sum())


def mutual_information(a, b) -> float:
    """Mutual information between two rasters' intensities, in bits.

    Estimated from the 256 x 256 joint intensity histogram:
    MI = sum p(x,y) log2(p(x,y) / (p(x) p(y))). Symmetric, nonnegative,
    and MI(a, a) = entropy(a).
    """
    ga, gb = _pair(a, b)
    ia, ib = _hist_indices(ga).ravel(), _hist_indices(gb).ravel()
    joint = np.bincount(ia * 256 + ib, minlength=256 * 256).reshape(256, 256)
    joint = joint / joint.sum()
    px = joint.sum(axis=1)
    py = joint.sum(axis=0)
    nz = joint > 0
    outer = np.outer(px, py)
    return float((joint[nz] * np.log2(joint[nz] / outer[nz])).sum())


def _gabor_kernel(wavelength: float, theta: float, phase: float, sigma: float, half: int) -> np.ndarray:
    y, x = np.mgrid[-half : half + 1, -half : half + 1].astype(np.float64)
    xr = x * math.cos(theta) + y * math.sin(theta)
    yr = -x * math.sin(theta) + y * math.cos(theta)
    envelope = np.exp(-(xr * xr + yr * yr) / (2.0 * sigma * sigma))
    carrier = np.cos(2.0 * math.pi * xr / wavelength + phase)
    kernel = envelope * carrier
    kernel -= kernel.mean()  # zero DC response: constant inputs map to 0
    return kernel


def _perceptual_bank() -> list[np.ndarray]:
    """The fixed filter bank: 4 Gabor orientations with seeded phase jitter."""
    rng = np.random.default_rng(PERCEPTUAL_BANK_SEED)
    kernels = []
    for i in range(PERCEPTUAL_ORIENTATIONS):
        theta = math.pi * i / PERCEPTUAL_ORIENTATIONS
        phase = float(rng.uniform(0.0, 2.0 * math.pi))
        kernels.append(_gabor_kernel(wavelength=4.0, theta=theta, phase=phase, sigma=2.0, half=4))
    return kernels


_BANK = _perceptual_bank()


def _downsample2(img: np.ndarray) -> np.ndarray:
    h, w = (img.shape[0] // 2) * 2, (img.shape[1] // 2) * 2
    c = img[:h, :w]
    return 0.25 * (c[0::2, 0::2] + c[1::2, 0::2] + c[0::2, 1::2] + c[1::2, 1::2])


def _perceptual_features(img: np.ndarray) -> list[np.ndarray]:
    feats = []
    level = img / DYNAMIC_RANGE
    for _ in range(PERCEPTUAL_SCALES):
        for k in _BANK:
            fmap = _ndconvolve(level, k, mode="reflect")
            norm = math.sqrt(float(np.sum(fmap * fmap)))
            feats.append(fmap / norm if norm > 0 else fmap)
        level = _downsample2(level)
    return feats


def perceptual_distance(a, b) -> float:
    """Feature-space distance through a fixed seeded Gabor filter bank.

    Both images are filtered by 4 oriented Gabor kernels at 3 pyramid
    scales; each response map is unit-normalized, and the distance is the
    mean squared difference per channel, summed over scales. Zero iff the
    feature maps coincide (in particular perceptual_distance(a, a) = 0);
    symmetric; smaller is perceptually closer.

    This is a dependency-light stand-in for learned-feature perceptual
    metrics; see ``PERCEPTUAL_NOTE``.
    """
    ga, gb = _pair(a, b)
    fa = _perceptual_features(ga)
    fb = _perceptual_features(gb)
    per_channel = [float(np.mean((x - y) ** 2)) for x, y in zip(fa, fb)]
    # mean over orientations within a scale, summed across scales
    total = 0.0
    for s in range(PERCEPTUAL_SCALES):
        chunk = per_channel[s * PERCEPTUAL_ORIENTATIONS : (s + 1) * PERCEPTUAL_ORIENTATIONS]
        total += sum(chunk) / len(chunk)
    return total


#: Metric name -> (function of (candidate, real), higher_is_better)
PAIRWISE_METRICS = {
    "ssim": (ssim, True),
    "psnr": (psnr, True),
    "nrmse": (nrmse, False),
    "mi": (mutual_information, True),
    "pl": (perceptual_distance, False),
}

METRIC_NAMES = ("ssim", "psnr", "nrmse", "en", "mi", "pl")


@dataclass(frozen=True)
class GroupResult:
    """One group's metric means: candidate populations vs the real group."""

    group: int
    size: int
    imitation_vs_real: dict[str, float]
    synthetic_vs_real: dict[str, float]
    entropy_means: dict[str, float]


@dataclass(frozen=True)
class MetricReport:
    """Per-group metric series for imitation and synthetic populations."""

    groups: tuple[GroupResult, ...]
    notes: tuple[str, ...] = (PERCEPTUAL_NOTE,)

    def series(self, metric: str, population: str) -> list[float]:
        """Per-group values of one metric for 'imitation' or 'synthetic'."""
        if metric == "en":
            return [g.entropy_means[population] for g in self.groups]
        key = f"{population}_vs_real"
        return [getattr(g, key)[metric] for g in self.groups]

    def to_document(self) -> dict:
        return {
            "schema_version": 1,
            "notes": list(self.notes),
            "groups": [
                {
                    "group": g.group,
                    "size": g.size,
                    "imitation_vs_real": dict(g.imitation_vs_real),
                    "synthetic_vs_real": dict(g.synthetic_vs_real),
                    "entropy_means": dict(g.entropy_means),
                }
                for g in self.groups
            ],
        }

    def to_json(self) -> str:
        def default(x):
            if isinstance(x, float) and math.isinf(x):
                return "inf" if x > 0 else "-inf"
            raise TypeError(type(x).__name__)

        return json.dumps(self.to_document(), indent=2, sort_keys=True, default=default)


def _mean_pairwise(fn, candidates, reals) -> float:
    vals = [fn(c, r) for c in candidates for r in reals]
    finite = [v for v in vals if not math.isinf(v)]
    if not finite:
        return math.inf
    # +inf pairs (identical images under PSNR) are kept out of the mean but
    # force the group mean to +inf only when every pair is identical
    return sum(vals) / len(vals) if len(finite) == len(vals) else sum(finite) / len(finite)


def group_protocol_report(real, imitation, synthetic, groups: int = 10) -> MetricReport:
    """Incremental group evaluation of two candidate populations.

    Group g (1-based) uses the first 2g samples of each population. For
    each pairwise metric the group value is the mean over all cross pairs
    (candidate sample, real sample); entropy is averaged per population.

    Parameters
    ----------
    real, imitation, synthetic : sequences of rasters
      Each at least 2 * groups long. imitation[i] and synthetic[i] must
      correspond (the synthetic set is the translated imitation set).
    groups : int
      Number of groups G; group sizes are 2, 4, ..., 2G.

    Returns
    -------
    MetricReport
    """
    if groups < 1:
        raise MetricError("need at least one group")
    need = 2 * groups
    for name, pop in (("real", real), ("imitation", imitation), ("synthetic", synthetic)):
        if len(pop) < need:
            raise MetricError(f"population {name!r} has {len(pop)} samples, needs {need}")
    if len(imitation) != len(synthetic):
        raise MetricError("imitation and synthetic populations must correspond 1:1")

    gray = {
        "real": [luma(x) for x in real[:need]],
        "imitation": [luma(x) for x in imitation[:need]],
        "synthetic": [luma(x) for x in synthetic[:need]],
    }

    results = []
    for g in range(1, groups + 1):
        size = 2 * g
        reals = gray["real"][:size]
        row = {}
        for pop in ("imitation", "synthetic"):
            cands = gray[pop][:size]
            row[pop] = {
                name: _mean_pairwise(fn, cands, reals)
                for name, (fn, _) in PAIRWISE_METRICS.items()
            }
        ent = {
            pop: sum(entropy(x) for x in gray[pop][:size]) / size
            for pop in ("real", "imitation", "synthetic")
        }
        results.append(
            GroupResult(
                group=g,
                size=size,
                imitation_vs_real=row["imitation"],
                synthetic_vs_real=row["synthetic"],
                entropy_means=ent,
            )
        )
    return MetricReport(groups=tuple(results))


def compare_populations(report: MetricReport) -> dict[str, int]:
    """Count, per metric, the groups where synthetic beats imitation.

    "Beats" respects each metric's direction (higher SSIM/PSNR/MI better,
    lower NRMSE/PL better; EN closer to the real population's EN better).
    """
    wins = {name: 0 for name in METRIC_NAMES}
    for g in report.groups:
        for name, (_, higher_better) in PAIRWISE_METRICS.items():
            imit = g.imitation_vs_real[name]
            synt = g.synthetic_vs_real[name]
            if higher_better:
                wins[name] += int(synt > imit)
            else:
                wins[name] += int(synt < imit)
        real_en = g.entropy_means["real"]
        d_imit = abs(g.entropy_means["imitation"] - real_en)
        d_synt = abs(g.entropy_means["synthetic"] - real_en)
        wins["en"] += int(d_synt < d_imit)
    return wins
