"""Deterministic CAPTCHA rendering.

Rendering is a pure function of (config, seed, text). The pipeline order
is fixed: sample/accept text -> rasterize glyphs (hollow = outline stroke)
-> per-character rotation -> placement with sampled gaps (negative gaps
overlap) -> two-layer band assignment -> sine-mesh distortion of the glyph
layer -> background -> noise arcs atop -> composite.

Every sampled value is recorded in render_meta, and re-rendering from that
record (bypassing all sampling) reproduces the image byte for byte.
"""

from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .schemes import ArcSpec, SchemeConfig, font_path

#: Outline stroke width used for hollow glyph rendering.
HOLLOW_STROKE_PX = 2
#: Padding around each glyph raster, px per side.
GLYPH_PAD_PX = 1
#: Font size as a fraction of image height.
FONT_HEIGHT_FRACTION = 0.62
TWO_LAYER_FONT_FRACTION = 0.42
#: Rough ink-width / font-size ratio used to budget the base font size.
GLYPH_WIDTH_FACTOR = 0.72
#: Vertical band centers (fraction of height) for the two-layer layout.
TWO_LAYER_BAND_CENTERS = (0.32, 0.68)

PROVENANCE_IMITATION = "imitation"


class RenderError(RuntimeError):
    """Raised when a sample cannot be rendered under its config."""


@dataclass(frozen=True)
class GlyphBox:
    """A rasterized, rotated glyph awaiting placement."""

    character: str
    font: str
    mask: np.ndarray  # uint8 alpha, HxW
    anchor: tuple[int, int]  # top-left (x, y) after placement
    rotation_deg: float
    layer: int


@dataclass(frozen=True)
class LabeledSample:
    """A rendered CAPTCHA with its label and full render provenance."""

    image: np.ndarray  # HxWx3 uint8
    label: str
    provenance: str
    render_meta: dict
    seed: int

    def to_png_bytes(self) -> bytes:
        buf = io.BytesIO()
        # compress_level pinned: byte-identical output for a given Pillow,
        # and light compression keeps bulk generation encode-bound no more
        Image.fromarray(self.image, mode="RGB").save(buf, format="PNG", optimize=False,
                                                     compress_level=1)
        return buf.getvalue()


def _config_words(cfg: SchemeConfig) -> list[int]:
    digest = bytes.fromhex(cfg.digest())
    return [int.from_bytes(digest[i : i + 4], "big") for i in range(0, 16, 4)]


def rng_for_sample(cfg: SchemeConfig, seed: int):
    """Per-sample generator; mixes the config digest into the seed material
    so that any config change (one mechanism toggled) reshuffles every
    sampled value."""
    return np.random.default_rng(
        np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *_config_words(cfg)])
    )


def derive_seed(master_seed: int, index: int) -> int:
    """Stable per-sample seed: first 8 bytes of SHA-256(master ++ index)."""
    material = int(master_seed).to_bytes(8, "big", signed=False) + int(index).to_bytes(
        8, "big", signed=False
    )
    return int.from_bytes(hashlib.sha256(material).digest()[:8], "big")


def sample_text(cfg: SchemeConfig, rng) -> str:
    """Uniform random label: length uniform over length_range, characters
    i.i.d. uniform over the effective charset."""
    alphabet = cfg.effective_charset()
    if not alphabet:
        raise RenderError("effective charset is empty")
    lo, hi = cfg.length_range
    length = int(rng.integers(lo, hi + 1))
    idx = rng.integers(0, len(alphabet), size=length)
    return "".join(alphabet[int(i)] for i in idx)


@lru_cache(maxsize=64)
def _load_font(path: str, size: int) -> ImageFont.FreeTypeFont:
    try:
        return ImageFont.truetype(path, size)
    except OSError as e:
        raise RenderError(f"font resource unavailable: {path}") from e


_GLYPH_CACHE: dict[tuple, np.ndarray] = {}


def _glyph_mask(font_name: str, size: int, ch: str, hollow: bool) -> np.ndarray:
    """Alpha mask (uint8) of one glyph; hollow renders outline only."""
    key = (font_name, size, ch, hollow)
    cached = _GLYPH_CACHE.get(key)
    if cached is not None:
        return cached
    font = _load_font(font_path(font_name), size)
    stroke = HOLLOW_STROKE_PX if hollow else 0
    x0, y0, x1, y1 = font.getbbox(ch, stroke_width=stroke)
    pad = GLYPH_PAD_PX
    w = (x1 - x0) + 2 * pad
    h = (y1 - y0) + 2 * pad
    if w <= 2 * pad or h <= 2 * pad:
        # whitespace-like glyph: give it a thin empty box
        w, h = max(w, size // 2), max(h, size)
    canvas = Image.new("L", (w, h), 0)
    draw = ImageDraw.Draw(canvas)
    if hollow:
        draw.text((pad - x0, pad - y0), ch, font=font, fill=0, stroke_width=stroke, stroke_fill=255)
    else:
        draw.text((pad - x0, pad - y0), ch, font=font, fill=255)
    mask = np.asarray(canvas, dtype=np.uint8).copy()
    mask.setflags(write=False)  # shared via cache: nobody may scribble on it
    _GLYPH_CACHE[key] = mask
    return mask


def _rotate_mask(mask: np.ndarray, angle_deg: float) -> np.ndarray:
    if angle_deg == 0.0:
        return mask
    img = Image.fromarray(mask, mode="L")
    out = img.rotate(angle_deg, resample=Image.BILINEAR, expand=True, fillcolor=0)
    return np.asarray(out, dtype=np.uint8)


@lru_cache(maxsize=8192)
def _rotated_glyph(font_name: str, size: int, ch: str, hollow: bool, angle_deg: float) -> np.ndarray:
    """Rotated glyph raster; cached so re-renders skip the resample."""
    out = _rotate_mask(_glyph_mask(font_name, size, ch, hollow), angle_deg)
    if out.flags.writeable:
        out.setflags(write=False)
    return out


def compose_two_layer(glyphs: list[GlyphBox], cfg: SchemeConfig) -> list[GlyphBox]:
    """Assign glyphs to the two vertical bands.

    alternate mode gives layers 0,1,0,1,...; split mode puts the first
    half (rounded up) in band 0 and the rest in band 1. Horizontal order
    is untouched. With two_layer off, all layers are 0.
    """
    if not cfg.two_layer:
        return [GlyphBox(g.character, g.font, g.mask, g.anchor, g.rotation_deg, 0) for g in glyphs]
    if cfg.image_size[1] < 16:
        raise RenderError("image height too small for two bands")
    n = len(glyphs)
    if cfg.two_layer_mode == "split":
        cut = (n + 1) // 2
        layers = [0 if i < cut else 1 for i in range(n)]
    else:
        layers = [i % 2 for i in range(n)]
    return [
        GlyphBox(g.character, g.font, g.mask, g.anchor, g.rotation_deg, layer)
        for g, layer in zip(glyphs, layers)
    ]


def apply_distortion(image: np.ndarray, amplitude: float, period: float, phase: float) -> np.ndarray:
    """Horizontal sine-mesh warp.

    Destination row y of column x samples source row
    y - amplitude*sin(2*pi*x/period + phase), with bilinear interpolation
    and edge clamping. Works on HxW or HxWxC float/uint8 arrays; amplitude
    0 returns the input unchanged.
    """
    if period <= 0:
        raise ValueError("period must be positive")
    if amplitude == 0.0:
        return image
    arr = np.asarray(image)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[:, :, None]
    h, w, _ = arr.shape
    x = np.arange(w, dtype=np.float64)
    shift = amplitude * np.sin(2.0 * math.pi * x / period + phase)
    src_y = np.arange(h, dtype=np.float64)[:, None] - shift[None, :]
    y0 = np.floor(src_y)
    frac = (src_y - y0)[:, :, None]
    y0i = np.clip(y0.astype(np.intp), 0, h - 1)
    y1i = np.clip(y0i + 1, 0, h - 1)
    cols = np.arange(w, dtype=np.intp)[None, :]
    if arr.dtype == np.float32:
        work, frac = arr, frac.astype(np.float32)
    else:
        work = arr.astype(np.float64)
    out = work[y0i, cols] * (1.0 - frac) + work[y1i, cols] * frac
    if arr.dtype == np.uint8:
        out = np.rint(out).clip(0, 255).astype(np.uint8)
    else:
        out = out.astype(arr.dtype)
    return out[:, :, 0] if squeeze else out


def _sine_coverage(shape: tuple[int, int], amplitude, omega, phase, offset, width) -> np.ndarray:
    h, w = shape
    x = np.arange(w, dtype=np.float64)
    center = amplitude * np.sin(omega * x + phase) + offset
    dy = np.abs(np.arange(h, dtype=np.float64)[:, None] - center[None, :])
    return np.clip(width / 2.0 + 0.5 - dy, 0.0, 1.0)


def _line_coverage(shape: tuple[int, int], x0, y0, x1, y1, width) -> np.ndarray:
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = x1 - x0, y1 - y0
    seg2 = dx * dx + dy * dy
    if seg2 == 0:
        dist = np.hypot(xx - x0, yy - y0)
    else:
        t = np.clip(((xx - x0) * dx + (yy - y0) * dy) / seg2, 0.0, 1.0)
        dist = np.hypot(xx - (x0 + t * dx), yy - (y0 + t * dy))
    return np.clip(width / 2.0 + 0.5 - dist, 0.0, 1.0)


def _bezier_coverage(shape: tuple[int, int], points, width) -> np.ndarray:
    h, w = shape
    (ax, ay), (bx, by), (cx, cy), (dx, dy) = points
    t = np.linspace(0.0, 1.0, 6 * w)
    mt = 1.0 - t
    px = mt**3 * ax + 3 * mt**2 * t * bx + 3 * mt * t**2 * cx + t**3 * dx
    py = mt**3 * ay + 3 * mt**2 * t * by + 3 * mt * t**2 * cy + t**3 * dy
    cov = np.zeros((h, w), dtype=np.float64)
    half = int(math.ceil(width / 2.0 + 1.0))
    for sx, sy in zip(px, py):
        cx0, cy0 = int(math.floor(sx)), int(math.floor(sy))
        for yy in range(max(0, cy0 - half), min(h, cy0 + half + 1)):
            for xx in range(max(0, cx0 - half), min(w, cx0 + half + 1)):
                d = math.hypot(xx - sx, yy - sy)
                a = width / 2.0 + 0.5 - d
                if a > cov[yy, xx]:
                    cov[yy, xx] = min(a, 1.0)
    return cov


def arc_coverage(shape: tuple[int, int], params: dict) -> np.ndarray:
    """Anti-aliased coverage map (0..1 per pixel) of one interference arc.

    ``params`` is the resolved render_meta record for the arc: kind,
    stroke width, and the curve's own fields (sine: amplitude, omega,
    phase, offset; line: endpoints; bezier: four control points).
    """
    kind = params["kind"]
    width = params["width"]
    if kind == "sine":
        return _sine_coverage(shape, params["amplitude"], params["omega"], params["phase"], params["offset"], width)
    if kind == "line":
        return _line_coverage(shape, params["x0"], params["y0"], params["x1"], params["y1"], width)
    if kind == "bezier":
        return _bezier_coverage(shape, params["points"], width)
    raise ValueError(f"unknown arc kind {kind!r}")


def draw_noise_arc(image: np.ndarray, params: dict, rng=None) -> np.ndarray:
    """Blend one interference arc over a copy of ``image``.

    All pixels off the curve are unchanged; on-curve pixels are
    alpha-blended with the arc color by anti-aliased coverage.
    """
    out = np.asarray(image, dtype=np.float64).copy()
    cov = arc_coverage(out.shape[:2], params)[:, :, None]
    color = np.asarray(params["color"], dtype=np.float64)[None, None, :]
    blended = out * (1.0 - cov) + color * cov
    if np.asarray(image).dtype == np.uint8:
        return np.rint(blended).clip(0, 255).astype(np.uint8)
    return blended


def _sample_arc_params(spec: ArcSpec, cfg: SchemeConfig, color: tuple, rng) -> list[dict]:
    w, h = cfg.image_size
    lo, hi = spec.count_range
    count = int(rng.integers(lo, hi + 1)) if lo != hi else lo
    arcs = []
    for _ in range(count):
        if isinstance(spec.color, tuple):
            arc_color = list(spec.color)
        elif spec.color == "font":
            arc_color = list(color)
        else:  # "random"
            arc_color = [int(v) for v in rng.integers(0, 201, size=3)]
        rec: dict = {"kind": spec.kind, "width": spec.stroke_width, "color": arc_color}
        if spec.kind == "sine":
            rec["amplitude"] = float(rng.uniform(*spec.amplitude_range))
            rec["omega"] = float(rng.uniform(*spec.omega_range))
            rec["phase"] = float(rng.uniform(*spec.phase_range))
            rec["offset"] = float(rng.uniform(*spec.offset_range))
        elif spec.kind == "line":
            rec["x0"] = 0.0
            rec["x1"] = float(w - 1)
            rec["y0"] = float(rng.uniform(0.15 * h, 0.85 * h))
            rec["y1"] = float(rng.uniform(0.15 * h, 0.85 * h))
        else:  # bezier
            xs = [0.0, float(rng.uniform(0.2 * w, 0.5 * w)), float(rng.uniform(0.5 * w, 0.8 * w)), float(w - 1)]
            ys = [float(rng.uniform(0.1 * h, 0.9 * h)) for _ in range(4)]
            rec["points"] = [[x, y] for x, y in zip(xs, ys)]
        arcs.append(rec)
    return arcs


def _render_background(cfg: SchemeConfig, meta_bg: dict | None) -> np.ndarray:
    w, h = cfg.image_size
    bg = np.full((h, w, 3), 255, dtype=np.float64)
    if meta_bg is None:
        return bg
    rng = np.random.default_rng(meta_bg["seed"])
    kind = meta_bg["kind"]
    density = meta_bg["density"]
    if kind == "noise-dots":
        count = int(round(density * w * h))
        xs = rng.integers(0, w, size=count)
        ys = rng.integers(0, h, size=count)
        colors = rng.integers(0, 256, size=(count, 3))
        bg[ys, xs] = colors
    elif kind == "texture":
        # value noise: coarse random grid, bilinearly upsampled, pale tint
        cells = max(2, int(round(4 + density * 40)))
        grid = rng.uniform(0.0, 1.0, size=(cells, cells, 3))
        gy = np.linspace(0, cells - 1, h)
        gx = np.linspace(0, cells - 1, w)
        y0 = np.floor(gy).astype(np.intp)
        x0 = np.floor(gx).astype(np.intp)
        y1 = np.minimum(y0 + 1, cells - 1)
        x1 = np.minimum(x0 + 1, cells - 1)
        fy = (gy - y0)[:, None, None]
        fx = (gx - x0)[None, :, None]
        v = (
            grid[y0][:, x0] * (1 - fy) * (1 - fx)
            + grid[y1][:, x0] * fy * (1 - fx)
            + grid[y0][:, x1] * (1 - fy) * fx
            + grid[y1][:, x1] * fy * fx
        )
        bg = 200.0 + v * 55.0
    elif kind == "color-blocks":
        blocks = max(1, int(round(density * 60)))
        for _ in range(blocks):
            x0b = int(rng.integers(0, w))
            y0b = int(rng.integers(0, h))
            bw = int(rng.integers(w // 8, max(w // 3, w // 8 + 1)))
            bh = int(rng.integers(h // 6, max(h // 2, h // 6 + 1)))
            color = rng.integers(140, 256, size=3)
            bg[y0b : min(h, y0b + bh), x0b : min(w, x0b + bw)] = color
    else:
        raise RenderError(f"unknown background kind {kind!r}")
    return bg


def _sample_meta(cfg: SchemeConfig, rng, text: str | None) -> dict:
    """Draw every random decision for one sample, in fixed order."""
    if text is None:
        text = sample_text(cfg, rng)
    else:
        _check_text(cfg, text)

    color = cfg.font_colors[int(rng.integers(0, len(cfg.font_colors)))]

    if cfg.multi_font_per_image:
        fonts = [cfg.fonts[int(rng.integers(0, len(cfg.fonts)))] for _ in text]
    elif len(cfg.fonts) > 1:
        chosen = cfg.fonts[int(rng.integers(0, len(cfg.fonts)))]
        fonts = [chosen] * len(text)
    else:
        fonts = [cfg.fonts[0]] * len(text)

    rlo, rhi = cfg.rotation_range_deg
    rotations = [float(rng.uniform(rlo, rhi)) if rlo != rhi else rlo for _ in text]

    glo, ghi = cfg.char_gap_range_px
    gaps = [0.0] + [float(rng.uniform(glo, ghi)) if glo != ghi else glo for _ in text[1:]]

    distortion = None
    if cfg.distortion is not None:
        spec = cfg.distortion
        phase = float(rng.uniform(0.0, 2.0 * math.pi)) if spec.phase == "random" else float(spec.phase)
        distortion = {"amplitude": spec.amplitude, "period": spec.period, "phase": phase}

    background = None
    if cfg.background is not None:
        background = {
            "kind": cfg.background.kind,
            "density": cfg.background.density,
            "seed": int(rng.integers(0, 2**32)),
        }

    arcs = []
    for spec in cfg.noise_arcs:
        arcs.extend(_sample_arc_params(spec, cfg, color, rng))

    w, h = cfg.image_size
    frac = TWO_LAYER_FONT_FRACTION if cfg.two_layer else FONT_HEIGHT_FRACTION
    # budget the base size against the width too: a row of hi_len rotated
    # glyphs must usually fit without triggering the one-shot rescale
    hi_len = cfg.length_range[1]
    gap_mid = (cfg.char_gap_range_px[0] + cfg.char_gap_range_px[1]) / 2.0
    avail = w - 2.0 * GLYPH_PAD_PX * hi_len - gap_mid * max(hi_len - 1, 0)
    theta = math.radians(max(abs(cfg.rotation_range_deg[0]), abs(cfg.rotation_range_deg[1])))
    if theta > 0.0:
        # mean expansion of a rotated box over angles uniform in [-theta, theta]
        mean_cos = math.sin(theta) / theta
        mean_sin = (1.0 - math.cos(theta)) / theta
    else:
        mean_cos, mean_sin = 1.0, 0.0
    per_char = GLYPH_WIDTH_FACTOR * mean_cos + 0.75 * mean_sin
    width_cap = avail / (per_char * max(hi_len, 1))
    base_size = max(8, int(round(min(h * frac, width_cap))))

    meta = {
        "text": text,
        "color": list(color),
        "font_size": base_size,
        "scale": 1.0,
        "chars": [
            {
                "char": ch,
                "font": fonts[i],
                "rotation_deg": rotations[i],
                "gap_before_px": gaps[i],
                "layer": 0,
            }
            for i, ch in enumerate(text)
        ],
        "distortion": distortion,
        "background": background,
        "arcs": arcs,
        "two_layer": {"mode": cfg.two_layer_mode} if cfg.two_layer else None,
    }
    return meta


def _check_text(cfg: SchemeConfig, text: str) -> None:
    alphabet = set(cfg.effective_charset())
    lo, hi = cfg.length_range
    if not (lo <= len(text) <= hi):
        raise RenderError(f"text length {len(text)} outside {cfg.length_range}")
    bad = [c for c in text if c not in alphabet]
    if bad:
        raise RenderError(f"text contains disallowed characters: {bad}")


def _layout(cfg: SchemeConfig, meta: dict) -> list[GlyphBox]:
    """Rasterize, rotate, and place glyphs per the recorded meta."""
    w, h = cfg.image_size
    size = meta["font_size"]

    def build(size_px: int) -> tuple[list[np.ndarray], float]:
        masks = []
        for rec in meta["chars"]:
            masks.append(_rotated_glyph(rec["font"], size_px, rec["char"], cfg.hollow,
                                        rec["rotation_deg"]))
        total = sum(m.shape[1] for m in masks) + sum(
            rec["gap_before_px"] * meta["scale"] for rec in meta["chars"][1:]
        )
        return masks, total

    masks, total = build(size)
    if total > w:
        # rescale once by the overflow ratio; glyph rasters carry fixed
        # padding that does not shrink with the font, and integer bbox /
        # rotate-expand rounding adds up to ~1.5px per glyph, so only the
        # ink and gap share is scaled and an absolute slack is reserved
        n = len(meta["chars"])
        pad_total = 2.0 * GLYPH_PAD_PX * n
        slack = 1.5 * n + 2.0
        scalable = max(total - pad_total, 1.0)
        ratio = min((w - pad_total - slack) / scalable, 0.98)
        new_size = max(6, int(math.floor(size * ratio))) if ratio > 0.0 else 0
        if new_size >= 6:
            meta["font_size"] = new_size
            meta["scale"] = float(meta["scale"] * ratio)
            masks, total = build(new_size)
        if total > w:
            raise RenderError(f"placement overflow: laid-out width {total:.1f} > {w}")

    n = len(meta["chars"])
    if meta["two_layer"] is not None:
        if meta["two_layer"]["mode"] == "split":
            cut = (n + 1) // 2
            layers = [0 if i < cut else 1 for i in range(n)]
        else:
            layers = [i % 2 for i in range(n)]
    else:
        layers = [0] * n
    for rec, layer in zip(meta["chars"], layers):
        rec["layer"] = layer

    band = (
        TWO_LAYER_BAND_CENTERS
        if meta["two_layer"] is not None
        else (0.5, 0.5)
    )
    x = (w - total) / 2.0
    glyphs = []
    for i, rec in enumerate(meta["chars"]):
        mask = masks[i]
        x += rec["gap_before_px"] * meta["scale"] if i > 0 else 0.0
        cy = h * band[rec["layer"]]
        y = int(math.floor(cy - mask.shape[0] / 2.0 + 0.5))
        glyphs.append(
            GlyphBox(
                character=rec["char"],
                font=rec["font"],
                mask=mask,
                anchor=(int(math.floor(x + 0.5)), y),
                rotation_deg=rec["rotation_deg"],
                layer=rec["layer"],
            )
        )
        x += mask.shape[1]
    return glyphs


def _composite(cfg: SchemeConfig, meta: dict, glyphs: list[GlyphBox]) -> np.ndarray:
    w, h = cfg.image_size
    color = np.asarray(meta["color"], dtype=np.float32)

    # premultiplied glyph layer: rgb premultiplied by alpha, plus alpha;
    # float32 is plenty for 8-bit output and halves the composite cost
    layer_rgb = np.zeros((h, w, 3), dtype=np.float32)
    layer_a = np.zeros((h, w), dtype=np.float32)
    for g in glyphs:
        gh, gw = g.mask.shape
        x0, y0 = g.anchor
        ix0, iy0 = max(0, x0), max(0, y0)
        ix1, iy1 = min(w, x0 + gw), min(h, y0 + gh)
        if ix0 >= ix1 or iy0 >= iy1:
            continue
        a = g.mask[iy0 - y0 : iy1 - y0, ix0 - x0 : ix1 - x0].astype(np.float32) / np.float32(255.0)
        region_rgb = layer_rgb[iy0:iy1, ix0:ix1]
        region_a = layer_a[iy0:iy1, ix0:ix1]
        # painter's order: this glyph over what is already there
        region_rgb *= (1.0 - a)[:, :, None]
        region_rgb += color[None, None, :] * a[:, :, None]
        layer_a[iy0:iy1, ix0:ix1] = a + region_a * (1.0 - a)

    if meta["distortion"] is not None:
        d = meta["distortion"]
        stacked = np.dstack([layer_rgb, layer_a])
        stacked = apply_distortion(stacked, d["amplitude"], d["period"], d["phase"])
        layer_rgb, layer_a = stacked[:, :, :3], stacked[:, :, 3]

    bg = _render_background(cfg, meta["background"])
    out = layer_rgb + bg * (1.0 - layer_a)[:, :, None]

    for arc in meta["arcs"]:
        cov = arc_coverage((h, w), arc)[:, :, None]
        arc_color = np.asarray(arc["color"], dtype=np.float64)[None, None, :]
        out = out * (1.0 - cov) + arc_color * cov

    return np.rint(out).clip(0, 255).astype(np.uint8)


def render_captcha(cfg: SchemeConfig, seed: int, text: str | None = None) -> LabeledSample:
    """Render one sample. Deterministic in (cfg, seed, text)."""
    rng = rng_for_sample(cfg, seed)
    meta = _sample_meta(cfg, rng, text)
    glyphs = _layout(cfg, meta)
    image = _composite(cfg, meta, glyphs)
    return LabeledSample(
        image=image,
        label=meta["text"],
        provenance=PROVENANCE_IMITATION,
        render_meta=meta,
        seed=int(seed),
    )


def _copy_meta(meta: dict) -> dict:
    # two-level structure of primitives; deepcopy is ~5x slower here
    out = dict(meta)
    out["color"] = list(meta["color"])
    out["chars"] = [dict(c) for c in meta["chars"]]
    out["distortion"] = dict(meta["distortion"]) if meta["distortion"] else None
    out["background"] = dict(meta["background"]) if meta["background"] else None
    out["two_layer"] = dict(meta["two_layer"]) if meta["two_layer"] else None
    arcs = []
    for arc in meta["arcs"]:
        rec = dict(arc)
        rec["color"] = list(arc["color"])
        if "points" in arc:
            rec["points"] = [list(p) for p in arc["points"]]
        arcs.append(rec)
    out["arcs"] = arcs
    return out


def re_render(cfg: SchemeConfig, meta: dict, seed: int = 0) -> LabeledSample:
    """Re-render from a recorded render_meta, bypassing all sampling.

    Produces an image byte-identical to the original render.
    """
    meta = _copy_meta(meta)
    glyphs = _layout(cfg, meta)
    image = _composite(cfg, meta, glyphs)
    return LabeledSample(
        image=image,
        label=meta["text"],
        provenance=PROVENANCE_IMITATION,
        render_meta=meta,
        seed=int(seed),
    )


def mechanisms_applied(meta: dict) -> dict[str, bool]:
    """Which of the eight mechanisms left a trace in a render_meta record."""
    chars = meta["chars"]
    fonts_used = {c["font"] for c in chars}
    return {
        "rotation": any(c["rotation_deg"] != 0.0 for c in chars),
        "overlapping": any(c["gap_before_px"] < 0 for c in chars[1:]),
        "distortion": meta["distortion"] is not None,
        "multi_fonts": len(fonts_used) > 1,
        "noise_arc": len(meta["arcs"]) > 0,
        "variable_length": True,  # length visible only at population level
        "background": meta["background"] is not None,
        "two_layer": meta["two_layer"] is not None,
    }


def generate_dataset(cfg: SchemeConfig, count: int, master_seed: int, out) -> "object":
    """Render ``count`` samples with per-index derived seeds and persist
    them as a dataset (see the store module for the on-disk layout)."""
    from . import store

    if count < 1:
        raise RenderError("count must be >= 1")
    samples = []
    for i in range(count):
        seed_i = derive_seed(master_seed, i)
        try:
            samples.append(render_captcha(cfg, seed_i))
        except RenderError as e:
            raise RenderError(f"sample {i}: {e}") from e
    return store.write_dataset(
        entries=samples,
        meta={
            "scheme_id": cfg.scheme_id,
            "provenance": PROVENANCE_IMITATION,
            "master_seed": int(master_seed),
            "config_digest": cfg.digest(),
        },
        out=out,
    )
