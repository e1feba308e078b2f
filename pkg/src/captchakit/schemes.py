"""CAPTCHA scheme configurations: parsing, validation, and bundled presets.

A scheme describes one CAPTCHA style as a set of anti-recognition
mechanisms (rotation, overlap, distortion, noise arcs, ...) plus the
numeric ranges each mechanism samples from. Configs are immutable and
serialize to a versioned JSON document (``schema_version`` 1).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources

SCHEMA_VERSION = 1

ARC_KINDS = ("line", "sine", "bezier")
BACKGROUND_KINDS = ("noise-dots", "texture", "color-blocks")
TWO_LAYER_MODES = ("alternate", "split")

#: Font names bundled with the package, usable directly in ``fonts``.
BUNDLED_FONTS = (
    "DejaVuSans.ttf",
    "DejaVuSans-Bold.ttf",
    "DejaVuSerif.ttf",
    "DejaVuSerif-Bold.ttf",
    "DejaVuSansMono.ttf",
    "DejaVuSansMono-Bold.ttf",
)

DIGITS_UPPER = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ"
DIGITS_LOWER = "0123456789abcdefghijklmnopqrstuvwxyz"


class SchemeError(ValueError):
    """Raised for a malformed or semantically invalid scheme document."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class ArcSpec:
    """One family of interference curves drawn over the final image."""

    kind: str = "sine"
    count_range: tuple[int, int] = (1, 1)
    amplitude_range: tuple[float, float] = (3.0, 8.0)
    omega_range: tuple[float, float] = (0.03, 0.08)
    phase_range: tuple[float, float] = (0.0, 2.0 * math.pi)
    offset_range: tuple[float, float] = (10.0, 30.0)
    stroke_width: float = 2.0
    color: str | tuple[int, int, int] = "font"


@dataclass(frozen=True)
class DistortionSpec:
    """Sine-mesh warp of the composed glyph layer."""

    amplitude: float = 3.0
    period: float = 40.0
    phase: str | float = "random"  # "random" = uniform [0, 2pi) per sample


@dataclass(frozen=True)
class BackgroundSpec:
    """Background interference painted behind the glyphs."""

    kind: str = "noise-dots"
    density: float = 0.05


@dataclass(frozen=True)
class SchemeConfig:
    """Full parameterization of one CAPTCHA scheme's security mechanisms.

    Immutable after construction; safe to share across threads. Excluded
    characters are applied when text is sampled, never by mutating
    ``charset``, so label indices stay stable across related schemes.
    """

    scheme_id: str = "unnamed"
    image_size: tuple[int, int] = (120, 48)
    charset: str = DIGITS_UPPER
    excluded_chars: frozenset[str] = frozenset()
    length_range: tuple[int, int] = (4, 4)
    fonts: tuple[str, ...] = ("DejaVuSans.ttf",)
    font_colors: tuple[tuple[int, int, int], ...] = ((0, 0, 0),)
    hollow: bool = False
    rotation_range_deg: tuple[float, float] = (0.0, 0.0)
    char_gap_range_px: tuple[float, float] = (0.0, 0.0)
    distortion: DistortionSpec | None = None
    noise_arcs: tuple[ArcSpec, ...] = ()
    background: BackgroundSpec | None = None
    two_layer: bool = False
    two_layer_mode: str = "alternate"
    multi_font_per_image: bool = False

    def effective_charset(self) -> str:
        """Characters actually sampled: charset minus exclusions, in charset order."""
        return "".join(c for c in self.charset if c not in self.excluded_chars)

    def mechanism_flags(self) -> dict[str, bool]:
        """On/off state of the eight standard anti-recognition mechanisms."""
        return {
            "rotation": self.rotation_range_deg != (0.0, 0.0),
            "overlapping": self.char_gap_range_px[0] < 0,
            "distortion": self.distortion is not None,
            "multi_fonts": self.multi_font_per_image and len(self.fonts) > 1,
            "noise_arc": len(self.noise_arcs) > 0,
            "variable_length": self.length_range[0] != self.length_range[1],
            "background": self.background is not None,
            "two_layer": self.two_layer,
        }

    def to_document(self) -> dict:
        """Serialize to the versioned plain-JSON document form."""
        doc: dict = {
            "schema_version": SCHEMA_VERSION,
            "scheme_id": self.scheme_id,
            "image_size": list(self.image_size),
            "charset": self.charset,
            "excluded_chars": sorted(self.excluded_chars),
            "length_range": list(self.length_range),
            "fonts": list(self.fonts),
            "font_colors": [list(c) for c in self.font_colors],
            "hollow": self.hollow,
            "rotation_range_deg": list(self.rotation_range_deg),
            "char_gap_range_px": list(self.char_gap_range_px),
            "multi_font_per_image": self.multi_font_per_image,
        }
        if self.distortion is not None:
            doc["distortion"] = {
                "amplitude": self.distortion.amplitude,
                "period": self.distortion.period,
                "phase": self.distortion.phase,
            }
        if self.noise_arcs:
            doc["noise_arcs"] = [
                {
                    "kind": a.kind,
                    "count_range": list(a.count_range),
                    "amplitude_range": list(a.amplitude_range),
                    "omega_range": list(a.omega_range),
                    "phase_range": list(a.phase_range),
                    "offset_range": list(a.offset_range),
                    "stroke_width": a.stroke_width,
                    "color": list(a.color) if isinstance(a.color, tuple) else a.color,
                }
                for a in self.noise_arcs
            ]
        if self.background is not None:
            doc["background"] = {
                "kind": self.background.kind,
                "density": self.background.density,
            }
        if self.two_layer:
            doc["two_layer"] = {"mode": self.two_layer_mode}
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_document(), indent=2, sort_keys=True)

    def digest(self) -> str:
        """SHA-256 over the canonical document; identifies the config exactly."""
        canon = json.dumps(self.to_document(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _want(doc: dict, key: str, types, default, *, required: bool = False):
    if key not in doc:
        if required:
            raise SchemeError(key, "required field is missing")
        return default
    value = doc[key]
    if not isinstance(value, types):
        raise SchemeError(key, f"expected {types}, got {type(value).__name__}")
    return value


def _pair(doc: dict, key: str, default, *, numeric=(int, float)) -> tuple:
    raw = _want(doc, key, (list, tuple), None)
    if raw is None:
        return default
    if len(raw) != 2 or not all(isinstance(v, numeric) for v in raw):
        raise SchemeError(key, "expected a 2-element numeric array")
    return (raw[0], raw[1])


def _color(raw, key: str) -> tuple[int, int, int]:
    if not isinstance(raw, (list, tuple)) or len(raw) != 3:
        raise SchemeError(key, "expected a 3-element RGB array")
    if not all(isinstance(v, int) and 0 <= v <= 255 for v in raw):
        raise SchemeError(key, "every RGB channel must be an integer in [0, 255]")
    return (raw[0], raw[1], raw[2])


_KNOWN_FIELDS = frozenset(
    {
        "schema_version",
        "scheme_id",
        "image_size",
        "charset",
        "excluded_chars",
        "length_range",
        "fonts",
        "font_colors",
        "hollow",
        "rotation_range_deg",
        "char_gap_range_px",
        "distortion",
        "noise_arcs",
        "background",
        "two_layer",
        "multi_font_per_image",
    }
)


def parse_scheme_config(document: dict | str) -> SchemeConfig:
    """Parse and validate a scheme document (JSON text or parsed object).

    Missing mechanism fields default to off. Raises :class:`SchemeError`
    naming the offending field on schema or semantic violations.
    """
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as e:
            raise SchemeError("document", f"not valid JSON: {e}") from e
    if not isinstance(document, dict):
        raise SchemeError("document", "top level must be an object")

    version = document.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SchemeError("schema_version", f"unsupported version {version!r}")

    unknown = sorted(set(document) - _KNOWN_FIELDS)
    if unknown:
        raise SchemeError(unknown[0], "unknown field")

    charset = _want(document, "charset", str, None, required=True)
    fonts_raw = _want(document, "fonts", (list, tuple), None, required=True)
    if not all(isinstance(f, str) for f in fonts_raw):
        raise SchemeError("fonts", "every entry must be a string")

    excl_raw = _want(document, "excluded_chars", (list, tuple, str), ())
    excluded = frozenset(excl_raw)
    if not all(isinstance(c, str) and len(c) == 1 for c in excluded):
        raise SchemeError("excluded_chars", "entries must be single characters")

    colors_raw = _want(document, "font_colors", (list, tuple), [[0, 0, 0]])
    font_colors = tuple(_color(c, "font_colors") for c in colors_raw)

    size = _pair(document, "image_size", (120, 48), numeric=(int,))

    distortion = None
    if document.get("distortion") not in (None, False, "off"):
        d = document["distortion"]
        if not isinstance(d, dict):
            raise SchemeError("distortion", "expected an object or absence")
        phase = d.get("phase", "random")
        if not (phase == "random" or isinstance(phase, (int, float))):
            raise SchemeError("distortion", "phase must be a number or 'random'")
        distortion = DistortionSpec(
            amplitude=float(_want(d, "amplitude", (int, float), 3.0)),
            period=float(_want(d, "period", (int, float), 40.0)),
            phase=phase,
        )

    arcs = []
    for i, a in enumerate(document.get("noise_arcs") or ()):
        if not isinstance(a, dict):
            raise SchemeError("noise_arcs", f"entry {i} must be an object")
        kind = _want(a, "kind", str, "sine")
        if kind not in ARC_KINDS:
            raise SchemeError("noise_arcs", f"entry {i}: unknown kind {kind!r}")
        color = a.get("color", "font")
        if isinstance(color, (list, tuple)):
            color = _color(color, "noise_arcs")
        elif color not in ("font", "random"):
            raise SchemeError("noise_arcs", f"entry {i}: bad color rule {color!r}")
        arcs.append(
            ArcSpec(
                kind=kind,
                count_range=tuple(int(v) for v in _pair(a, "count_range", (1, 1))),
                amplitude_range=tuple(float(v) for v in _pair(a, "amplitude_range", (3.0, 8.0))),
                omega_range=tuple(float(v) for v in _pair(a, "omega_range", (0.03, 0.08))),
                phase_range=tuple(float(v) for v in _pair(a, "phase_range", (0.0, 2.0 * math.pi))),
                offset_range=tuple(float(v) for v in _pair(a, "offset_range", (size[1] * 0.25, size[1] * 0.75))),
                stroke_width=float(_want(a, "stroke_width", (int, float), 2.0)),
                color=color,
            )
        )

    background = None
    if document.get("background") not in (None, False, "off"):
        b = document["background"]
        if not isinstance(b, dict):
            raise SchemeError("background", "expected an object or absence")
        kind = _want(b, "kind", str, "noise-dots")
        if kind not in BACKGROUND_KINDS:
            raise SchemeError("background", f"unknown kind {kind!r}")
        background = BackgroundSpec(kind=kind, density=float(_want(b, "density", (int, float), 0.05)))

    two_layer_raw = document.get("two_layer", False)
    if isinstance(two_layer_raw, bool):
        two_layer, mode = two_layer_raw, "alternate"
    elif isinstance(two_layer_raw, dict):
        mode = two_layer_raw.get("mode", "alternate")
        if mode not in TWO_LAYER_MODES:
            raise SchemeError("two_layer", f"unknown mode {mode!r}")
        two_layer = True
    else:
        raise SchemeError("two_layer", "expected boolean or object")

    length_range = _pair(document, "length_range", (4, 4), numeric=(int,))

    cfg = SchemeConfig(
        scheme_id=_want(document, "scheme_id", str, "unnamed"),
        image_size=(int(size[0]), int(size[1])),
        charset=charset,
        excluded_chars=excluded,
        length_range=(int(length_range[0]), int(length_range[1])),
        fonts=tuple(fonts_raw),
        font_colors=font_colors,
        hollow=bool(_want(document, "hollow", bool, False)),
        rotation_range_deg=tuple(float(v) for v in _pair(document, "rotation_range_deg", (0.0, 0.0))),
        char_gap_range_px=tuple(float(v) for v in _pair(document, "char_gap_range_px", (0.0, 0.0))),
        distortion=distortion,
        noise_arcs=tuple(arcs),
        background=background,
        two_layer=two_layer,
        two_layer_mode=mode,
        multi_font_per_image=bool(_want(document, "multi_font_per_image", bool, False)),
    )

    violations = validate_scheme(cfg)
    if violations:
        field_name, _, rest = violations[0].partition(": ")
        raise SchemeError(field_name, rest or violations[0])
    return cfg


def validate_scheme(cfg: SchemeConfig) -> list[str]:
    """Check every config invariant; returns violations (empty when valid)."""
    out: list[str] = []
    if not cfg.charset:
        out.append("charset: must be non-empty")
    if len(set(cfg.charset)) != len(cfg.charset):
        out.append("charset: contains duplicate characters")
    if not cfg.effective_charset():
        out.append("excluded_chars: effective charset is empty after exclusion")
    lo, hi = cfg.length_range
    if lo < 1:
        out.append("length_range: minimum length must be >= 1")
    if lo > hi:
        out.append("length_range: min exceeds max")
    if not cfg.fonts:
        out.append("fonts: at least one font is required")
    for f in cfg.fonts:
        if not os.path.isfile(font_path(f)):
            out.append(f"fonts: font not found: {f}")
    if not cfg.font_colors:
        out.append("font_colors: at least one color is required")
    for c in cfg.font_colors:
        if not all(0 <= v <= 255 for v in c):
            out.append(f"font_colors: channel out of [0, 255] in {c}")
    if cfg.rotation_range_deg[0] > cfg.rotation_range_deg[1]:
        out.append("rotation_range_deg: min exceeds max")
    if cfg.char_gap_range_px[0] > cfg.char_gap_range_px[1]:
        out.append("char_gap_range_px: min exceeds max")
    if cfg.image_size[0] < 8 or cfg.image_size[1] < 8:
        out.append("image_size: image too small to render")
    for i, a in enumerate(cfg.noise_arcs):
        for name in ("count_range", "amplitude_range", "omega_range", "phase_range", "offset_range"):
            r = getattr(a, name)
            if r[0] > r[1]:
                out.append(f"noise_arcs: entry {i} {name} min exceeds max")
        if a.stroke_width <= 0:
            out.append(f"noise_arcs: entry {i} stroke_width must be positive")
    if cfg.distortion is not None and cfg.distortion.period <= 0:
        out.append("distortion: period must be positive")
    if cfg.background is not None and cfg.background.density < 0:
        out.append("background: density must be nonnegative")
    if cfg.two_layer and cfg.two_layer_mode not in TWO_LAYER_MODES:
        out.append("two_layer: unknown mode")
    return out


def font_path(name: str) -> str:
    """Resolve a font identifier: bundled name first, else a filesystem path."""
    if name in BUNDLED_FONTS:
        return str(resources.files("captchakit").joinpath("fonts", name))
    return name


# The eight-mechanism on/off plan of the 12 bundled presets. Numeric ranges
# are toolkit defaults chosen for moderate, legible transforms; the preset
# catalog fixes only which mechanisms are enabled.
_PRESET_FLAGS: dict[int, tuple[str, ...]] = {
    1: ("rotation",),
    2: ("overlapping",),
    3: ("distortion",),
    4: ("multi_fonts",),
    5: ("noise_arc",),
    6: ("variable_length",),
    7: ("background",),
    8: ("two_layer",),
    9: ("overlapping", "multi_fonts", "two_layer"),
    10: ("overlapping", "distortion", "multi_fonts", "variable_length", "two_layer"),
    11: ("overlapping", "distortion", "multi_fonts", "variable_length", "background", "two_layer"),
    12: (
        "rotation",
        "overlapping",
        "distortion",
        "multi_fonts",
        "noise_arc",
        "variable_length",
        "background",
        "two_layer",
    ),
}

_PRESET_MULTI_FONTS = (
    "DejaVuSans.ttf",
    "DejaVuSans-Bold.ttf",
    "DejaVuSerif-Bold.ttf",
    "DejaVuSansMono-Bold.ttf",
)


def preset(no: int) -> SchemeConfig:
    """Bundled mechanism-combination preset, 1..12.

    Presets 1-8 enable exactly one mechanism; 9-12 are increasingly
    aggressive combinations, 12 enabling all eight.
    """
    if not isinstance(no, int) or not 1 <= no <= 12:
        raise SchemeError("preset", f"preset number must be in [1, 12], got {no!r}")
    on = set(_PRESET_FLAGS[no])
    height = 48
    return SchemeConfig(
        scheme_id=f"preset-{no:02d}",
        image_size=(120, height),
        charset=DIGITS_UPPER,
        excluded_chars=frozenset(),
        length_range=(4, 6) if "variable_length" in on else (6, 6),
        fonts=_PRESET_MULTI_FONTS if "multi_fonts" in on else ("DejaVuSans.ttf",),
        font_colors=((40, 40, 40), (30, 60, 160), (160, 40, 40)),
        hollow=False,
        rotation_range_deg=(-30.0, 30.0) if "rotation" in on else (0.0, 0.0),
        char_gap_range_px=(-6.0, -1.0) if "overlapping" in on else (2.0, 2.0),
        distortion=DistortionSpec(amplitude=3.0, period=40.0, phase="random") if "distortion" in on else None,
        noise_arcs=(
            ArcSpec(
                kind="sine",
                count_range=(1, 2),
                amplitude_range=(3.0, 8.0),
                omega_range=(0.03, 0.08),
                phase_range=(0.0, 2.0 * math.pi),
                offset_range=(height / 2 - 10.0, height / 2 + 10.0),
                stroke_width=2.0,
                color="font",
            ),
        )
        if "noise_arc" in on
        else (),
        background=BackgroundSpec(kind="noise-dots", density=0.05) if "background" in on else None,
        two_layer="two_layer" in on,
        multi_font_per_image="multi_fonts" in on,
    )


def weibo() -> SchemeConfig:
    """Bundled imitation of the Weibo scheme: hollow colored glyphs, slight
    rotation, tight gaps, one sine interference line, and a reduced alphabet
    that drops easily-confused characters."""
    h = 48
    return SchemeConfig(
        scheme_id="weibo",
        image_size=(120, h),
        charset=DIGITS_LOWER,
        excluded_chars=frozenset("019ijlot"),
        length_range=(4, 4),
        fonts=("DejaVuSans-Bold.ttf", "DejaVuSerif-Bold.ttf"),
        font_colors=((101, 101, 254), (254, 101, 101)),
        hollow=True,
        rotation_range_deg=(-10.0, 10.0),
        char_gap_range_px=(0.0, 2.0),
        distortion=None,
        noise_arcs=(
            ArcSpec(
                kind="sine",
                count_range=(1, 1),
                amplitude_range=(4.0, 10.0),
                omega_range=(0.02, 0.06),
                phase_range=(0.0, 2.0 * math.pi),
                offset_range=(h / 2 - 8.0, h / 2 + 8.0),
                stroke_width=2.0,
                color="font",
            ),
        ),
        background=None,
        two_layer=False,
        multi_font_per_image=False,
    )


def resolve_scheme(ref: str) -> SchemeConfig:
    """Resolve a scheme reference: a JSON file path, ``weibo``, or ``preset-N``."""
    import os

    if ref == "weibo":
        return weibo()
    if ref.startswith("preset-") or ref.startswith("preset"):
        tail = ref.split("-")[-1] if "-" in ref else ref[len("preset"):]
        try:
            return preset(int(tail))
        except ValueError:
            raise SchemeError("scheme", f"bad preset reference {ref!r}") from None
    if os.path.exists(ref):
        with open(ref, "r", encoding="utf-8") as fh:
            return parse_scheme_config(fh.read())
    raise SchemeError("scheme", f"no such scheme file or builtin: {ref!r}")
