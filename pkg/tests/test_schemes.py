from __future__ import annotations

import json
from dataclasses import replace

import pytest

from captchakit import schemes
from captchakit.schemes import (
    SchemeError,
    parse_scheme_config,
    preset,
    resolve_scheme,
    validate_scheme,
    weibo,
)


def test_preset_accepts_1_through_12_only():
    for no in range(1, 13):
        cfg = preset(no)
        assert cfg.scheme_id == f"preset-{no:02d}"
    for bad in (0, 13, -1):
        with pytest.raises(SchemeError):
            preset(bad)


def test_preset_mechanism_matrix():
    # singles 1..8 switch exactly one mechanism on, 9..12 stack them
    expected = {
        1: {"rotation"},
        2: {"overlapping"},
        3: {"distortion"},
        4: {"multi_fonts"},
        5: {"noise_arc"},
        6: {"variable_length"},
        7: {"background"},
        8: {"two_layer"},
        9: {"overlapping", "multi_fonts", "two_layer"},
        10: {"overlapping", "multi_fonts", "two_layer", "distortion", "variable_length"},
        11: {"overlapping", "multi_fonts", "two_layer", "distortion", "variable_length", "background"},
        12: {
            "rotation",
            "overlapping",
            "distortion",
            "multi_fonts",
            "noise_arc",
            "variable_length",
            "background",
            "two_layer",
        },
    }
    for no, want in expected.items():
        flags = preset(no).mechanism_flags()
        on = {name for name, v in flags.items() if v}
        assert on == want, f"preset {no}: {on} != {want}"


def test_mechanism_flags_derive_from_config_fields():
    cfg = preset(2)
    assert cfg.char_gap_range_px[0] < 0
    assert cfg.mechanism_flags()["overlapping"] is True
    cfg = preset(1)
    assert cfg.rotation_range_deg == (-30.0, 30.0)
    assert cfg.mechanism_flags()["rotation"] is True
    assert cfg.mechanism_flags()["overlapping"] is False


def test_weibo_scheme_shape():
    cfg = weibo()
    assert cfg.hollow is True
    assert cfg.length_range == (4, 4)
    assert len(cfg.noise_arcs) == 1
    excluded = set("019ijlot")
    assert excluded == set(cfg.excluded_chars)
    eff = cfg.effective_charset()
    assert not (set(eff) & excluded)
    assert len(eff) == len(set(eff))


def test_effective_charset_removes_excluded():
    cfg = preset(1)
    doc = cfg.to_document()
    doc["excluded_chars"] = ["0", "O"]
    cfg2 = parse_scheme_config(doc)
    eff = cfg2.effective_charset()
    assert "0" not in eff and "O" not in eff


def test_parse_round_trips_every_preset_and_weibo():
    for cfg in [preset(n) for n in range(1, 13)] + [weibo()]:
        again = parse_scheme_config(cfg.to_json())
        assert again == cfg
        assert again.digest() == cfg.digest()


def test_digest_is_stable_under_key_order():
    doc = preset(3).to_document()
    shuffled = json.loads(json.dumps(doc, sort_keys=True))
    assert parse_scheme_config(shuffled).digest() == preset(3).digest()


def test_digest_changes_with_any_field():
    base = preset(5)
    doc = base.to_document()
    doc["rotation_range_deg"] = [-5.0, 5.0]
    assert parse_scheme_config(doc).digest() != base.digest()


def test_parse_rejects_unknown_and_bad_fields():
    doc = preset(1).to_document()
    doc["no_such_field"] = 1
    with pytest.raises(SchemeError) as ei:
        parse_scheme_config(doc)
    assert "no_such_field" in str(ei.value)

    doc = preset(1).to_document()
    doc["length_range"] = [6, 4]
    with pytest.raises(SchemeError):
        parse_scheme_config(doc)

    doc = preset(1).to_document()
    doc["image_size"] = [0, 48]
    with pytest.raises(SchemeError):
        parse_scheme_config(doc)

    with pytest.raises(SchemeError):
        parse_scheme_config("{not json")

    doc = preset(1).to_document()
    doc["schema_version"] = 99
    with pytest.raises(SchemeError):
        parse_scheme_config(doc)


def test_parse_raises_on_semantic_violations_naming_the_field():
    doc = preset(1).to_document()
    doc["charset"] = "AB"
    doc["excluded_chars"] = ["A", "B"]
    with pytest.raises(SchemeError) as ei:
        parse_scheme_config(doc)
    assert ei.value.field == "excluded_chars"

    doc = preset(1).to_document()
    doc["char_gap_range_px"] = [3.0, -2.0]
    with pytest.raises(SchemeError) as ei:
        parse_scheme_config(doc)
    assert ei.value.field == "char_gap_range_px"


def test_validate_flags_unsatisfiable_configs():
    cfg = replace(preset(1), charset="AB", excluded_chars=frozenset("AB"))
    violations = validate_scheme(cfg)
    assert any("charset" in v for v in violations)

    cfg = replace(preset(1), font_colors=())
    assert any("font_colors" in v for v in validate_scheme(cfg))

    cfg = replace(preset(1), char_gap_range_px=(3.0, -2.0))
    assert any("char_gap_range_px" in v for v in validate_scheme(cfg))

    for no in range(1, 13):
        assert validate_scheme(preset(no)) == []
    assert validate_scheme(weibo()) == []


def test_validate_flags_unknown_font():
    cfg = replace(preset(1), fonts=("NoSuchFont.ttf",))
    violations = validate_scheme(cfg)
    assert any("font" in v.lower() for v in violations)


def test_resolve_scheme_named_and_path(tmp_path):
    assert resolve_scheme("weibo") == weibo()
    assert resolve_scheme("preset-7") == preset(7)
    assert resolve_scheme("preset7") == preset(7)
    p = tmp_path / "s.json"
    p.write_text(preset(2).to_json(), encoding="utf-8")
    assert resolve_scheme(str(p)) == preset(2)
    with pytest.raises(SchemeError):
        resolve_scheme("no-such-scheme")


def test_all_presets_use_shared_canvas_and_charset():
    for no in range(1, 13):
        cfg = preset(no)
        assert cfg.image_size == (120, 48)
        assert set("S5").issubset(set(cfg.charset))
        lo, hi = cfg.length_range
        if cfg.mechanism_flags()["variable_length"]:
            assert lo < hi
        else:
            assert lo == hi


def test_two_layer_presets_declare_mode():
    for no in (8, 9, 10, 11, 12):
        cfg = preset(no)
        assert cfg.two_layer is True
        assert cfg.two_layer_mode in ("alternate", "split")


def test_multi_font_presets_list_several_fonts():
    for no in (4, 9, 10, 11, 12):
        cfg = preset(no)
        assert cfg.multi_font_per_image is True
        assert len(cfg.fonts) >= 2
    assert len(preset(1).fonts) == 1


def test_font_path_resolves_bundled_fonts():
    for name in weibo().fonts + preset(12).fonts:
        path = schemes.font_path(name)
        assert path.endswith(".ttf")
