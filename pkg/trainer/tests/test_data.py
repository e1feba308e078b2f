import numpy as np
import pytest

from captcha_trainer.data import (
    DataError,
    INPUT_HEIGHT,
    LabelCodec,
    WIDTH_STEP,
    batch_tensors,
    charset_from_labels,
    decode_image,
    decode_image_uint8,
    holdout_split,
    labeled_entries,
    normalize_stack,
)

from conftest import make_noise_dataset, random_png


def test_decode_resizes_to_input_height():
    rng = np.random.default_rng(0)
    arr = decode_image_uint8(random_png(rng, size=(120, 48)))
    assert arr.shape == (INPUT_HEIGHT, 160, 3)  # width scales with height
    assert arr.dtype == np.uint8


def test_decode_snaps_width_to_step():
    rng = np.random.default_rng(1)
    for w, h in ((97, 41), (130, 40), (64, 64)):
        arr = decode_image_uint8(random_png(rng, size=(w, h)))
        assert arr.shape[0] == INPUT_HEIGHT
        assert arr.shape[1] % WIDTH_STEP == 0
        assert arr.shape[1] >= WIDTH_STEP


def test_normalize_maps_to_unit_interval():
    rng = np.random.default_rng(2)
    t = decode_image(random_png(rng))
    assert t.shape[0] == 3 and t.shape[1] == INPUT_HEIGHT
    assert float(t.min()) >= -1.0 and float(t.max()) <= 1.0


def test_codec_round_trip():
    codec = LabelCodec("abc")
    assert codec.blank == 3
    ids = codec.encode("cab")
    assert ids == [2, 0, 1]
    assert codec.decode_indices(ids) == "cab"


def test_codec_rejects_unknown_and_duplicates():
    with pytest.raises(DataError, match="duplicate"):
        LabelCodec("aa")
    with pytest.raises(DataError, match="not in charset"):
        LabelCodec("ab").encode("abc")


def test_charset_from_labels_sorted_union():
    assert charset_from_labels(["ba", "ac"]) == "abc"


def test_labeled_entries_filters_split(tmp_path):
    ds = make_noise_dataset(tmp_path / "d", 8, seed=3, splits=("train", "pool"))
    assert len(labeled_entries(ds, splits=("train",))) == 4
    assert len(labeled_entries(ds, splits=("train", "pool"))) == 8
    with pytest.raises(DataError, match="no labeled"):
        labeled_entries(ds, splits=("test",))


def test_holdout_split_deterministic_and_disjoint(tmp_path):
    ds = make_noise_dataset(tmp_path / "d", 40, seed=4)
    a_train, a_val = holdout_split(list(ds.entries), fraction=0.1)
    b_train, b_val = holdout_split(list(reversed(ds.entries)), fraction=0.1)
    assert len(a_val) == 4
    assert {e.sample_id for e in a_train} | {e.sample_id for e in a_val} == {
        e.sample_id for e in ds.entries
    }
    assert not ({e.sample_id for e in a_train} & {e.sample_id for e in a_val})
    # input order must not matter
    assert [e.sample_id for e in a_val] == [e.sample_id for e in b_val]


def test_holdout_split_minimum(tmp_path):
    # a 3-sample set at 5% still yields one validation sample
    ds = make_noise_dataset(tmp_path / "d", 3, seed=6)
    train, val = holdout_split(list(ds.entries), fraction=0.05, minimum=1)
    assert len(val) == 1
    assert len(train) == 2


def test_batch_tensors_requires_uniform_width(tmp_path):
    mixed = make_noise_dataset(tmp_path / "a", 2, seed=5)
    # rewrite one image at a different aspect ratio
    rng = np.random.default_rng(55)
    wide = mixed.entries[1]
    with open(mixed.image_path(wide), "wb") as fh:
        fh.write(random_png(rng, size=(160, 40)))
    codec = LabelCodec(charset_from_labels(e.label for e in mixed.entries))
    with pytest.raises(DataError, match="width"):
        batch_tensors(mixed, list(mixed.entries), codec)

    uniform = make_noise_dataset(tmp_path / "b", 3, seed=6)
    codec = LabelCodec(charset_from_labels(e.label for e in uniform.entries))
    images, targets, lengths = batch_tensors(uniform, list(uniform.entries), codec)
    assert tuple(images.shape[:3]) == (3, 3, INPUT_HEIGHT)
    assert int(lengths.sum()) == int(targets.shape[0]) == 12  # 3 labels of 4
