# ** Base Modules
import os

import numpy as np
import pytest
from PIL import Image

# ** App Modules
from app.exceptions.custom_exceptions import ConfigError
from app.exceptions.dataset_exceptions import AnnotationConsistencyError, DatasetIOError, FormatError
from app.schemas.dataset import Split
from app.services.dataset.augment import augment, crop_or_pad, flip_record, resize_label
from app.services.dataset.manifest import (
    categorical_weights,
    class_histogram,
    change_histogram,
    change_mask_histogram,
    iter_samples,
    label_histogram,
    load_manifest,
    split_manifest,
    validate_dataset,
)
from app.services.dataset.palette import LabelPalette
from app.services.dataset.records import (
    SamplePaths,
    SampleRecord,
    list_ids,
    load_from_root,
    load_label_pair,
    save_label_pair,
    save_sample,
)


def make_record(sample_id="00000", size=8, channels=3, seed=0):
    rng = np.random.default_rng(seed)
    image1 = rng.integers(0, 256, size=(size, size, channels)) / 255.0
    image2 = rng.integers(0, 256, size=(size, size, channels)) / 255.0
    changed = rng.random((size, size)) < 0.4
    label1 = np.where(changed, rng.integers(1, 4, size=(size, size)), 0)
    label2 = np.where(changed, rng.integers(1, 4, size=(size, size)), 0)
    return SampleRecord(sample_id, image1, image2, label1, label2)


def test_save_then_load_is_bit_exact(tmp_path):
    record = make_record()
    root = str(tmp_path / "data")
    save_sample(record, root, LabelPalette(3))
    loaded = load_from_root(root, record.id, num_classes=3)
    assert loaded.equals(record)
    assert os.path.exists(os.path.join(root, "preview", "00000.png"))


def test_grayscale_images_keep_one_channel(tmp_path):
    record = make_record(channels=1)
    save_sample(record, str(tmp_path), LabelPalette(3), preview=False)
    loaded = load_from_root(str(tmp_path), record.id)
    assert loaded.image1.shape == (8, 8, 1)
    assert loaded.equals(record)


def test_saving_twice_needs_force(tmp_path):
    record = make_record()
    save_sample(record, str(tmp_path))
    with pytest.raises(DatasetIOError):
        save_sample(record, str(tmp_path))
    save_sample(record, str(tmp_path), force=True)


def test_extent_mismatch_names_the_file(tmp_path):
    record = make_record()
    paths = save_sample(record, str(tmp_path), LabelPalette(3))
    Image.fromarray(np.zeros((6, 8), dtype=np.uint8)).save(paths.label2)
    with pytest.raises(FormatError) as error:
        load_from_root(str(tmp_path), record.id)
    assert "label2" in error.value.message


def test_missing_file_is_an_io_error(tmp_path):
    record = make_record()
    paths = save_sample(record, str(tmp_path))
    os.remove(paths.im2)
    with pytest.raises(DatasetIOError):
        load_from_root(str(tmp_path), record.id)


def test_undecodable_file_is_a_format_error(tmp_path):
    record = make_record()
    paths = save_sample(record, str(tmp_path))
    with open(paths.im1, "wb") as handle:
        handle.write(b"not a png")
    with pytest.raises(FormatError):
        load_from_root(str(tmp_path), record.id)


def test_one_sided_change_is_rejected():
    record = make_record()
    label2 = record.label2.copy()
    label2[record.label1 != 0] = 0
    broken = SampleRecord(record.id, record.image1, record.image2, record.label1, label2)
    with pytest.raises(AnnotationConsistencyError) as error:
        broken.validate()
    assert error.value.pixel_count == int((record.label1 != 0).sum())


def test_labels_above_class_count_are_rejected():
    with pytest.raises(FormatError):
        make_record().validate(num_classes=2)


def test_label_pair_io_and_listing(tmp_path):
    root = str(tmp_path / "pred")
    pairs = make_record().pair_map()
    save_label_pair(root, "b", pairs, LabelPalette(3))
    save_label_pair(root, "a", pairs, LabelPalette(3))
    label1, label2 = load_label_pair(root, "b")
    np.testing.assert_array_equal(label1, pairs[..., 0])
    np.testing.assert_array_equal(label2, pairs[..., 1])
    assert list_ids(root) == ["a", "b"]
    with pytest.raises(DatasetIOError):
        list_ids(str(tmp_path / "nowhere"))


def test_split_is_deterministic_and_disjoint():
    ids = [f"{index:03d}" for index in range(10)]
    first = split_manifest(ids, 0.8, seed=1, num_classes=3)
    second = split_manifest(ids, 0.8, seed=1, num_classes=3)
    assert first.ids(Split.TRAIN) == second.ids(Split.TRAIN)
    assert len(first.ids(Split.TRAIN)) == 8 and len(first.ids(Split.TEST)) == 2
    assert not set(first.ids(Split.TRAIN)) & set(first.ids(Split.TEST))
    assert first.class_names == LabelPalette(3).names[1:]


def test_split_rejects_bad_input():
    with pytest.raises(ConfigError):
        split_manifest([], 0.8, seed=0, num_classes=3)
    with pytest.raises(ConfigError):
        split_manifest(["a", "b"], 1.0, seed=0, num_classes=3)
    with pytest.raises(ConfigError):
        split_manifest(["a", "a"], 0.5, seed=0, num_classes=3)


def test_manifest_round_trip_and_histograms(toy_dataset):
    manifest = load_manifest(toy_dataset.root)
    assert manifest.ids() == toy_dataset.ids()
    assert validate_dataset(manifest) == 12
    n_train = len(manifest.ids(Split.TRAIN))
    assert class_histogram(manifest).sum() == 2 * n_train * 32 * 32
    unchanged, changed = change_histogram(manifest)
    assert unchanged + changed == n_train * 32 * 32
    assert changed > 0


def test_record_histograms_match_the_split_histograms(toy_dataset):
    records = list(iter_samples(toy_dataset, Split.TRAIN))
    np.testing.assert_array_equal(label_histogram(records, 3), class_histogram(toy_dataset))
    np.testing.assert_array_equal(change_mask_histogram(records), change_histogram(toy_dataset))
    np.testing.assert_array_equal(label_histogram(records[:1], 3),
                                  np.bincount(np.concatenate([records[0].label1.ravel(), records[0].label2.ravel()]),
                                              minlength=4))


def test_manifest_with_missing_sample_is_rejected(toy_dataset):
    os.remove(SamplePaths.in_root(toy_dataset.root, toy_dataset.ids()[0]).label1)
    with pytest.raises(DatasetIOError):
        load_manifest(toy_dataset.root)


def test_categorical_weights_favour_rare_classes():
    weights = categorical_weights([1000, 0, 900, 100])
    assert weights[1] == 1.0
    present = weights[[0, 2, 3]]
    assert present.mean() == pytest.approx(1.0)
    assert weights[3] > weights[2] > weights[0]
    np.testing.assert_array_equal(categorical_weights([0, 0]), [1.0, 1.0])


def test_flip_applies_to_every_array():
    record = make_record()
    flipped = flip_record(record)
    np.testing.assert_array_equal(flipped.label1, record.label1[:, ::-1])
    np.testing.assert_array_equal(flipped.image2, record.image2[:, ::-1])
    assert flip_record(flipped).equals(record)


def test_crop_pads_with_non_change():
    record = crop_or_pad(make_record(size=8), 12)
    assert record.extent == (12, 12)
    assert not record.label1[8:, :].any() and not record.label2[:, 8:].any()
    assert record.image1.shape == (12, 12, 3)


def test_augment_keeps_labels_consistent():
    rng = np.random.default_rng(0)
    source = make_record(size=24)
    for _ in range(10):
        record = augment(source, rng, crop=16)
        assert record.extent == (16, 16)
        assert set(np.unique(record.label1)) <= set(np.unique(source.label1))
        record.validate(num_classes=3)


def test_augment_without_randomness_is_identity():
    record = make_record(size=16)
    same = augment(record, np.random.default_rng(0), crop=16, scale_range=(1.0, 1.0), flip_probability=0.0)
    assert same.equals(record)


def test_nearest_label_resize_never_blends():
    label = np.array([[1, 2], [3, 0]])
    resized = resize_label(label, 5, 3)
    assert set(np.unique(resized)) <= {0, 1, 2, 3}
    np.testing.assert_array_equal(resize_label(resized, 2, 2), label)
