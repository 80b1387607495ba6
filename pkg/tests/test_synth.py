# ** Base Modules
import json
import os

import numpy as np
import pytest

# ** App Modules
from app.exceptions.custom_exceptions import ConfigError
from app.exceptions.dataset_exceptions import GenerationError
from app.schemas.dataset import SynthProfile
from app.services.dataset.manifest import load_manifest
from app.services.dataset.records import load_from_root
from app.services.dataset.synth import STATS_FILE, OVERSHOOT, UNDERSHOOT, resolve_profile, synth_generate, write_dataset


def test_same_seed_gives_identical_scenes():
    first, _ = synth_generate(seed=5, count=3, size=32, num_classes=4)
    second, _ = synth_generate(seed=5, count=3, size=32, num_classes=4)
    assert all(a.equals(b) for a, b in zip(first, second))
    other, _ = synth_generate(seed=6, count=3, size=32, num_classes=4)
    assert not all(a.equals(b) for a, b in zip(first, other))


def test_change_fraction_stays_near_target():
    profile = resolve_profile("balanced")
    records, stats = synth_generate(seed=0, count=8, size=48, num_classes=4, profile=profile)
    for record in records:
        fraction = record.change_mask.mean()
        assert profile.change_fraction - UNDERSHOOT <= fraction <= profile.change_fraction + OVERSHOOT
    assert stats.samples == 8
    assert stats.pixels == 8 * 48 * 48
    assert stats.changed_pixels == sum(int(record.change_mask.sum()) for record in records)
    assert sum(stats.change_types.values()) == stats.changed_pixels


def test_scenes_are_valid_and_quantized():
    records, _ = synth_generate(seed=1, count=4, size=32, num_classes=3)
    for record in records:
        record.validate(num_classes=3)
        assert record.image1.shape == (32, 32, 3)
        np.testing.assert_array_equal(np.rint(record.image1 * 255) / 255, record.image1)


def test_rebuild_profile_keeps_class_on_changed_pixels():
    records, stats = synth_generate(seed=2, count=6, size=32, num_classes=4, profile="rebuild")
    same_class = sum(int(((r.label1 == r.label2) & (r.label1 != 0)).sum()) for r in records)
    assert same_class > 0
    assert stats.as_dict()["region_kinds"]["rebuild"] > 0


def test_two_classes_never_produce_mixed_regions():
    _, stats = synth_generate(seed=0, count=4, size=32, num_classes=2, profile="asymmetric")
    assert stats.as_dict()["region_kinds"]["mixed"] == 0


def test_bad_requests_are_config_errors():
    with pytest.raises(ConfigError):
        synth_generate(seed=0, count=0, size=32, num_classes=3)
    with pytest.raises(ConfigError):
        synth_generate(seed=0, count=1, size=16, num_classes=3)
    with pytest.raises(ConfigError):
        synth_generate(seed=0, count=1, size=32, num_classes=1)
    with pytest.raises(ConfigError):
        resolve_profile("no-such-profile")
    with pytest.raises(ConfigError):
        SynthProfile.parse({"class_weight": 0, "rebuild_weight": 0, "mixed_weight": 0})


def test_unreachable_change_fraction_raises_generation_error():
    crowded = SynthProfile(name="crowded", change_fraction=0.95, min_region=0.12, max_region=0.12)
    with pytest.raises(GenerationError):
        synth_generate(seed=0, count=1, size=32, num_classes=3, profile=crowded)


def test_written_dataset_reloads(tmp_path):
    profile = resolve_profile("balanced")
    records, stats = synth_generate(seed=4, count=5, size=32, num_classes=3, profile=profile)
    root = str(tmp_path / "synth")
    manifest = write_dataset(root, records, stats, 3, profile, seed=4)
    assert load_manifest(root).ids() == manifest.ids()
    assert load_from_root(root, records[0].id, 3).equals(records[0])
    with open(os.path.join(root, STATS_FILE)) as handle:
        written = json.load(handle)
    assert written["samples"] == 5
    assert written["profile"]["name"] == "balanced"
