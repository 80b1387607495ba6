# ** Base Modules
import os

import pytest

# ** App Modules
from app.config import settings
from app.services.asn.gradcheck import toy_config
from app.services.dataset.synth import resolve_profile, synth_generate, write_dataset


def pytest_collection_modifyitems(config, items):
    if os.environ.get("SCD_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set SCD_RUN_SLOW=1 to run the desk-scale experiments")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def isolated_logs(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "SCD_LOG_DIR", str(tmp_path / "logs"))


@pytest.fixture
def tiny_config():
    return toy_config(num_classes=3, input_channels=3)


@pytest.fixture
def toy_dataset(tmp_path):
    """Twelve 32x32 scenes with three classes, split 10/2."""
    root = str(tmp_path / "toy")
    profile = resolve_profile("balanced")
    records, stats = synth_generate(seed=3, count=12, size=32, num_classes=3, profile=profile)
    manifest = write_dataset(root, records, stats, 3, profile, seed=3)
    return manifest
