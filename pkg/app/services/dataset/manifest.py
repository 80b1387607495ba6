# services/dataset/manifest.py
import json
import os
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np
from logzero import logger

from app.constants import MANIFEST_FILE
from app.exceptions.custom_exceptions import ConfigError
from app.exceptions.dataset_exceptions import DatasetIOError
from app.schemas.dataset import DatasetManifest, ManifestEntry, Split
from app.services.dataset.palette import LabelPalette
from app.services.dataset.records import SamplePaths, SampleRecord, load_sample

# smoothing constant of the inverse-log-frequency weights
WEIGHT_SMOOTHING = 1.02


def split_manifest(ids: Sequence[str], ratio: float, seed: int, num_classes: int,
                   class_names: Optional[Sequence[str]] = None, root: Optional[str] = None) -> DatasetManifest:
    """Deterministic shuffled train/test split; round(ratio * n) ids go to train."""
    if not ids:
        raise ConfigError("cannot split an empty entry list")
    if not 0 < ratio < 1:
        raise ConfigError(f"split ratio must lie strictly between 0 and 1, got {ratio}")
    order = np.random.default_rng(seed).permutation(len(ids))
    n_train = int(round(ratio * len(ids)))
    train = set(int(position) for position in order[:n_train])
    entries = [ManifestEntry(id=sample_id, split=Split.TRAIN if position in train else Split.TEST)
               for position, sample_id in enumerate(ids)]
    names = list(class_names) if class_names else LabelPalette(num_classes).names[1:]
    return DatasetManifest.parse({
        "num_classes": num_classes,
        "class_names": names,
        "entries": [entry.model_dump() for entry in entries],
        "root": root,
    })


def save_manifest(manifest: DatasetManifest, root: str) -> str:
    path = os.path.join(root, MANIFEST_FILE)
    try:
        os.makedirs(root, exist_ok=True)
        with open(path, "w") as handle:
            handle.write(manifest.model_dump_json(indent=2))
    except OSError as e:
        logger.error(f"Writing manifest {path} failed: {str(e)}")
        raise DatasetIOError(f"cannot write manifest {path}: {e}")
    return path


def load_manifest(root: str, check_files: bool = True) -> DatasetManifest:
    path = os.path.join(root, MANIFEST_FILE)
    try:
        with open(path) as handle:
            data = json.load(handle)
    except FileNotFoundError:
        raise DatasetIOError(f"no manifest at {path}")
    except (OSError, json.JSONDecodeError) as e:
        raise DatasetIOError(f"cannot read manifest {path}: {e}")
    manifest = DatasetManifest.parse({**data, "root": root})
    if check_files:
        for sample_id in manifest.ids():
            for file_path in SamplePaths.in_root(root, sample_id):
                if not os.path.exists(file_path):
                    raise DatasetIOError(f"manifest entry {sample_id} is missing {file_path}")
    logger.info(f"Loaded manifest {path}: {len(manifest.entries)} samples, {manifest.num_classes} classes")
    return manifest


def iter_samples(manifest: DatasetManifest, split: Optional[Split] = None) -> Iterator[SampleRecord]:
    for sample_id in manifest.ids(split):
        yield load_sample(SamplePaths.in_root(manifest.root, sample_id), sample_id, manifest.num_classes)


def validate_dataset(manifest: DatasetManifest) -> int:
    """Load and validate every referenced sample; returns the sample count."""
    return sum(1 for _ in iter_samples(manifest))


def label_histogram(records: Iterable[SampleRecord], num_classes: int) -> np.ndarray:
    """Pixel counts of labels 0..N over both label maps of the records."""
    counts = np.zeros(num_classes + 1, dtype=np.int64)
    for record in records:
        for label in (record.label1, record.label2):
            counts += np.bincount(label.reshape(-1), minlength=num_classes + 1)
    return counts


def change_mask_histogram(records: Iterable[SampleRecord]) -> np.ndarray:
    """Pixel counts of [unchanged, changed] over the records."""
    counts = np.zeros(2, dtype=np.int64)
    for record in records:
        counts += np.bincount(record.change_mask.reshape(-1), minlength=2)
    return counts


def class_histogram(manifest: DatasetManifest, split: Optional[Split] = Split.TRAIN) -> np.ndarray:
    return label_histogram(iter_samples(manifest, split), manifest.num_classes)


def change_histogram(manifest: DatasetManifest, split: Optional[Split] = Split.TRAIN) -> np.ndarray:
    return change_mask_histogram(iter_samples(manifest, split))


def categorical_weights(histogram: Sequence[int]) -> np.ndarray:
    """
    1 / ln(1.02 + p_c) per class, normalized to mean 1 over the classes that
    occur. Classes with no pixels get weight 1 and never enter the loss.
    """
    counts = np.asarray(histogram, dtype=np.float64)
    weights = np.ones_like(counts)
    present = counts > 0
    if not present.any():
        return weights
    frequency = counts[present] / counts.sum()
    raw = 1.0 / np.log(WEIGHT_SMOOTHING + frequency)
    weights[present] = raw / raw.mean()
    return weights
