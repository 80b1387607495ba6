# services/dataset/augment.py
"""
Training-time geometry: horizontal flip, random rescale, crop/pad to a fixed
extent. Every transform is applied jointly to both images and both labels;
labels are resampled by nearest neighbour and padded with 0 (non-change).
"""
from typing import Optional, Tuple

import numpy as np

from app.constants import AUG_SCALE_RANGE, FLIP_PROBABILITY, TRAIN_CROP
from app.services.dataset.records import SampleRecord
from app.services.tensor.ops import resize_array


def flip_record(record: SampleRecord) -> SampleRecord:
    return SampleRecord(
        record.id,
        record.image1[:, ::-1].copy(),
        record.image2[:, ::-1].copy(),
        record.label1[:, ::-1].copy(),
        record.label2[:, ::-1].copy(),
    )


def nearest_indices(in_size: int, out_size: int) -> np.ndarray:
    """Source index of each output position under pixel-centre alignment."""
    source = np.floor((np.arange(out_size) + 0.5) * in_size / out_size).astype(np.int64)
    return np.clip(source, 0, in_size - 1)


def resize_label(label: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    rows = nearest_indices(label.shape[0], out_h)
    cols = nearest_indices(label.shape[1], out_w)
    return label[rows[:, None], cols[None, :]]


def resize_image(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of an H x W x d image."""
    channels_first = np.moveaxis(image, -1, 0)
    return np.clip(np.moveaxis(resize_array(channels_first, out_h, out_w), 0, -1), 0.0, 1.0)


def rescale_record(record: SampleRecord, factor: float) -> SampleRecord:
    height, width = record.extent
    out_h, out_w = max(1, int(round(height * factor))), max(1, int(round(width * factor)))
    if (out_h, out_w) == (height, width):
        return record
    return SampleRecord(
        record.id,
        resize_image(record.image1, out_h, out_w),
        resize_image(record.image2, out_h, out_w),
        resize_label(record.label1, out_h, out_w),
        resize_label(record.label2, out_h, out_w),
    )


def crop_or_pad(record: SampleRecord, size: int, rng: Optional[np.random.Generator] = None) -> SampleRecord:
    """Random crop along axes longer than `size`, zero padding (bottom/right) along shorter ones."""
    height, width = record.extent
    top = int(rng.integers(0, height - size + 1)) if rng is not None and height > size else 0
    left = int(rng.integers(0, width - size + 1)) if rng is not None and width > size else 0

    def fit(array: np.ndarray) -> np.ndarray:
        window = array[top:top + size, left:left + size]
        pad = [(0, size - window.shape[0]), (0, size - window.shape[1])] + [(0, 0)] * (array.ndim - 2)
        return np.pad(window, pad)

    return SampleRecord(record.id, fit(record.image1), fit(record.image2), fit(record.label1), fit(record.label2))


def augment(record: SampleRecord, rng: np.random.Generator, crop: int = TRAIN_CROP,
            scale_range: Tuple[float, float] = AUG_SCALE_RANGE,
            flip_probability: float = FLIP_PROBABILITY) -> SampleRecord:
    if rng.random() < flip_probability:
        record = flip_record(record)
    record = rescale_record(record, float(rng.uniform(*scale_range)))
    return crop_or_pad(record, crop, rng)
