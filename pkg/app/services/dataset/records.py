# services/dataset/records.py
"""
SECOND-layout samples on disk:

    <root>/im1/<id>.png      image at t1 (8-bit, L/LA/RGB/RGBA)
    <root>/im2/<id>.png      image at t2
    <root>/label1/<id>.png   indexed land-cover map at t1, 0 = unchanged
    <root>/label2/<id>.png   indexed land-cover map at t2, 0 = unchanged
    <root>/preview/<id>.png  palette rendering of both maps (display only)
"""
import os
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from logzero import logger
from PIL import Image, UnidentifiedImageError

from app.constants import DATASET_DIRS, PREVIEW_DIR
from app.exceptions.dataset_exceptions import AnnotationConsistencyError, DatasetIOError, FormatError
from app.services.dataset.palette import LabelPalette

IMAGE_MODES = {1: "L", 2: "LA", 3: "RGB", 4: "RGBA"}


class SamplePaths(NamedTuple):
    im1: str
    im2: str
    label1: str
    label2: str

    @classmethod
    def in_root(cls, root: str, sample_id: str) -> "SamplePaths":
        return cls(*(os.path.join(root, folder, f"{sample_id}.png") for folder in DATASET_DIRS))


@dataclass(frozen=True)
class SampleRecord:
    id: str
    image1: np.ndarray
    image2: np.ndarray
    label1: np.ndarray
    label2: np.ndarray

    @property
    def change_mask(self) -> np.ndarray:
        return (self.label1 != 0).astype(np.uint8)

    @property
    def extent(self):
        return self.label1.shape

    def pair_map(self) -> np.ndarray:
        return np.stack([self.label1, self.label2], axis=-1).astype(np.int64)

    def validate(self, num_classes: Optional[int] = None) -> "SampleRecord":
        extents = {self.image1.shape[:2], self.image2.shape[:2], self.label1.shape, self.label2.shape}
        if len(extents) != 1 or self.label1.ndim != 2:
            raise FormatError(f"sample {self.id} mixes extents {sorted(extents)}")
        if self.image1.shape != self.image2.shape:
            raise FormatError(f"sample {self.id} images differ in channels: {self.image1.shape} vs {self.image2.shape}")
        if num_classes is not None:
            top = int(max(self.label1.max(initial=0), self.label2.max(initial=0)))
            if top > num_classes:
                raise FormatError(f"sample {self.id} uses label {top} but only {num_classes} classes exist")
        inconsistent = (self.label1 != 0) != (self.label2 != 0)
        if np.any(inconsistent):
            count = int(inconsistent.sum())
            raise AnnotationConsistencyError(
                f"sample {self.id} has {count} pixels changed in one label map only", pixel_count=count
            )
        return self

    def equals(self, other: "SampleRecord") -> bool:
        return (self.id == other.id
                and np.array_equal(self.image1, other.image1) and np.array_equal(self.image2, other.image2)
                and np.array_equal(self.label1, other.label1) and np.array_equal(self.label2, other.label2))


def _with_channels(image: np.ndarray) -> np.ndarray:
    return image[:, :, None] if image.ndim == 2 else image


def _read_png(path: str) -> np.ndarray:
    try:
        with Image.open(path) as handle:
            return np.asarray(handle)
    except FileNotFoundError:
        raise DatasetIOError(f"missing sample file {path}")
    except (UnidentifiedImageError, OSError) as e:
        logger.error(f"Decoding {path} failed: {str(e)}")
        raise FormatError(f"cannot decode {path}: {e}")


def load_sample(paths: SamplePaths, sample_id: Optional[str] = None,
                num_classes: Optional[int] = None) -> SampleRecord:
    sample_id = sample_id or os.path.splitext(os.path.basename(paths.im1))[0]
    image1 = load_image(paths.im1)
    image2 = load_image(paths.im2)
    label1, label2 = _read_png(paths.label1), _read_png(paths.label2)
    for path, label in ((paths.label1, label1), (paths.label2, label2)):
        if label.ndim != 2:
            raise FormatError(f"{path} is not a single-channel label map")
    for path, array in zip(paths, (image1, image2, label1, label2)):
        if array.shape[:2] != label1.shape:
            raise FormatError(f"{path} has extent {array.shape[:2]}, expected {label1.shape}")
    record = SampleRecord(sample_id, image1, image2, label1.astype(np.int64), label2.astype(np.int64))
    return record.validate(num_classes)


def load_from_root(root: str, sample_id: str, num_classes: Optional[int] = None) -> SampleRecord:
    return load_sample(SamplePaths.in_root(root, sample_id), sample_id, num_classes)


def _encode_image(image: np.ndarray) -> Image.Image:
    image = _with_channels(np.asarray(image))
    mode = IMAGE_MODES.get(image.shape[2])
    if mode is None:
        raise FormatError(f"cannot store a {image.shape[2]}-channel image as PNG")
    pixels = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    return Image.fromarray(pixels[:, :, 0] if mode == "L" else pixels)


def _encode_label(label: np.ndarray, palette: LabelPalette) -> Image.Image:
    label = np.ascontiguousarray(label, dtype=np.uint8)
    handle = Image.frombytes("P", (label.shape[1], label.shape[0]), label.tobytes())
    handle.putpalette(palette.flat())
    return handle


def render_pair(label1: np.ndarray, label2: np.ndarray, palette: LabelPalette) -> Image.Image:
    """Both label maps side by side, separated by a one-pixel black column."""
    height, width = label1.shape
    canvas = np.zeros((height, 2 * width + 1, 3), dtype=np.uint8)
    canvas[:, :width] = palette.render(label1)
    canvas[:, width + 1:] = palette.render(label2)
    return Image.fromarray(canvas)


def render_preview(record: SampleRecord, palette: LabelPalette) -> Image.Image:
    return render_pair(record.label1, record.label2, palette)


def save_sample(record: SampleRecord, root: str, palette: Optional[LabelPalette] = None,
                force: bool = False, preview: bool = True) -> SamplePaths:
    record.validate()
    top = int(max(record.label1.max(initial=0), record.label2.max(initial=0)))
    palette = palette or LabelPalette(max(top, 1))
    paths = SamplePaths.in_root(root, record.id)
    if not force:
        existing = [path for path in paths if os.path.exists(path)]
        if existing:
            raise DatasetIOError(f"refusing to overwrite {existing[0]} without force")
    try:
        for folder in DATASET_DIRS + ((PREVIEW_DIR,) if preview else ()):
            os.makedirs(os.path.join(root, folder), exist_ok=True)
        _encode_image(record.image1).save(paths.im1)
        _encode_image(record.image2).save(paths.im2)
        _encode_label(record.label1, palette).save(paths.label1)
        _encode_label(record.label2, palette).save(paths.label2)
        if preview:
            render_preview(record, palette).save(os.path.join(root, PREVIEW_DIR, f"{record.id}.png"))
    except OSError as e:
        logger.error(f"Writing sample {record.id} failed: {str(e)}")
        raise DatasetIOError(f"cannot write sample {record.id} under {root}: {e}")
    return paths


def label_paths(root: str, sample_id: str) -> Tuple[str, str]:
    paths = SamplePaths.in_root(root, sample_id)
    return paths.label1, paths.label2


def load_label_pair(root: str, sample_id: str) -> Tuple[np.ndarray, np.ndarray]:
    """Both label maps of one sample; prediction directories hold only these."""
    path1, path2 = label_paths(root, sample_id)
    label1, label2 = _read_png(path1), _read_png(path2)
    for path, label in ((path1, label1), (path2, label2)):
        if label.ndim != 2:
            raise FormatError(f"{path} is not a single-channel label map")
    if label1.shape != label2.shape:
        raise FormatError(f"{path2} has extent {label2.shape}, expected {label1.shape}")
    return label1.astype(np.int64), label2.astype(np.int64)


def save_label_pair(root: str, sample_id: str, pairs: np.ndarray, palette: LabelPalette) -> Tuple[str, str]:
    """Write an H x W x 2 pair map as label1/<id>.png and label2/<id>.png."""
    paths = label_paths(root, sample_id)
    try:
        for path, label in zip(paths, (pairs[..., 0], pairs[..., 1])):
            os.makedirs(os.path.dirname(path), exist_ok=True)
            _encode_label(label, palette).save(path)
    except OSError as e:
        logger.error(f"Writing labels of {sample_id} failed: {str(e)}")
        raise DatasetIOError(f"cannot write labels of {sample_id} under {root}: {e}")
    return paths


def list_ids(root: str) -> List[str]:
    """Sample ids present in <root>/label1."""
    folder = os.path.join(root, DATASET_DIRS[2])
    if not os.path.isdir(folder):
        raise DatasetIOError(f"{folder} does not exist")
    return sorted(os.path.splitext(name)[0] for name in os.listdir(folder) if name.endswith(".png"))


def load_image(path: str) -> np.ndarray:
    """H x W x d float image in [0, 1]."""
    return _with_channels(_read_png(path)).astype(np.float64) / 255.0


def save_gray(path: str, values: np.ndarray) -> str:
    """Store a [0, 1] map as an 8-bit grayscale PNG."""
    try:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        _encode_image(np.asarray(values, dtype=np.float64)[:, :, None]).save(path)
    except OSError as e:
        raise DatasetIOError(f"cannot write {path}: {e}")
    return path
