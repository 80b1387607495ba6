# services/dataset/synth.py
"""
Seeded synthetic bitemporal scenes.

A scene is a land-cover map of random polygons and ellipses, rendered with
one striped texture per class. Change regions are planted without overlap
and come in three kinds:

    class    the region switches from class a to class b
    rebuild  the region keeps its class but the texture phase flips
    mixed    one date shows a single class, the other two interleaved classes

Labels are zero outside the change regions.
"""
import json
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from logzero import logger
from PIL import Image, ImageDraw

from app.exceptions.custom_exceptions import ConfigError
from app.exceptions.dataset_exceptions import DatasetIOError, GenerationError
from app.helpers.decorator import logged
from app.schemas.dataset import BUILTIN_PROFILES, ChangeKind, DatasetManifest, SynthProfile
from app.services.dataset.manifest import save_manifest, split_manifest
from app.services.dataset.palette import LabelPalette
from app.services.dataset.records import SampleRecord, save_sample
from app.services.metrics.confusion import ChangeTypeIndex

MAX_ATTEMPTS = 100
UNDERSHOOT = 0.02
OVERSHOOT = 0.03
MIN_SIZE = 32
STATS_FILE = "stats.json"
KINDS = [ChangeKind.CLASS, ChangeKind.REBUILD, ChangeKind.MIXED]


@dataclass
class SynthStats:
    samples: int = 0
    pixels: int = 0
    changed_pixels: int = 0
    region_kinds: Counter = field(default_factory=Counter)
    change_types: Counter = field(default_factory=Counter)

    @property
    def change_fraction(self) -> float:
        return self.changed_pixels / self.pixels if self.pixels else 0.0

    def as_dict(self) -> Dict:
        return {
            "samples": self.samples,
            "pixels": self.pixels,
            "changed_pixels": self.changed_pixels,
            "change_fraction": self.change_fraction,
            "region_kinds": {kind.value: self.region_kinds.get(kind, 0) for kind in KINDS},
            "change_types": dict(sorted(self.change_types.items())),
        }


def resolve_profile(name_or_profile) -> SynthProfile:
    if isinstance(name_or_profile, SynthProfile):
        return name_or_profile
    try:
        return BUILTIN_PROFILES[name_or_profile]
    except KeyError:
        raise ConfigError(f"unknown synth profile '{name_or_profile}', built-ins: {sorted(BUILTIN_PROFILES)}")


class SceneSynthesizer:
    def __init__(self, num_classes: int, size: int, profile: SynthProfile, seed: int = 0):
        if num_classes < 2:
            raise ConfigError(f"synthetic scenes need at least 2 classes, got {num_classes}")
        if size < MIN_SIZE:
            raise ConfigError(f"synthetic scenes need size >= {MIN_SIZE}, got {size}")
        self.num_classes, self.size, self.profile, self.seed = num_classes, size, profile, seed
        self.palette = LabelPalette(num_classes)
        colors = np.array(self.palette.colors[1:], dtype=np.float64) / 255.0
        self.means = 0.2 + 0.6 * colors
        angles = np.pi * np.arange(num_classes) / num_classes
        period = 4.0 + np.arange(num_classes) % 4
        self.wave = np.stack([np.cos(angles), np.sin(angles)], axis=1) / period[:, None]
        self.index = ChangeTypeIndex(num_classes)

    # ------------------------------------------------------------------
    def _random_class(self, rng: np.random.Generator, exclude: Tuple[int, ...] = ()) -> int:
        choices = [label for label in range(1, self.num_classes + 1) if label not in exclude]
        return int(rng.choice(choices))

    def _shape_mask(self, rng: np.random.Generator, fill: int = 1, canvas: Optional[Image.Image] = None):
        """Draw a random ellipse or star-shaped polygon; returns the boolean footprint."""
        size = self.size
        radius = 0.5 * size * rng.uniform(self.profile.min_region, self.profile.max_region)
        cy, cx = rng.uniform(0, size, size=2)
        footprint = Image.new("L", (size, size), 0)
        targets = [footprint] if canvas is None else [footprint, canvas]
        if rng.random() < 0.5:
            ry = radius * rng.uniform(0.6, 1.0)
            box = [cx - radius, cy - ry, cx + radius, cy + ry]
            for target, value in zip(targets, (1, fill)):
                ImageDraw.Draw(target).ellipse(box, fill=value)
        else:
            vertices = int(rng.integers(5, 9))
            angles = np.sort(rng.uniform(0, 2 * math.pi, size=vertices))
            radii = radius * rng.uniform(0.6, 1.0, size=vertices)
            points = [(float(cx + r * math.cos(a)), float(cy + r * math.sin(a))) for a, r in zip(angles, radii)]
            for target, value in zip(targets, (1, fill)):
                ImageDraw.Draw(target).polygon(points, fill=value)
        return np.asarray(footprint) > 0

    def _base_cover(self, rng: np.random.Generator) -> np.ndarray:
        canvas = Image.new("L", (self.size, self.size), self._random_class(rng))
        for _ in range(self.profile.background_regions):
            self._shape_mask(rng, fill=self._random_class(rng), canvas=canvas)
        return np.asarray(canvas).astype(np.int64)

    def _interleave(self, rng: np.random.Generator, first: int, second: int) -> np.ndarray:
        cell = int(rng.integers(2, 5))
        ys, xs = np.mgrid[0:self.size, 0:self.size]
        offset = rng.integers(0, cell, size=2)
        checker = (((ys + offset[0]) // cell + (xs + offset[1]) // cell) % 2).astype(bool)
        return np.where(checker, first, second)

    def _render(self, cover: np.ndarray, phase: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        ys, xs = np.mgrid[0:self.size, 0:self.size].astype(np.float64)
        wave = self.wave[cover - 1]
        stripes = np.sin(2 * math.pi * (wave[..., 0] * xs + wave[..., 1] * ys) + phase)
        image = self.means[cover - 1] + 0.12 * stripes[..., None]
        image = image + rng.normal(0.0, self.profile.noise, size=image.shape)
        # quantized to the 8-bit grid so the PNG round trip is exact
        return np.rint(np.clip(image, 0.0, 1.0) * 255.0) / 255.0

    # ------------------------------------------------------------------
    def scene(self, sample_index: int, stats: Optional[SynthStats] = None) -> SampleRecord:
        rng = np.random.default_rng([self.seed, sample_index])
        cover1 = self._base_cover(rng)
        cover2 = cover1.copy()
        phase2 = np.zeros(cover1.shape)
        changed = np.zeros(cover1.shape, dtype=bool)
        target = self.profile.change_fraction
        kinds = []
        failures = 0
        while changed.mean() < target - UNDERSHOOT:
            region = self._shape_mask(rng)
            grown = changed | region
            if not region.any() or (region & changed).any() or grown.mean() > target + OVERSHOOT:
                failures += 1
                if failures >= MAX_ATTEMPTS:
                    raise GenerationError(
                        f"could not place a change region in scene {sample_index} after {MAX_ATTEMPTS} attempts",
                        data={"change_fraction": float(changed.mean()), "target": target},
                    )
                continue
            failures = 0
            kind = KINDS[int(rng.choice(len(KINDS), p=self.profile.kind_probabilities()))]
            if kind == ChangeKind.MIXED and self.num_classes < 3:
                kind = ChangeKind.CLASS
            before = self._random_class(rng)
            if kind == ChangeKind.CLASS:
                cover1[region], cover2[region] = before, self._random_class(rng, exclude=(before,))
            elif kind == ChangeKind.REBUILD:
                cover1[region], cover2[region] = before, before
                phase2[region] = math.pi
            else:
                first = self._random_class(rng, exclude=(before,))
                second = self._random_class(rng, exclude=(before, first))
                mixed = self._interleave(rng, first, second)[region]
                if rng.random() < 0.5:
                    cover1[region], cover2[region] = before, mixed
                else:
                    cover1[region], cover2[region] = mixed, before
            changed = grown
            kinds.append(kind)

        image1 = self._render(cover1, np.zeros(cover1.shape), rng)
        image2 = self._render(cover2, phase2, rng)
        label1 = np.where(changed, cover1, 0)
        label2 = np.where(changed, cover2, 0)
        record = SampleRecord(f"{sample_index:05d}", image1, image2, label1, label2).validate(self.num_classes)
        if stats is not None:
            stats.samples += 1
            stats.pixels += changed.size
            stats.changed_pixels += int(changed.sum())
            stats.region_kinds.update(kinds)
            encoded = self.index.encode(record.pair_map())
            for type_id, count in zip(*np.unique(encoded[encoded > 0], return_counts=True)):
                stats.change_types[ChangeTypeIndex.key(self.index.decode(int(type_id)))] += int(count)
        return record


@logged("scene generation")
def synth_generate(seed: int, count: int, size: int, num_classes: int,
                   profile="balanced") -> Tuple[List[SampleRecord], SynthStats]:
    if count < 1:
        raise ConfigError(f"sample count must be positive, got {count}")
    synthesizer = SceneSynthesizer(num_classes, size, resolve_profile(profile), seed)
    stats = SynthStats()
    records = [synthesizer.scene(index, stats) for index in range(count)]
    logger.info(f"Generated {count} scenes of {size}x{size}, change fraction {stats.change_fraction:.3f}")
    return records, stats


def write_dataset(root: str, records: List[SampleRecord], stats: SynthStats, num_classes: int,
                  profile: SynthProfile, seed: int, force: bool = False) -> DatasetManifest:
    """Write samples, manifest.json and stats.json under `root`."""
    palette = LabelPalette(num_classes)
    for record in records:
        save_sample(record, root, palette=palette, force=force)
    manifest = split_manifest([record.id for record in records], profile.train_ratio, seed,
                              num_classes, palette.names[1:], root=root)
    save_manifest(manifest, root)
    try:
        with open(os.path.join(root, STATS_FILE), "w") as handle:
            json.dump({"profile": profile.model_dump(mode="json"), **stats.as_dict()}, handle, indent=2)
    except OSError as e:
        raise DatasetIOError(f"cannot write {STATS_FILE} under {root}: {e}")
    return manifest
