# services/dataset/palette.py
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.constants import NON_CHANGE_COLOR, SECOND_CLASSES, SECOND_PALETTE
from app.exceptions.custom_exceptions import ConfigError

Color = Tuple[int, int, int]


class LabelPalette:
    """
    Class id -> display color and name. Id 0 is non-change and renders white.
    Classes beyond the SECOND six receive seeded colors distinct from all others.
    """

    def __init__(self, num_classes: int, class_names: Optional[Sequence[str]] = None):
        if not 1 <= num_classes <= 255:
            raise ConfigError(f"indexed labels hold 1..255 classes, got {num_classes}")
        self.num_classes = num_classes
        self.names = ["non-change"] + list(class_names or _default_names(num_classes))
        if len(self.names) != num_classes + 1:
            raise ConfigError(f"expected {num_classes} class names, got {len(self.names) - 1}")
        self.colors: List[Color] = [NON_CHANGE_COLOR] + _class_colors(num_classes)

    def flat(self) -> List[int]:
        """256-entry RGB table for indexed PNGs."""
        table = [channel for color in self.colors for channel in color]
        return table + [0] * (768 - len(table))

    def render(self, label: np.ndarray) -> np.ndarray:
        """Map an H x W label map to an H x W x 3 uint8 color image."""
        lookup = np.array(self.colors, dtype=np.uint8)
        return lookup[np.clip(np.asarray(label, dtype=np.int64), 0, self.num_classes)]


def _default_names(num_classes: int) -> List[str]:
    names = list(SECOND_CLASSES[:num_classes])
    names += [f"class {label}" for label in range(len(names) + 1, num_classes + 1)]
    return names


def _class_colors(num_classes: int) -> List[Color]:
    colors = [tuple(color) for color in SECOND_PALETTE[:num_classes]]
    used = set(colors) | {NON_CHANGE_COLOR}
    rng = np.random.default_rng(num_classes)
    while len(colors) < num_classes:
        candidate = tuple(int(channel) for channel in rng.integers(0, 255, size=3))
        if candidate not in used:
            used.add(candidate)
            colors.append(candidate)
    return colors
