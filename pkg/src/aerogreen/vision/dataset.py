"""Stratified train/validation/test partitioning."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .images import LabeledImage

_SPLIT_STREAM = 0x73706C69
MIN_PER_CLASS = 10


@dataclass(frozen=True)
class DatasetSplit:
    train: list[LabeledImage]
    val: list[LabeledImage]
    test: list[LabeledImage]

    def __iter__(self):
        yield from (self.train, self.val, self.test)


def split(
    images: list[LabeledImage],
    ratios: tuple[float, float, float] = (0.75, 0.15, 0.10),
    seed: int = 0,
) -> DatasetSplit:
    """Shuffle each class with the seeded stream and cut it by the ratios.

    Train and validation sizes round per class; test takes the rest, so
    the three parts always partition the input exactly.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ValueError("ratios must be three non-negative numbers")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    by_class: dict[str, list[LabeledImage]] = {}
    for img in images:
        by_class.setdefault(img.label, []).append(img)
    for label, members in sorted(by_class.items()):
        if len(members) < MIN_PER_CLASS:
            raise ValueError(
                f"class {label!r} has {len(members)} images, "
                f"need at least {MIN_PER_CLASS}"
            )
    rng = np.random.default_rng(np.random.SeedSequence([_SPLIT_STREAM, seed]))
    parts: tuple[list[LabeledImage], ...] = ([], [], [])
    for label in sorted(by_class):
        members = by_class[label]
        order = rng.permutation(len(members))
        n_train = round(ratios[0] * len(members))
        n_val = round(ratios[1] * len(members))
        for pos, idx in enumerate(order):
            if pos < n_train:
                parts[0].append(members[idx])
            elif pos < n_train + n_val:
                parts[1].append(members[idx])
            else:
                parts[2].append(members[idx])
    return DatasetSplit(*parts)
