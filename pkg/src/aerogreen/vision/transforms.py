"""Geometric augmentation built on one inverse-mapped bilinear sampler.

Rotation and zoom compose into a single affine resample about the image
center; flips are exact array reversals. Sampling clamps to the edge, so
transformed images never gain out-of-frame black borders.
"""
from __future__ import annotations

import numpy as np

from .images import LabeledImage

_AUG_STREAM = 0x617567


def _affine_sample(pixels: np.ndarray, inverse: np.ndarray) -> np.ndarray:
    """Resample with a dest->source 2x3 affine map, bilinear, edge clamp."""
    h, w = pixels.shape[:2]
    rr, cc = np.mgrid[0:h, 0:w].astype(float)
    src_r = inverse[0, 0] * rr + inverse[0, 1] * cc + inverse[0, 2]
    src_c = inverse[1, 0] * rr + inverse[1, 1] * cc + inverse[1, 2]
    r0 = np.floor(src_r)
    c0 = np.floor(src_c)
    fr = (src_r - r0)[..., None]
    fc = (src_c - c0)[..., None]
    r0 = r0.astype(int)
    c0 = c0.astype(int)
    r0c = np.clip(r0, 0, h - 1)
    r1c = np.clip(r0 + 1, 0, h - 1)
    c0c = np.clip(c0, 0, w - 1)
    c1c = np.clip(c0 + 1, 0, w - 1)
    img = pixels.astype(float)
    top = img[r0c, c0c] * (1.0 - fc) + img[r0c, c1c] * fc
    bot = img[r1c, c0c] * (1.0 - fc) + img[r1c, c1c] * fc
    out = top * (1.0 - fr) + bot * fr
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _rotation_zoom_inverse(degrees: float, factor: float,
                           h: int, w: int) -> np.ndarray:
    """Inverse map of rotate-then-zoom about the pixel-grid center."""
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ang = np.radians(degrees)
    cos_a, sin_a = np.cos(ang), np.sin(ang)
    # undo zoom first, then rotate by -angle
    m = np.array(
        [[cos_a / factor, -sin_a / factor],
         [sin_a / factor, cos_a / factor]]
    )
    offset = np.array([cy, cx]) - m @ np.array([cy, cx])
    return np.column_stack([m, offset])


def rotate(pixels: np.ndarray, degrees: float) -> np.ndarray:
    return _affine_sample(
        pixels, _rotation_zoom_inverse(degrees, 1.0, *pixels.shape[:2])
    )


def zoom(pixels: np.ndarray, factor: float) -> np.ndarray:
    if factor <= 0:
        raise ValueError("zoom factor must be positive")
    return _affine_sample(
        pixels, _rotation_zoom_inverse(0.0, factor, *pixels.shape[:2])
    )


def hflip(pixels: np.ndarray) -> np.ndarray:
    return pixels[:, ::-1].copy()


def vflip(pixels: np.ndarray) -> np.ndarray:
    return pixels[::-1, :].copy()


def random_variant(pixels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One augmentation draw: rotation, zoom, then coin-flip mirrors."""
    degrees = rng.uniform(-30.0, 30.0)
    factor = rng.uniform(0.8, 1.2)
    out = _affine_sample(
        pixels, _rotation_zoom_inverse(degrees, factor, *pixels.shape[:2])
    )
    if rng.random() < 0.5:
        out = hflip(out)
    if rng.random() < 0.5:
        out = vflip(out)
    return out


def augment(images: list[LabeledImage], target_count: int,
            seed: int) -> list[LabeledImage]:
    """Grow the set to exactly target_count by transforming seeded picks.

    Originals are kept verbatim; every generated image records which
    input it came from.
    """
    if not images:
        raise ValueError("cannot augment an empty image list")
    if target_count < len(images):
        raise ValueError(
            f"target_count {target_count} below input count {len(images)}"
        )
    rng = np.random.default_rng(np.random.SeedSequence([_AUG_STREAM, seed]))
    out = list(images)
    for i in range(target_count - len(images)):
        parent = images[int(rng.integers(len(images)))]
        out.append(
            LabeledImage(
                image_id=f"{parent.image_id}+aug{i}",
                label=parent.label,
                pixels=random_variant(parent.pixels, rng),
                source_id=parent.image_id,
            )
        )
    return out
