"""Procedural leaf images for desk-scale training runs.

Each class has a distinct, machine-learnable signature: healthy leaves
are green, drought-stressed ones shift toward yellow-brown and darken at
the rim, rust carries orange pustules on otherwise healthy tissue. All
randomness comes from one seeded stream per (class, seed) pair.
"""
from __future__ import annotations

import numpy as np

from ..simcore import HEALTH_CLASSES
from .images import LabeledImage

SIZE = 64
_LEAF_STREAM = 0x6C656166

# class color anchors, RGB
_HEALTHY_BASE = np.array([62.0, 140.0, 52.0])
_DROUGHT_BASE = np.array([168.0, 136.0, 46.0])
_DESICCATED = np.array([96.0, 64.0, 30.0])
_PUSTULE = np.array([224.0, 118.0, 28.0])


def _leaf_mask(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Elliptical blob with a wavy rim; returns (mask, radial coordinate)."""
    yy, xx = np.mgrid[0:SIZE, 0:SIZE].astype(float)
    cy = 31.5 + rng.uniform(-3.0, 3.0)
    cx = 31.5 + rng.uniform(-3.0, 3.0)
    ry = rng.uniform(16.0, 23.0)
    rx = rng.uniform(18.0, 26.0)
    theta = rng.uniform(0.0, np.pi)
    dy, dx = yy - cy, xx - cx
    u = dx * np.cos(theta) + dy * np.sin(theta)
    v = -dx * np.sin(theta) + dy * np.cos(theta)
    phi = np.arctan2(v, u)
    wobble = 1.0 + 0.07 * np.sin(4.0 * phi + rng.uniform(0.0, 2.0 * np.pi))
    rho = np.sqrt((u / rx) ** 2 + (v / ry) ** 2) / wobble
    return rho <= 1.0, rho


def _paint(base: np.ndarray, mask: np.ndarray,
           rng: np.random.Generator) -> np.ndarray:
    gray = rng.uniform(165.0, 190.0)
    img = np.full((SIZE, SIZE, 3), gray)
    tint = rng.uniform(-14.0, 14.0, size=3)
    img[mask] = base + tint
    return img


def generate_synthetic_leaf(label: str, seed: int) -> LabeledImage:
    if label not in HEALTH_CLASSES:
        raise ValueError(f"unknown class {label!r}")
    class_index = HEALTH_CLASSES.index(label)
    rng = np.random.default_rng(
        np.random.SeedSequence([_LEAF_STREAM, class_index, seed])
    )
    mask, rho = _leaf_mask(rng)

    if label == "drought":
        img = _paint(_DROUGHT_BASE, mask, rng)
        # rim dries out first: blend toward dark brown as rho approaches 1
        fade = np.clip((rho - 0.45) / 0.55, 0.0, 1.0)[..., None]
        img[mask] = (img * (1.0 - fade) + _DESICCATED * fade)[mask]
    else:
        img = _paint(_HEALTHY_BASE, mask, rng)

    if label == "rust":
        _stamp_pustules(img, mask, rho, rng)

    img += rng.normal(0.0, 4.0, size=img.shape)
    pixels = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return LabeledImage(image_id=f"{label}/{seed}", label=label, pixels=pixels)


def _stamp_pustules(img: np.ndarray, mask: np.ndarray, rho: np.ndarray,
                    rng: np.random.Generator) -> None:
    """Place 5..15 orange disks on leaf tissue, never touching each other."""
    count = int(rng.integers(5, 16))
    yy, xx = np.mgrid[0:SIZE, 0:SIZE].astype(float)
    interior = np.argwhere(mask & (rho <= 0.72))
    placed: list[tuple[float, float, float]] = []
    attempts = 0
    while len(placed) < count and attempts < 4000:
        attempts += 1
        cy, cx = interior[rng.integers(len(interior))]
        r = rng.uniform(2.0, 4.0)
        # a 2 px moat keeps every pustule its own connected component
        if any(np.hypot(cy - py, cx - px) < r + pr + 2.0
               for py, px, pr in placed):
            continue
        placed.append((float(cy), float(cx), r))
        disk = (yy - cy) ** 2 + (xx - cx) ** 2 <= r**2
        img[disk] = _PUSTULE + rng.uniform(-10.0, 10.0, size=3)


def synthetic_dataset(total: int, seed: int) -> list[LabeledImage]:
    """Generate `total` leaves spread round-robin over the classes."""
    if total < 1:
        raise ValueError("total must be positive")
    out: list[LabeledImage] = []
    for i in range(total):
        label = HEALTH_CLASSES[i % len(HEALTH_CLASSES)]
        out.append(generate_synthetic_leaf(label, seed * 1_000_003 + i))
    return out
