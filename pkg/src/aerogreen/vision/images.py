"""Labeled RGB images and their on-disk forms.

PPM (P6) is read and written directly so a dataset never depends on a
decoder library; PNG goes through Pillow. A dataset directory holds one
subdirectory per class with image files inside, which lets a captured
corpus drop in where the synthetic one was.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from ..simcore import HEALTH_CLASSES


class ImageError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledImage:
    """One training example: uint8 HxWx3 pixels plus its class label."""

    image_id: str
    label: str
    pixels: np.ndarray = field(repr=False)
    source_id: str | None = None

    def __post_init__(self) -> None:
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise ImageError(
                f"{self.image_id}: expected uint8 HxWx3 pixels, got "
                f"{px.dtype} {px.shape}"
            )


def write_ppm(path: str | Path, pixels: np.ndarray) -> None:
    h, w = pixels.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(pixels).tobytes())


def read_ppm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    # header is whitespace-separated tokens, # starts a comment to EOL
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageError(f"{path}: truncated PPM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval, then raster
    if fields[0] != b"P6":
        raise ImageError(f"{path}: not a binary PPM (magic {fields[0]!r})")
    try:
        w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    except ValueError:
        raise ImageError(f"{path}: malformed PPM header") from None
    if maxval != 255:
        raise ImageError(f"{path}: unsupported maxval {maxval}")
    raster = data[pos : pos + w * h * 3]
    if len(raster) != w * h * 3:
        raise ImageError(f"{path}: raster shorter than {w}x{h}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w, 3).copy()


def write_image(path: str | Path, pixels: np.ndarray) -> None:
    path = Path(path)
    if path.suffix == ".ppm":
        write_ppm(path, pixels)
    elif path.suffix == ".png":
        Image.fromarray(pixels, mode="RGB").save(path)
    else:
        raise ImageError(f"unsupported image format {path.suffix!r}")


def read_image(path: str | Path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".ppm":
        return read_ppm(path)
    if path.suffix == ".png":
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    raise ImageError(f"unsupported image format {path.suffix!r}")


def load_dataset(
    directory: str | Path, classes: tuple[str, ...] = HEALTH_CLASSES
) -> list[LabeledImage]:
    """Read <dir>/<class>/<id>.ppm|png into labeled images, sorted by id."""
    root = Path(directory)
    if not root.is_dir():
        raise ImageError(f"dataset directory {root} does not exist")
    out: list[LabeledImage] = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        if sub.name not in classes:
            raise ImageError(
                f"unexpected class directory {sub.name!r}, know {list(classes)}"
            )
        for file in sorted(sub.iterdir()):
            if file.suffix not in (".ppm", ".png"):
                continue
            out.append(
                LabeledImage(
                    image_id=f"{sub.name}/{file.stem}",
                    label=sub.name,
                    pixels=read_image(file),
                )
            )
    return out


def save_dataset(directory: str | Path, images: list[LabeledImage],
                 fmt: str = "ppm") -> int:
    """Write images into the class-directory layout; returns files written."""
    if fmt not in ("ppm", "png"):
        raise ImageError(f"unsupported dataset format {fmt!r}")
    root = Path(directory)
    for img in images:
        sub = root / img.label
        sub.mkdir(parents=True, exist_ok=True)
        name = img.image_id.split("/", 1)[-1].replace("/", "_")
        write_image(sub / f"{name}.{fmt}", img.pixels)
    return len(images)
