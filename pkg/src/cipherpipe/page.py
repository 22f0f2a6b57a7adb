"""Binary page bitmaps, row bands, and cutting curves.

Pages use image coordinates: origin at the upper-left corner, x grows
rightward, y grows downward. A pixel is "ink" when True.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image

CURVE_KINDS = ("vertical", "slant", "cubic")


@dataclass(frozen=True)
class PageBitmap:
    """Immutable binary raster of one manuscript page."""

    pixels: np.ndarray  # bool array, shape (height, width)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=bool)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"page must be a non-empty 2-D grid, got shape {px.shape}")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def ink_count(self) -> int:
        return int(self.pixels.sum())


@dataclass(frozen=True)
class RowBand:
    """Horizontal slice of a page containing one line of characters.

    y_bottom is exclusive.
    """

    y_top: int
    y_bottom: int

    def __post_init__(self):
        if not (0 <= self.y_top < self.y_bottom):
            raise ValueError(f"bad band [{self.y_top}, {self.y_bottom})")

    @property
    def height(self) -> int:
        return self.y_bottom - self.y_top


@dataclass(frozen=True)
class CutCurve:
    """A cutting curve through a row band, anchored at x = anchor on the
    band's top row.

    kind "vertical": x(dy) = anchor
    kind "slant":    x(dy) = anchor + b*dy
    kind "cubic":    x(dy) = anchor + a*dy^3 + b*dy

    dy is measured downward from the band top, so every curve passes
    through its anchor at dy = 0.
    """

    kind: str
    anchor: float
    params: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in CURVE_KINDS:
            raise ValueError(f"unknown curve kind {self.kind!r}")
        n_expected = {"vertical": 0, "slant": 1, "cubic": 2}[self.kind]
        if len(self.params) != n_expected:
            raise ValueError(f"{self.kind} curve takes {n_expected} params, got {len(self.params)}")

    def x_offsets(self, height: int) -> np.ndarray:
        """Offsets from the anchor for dy = 0 .. height-1."""
        dy = np.arange(height, dtype=float)
        if self.kind == "vertical":
            return np.zeros(height)
        if self.kind == "slant":
            (b,) = self.params
            return b * dy
        a, b = self.params
        return a * dy**3 + b * dy

    def x_at(self, height: int) -> np.ndarray:
        """Rasterized x coordinate (one per pixel row of the band)."""
        return np.rint(self.anchor + self.x_offsets(height)).astype(int)

    def max_deviation(self, height: int) -> float:
        return float(np.max(np.abs(self.x_offsets(height)))) if height > 0 else 0.0

    def complexity(self) -> tuple:
        """Sort key implementing "simplest curve wins" tie-breaking."""
        rank = CURVE_KINDS.index(self.kind)
        return (rank, sum(abs(p) for p in self.params))


def binarize(gray: np.ndarray, threshold: int = 128) -> np.ndarray:
    """Ink iff gray value < threshold. Idempotent on 0/255 images."""
    return np.asarray(gray) < threshold


def load_page(path, threshold: int = 128) -> PageBitmap:
    """Load a PNG (or any raster) as a binary page bitmap.

    Color inputs are converted to luminance before thresholding.
    """
    try:
        with Image.open(path) as img:
            gray = np.asarray(img.convert("L"))
    except (OSError, ValueError) as exc:
        raise ValueError(f"cannot read image {path}: {exc}") from exc
    if gray.size == 0:
        raise ValueError(f"zero-area image: {path}")
    return PageBitmap(binarize(gray, threshold))


def save_page(page: PageBitmap, path) -> None:
    """Write a page as an 8-bit grayscale PNG (ink = black)."""
    gray = np.where(page.pixels, 0, 255).astype(np.uint8)
    Image.fromarray(gray, mode="L").save(path)


def ink_on_curve(page: PageBitmap, band: RowBand, curve: CutCurve) -> int:
    """Number of ink pixels on the rasterized curve inside the band.

    The rasterization visits exactly one x per pixel row. Rows where the
    curve exits the page count as 0 ink.
    """
    if not (0 <= curve.anchor < page.width):
        raise ValueError(f"anchor {curve.anchor} outside [0, {page.width})")
    xs = curve.x_at(band.height)
    ys = np.arange(band.y_top, min(band.y_bottom, page.height))
    xs = xs[: len(ys)]
    valid = (xs >= 0) & (xs < page.width)
    return int(page.pixels[ys[valid], xs[valid]].sum())


def row_ink_profile(page: PageBitmap) -> np.ndarray:
    """Per-pixel-row ink counts (length = page height)."""
    return page.pixels.sum(axis=1)
