"""Glyph normalization and feature extraction.

Every segmented cell is scaled to a 105x105 grayscale canvas. Feature
vectors come from pairwise cross-correlation similarities (SimMat), a
raw-pixel block-average baseline, or an external embedding file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.fft
from PIL import Image

from .page import PageBitmap

GLYPH_SIZE = 105

EXTRACTORS = ("simmat", "external", "rawpixel")


@dataclass(frozen=True)
class GlyphImage:
    """A normalized 105x105 grayscale glyph (values in [0, 1], ink = 1)."""

    grid: np.ndarray
    source: dict | None = None  # manifest cell this glyph came from

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if g.shape != (GLYPH_SIZE, GLYPH_SIZE):
            raise ValueError(f"glyph grid must be {GLYPH_SIZE}x{GLYPH_SIZE}, got {g.shape}")
        if g.min() < 0.0 or g.max() > 1.0:
            raise ValueError("glyph values must lie in [0, 1]")
        g.setflags(write=False)
        object.__setattr__(self, "grid", g)


@dataclass(frozen=True)
class FeatureMatrix:
    """n glyphs x d features, plus the extractor that produced them."""

    rows: np.ndarray  # (n, d) float
    extractor: str

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2:
            raise ValueError("feature rows must form a 2-D matrix")
        if self.extractor not in EXTRACTORS:
            raise ValueError(f"unknown extractor tag {self.extractor!r}")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]


def normalize_glyph(cell, source: dict | None = None) -> GlyphImage:
    """Scale a cell bitmap to 105x105, preserving aspect ratio.

    The larger dimension is bilinearly resampled to 105 and the result
    is centered on a blank canvas. Boolean input maps ink to 1.0.
    """
    arr = np.asarray(cell)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"zero-area cell (shape {arr.shape})")
    gray = arr.astype(np.float32) if arr.dtype != bool else arr.astype(np.float32)
    h, w = gray.shape
    scale = GLYPH_SIZE / max(h, w)
    new_h = max(1, int(round(h * scale)))
    new_w = max(1, int(round(w * scale)))
    if (new_h, new_w) != (h, w):
        img = Image.fromarray(gray, mode="F").resize((new_w, new_h), Image.BILINEAR)
        gray = np.asarray(img)
    grid = np.zeros((GLYPH_SIZE, GLYPH_SIZE), dtype=float)
    y0 = (GLYPH_SIZE - new_h) // 2
    x0 = (GLYPH_SIZE - new_w) // 2
    grid[y0:y0 + new_h, x0:x0 + new_w] = np.clip(gray, 0.0, 1.0)
    return GlyphImage(grid, source)


def extract_cells(page: PageBitmap, manifest: list[dict], tighten: bool = True) -> list[np.ndarray]:
    """Crop manifest cells out of a page.

    With tighten=True each crop shrinks to its ink bounding box, which
    removes the surrounding band whitespace before normalization. Cells
    with no ink stay as-is.
    """
    cells = []
    for cell in manifest:
        y0 = int(cell.get("y_top", 0))
        y1 = int(cell.get("y_bottom", page.height))
        crop = page.pixels[y0:y1, cell["x_start"]:cell["x_end"]]
        if tighten and crop.any():
            ys, xs = np.nonzero(crop)
            crop = crop[ys.min():ys.max() + 1, xs.min():xs.max() + 1]
        cells.append(crop)
    return cells


def glyphs_from_page(page: PageBitmap, manifest: list[dict], tighten: bool = True) -> list[GlyphImage]:
    return [normalize_glyph(c, source=m) for c, m in zip(extract_cells(page, manifest, tighten), manifest)]


def simmat_similarity(a: GlyphImage, b: GlyphImage) -> float:
    """Maximum of the full 2-D cross-correlation of two glyphs.

    Symmetric by construction: the pair is put in a canonical order
    before correlating, so s(a, b) == s(b, a) exactly.
    """
    ga, gb = a.grid, b.grid
    if gb.tobytes() < ga.tobytes():
        ga, gb = gb, ga
    return _corr_max_pair(ga, gb)


def _corr_max_pair(ga: np.ndarray, gb: np.ndarray) -> float:
    size = scipy.fft.next_fast_len(2 * GLYPH_SIZE - 1)
    fa = scipy.fft.rfft2(ga, (size, size))
    fb = scipy.fft.rfft2(gb, (size, size))
    corr = scipy.fft.irfft2(fa * np.conj(fb), (size, size))
    return float(max(corr.max(), 0.0))


def simmat_features(glyphs: list[GlyphImage], workers: int = 1) -> FeatureMatrix:
    """Pairwise-similarity features: row i = [s(x_i, x_j)]_j. O(n^2)."""
    n = len(glyphs)
    if n < 1:
        raise ValueError("need at least one glyph")
    # Byte-identical glyphs share a similarity row, so correlate unique
    # grids only and broadcast the result back (exact, not approximate).
    uniq: dict[bytes, int] = {}
    inverse = np.empty(n, dtype=int)
    reps = []
    for i, g in enumerate(glyphs):
        key = g.grid.tobytes()
        uid = uniq.get(key)
        if uid is None:
            uid = uniq[key] = len(reps)
            reps.append(g.grid)
        inverse[i] = uid
    u = len(reps)
    size = scipy.fft.next_fast_len(2 * GLYPH_SIZE - 1)
    grids = np.stack(reps).astype(np.float32)
    ffts = scipy.fft.rfft2(grids, (size, size), axes=(1, 2), workers=workers)
    usim = np.zeros((u, u), dtype=float)
    chunk = max(1, int(2e8 // (16 * size * size)))  # cap scratch memory
    for i in range(u):
        fa = ffts[i]
        for j0 in range(i, u, chunk):
            j1 = min(u, j0 + chunk)
            corr = scipy.fft.irfft2(fa[None] * np.conj(ffts[j0:j1]), (size, size),
                                    axes=(1, 2), workers=workers)
            vals = corr.reshape(j1 - j0, -1).max(axis=1)
            usim[i, j0:j1] = np.maximum(vals, 0.0)
            usim[j0:j1, i] = usim[i, j0:j1]
    return FeatureMatrix(usim[inverse][:, inverse], "simmat")


def rawpixel_features(glyphs: list[GlyphImage], block: int = 21) -> FeatureMatrix:
    """Block-average each glyph down to a ceil(105/block)^2 vector."""
    if block < 1:
        raise ValueError("block must be >= 1")
    nb = -(-GLYPH_SIZE // block)
    rows = []
    for g in glyphs:
        vec = np.empty((nb, nb))
        for bi in range(nb):
            for bj in range(nb):
                patch = g.grid[bi * block:(bi + 1) * block, bj * block:(bj + 1) * block]
                vec[bi, bj] = patch.mean()
        rows.append(vec.ravel())
    return FeatureMatrix(np.stack(rows), "rawpixel")


def export_features(features: FeatureMatrix, path) -> None:
    """Write the shared feature-file format: {dim, count, vectors}."""
    payload = {"dim": features.d, "count": features.n,
               "vectors": [list(map(float, row)) for row in features.rows]}
    with open(path, "w") as fh:
        json.dump(payload, fh)


def import_features(path, manifest: list[dict]) -> FeatureMatrix:
    """Load an externally produced feature file, checked against the
    segmentation manifest it must follow."""
    with open(path) as fh:
        payload = json.load(fh)
    for key in ("dim", "count", "vectors"):
        if key not in payload:
            raise ValueError(f"feature file missing {key!r}")
    vectors = payload["vectors"]
    if payload["count"] != len(manifest) or len(vectors) != len(manifest):
        raise ValueError(f"feature count {len(vectors)} does not match "
                         f"manifest of {len(manifest)} cells")
    d = payload["dim"]
    if any(len(v) != d for v in vectors):
        raise ValueError("inconsistent vector dimensions in feature file")
    return FeatureMatrix(np.asarray(vectors, dtype=float), "external")


def pca_reduce(features: FeatureMatrix, d: int) -> FeatureMatrix:
    """Project features onto their top-d principal components."""
    X = features.rows - features.rows.mean(axis=0)
    d = min(d, *X.shape)
    _, _, vt = np.linalg.svd(X, full_matrices=False)
    return FeatureMatrix(X @ vt[:d].T, features.extractor)
