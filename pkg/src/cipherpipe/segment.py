"""Page segmentation: rows by ink-profile gaps, characters by Viterbi.

Character segmentation maximizes a generative score over the number of
cells m and interior cut points c_1..c_{m-1}:

    log N(m; phi1, sigma1)
      + sum_i log N(w_i; W/phi1, sigma2)       (cell widths)
      + sum_j log Geom(b_j; p)                 (ink crossed at each cut)

where b_j is the ink count of the best cutting curve at c_j. The cut at
the band edge is implicit and carries no ink term.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .page import CutCurve, PageBitmap, RowBand, ink_on_curve, row_ink_profile

log = logging.getLogger(__name__)

DEFAULT_SLANT_SLOPES = (-0.2, -0.1, -0.05, 0.05, 0.1, 0.2)
DEFAULT_CUBIC_A = (-1e-4, -1e-5, 1e-5, 1e-4)
DEFAULT_CUBIC_B = (-0.1, -0.05, 0.05, 0.1)


@dataclass(frozen=True)
class SegmentationParams:
    """Manually set per-cipher parameters of the segmentation model."""

    phi1: float  # mean character count per row
    sigma1: float  # std of character count
    sigma2: float  # std of character width (pixels)
    p: float  # geometric success prob for cut ink counts
    slant_slopes: tuple = DEFAULT_SLANT_SLOPES
    cubic_a: tuple = DEFAULT_CUBIC_A
    cubic_b: tuple = DEFAULT_CUBIC_B
    max_deviation: float | None = None  # default: (W/phi1)/4, set per band
    width_window_sigmas: float = 3.0

    def __post_init__(self):
        if not (self.phi1 > 0 and self.sigma1 > 0 and self.sigma2 > 0):
            raise ValueError("phi1, sigma1, sigma2 must be positive")
        if not (0.0 < self.p < 1.0):
            raise ValueError("p must be in (0, 1)")

    @classmethod
    def from_json(cls, path) -> "SegmentationParams":
        with open(path) as fh:
            raw = json.load(fh)
        for key in ("slant_slopes", "cubic_a", "cubic_b"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(**raw)


@dataclass(frozen=True)
class RowSegmentation:
    """Cutting result for one row band."""

    band: RowBand
    cuts: tuple  # interior cut x positions, strictly increasing
    curves: tuple  # CutCurve chosen at each interior cut
    m: int  # number of cells
    score: float
    x_start: int = 0
    x_end: int | None = None  # exclusive; defaults to band/page width

    def cell_bounds(self, width: int) -> list[tuple[int, int]]:
        end = self.x_end if self.x_end is not None else width
        edges = [self.x_start, *self.cuts, end]
        return [(edges[i], edges[i + 1]) for i in range(len(edges) - 1)]


def log_gauss(x, mu: float, sigma: float):
    x = np.asarray(x, dtype=float)
    return -0.5 * ((x - mu) / sigma) ** 2 - math.log(sigma * math.sqrt(2.0 * math.pi))


def log_geom(b, p: float):
    b = np.asarray(b, dtype=float)
    return b * math.log1p(-p) + math.log(p)


def segment_rows(page: PageBitmap, min_gap: int = 3, min_ink: int = 1) -> list[RowBand]:
    """Split a page into row bands at ink-profile valleys.

    A pixel row is "foreground" when its ink count >= min_ink. Runs of
    foreground rows separated by fewer than min_gap background rows are
    merged into one band.
    """
    profile = row_ink_profile(page)
    fg = profile >= min_ink
    runs = []
    y = 0
    while y < len(fg):
        if fg[y]:
            start = y
            while y < len(fg) and fg[y]:
                y += 1
            runs.append((start, y))
        else:
            y += 1
    if not runs:
        return []
    merged = [runs[0]]
    for start, end in runs[1:]:
        if start - merged[-1][1] < min_gap:
            merged[-1] = (merged[-1][0], end)
        else:
            merged.append((start, end))
    return [RowBand(a, b) for a, b in merged]


def curve_family(params: SegmentationParams, anchor: float, height: int,
                 max_dev: float) -> list[CutCurve]:
    """All candidate curves at an anchor, in simplicity order, limited to
    those whose x-displacement across the band stays within max_dev."""
    family = [CutCurve("vertical", anchor)]
    for b in sorted(params.slant_slopes, key=abs):
        c = CutCurve("slant", anchor, (b,))
        if c.max_deviation(height) <= max_dev:
            family.append(c)
    cubics = [CutCurve("cubic", anchor, (a, b)) for a in params.cubic_a for b in params.cubic_b]
    for c in sorted(cubics, key=lambda c: c.complexity()):
        if c.max_deviation(height) <= max_dev:
            family.append(c)
    return family


def _band_max_dev(params: SegmentationParams, width: int) -> float:
    if params.max_deviation is not None:
        return params.max_deviation
    return (width / params.phi1) / 4.0


def best_curve_at(page: PageBitmap, band: RowBand, x: float,
                  params: SegmentationParams) -> tuple[CutCurve, int]:
    """Family member with minimum crossed ink; ties go to the simplest
    curve (vertical < slant < cubic, then smallest parameter magnitude)."""
    if not (0 <= x < page.width):
        raise ValueError(f"anchor {x} outside [0, {page.width})")
    max_dev = _band_max_dev(params, page.width)
    best = None
    for curve in curve_family(params, x, band.height, max_dev):
        b = ink_on_curve(page, band, curve)
        if best is None or b < best[1]:
            best = (curve, b)
    return best


def _cut_costs(page: PageBitmap, band: RowBand, params: SegmentationParams,
               x_lo: int, x_hi: int) -> tuple[np.ndarray, list]:
    """Vectorized best_curve_at over anchors x_lo..x_hi-1.

    Returns (ink counts, chosen curves), indexed by x - x_lo.
    """
    h = min(band.height, page.height - band.y_top)
    ys = np.arange(band.y_top, band.y_top + h)
    max_dev = _band_max_dev(params, page.width)
    xs_base = np.arange(x_lo, x_hi)
    n = len(xs_base)
    best_ink = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
    best_idx = np.full(n, -1, dtype=np.int64)
    family = curve_family(params, 0.0, band.height, max_dev)
    for ci, curve in enumerate(family):
        offs = curve.x_offsets(band.height)[:h]
        # Round after adding the anchor so half-to-even rounding matches
        # ink_on_curve exactly.
        xs = np.rint(xs_base[None, :] + offs[:, None]).astype(int)  # (h, n)
        valid = (xs >= 0) & (xs < page.width)
        ink = np.where(valid, page.pixels[ys[:, None], np.clip(xs, 0, page.width - 1)], False)
        counts = ink.sum(axis=0)
        better = counts < best_ink
        best_ink[better] = counts[better]
        best_idx[better] = ci
    curves = [CutCurve(family[i].kind, float(x), family[i].params)
              for x, i in zip(xs_base, best_idx)]
    return best_ink, curves


def segment_row(page: PageBitmap, band: RowBand, params: SegmentationParams,
                x_start: int = 0, x_end: int | None = None,
                phi2: float | None = None) -> RowSegmentation:
    """Viterbi search for the best cell count and cut points in a band.

    phi2 (expected character width) defaults to W/phi1; segment_page
    passes a page-global value so short final rows keep the right width
    prior, with the count prior recentered at W/phi2.
    """
    if x_end is None:
        x_end = page.width
    W = x_end - x_start
    if W < 1:
        raise ValueError("band width must be >= 1")
    if phi2 is None:
        phi2 = W / params.phi1
    m_center = W / phi2
    k = params.width_window_sigmas
    w_lo = max(1, int(round(phi2 - k * params.sigma2)))
    w_hi = min(W, max(w_lo, int(round(phi2 + k * params.sigma2))))
    m_lo = max(1, math.floor(m_center - 3 * params.sigma1))
    m_hi = max(m_lo, math.ceil(m_center + 3 * params.sigma1))

    inks, curves = _cut_costs(page, band, params, x_start, x_end)
    cut_score = np.asarray(log_geom(inks, params.p))  # indexed by x - x_start
    widths = np.arange(w_lo, w_hi + 1)
    width_score = {int(w): float(log_gauss(w, phi2, params.sigma2)) for w in widths}

    neg = -np.inf
    # F[x] = best score of j cells covering [x_start, x_start + x)
    F = np.full(W + 1, neg)
    prev = F.copy()
    back = np.zeros((m_hi + 1, W + 1), dtype=np.int64)
    finals = {}  # m -> (score without m-prior, F snapshot row for backtrack)
    backs = {}
    for w in widths:
        if w <= W:
            F[w] = width_score[int(w)]
            back[1, w] = 0
    if m_lo <= 1 <= m_hi and np.isfinite(F[W]):
        finals[1] = F[W]
    backs[1] = back[1].copy()
    for j in range(2, m_hi + 1):
        prev, F = F, np.full(W + 1, neg)
        for w in widths:
            w = int(w)
            lo = w  # new cell [x-w, x); previous cells end at x-w >= w_lo
            xs = np.arange(lo + 1, W + 1)  # cut at xs - w must be interior (> 0)
            if len(xs) == 0:
                continue
            cand = prev[xs - w] + cut_score[xs - w] + width_score[w]
            better = cand > F[xs]
            F[xs[better]] = cand[better]
            back[j, xs[better]] = w
        if m_lo <= j <= m_hi and np.isfinite(F[W]):
            finals[j] = F[W]
        backs[j] = back[j].copy()

    best_m, best_total = None, neg
    for m, score in finals.items():
        total = score + float(log_gauss(m, m_center, params.sigma1))
        if total > best_total:
            best_m, best_total = m, total
    if best_m is None:
        log.warning("no feasible segmentation in width window [%d, %d]; "
                    "falling back to uniform cuts", w_lo, w_hi)
        m = max(1, int(round(m_center)))
        edges = np.rint(np.linspace(0, W, m + 1)).astype(int)
        cuts = tuple(int(e) + x_start for e in edges[1:-1])
        cvs = tuple(curves[c - x_start] for c in cuts)
        return RowSegmentation(band, cuts, cvs, m, float("-inf"), x_start, x_end)

    # backtrack
    cuts_rel = []
    x = W
    for j in range(best_m, 0, -1):
        w = int(backs[j][x])
        x -= w
        if j > 1:
            cuts_rel.append(x)
    cuts_rel.reverse()
    cuts = tuple(c + x_start for c in cuts_rel)
    cvs = tuple(curves[c - x_start] for c in cuts)
    return RowSegmentation(band, cuts, cvs, best_m, best_total, x_start, x_end)


def segment_page(page: PageBitmap, params: SegmentationParams,
                 min_gap: int = 3, min_ink: int = 1) -> tuple[list[RowSegmentation], list[dict]]:
    """Segment a whole page and emit the cell manifest in reading order.

    Each band is trimmed horizontally to its ink span, and the width
    prior phi2 is derived once from the widest band so that short final
    rows are not forced to the page-wide character count.
    """
    bands = segment_rows(page, min_gap=min_gap, min_ink=min_ink)
    spans = []
    for band in bands:
        cols = np.flatnonzero(page.pixels[band.y_top:band.y_bottom].any(axis=0))
        spans.append((int(cols[0]), int(cols[-1]) + 1))
    phi2 = max(x1 - x0 for x0, x1 in spans) / params.phi1
    rows = []
    for band, (x0, x1) in zip(bands, spans):
        # Pad the ink span out to a whole number of expected widths so
        # edge characters with narrow ink are not squeezed below the
        # feasible width window.
        m_est = max(1, int(round((x1 - x0) / phi2)))
        pad = max(0, int(round(m_est * phi2)) - (x1 - x0))
        x0p = max(0, x0 - pad // 2)
        x1p = min(page.width, x1 + (pad - (x0 - x0p)))
        rows.append(segment_row(page, band, params, x_start=x0p, x_end=x1p, phi2=phi2))
    return rows, build_manifest(rows, page.width)


def build_manifest(rows: list[RowSegmentation], page_width: int) -> list[dict]:
    cells = []
    for ri, row in enumerate(rows):
        bounds = row.cell_bounds(page_width)
        curve_at = {int(c.anchor): c for c in row.curves}
        for x0, x1 in bounds:
            curve = curve_at.get(x0)
            cells.append({
                "row_index": ri,
                "x_start": int(x0),
                "x_end": int(x1),
                "y_top": int(row.band.y_top),
                "y_bottom": int(row.band.y_bottom),
                "curve_kind": curve.kind if curve else "vertical",
                "curve_params": list(curve.params) if curve else [],
            })
    return cells


def save_manifest(cells: list[dict], path) -> None:
    with open(path, "w") as fh:
        json.dump(cells, fh, indent=1)


def load_manifest(path) -> list[dict]:
    with open(path) as fh:
        cells = json.load(fh)
    if not isinstance(cells, list):
        raise ValueError("manifest must be a JSON array of cells")
    required = {"row_index", "x_start", "x_end", "curve_kind", "curve_params"}
    for cell in cells:
        missing = required - cell.keys()
        if missing:
            raise ValueError(f"manifest cell missing fields: {sorted(missing)}")
    return cells
