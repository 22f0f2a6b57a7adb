"""Ground-truthed synthetic cipher pages.

Glyphs are procedural (random polyline strokes on a small grid) rather
than font-rendered, in fixed-width or variable-width layout. Every page
comes with its gold segmentation, gold transcription, key, and
plaintext, so end-to-end accuracy can be measured exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, ImageDraw

from .page import PageBitmap

# relative frequencies of English letters, for homophone allocation
ENGLISH_FREQ = {
    "a": 8.2, "b": 1.5, "c": 2.8, "d": 4.3, "e": 12.7, "f": 2.2, "g": 2.0,
    "h": 6.1, "i": 7.0, "j": 0.15, "k": 0.77, "l": 4.0, "m": 2.4, "n": 6.7,
    "o": 7.5, "p": 1.9, "q": 0.095, "r": 6.0, "s": 6.3, "t": 9.1, "u": 2.8,
    "v": 0.98, "w": 2.4, "x": 0.15, "y": 2.0, "z": 0.074,
}

LATIN_WORDS = (
    "lorem ipsum dolor sit amet consectetur adipiscing elit sed do eiusmod "
    "tempor incididunt ut labore et dolore magna aliqua enim ad minim veniam "
    "quis nostrud exercitation ullamco laboris nisi aliquip ex ea commodo "
    "consequat duis aute irure in reprehenderit voluptate velit esse cillum "
    "fugiat nulla pariatur excepteur sint occaecat cupidatat non proident "
    "sunt culpa qui officia deserunt mollit anim id est laborum atque rerum "
    "facilis expedita distinctio nam libero tempore cum soluta nobis eligendi "
    "optio cumque nihil impedit quo minus quod maxime placeat facere possimus "
    "omnis voluptas assumenda omnis dolor repellendus temporibus autem "
    "quibusdam officiis debitis aut necessitatibus saepe eveniet voluptates "
    "repudiandae recusandae itaque earum hic tenetur a sapiente delectus"
).split()


@dataclass(frozen=True)
class CipherKey:
    """Letter-to-glyph mapping; simple keys have singleton glyph lists."""

    letter_to_glyphs: dict  # letter -> tuple of glyph IDs
    weights: dict  # letter -> tuple of sampling probabilities

    def __post_init__(self):
        seen = set()
        for letter, glyphs in self.letter_to_glyphs.items():
            if not glyphs:
                raise ValueError(f"letter {letter!r} has no glyphs")
            if seen & set(glyphs):
                raise ValueError("glyph sets must be disjoint across letters")
            seen.update(glyphs)
            w = self.weights[letter]
            if len(w) != len(glyphs) or abs(sum(w) - 1.0) > 1e-9:
                raise ValueError(f"bad weights for letter {letter!r}")

    @property
    def is_simple(self) -> bool:
        return all(len(g) == 1 for g in self.letter_to_glyphs.values())

    def inverse(self) -> dict:
        """glyph ID -> letter."""
        return {g: letter for letter, glyphs in self.letter_to_glyphs.items()
                for g in glyphs}

    def to_json(self, path) -> None:
        payload = {"letter_to_glyphs": {k: list(v) for k, v in self.letter_to_glyphs.items()},
                   "weights": {k: list(v) for k, v in self.weights.items()}}
        with open(path, "w") as fh:
            json.dump(payload, fh)

    @classmethod
    def from_json(cls, path) -> "CipherKey":
        with open(path) as fh:
            raw = json.load(fh)
        return cls({k: tuple(v) for k, v in raw["letter_to_glyphs"].items()},
                   {k: tuple(v) for k, v in raw["weights"].items()})


@dataclass(frozen=True)
class GlyphSet:
    """K procedurally generated glyphs, stored as stroke control points
    so instances can be re-rasterized with per-instance deformation."""

    strokes: tuple  # per glyph: tuple of strokes; stroke = tuple of (x, y) in [0,1]^2
    widths: tuple  # nominal ink width per glyph (pixels)
    height: int
    width_mode: str  # "fixed" or "variable"
    thickness: int = 3

    @property
    def K(self) -> int:
        return len(self.strokes)

    @property
    def max_width(self) -> int:
        return max(self.widths)

    def render(self, glyph_id: int, rng: np.random.Generator | None = None,
               deform_scale: float = 0.0) -> np.ndarray:
        """Rasterize one glyph instance as a boolean bitmap."""
        w, h = self.widths[glyph_id], self.height
        img = Image.new("1", (w, h), 0)
        draw = ImageDraw.Draw(img)
        for stroke in self.strokes[glyph_id]:
            pts = np.asarray(stroke, dtype=float)
            if deform_scale > 0 and rng is not None:
                pts = pts + rng.normal(scale=deform_scale, size=pts.shape)
            xy = [(float(np.clip(x, 0, 1)) * (w - 1), float(np.clip(y, 0, 1)) * (h - 1))
                  for x, y in pts]
            draw.line(xy, fill=1, width=self.thickness)
        return np.asarray(img, dtype=bool)


def make_glyph_set(K: int, mode: str = "fixed", seed: int = 0,
                   height: int = 32, width_fixed: int = 24,
                   width_range: tuple = (14, 30)) -> GlyphSet:
    """Generate K visually distinct random stroke glyphs."""
    if mode not in ("fixed", "variable"):
        raise ValueError("mode must be 'fixed' or 'variable'")
    rng = np.random.default_rng(seed)
    strokes = []
    widths = []
    rendered = []
    gs = GlyphSet((), (), height, mode)
    attempts = 0
    while len(strokes) < K:
        attempts += 1
        if attempts > 100 * K:
            raise RuntimeError("could not generate distinct glyphs")
        n_strokes = rng.integers(3, 7)
        glyph = []
        for _ in range(n_strokes):
            n_pts = rng.integers(2, 4)
            glyph.append(tuple((float(x), float(y))
                               for x, y in rng.uniform(0.05, 0.95, size=(n_pts, 2))))
        width = width_fixed if mode == "fixed" else int(rng.integers(*width_range))
        trial = GlyphSet((tuple(glyph),), (width,), height, mode)
        bitmap = trial.render(0)
        if not bitmap.any():
            continue
        if any(b.shape == bitmap.shape and np.array_equal(b, bitmap) for b in rendered):
            continue
        strokes.append(tuple(glyph))
        widths.append(width)
        rendered.append(bitmap)
    return GlyphSet(tuple(strokes), tuple(widths), height, mode)


def make_key(alphabet, K: int, mode: str = "simple", seed: int = 0,
             freq: dict | None = None) -> CipherKey:
    """Deterministic cipher key. Homophonic keys allocate glyph counts
    proportional to letter frequency (each letter keeps at least one)."""
    alphabet = tuple(alphabet)
    rng = np.random.default_rng(seed)
    if mode == "simple":
        if K != len(alphabet):
            raise ValueError("simple substitution needs K == |alphabet|")
        perm = rng.permutation(K)
        return CipherKey({ch: (int(perm[i]),) for i, ch in enumerate(alphabet)},
                         {ch: (1.0,) for ch in alphabet})
    if mode != "homophonic":
        raise ValueError("mode must be 'simple' or 'homophonic'")
    if K < len(alphabet):
        raise ValueError("homophonic substitution needs K >= |alphabet|")
    if freq is None:
        freq = {ch: ENGLISH_FREQ.get(ch, 1.0) for ch in alphabet}
    total = sum(freq[ch] for ch in alphabet)
    # proportional allocation, each letter >= 1, largest remainders first
    raw = {ch: K * freq[ch] / total for ch in alphabet}
    counts = {ch: max(1, int(raw[ch])) for ch in alphabet}
    while sum(counts.values()) > K:
        over = [c for c in counts if counts[c] > 1]
        ch = max(over, key=lambda c: (counts[c] - raw[c], c))
        counts[ch] -= 1
    order = sorted(alphabet, key=lambda c: (raw[c] - counts[c]), reverse=True)
    i = 0
    while sum(counts.values()) < K:
        counts[order[i % len(order)]] += 1
        i += 1
    glyph_ids = list(rng.permutation(K))
    mapping, weights = {}, {}
    pos = 0
    for ch in alphabet:
        n = counts[ch]
        mapping[ch] = tuple(int(g) for g in glyph_ids[pos:pos + n])
        weights[ch] = tuple([1.0 / n] * n)
        pos += n
    return CipherKey(mapping, weights)


def encipher(plaintext: str, key: CipherKey, seed: int = 0):
    """Substitute each letter by a glyph ID. Returns (glyph IDs, gold
    records of (letter, glyph ID))."""
    rng = np.random.default_rng(seed)
    ids, gold = [], []
    for ch in plaintext:
        if ch not in key.letter_to_glyphs:
            raise ValueError(f"letter {ch!r} not in the cipher key")
        glyphs = key.letter_to_glyphs[ch]
        if len(glyphs) == 1:
            g = glyphs[0]
        else:
            g = glyphs[rng.choice(len(glyphs), p=np.asarray(key.weights[ch]))]
        ids.append(int(g))
        gold.append((ch, int(g)))
    return ids, gold


@dataclass(frozen=True)
class RenderedPage:
    page: PageBitmap
    manifest: list  # gold cells, same schema as the segmenter manifest
    glyph_ids: list
    lines: list = field(default_factory=list)  # (y_top, y_bottom) per text line


def render_page(glyph_ids, glyph_set: GlyphSet, chars_per_line: int = 40,
                spacing: int = 6, jitter: int = 0, seed: int = 0,
                margin: int = 12, line_gap: int = 14,
                deform_scale: float = 0.0, noise: float = 0.0) -> RenderedPage:
    """Lay out glyphs left-to-right, top-to-bottom.

    Fixed-width mode advances by a uniform cell; variable mode advances
    by each glyph's own width plus spacing plus uniform jitter. Emits
    gold cell bounds that fully contain each glyph's ink.
    """
    if spacing < 0:
        raise ValueError("spacing must be >= 0")
    if not glyph_ids:
        raise ValueError("no glyphs to render")
    rng = np.random.default_rng(seed)
    fixed = glyph_set.width_mode == "fixed"
    cell_w = glyph_set.max_width + spacing
    n_lines = -(-len(glyph_ids) // chars_per_line)
    line_h = glyph_set.height + line_gap
    width = margin * 2 + chars_per_line * (cell_w + jitter)
    height = margin * 2 + n_lines * line_h - line_gap
    canvas = np.zeros((height, width), dtype=bool)
    manifest, lines = [], []
    for li in range(n_lines):
        y0 = margin + li * line_h
        lines.append((y0, y0 + glyph_set.height))
        x = margin
        for gi in glyph_ids[li * chars_per_line:(li + 1) * chars_per_line]:
            bitmap = glyph_set.render(gi, rng=rng, deform_scale=deform_scale)
            gw = bitmap.shape[1]
            if fixed:
                x_ink = x + (cell_w - gw) // 2
                advance = cell_w
                cell = (x, x + cell_w)
            else:
                adv_jitter = int(rng.integers(-jitter, jitter + 1)) if jitter else 0
                adv_jitter = max(adv_jitter, -(spacing // 2))  # keep ink inside the cell
                x_ink = x + spacing // 2
                advance = max(1, gw + spacing + adv_jitter)
                cell = (x, x + advance)
            canvas[y0:y0 + glyph_set.height, x_ink:x_ink + gw] |= bitmap
            manifest.append({
                "row_index": li,
                "x_start": int(cell[0]), "x_end": int(cell[1]),
                "y_top": int(y0), "y_bottom": int(y0 + glyph_set.height),
                "curve_kind": "vertical", "curve_params": [],
            })
            x += advance
    if noise > 0:
        flips = rng.random(canvas.shape) < noise
        canvas = canvas ^ flips
    return RenderedPage(PageBitmap(canvas), manifest, list(glyph_ids), lines)


def pick_passage(corpus: str, length: int, alphabet_size: int,
                 alphabet=None, seed: int = 0, max_tries: int = 20000) -> str:
    """Find a corpus window of `length` letters using exactly
    `alphabet_size` distinct letters."""
    from .lm import ENGLISH_ALPHABET, normalize_text
    letters = normalize_text(corpus, alphabet or ENGLISH_ALPHABET)
    if len(letters) < length:
        raise ValueError("corpus shorter than requested passage")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        start = int(rng.integers(0, len(letters) - length + 1))
        window = letters[start:start + length]
        if len(set(window)) == alphabet_size:
            return window
    raise ValueError(f"no {length}-letter window with exactly "
                     f"{alphabet_size} distinct letters found")


def latinlike_text(n_chars: int, seed: int = 0) -> str:
    """Latin-like prose sampled from a fixed vocabulary (spaces are kept
    so the output can serve both as corpus and as plaintext source)."""
    rng = np.random.default_rng(seed)
    words = []
    total = 0
    while total < n_chars:
        w = LATIN_WORDS[rng.integers(len(LATIN_WORDS))]
        words.append(w)
        total += len(w) + 1
    return " ".join(words)[:n_chars]
