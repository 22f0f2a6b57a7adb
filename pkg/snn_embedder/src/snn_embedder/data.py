"""Omniglot-style pair data: directory loading, synthetic generation, batching.

Dataset layout on disk: ``root/<alphabet>/<character>/<instance>.png``, one
directory per character class and one grayscale/bilevel PNG per handwritten
instance. Images are normalized to 105x105 exactly as the cipherpipe
feature extractors do, so embeddings stay comparable across components.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from dataclasses import replace

from cipherpipe.features import GLYPH_SIZE, GlyphImage, normalize_glyph
from cipherpipe.synth import make_glyph_set


def writer_style(rng: np.random.Generator, deform_scale: float = 0.04) -> dict:
    """Sample one writer's handwriting style.

    A writer has a characteristic pen thickness and slant; individual
    characters additionally get per-instance stroke jitter.
    """
    return {"thickness": int(rng.integers(2, 6)),
            "rotation": float(rng.uniform(-12.0, 12.0)),
            "deform_scale": deform_scale}


def render_instance(glyph_set, glyph_id: int, rng: np.random.Generator,
                    style: dict) -> GlyphImage:
    """Render one handwritten instance of a glyph in a writer's style."""
    gs = replace(glyph_set, thickness=style["thickness"])
    bitmap = gs.render(glyph_id, rng=rng, deform_scale=style["deform_scale"])
    if style["rotation"]:
        img = Image.fromarray(bitmap.astype(np.float32), mode="F")
        img = img.rotate(style["rotation"], resample=Image.BILINEAR,
                         expand=True, fillcolor=0.0)
        gray = np.clip(np.asarray(img), 0.0, 1.0)
        ys, xs = np.nonzero(gray > 0.1)
        if len(ys):
            gray = gray[ys.min():ys.max() + 1, xs.min():xs.max() + 1]
        bitmap = gray
    return normalize_glyph(bitmap)


def make_synthetic_dataset(root, alphabets: int = 8, chars: int = 12,
                           writers: int = 12, seed: int = 0,
                           deform_scale: float = 0.04) -> Path:
    """Write a synthetic handwriting dataset in the Omniglot layout.

    Each alphabet is a set of random stroke glyphs; each writer renders
    every character of the alphabet in their own style (pen thickness,
    slant, per-instance stroke jitter).
    """
    root = Path(root)
    rng = np.random.default_rng(seed)
    for a in range(alphabets):
        glyphs = make_glyph_set(chars, mode="variable", seed=seed * 1000 + a,
                                height=48, width_range=(24, 44))
        for w in range(writers):
            style = writer_style(rng, deform_scale)
            for c in range(chars):
                cdir = root / f"alphabet{a:02d}" / f"char{c:02d}"
                cdir.mkdir(parents=True, exist_ok=True)
                grid = render_instance(glyphs, c, rng, style).grid
                img = Image.fromarray((grid * 255).astype(np.uint8), mode="L")
                img.save(cdir / f"writer{w:02d}.png")
    return root


def load_dataset(root) -> dict:
    """Load an Omniglot-layout directory into {(alphabet, char): [grids]}.

    Grids are float32 (105, 105) arrays in [0, 1], ink = 1.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {root}")
    classes: dict = {}
    for png in sorted(root.glob("*/*/*.png")):
        arr = np.asarray(Image.open(png).convert("L"), dtype=np.float32) / 255.0
        if arr.shape != (GLYPH_SIZE, GLYPH_SIZE):
            arr = normalize_glyph(arr).grid.astype(np.float32)
        key = (png.parent.parent.name, png.parent.name)
        classes.setdefault(key, []).append(arr.astype(np.float32))
    if not classes:
        raise FileNotFoundError(f"no character images under {root}")
    return classes


def split_classes(classes: dict, val_fraction: float, seed: int):
    """Deterministic class-disjoint train/validation split."""
    keys = sorted(classes)
    if len(keys) < 4:
        raise ValueError("need at least 4 character classes to split off a "
                         "validation set")
    rng = np.random.default_rng(seed)
    rng.shuffle(keys)
    # both sides need >= 2 classes to form different-character pairs
    n_val = min(len(keys) - 2, max(2, int(round(len(keys) * val_fraction))))
    val_keys = set(keys[:n_val])
    train = {k: v for k, v in classes.items() if k not in val_keys}
    val = {k: v for k, v in classes.items() if k in val_keys}
    return train, val


def pair_batches(classes: dict, batch_size: int, n_batches: int,
                 rng: np.random.Generator):
    """Yield (x1, x2, y) batches of balanced same/different pairs.

    Label convention: 0 = same character type, 1 = different.
    """
    keys = sorted(classes)
    if len(keys) < 2:
        raise ValueError("need at least two character classes to form pairs")
    for _ in range(n_batches):
        x1, x2, y = [], [], []
        for i in range(batch_size):
            if i % 2 == 0:  # same pair
                k = keys[rng.integers(len(keys))]
                insts = classes[k]
                a, b = rng.integers(len(insts)), rng.integers(len(insts))
                x1.append(insts[a]); x2.append(insts[b]); y.append(0.0)
            else:  # different pair
                ka, kb = rng.choice(len(keys), size=2, replace=False)
                ia = classes[keys[ka]]
                ib = classes[keys[kb]]
                x1.append(ia[rng.integers(len(ia))])
                x2.append(ib[rng.integers(len(ib))])
                y.append(1.0)
        yield (np.stack(x1), np.stack(x2), np.asarray(y, dtype=np.float32))
