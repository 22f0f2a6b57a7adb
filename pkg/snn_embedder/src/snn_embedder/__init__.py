"""Siamese-network glyph embedder.

Trains a Siamese network on same/different character pairs laid out in an
Omniglot-style directory tree (alphabet/character/instance.png) and exports
per-glyph feature vectors in the feature-file format understood by the
cipherpipe pipeline (``cipherpipe.features.import_features``).
"""

from .data import load_dataset, make_synthetic_dataset, pair_batches
from .model import (SiameseNet, SiameseSpec, embed_glyphs, embed_page,
                    load_spec, save_spec, train)

__all__ = [
    "SiameseNet", "SiameseSpec", "train", "embed_glyphs", "embed_page",
    "save_spec", "load_spec", "load_dataset", "make_synthetic_dataset",
    "pair_batches",
]
