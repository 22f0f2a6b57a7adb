"""Siamese network: twin convolutional extractor + affine comparison head.

The head scores a pair as y = sigmoid(w . |f(x1) - f(x2)| + b) with label 0
for same-character pairs (note the inverted convention: 0 = same). Because
the comparison is a w-weighted L1 distance between extractor outputs, the
classification head can be dropped at export time and each glyph embedded
as F_SNN(x) = w * f(x) elementwise; L1 distances between exported vectors
equal the distances the head was trained on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from cipherpipe.features import GLYPH_SIZE, FeatureMatrix, GlyphImage

from .data import load_dataset, pair_batches, split_classes


class SiameseNet(nn.Module):
    """Convolutional twin stack sized for CPU training.

    105x105 input; four conv/pool blocks; fully-connected sigmoid
    embedding f(x); affine head on |f(x1) - f(x2)|.
    """

    def __init__(self, dim: int = 64, channels: tuple = (8, 16, 32, 32)):
        super().__init__()
        c1, c2, c3, c4 = channels
        self.extractor = nn.Sequential(
            nn.Conv2d(1, c1, 10), nn.ReLU(), nn.MaxPool2d(2),      # 96 -> 48
            nn.Conv2d(c1, c2, 7), nn.ReLU(), nn.MaxPool2d(2),      # 42 -> 21
            nn.Conv2d(c2, c3, 4), nn.ReLU(), nn.MaxPool2d(2),      # 18 -> 9
            nn.Conv2d(c3, c4, 4), nn.ReLU(),                       # 6
            nn.Flatten(),
            nn.Linear(c4 * 6 * 6, dim),
        )
        self.head = nn.Linear(dim, 1)
        self.dim = dim
        self.channels = tuple(channels)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        return self.extractor(x.unsqueeze(1))

    def forward(self, x1: torch.Tensor, x2: torch.Tensor) -> torch.Tensor:
        diff = torch.abs(self.features(x1) - self.features(x2))
        return torch.sigmoid(self.head(diff)).squeeze(-1)


@dataclass
class SiameseSpec:
    """A trained Siamese model plus its training metadata."""

    net: SiameseNet
    val_accuracy: float
    history: list  # per-epoch (train_loss, val_accuracy)
    seed: int

    @property
    def dim(self) -> int:
        return self.net.dim

    def pair_score(self, g1: np.ndarray, g2: np.ndarray) -> float:
        """y for one pair of 105x105 grids; < 0.5 means 'same'."""
        self.net.eval()
        with torch.no_grad():
            t1 = torch.from_numpy(np.asarray(g1, dtype=np.float32)[None])
            t2 = torch.from_numpy(np.asarray(g2, dtype=np.float32)[None])
            return float(self.net(t1, t2).item())


def _pair_accuracy(net: SiameseNet, classes: dict, seed: int,
                   n_pairs: int = 256) -> float:
    rng = np.random.default_rng(seed)
    net.eval()
    correct = total = 0
    with torch.no_grad():
        for x1, x2, y in pair_batches(classes, 32, n_pairs // 32, rng):
            pred = net(torch.from_numpy(x1), torch.from_numpy(x2)).numpy()
            correct += int(((pred >= 0.5) == (y >= 0.5)).sum())
            total += len(y)
    return correct / total


def train(dataset_path, epochs: int = 5, seed: int = 0, dim: int = 64,
          batch_size: int = 32, batches_per_epoch: int = 60,
          lr: float = 1e-3, val_fraction: float = 0.2) -> SiameseSpec:
    """Train on balanced same/different pairs with binary cross-entropy.

    Single-threaded and fully seeded, so repeated runs give identical
    metrics. Validation classes are disjoint from training classes.
    """
    classes = load_dataset(dataset_path)
    train_classes, val_classes = split_classes(classes, val_fraction, seed)
    torch.set_num_threads(1)
    torch.manual_seed(seed)
    net = SiameseNet(dim=dim)
    opt = torch.optim.Adam(net.parameters(), lr=lr)
    loss_fn = nn.BCELoss()
    rng = np.random.default_rng(seed + 1)
    history = []
    best_acc, best_state = -1.0, None
    for epoch in range(epochs):
        net.train()
        total = 0.0
        for x1, x2, y in pair_batches(train_classes, batch_size,
                                      batches_per_epoch, rng):
            opt.zero_grad()
            pred = net(torch.from_numpy(x1), torch.from_numpy(x2))
            loss = loss_fn(pred, torch.from_numpy(y))
            loss.backward()
            opt.step()
            total += float(loss.item())
        acc = _pair_accuracy(net, val_classes, seed + 2)
        history.append((total / batches_per_epoch, acc))
        if acc > best_acc:
            best_acc = acc
            best_state = {k: v.clone() for k, v in net.state_dict().items()}
    # keep the weights from the best validation epoch
    net.load_state_dict(best_state)
    return SiameseSpec(net, best_acc, history, seed)


def embed_glyphs(spec: SiameseSpec, glyphs: list) -> FeatureMatrix:
    """F_SNN(x) = w * f(x) for each normalized glyph, in input order."""
    grids = []
    for g in glyphs:
        grid = g.grid if isinstance(g, GlyphImage) else np.asarray(g, dtype=float)
        if grid.shape != (GLYPH_SIZE, GLYPH_SIZE):
            raise ValueError(f"glyph must be normalized to {GLYPH_SIZE}x"
                             f"{GLYPH_SIZE}, got {grid.shape}")
        grids.append(grid.astype(np.float32))
    spec.net.eval()
    with torch.no_grad():
        f = spec.net.features(torch.from_numpy(np.stack(grids)))
        w = spec.net.head.weight.squeeze(0)
        vectors = (f * w).numpy().astype(float)
    return FeatureMatrix(vectors, "external")


def embed_page(spec: SiameseSpec, page_path, manifest: list,
               threshold: int = 128) -> FeatureMatrix:
    """Embed every manifest cell of a page, in manifest order."""
    from cipherpipe.features import glyphs_from_page
    from cipherpipe.page import load_page

    page = load_page(page_path, threshold=threshold)
    return embed_glyphs(spec, glyphs_from_page(page, manifest))


def save_spec(spec: SiameseSpec, path) -> None:
    path = Path(path)
    meta = {"dim": spec.net.dim, "channels": list(spec.net.channels),
            "val_accuracy": spec.val_accuracy, "history": spec.history,
            "seed": spec.seed, "same_pair_label": 0}
    torch.save({"state_dict": spec.net.state_dict(), "meta": meta}, path)


def load_spec(path) -> SiameseSpec:
    blob = torch.load(path, map_location="cpu", weights_only=False)
    meta = blob["meta"]
    net = SiameseNet(dim=meta["dim"], channels=tuple(meta["channels"]))
    net.load_state_dict(blob["state_dict"])
    return SiameseSpec(net, meta["val_accuracy"],
                       [tuple(h) for h in meta["history"]], meta["seed"])
