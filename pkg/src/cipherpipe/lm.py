"""Character n-gram language models (bigram/trigram) over plaintext.

Histories may contain a start-of-sequence boundary symbol; queries and
training both run in log space. Probabilities use additive-delta
smoothing over the declared alphabet.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import product

import numpy as np

ENGLISH_ALPHABET = tuple("abcdefghijklmnopqrstuvwxyz")
BOUNDARY = "^"


def normalize_text(text: str, alphabet: tuple) -> str:
    keep = set(alphabet)
    return "".join(ch for ch in text.lower() if ch in keep)


@dataclass(frozen=True)
class NGramLM:
    order: int
    alphabet: tuple
    # logp[h1, ..., h_{n-1}, e]: shape (A+1,)*(order-1) + (A,),
    # history index A = boundary symbol
    logp: np.ndarray

    def __post_init__(self):
        A = len(self.alphabet)
        expected = (A + 1,) * (self.order - 1) + (A,)
        if self.logp.shape != expected:
            raise ValueError(f"logp shape {self.logp.shape} != {expected}")
        self.logp.setflags(write=False)

    @property
    def A(self) -> int:
        return len(self.alphabet)

    def index(self, ch: str) -> int:
        if ch == BOUNDARY:
            return self.A
        try:
            return self.alphabet.index(ch)
        except ValueError:
            raise ValueError(f"symbol {ch!r} not in LM alphabet") from None

    def logprob(self, sequence: str) -> float:
        """Sum of conditional log-probs with boundary-padded histories."""
        hist = [self.A] * (self.order - 1)
        total = 0.0
        for ch in sequence:
            e = self.index(ch)
            if e == self.A:
                raise ValueError("boundary symbol not allowed inside a sequence")
            total += float(self.logp[tuple(hist) + (e,)])
            hist = hist[1:] + [e]
        return total


def lm_train(corpus: str, order: int = 2, delta: float = 0.1,
             alphabet: tuple = ENGLISH_ALPHABET) -> NGramLM:
    """MLE counts with additive-delta smoothing.

    Each input line is a separate sequence whose history starts at the
    boundary symbol. Histories never observed keep a uniform (delta=0)
    or smoothed conditional.
    """
    if order not in (2, 3):
        raise ValueError("order must be 2 or 3")
    A = len(alphabet)
    lines = [normalize_text(line, alphabet) for line in corpus.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ValueError("corpus empty after normalization")
    idx = {ch: i for i, ch in enumerate(alphabet)}
    counts = np.zeros((A + 1,) * (order - 1) + (A,))
    for line in lines:
        hist = [A] * (order - 1)
        for ch in line:
            e = idx[ch]
            counts[tuple(hist) + (e,)] += 1
            hist = hist[1:] + [e]
    smoothed = counts + delta
    totals = smoothed.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        probs = np.where(totals > 0, smoothed / np.maximum(totals, 1e-300), 1.0 / A)
        logp = np.log(probs)
    return NGramLM(order, tuple(alphabet), logp)


def lm_logprob(lm: NGramLM, sequence: str) -> float:
    return lm.logprob(sequence)


def save_lm(lm: NGramLM, path) -> None:
    """JSON dump keyed by history string (boundary written as '^')."""
    symbols = list(lm.alphabet) + [BOUNDARY]
    logprobs = {}
    for hist in product(range(lm.A + 1), repeat=lm.order - 1):
        key = "".join(symbols[i] for i in hist)
        logprobs[key] = {lm.alphabet[e]: float(lm.logp[hist + (e,)]) for e in range(lm.A)}
    with open(path, "w") as fh:
        json.dump({"order": lm.order, "alphabet": list(lm.alphabet), "logprobs": logprobs}, fh)


def load_lm(path) -> NGramLM:
    with open(path) as fh:
        raw = json.load(fh)
    order = raw["order"]
    alphabet = tuple(raw["alphabet"])
    A = len(alphabet)
    idx = {ch: i for i, ch in enumerate(alphabet)}
    idx[BOUNDARY] = A
    logp = np.full((A + 1,) * (order - 1) + (A,), -np.inf)
    for key, row in raw["logprobs"].items():
        hist = tuple(idx[ch] for ch in key)
        for ch, lp in row.items():
            logp[hist + (idx[ch],)] = lp
    return NGramLM(order, alphabet, logp)
