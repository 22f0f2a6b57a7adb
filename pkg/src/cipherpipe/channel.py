"""3-stage decipherment: EM-train a substitution channel over a
cluster-ID transcription under a fixed character LM, then Viterbi-decode
the plaintext.

Terminology: EM training of the channel is "deciphering"; the Viterbi
pass is "decoding".
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import lattice
from .gmm import Transcription, check_monotone
from .lm import NGramLM
from .util import parallel_map

LOG_FLOOR = -1e30  # stands in for log(0) without creating NaNs in sums


@dataclass(frozen=True)
class ChannelMatrix:
    """P(cipher symbol | plaintext letter); rows sum to 1."""

    letters: tuple  # row labels (plaintext alphabet)
    probs: np.ndarray  # (A, K)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape[0] != len(self.letters):
            raise ValueError("row count must match letter labels")
        if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("channel rows must be distributions")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def K(self) -> int:
        return self.probs.shape[1]

    def log_probs(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            lp = np.log(self.probs)
        return np.where(np.isfinite(lp), lp, LOG_FLOOR)

    def to_json(self, path) -> None:
        payload = {"letters": list(self.letters),
                   "symbols": list(range(self.K)),
                   "probs": self.probs.tolist()}
        with open(path, "w") as fh:
            json.dump(payload, fh)

    @classmethod
    def from_json(cls, path) -> "ChannelMatrix":
        with open(path) as fh:
            raw = json.load(fh)
        return cls(tuple(raw["letters"]), np.asarray(raw["probs"]))


@dataclass(frozen=True)
class DeciphermentResult:
    plaintext: str
    channel: ChannelMatrix
    loglik: float
    seed: int | None = None
    iterations: int = 0
    extras: dict = field(default_factory=dict)

    def to_json(self, path) -> None:
        payload = {"plaintext": self.plaintext, "loglik": self.loglik,
                   "seed": self.seed, "iterations": self.iterations}
        with open(path, "w") as fh:
            json.dump(payload, fh)


def _emission_log(channel_logp: np.ndarray, ids: np.ndarray) -> np.ndarray:
    return channel_logp[:, ids].T  # (T, A)


def channel_em(transcription: Transcription, lm: NGramLM, seed: int = 0,
               restarts: int = 100, max_iters: int = 100, tol: float = 1e-6,
               lm_exponent: float = 1.0,
               init: ChannelMatrix | None = None) -> tuple[ChannelMatrix, float, dict]:
    """Train P(C|E) by forward-backward EM; best restart wins.

    Channel rows are initialized uniform-plus-Dirichlet-noise per
    restart (or from `init` for the first restart when given). Returns
    (channel, log P(C), metadata).
    """
    ids = np.asarray(transcription.ids, dtype=int)
    if len(ids) == 0:
        raise ValueError("empty transcription")
    A, K = lm.A, transcription.K
    xlogp = lattice.scaled_logp(lm, lm_exponent)

    def run(job):
        ridx, child = job
        rng = np.random.default_rng(child)
        if init is not None and ridx == 0:
            probs0 = init.probs
        else:
            # uniform rows perturbed by Dirichlet noise
            probs0 = rng.dirichlet(np.ones(K) * 5.0, size=A)
        probs, ll, iters = _em_from(ids, xlogp, A, K, probs0, max_iters, tol)
        return probs, ll, iters, ridx

    jobs = list(enumerate(np.random.SeedSequence(seed).spawn(restarts)))
    results = parallel_map(run, jobs)
    best = max(results, key=lambda r: r[1])
    probs, ll, iters, ridx = best
    if not math.isfinite(ll):
        raise ArithmeticError("non-finite channel likelihood (log-space underflow bug)")
    channel = ChannelMatrix(lm.alphabet, probs / probs.sum(axis=1, keepdims=True))
    meta = {"seed": seed, "restart": ridx, "iterations": iters,
            "restart_logliks": sorted(float(r[1]) for r in results)}
    return channel, ll, meta


def _em_from(ids, xlogp, A, K, probs0, max_iters, tol):
    """EM continuation from a given channel (used for init and tests)."""
    probs = np.array(probs0, dtype=float)
    prev_ll = None
    iters = 0
    for it in range(max_iters):
        with np.errstate(divide="ignore"):
            clog = np.where(probs > 0, np.log(np.maximum(probs, 1e-300)), LOG_FLOOR)
        gamma, ll = lattice.posteriors(_emission_log(clog, ids), xlogp)
        check_monotone(prev_ll, ll, "channel_em")
        counts = np.zeros((A, K))
        np.add.at(counts.T, ids, gamma)
        totals = counts.sum(axis=1, keepdims=True)
        probs = np.where(totals > 0, counts / np.maximum(totals, 1e-300), 1.0 / K)
        iters = it + 1
        if prev_ll is not None and ll - prev_ll < tol * max(1.0, abs(prev_ll)):
            prev_ll = ll
            break
        prev_ll = ll
    return probs, prev_ll, iters


def forward_loglik(transcription: Transcription, lm: NGramLM,
                   channel: ChannelMatrix, lm_exponent: float = 1.0) -> float:
    """log sum_E P(E)^x P(C|E) of a transcription under a fixed model."""
    ids = np.asarray(transcription.ids, dtype=int)
    xlogp = lattice.scaled_logp(lm, lm_exponent)
    ll, _ = lattice.forward(_emission_log(channel.log_probs(), ids), xlogp)
    return ll


def viterbi_decode(transcription: Transcription, lm: NGramLM,
                   channel: ChannelMatrix, lm_exponent: float = 1.0,
                   loglik: float = float("nan"), seed: int | None = None,
                   iterations: int = 0) -> DeciphermentResult:
    """Decode the plaintext maximizing x*log P(E) + log P(C|E)."""
    ids = np.asarray(transcription.ids, dtype=int)
    if channel.K != transcription.K:
        raise ValueError(f"channel has {channel.K} symbols, transcription {transcription.K}")
    if channel.letters != lm.alphabet:
        raise ValueError("channel rows must match the LM alphabet")
    xlogp = lattice.scaled_logp(lm, lm_exponent)
    letters, score = lattice.viterbi(_emission_log(channel.log_probs(), ids), xlogp)
    plaintext = "".join(lm.alphabet[i] for i in letters)
    extras = {"viterbi_score": score}
    return DeciphermentResult(plaintext, channel, loglik, seed, iterations, extras)


def decipher3(transcription: Transcription, lm: NGramLM, seed: int = 0,
              restarts: int = 100, max_iters: int = 100, tol: float = 1e-6,
              lm_exponent: float = 1.0) -> DeciphermentResult:
    """EM-train the channel, then Viterbi-decode (the 3rd pipeline stage)."""
    channel, ll, meta = channel_em(transcription, lm, seed=seed, restarts=restarts,
                                   max_iters=max_iters, tol=tol, lm_exponent=lm_exponent)
    result = viterbi_decode(transcription, lm, channel, lm_exponent=lm_exponent,
                            loglik=ll, seed=seed, iterations=meta["iterations"])
    result.extras["restart"] = meta["restart"]
    return result
