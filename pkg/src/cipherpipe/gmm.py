"""Gaussian mixture clustering of glyph features.

Covariance modes: "diag" (per-component diagonal), "spherical"
(per-component scalar), and "fixed" (one shared scalar variance that is
never re-estimated). Every EM loop asserts a non-decreasing
log-likelihood; a violation raises EmMonotonicityError.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

log = logging.getLogger(__name__)

COV_MODES = ("diag", "spherical", "fixed")
FIXED_COV_OPTIONS = (1.0, 0.1, 0.01, 0.001)
VARIANCE_FLOOR = 1e-6
MONOTONE_RTOL = 1e-9


class EmMonotonicityError(AssertionError):
    """An EM iteration decreased its objective beyond tolerance."""


def check_monotone(prev: float, cur: float, label: str) -> None:
    if prev is None or not math.isfinite(prev):
        return
    if cur < prev - MONOTONE_RTOL * max(1.0, abs(prev)):
        raise EmMonotonicityError(f"{label}: objective fell {prev} -> {cur}")


@dataclass(frozen=True)
class GmmModel:
    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, d)
    cov_mode: str
    covariances: np.ndarray  # diag: (K, d); spherical: (K,); fixed: scalar
    floor: float = VARIANCE_FLOOR
    loglik: float = float("nan")

    def __post_init__(self):
        if self.cov_mode not in COV_MODES:
            raise ValueError(f"unknown covariance mode {self.cov_mode!r}")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must sum to 1")

    @property
    def K(self) -> int:
        return len(self.weights)

    @property
    def d(self) -> int:
        return self.means.shape[1]

    def log_density(self, X: np.ndarray) -> np.ndarray:
        """Per-component Gaussian log density, shape (n, K)."""
        return gaussian_log_density(X, self.means, self.cov_mode, self.covariances)

    def to_json(self, path) -> None:
        payload = {
            "K": self.K, "cov_mode": self.cov_mode, "floor": self.floor,
            "weights": self.weights.tolist(), "means": self.means.tolist(),
            "covariances": np.asarray(self.covariances).tolist(),
            "loglik": self.loglik,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)

    @classmethod
    def from_json(cls, path) -> "GmmModel":
        with open(path) as fh:
            raw = json.load(fh)
        return cls(np.asarray(raw["weights"]), np.asarray(raw["means"]),
                   raw["cov_mode"], np.asarray(raw["covariances"]),
                   raw.get("floor", VARIANCE_FLOOR), raw.get("loglik", float("nan")))


@dataclass(frozen=True)
class Transcription:
    """Cluster-ID sequence in reading order (the automatic transcription)."""

    ids: tuple
    K: int

    def __post_init__(self):
        if any(not (0 <= i < self.K) for i in self.ids):
            raise ValueError("transcription id outside [0, K)")

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump({"K": self.K, "ids": list(self.ids)}, fh)

    @classmethod
    def from_json(cls, path) -> "Transcription":
        with open(path) as fh:
            raw = json.load(fh)
        return cls(tuple(raw["ids"]), raw["K"])


def gaussian_log_density(X, means, cov_mode, covariances) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    K = means.shape[0]
    if cov_mode == "diag":
        var = np.asarray(covariances)  # (K, d)
        diff = X[:, None, :] - means[None]  # (n, K, d)
        return -0.5 * (np.sum(diff**2 / var[None], axis=2)
                       + np.sum(np.log(var), axis=1)[None]
                       + d * math.log(2 * math.pi))
    if cov_mode == "spherical":
        var = np.asarray(covariances).reshape(K)  # (K,)
    else:  # fixed
        var = np.full(K, float(np.asarray(covariances).reshape(-1)[0]))
    sq = ((X[:, None, :] - means[None]) ** 2).sum(axis=2)  # (n, K)
    return -0.5 * (sq / var[None] + d * np.log(var)[None] + d * math.log(2 * math.pi))


def _seed_means(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++-style distance-weighted seeding from the data points."""
    n = X.shape[0]
    means = [X[rng.integers(n)]]
    for _ in range(1, K):
        d2 = np.min(((X[:, None, :] - np.stack(means)[None]) ** 2).sum(axis=2), axis=1)
        total = d2.sum()
        if total <= 0:
            means.append(X[rng.integers(n)])
            continue
        means.append(X[rng.choice(n, p=d2 / total)])
    return np.stack(means)


def _init_covariances(X: np.ndarray, K: int, cov_mode: str, fixed_var: float,
                      floor: float):
    var = np.maximum(X.var(axis=0), floor)
    if cov_mode == "diag":
        return np.tile(var, (K, 1))
    if cov_mode == "spherical":
        return np.full(K, max(float(var.mean()), floor))
    return np.asarray(fixed_var, dtype=float)


def gmm_fit(features, K: int, cov_mode: str = "diag", seed: int = 0,
            restarts: int = 10, max_iters: int = 200, tol: float = 1e-6,
            fixed_var: float = 0.01, floor: float = VARIANCE_FLOOR) -> GmmModel:
    """EM fit; returns the best of `restarts` independently seeded runs."""
    X = np.asarray(getattr(features, "rows", features), dtype=float)
    n, d = X.shape
    if n < K:
        raise ValueError(f"need at least K={K} points, got {n}")
    if np.allclose(X, X[0]):
        warnings.warn("all feature vectors identical; clusters are degenerate")
    best = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(child)
        model = _em_run(X, K, cov_mode, rng, max_iters, tol, fixed_var, floor)
        if best is None or model.loglik > best.loglik:
            best = model
    return best


def _em_run(X, K, cov_mode, rng, max_iters, tol, fixed_var, floor) -> GmmModel:
    n, d = X.shape
    weights = np.full(K, 1.0 / K)
    means = _seed_means(X, K, rng)
    covs = _init_covariances(X, K, cov_mode, fixed_var, floor)
    prev_ll = None
    for _ in range(max_iters):
        logdens = gaussian_log_density(X, means, cov_mode, covs)
        joint = logdens + np.log(weights)[None]
        norm = logsumexp(joint, axis=1)
        ll = float(norm.sum())
        check_monotone(prev_ll, ll, "gmm")
        resp = np.exp(joint - norm[:, None])  # (n, K)
        nk = resp.sum(axis=0)
        nk_safe = np.maximum(nk, 1e-300)
        weights = nk / n
        means = (resp.T @ X) / nk_safe[:, None]
        if cov_mode == "diag":
            sq = resp.T @ (X**2) / nk_safe[:, None] - means**2
            covs = np.maximum(sq, floor)
        elif cov_mode == "spherical":
            sq = (resp * ((X[:, None, :] - means[None]) ** 2).sum(axis=2)).sum(axis=0)
            covs = np.maximum(sq / (nk_safe * d), floor)
        if prev_ll is not None and ll - prev_ll < tol * max(1.0, abs(prev_ll)):
            prev_ll = ll
            break
        prev_ll = ll
    return GmmModel(weights / weights.sum(), means, cov_mode, covs, floor, prev_ll)


def gmm_assign(model: GmmModel, features) -> Transcription:
    """Hard-assign each feature vector to its most likely component."""
    X = np.asarray(getattr(features, "rows", features), dtype=float)
    if X.shape[1] != model.d:
        raise ValueError(f"feature dim {X.shape[1]} != model dim {model.d}")
    scores = model.log_density(X) + np.log(np.maximum(model.weights, 1e-300))[None]
    ids = np.argmax(scores, axis=1)  # argmax takes the lowest index on ties
    return Transcription(tuple(int(i) for i in ids), model.K)


def model_selection(features, K: int, seed: int = 0, restarts: int = 10,
                    max_iters: int = 200, tol: float = 1e-6) -> GmmModel:
    """Fit every covariance option and keep the best held-in likelihood."""
    options = [("diag", None), ("spherical", None)] + [("fixed", v) for v in FIXED_COV_OPTIONS]
    best = None
    for mode, fv in options:
        kwargs = {} if fv is None else {"fixed_var": fv}
        model = gmm_fit(features, K, cov_mode=mode, seed=seed, restarts=restarts,
                        max_iters=max_iters, tol=tol, **kwargs)
        label = mode if fv is None else f"fixed({fv})"
        log.info("model_selection: %s loglik=%.4f", label, model.loglik)
        if best is None or model.loglik > best.loglik:
            best = model
    return best
