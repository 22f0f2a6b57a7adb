"""2-stage decipherment: the LM-GMM joint model.

Feature vectors are generated directly from the character LM: full
variant P(G) = sum_E P(E) sum_C P(C|E) P(G|C) with one Gaussian per
cipher symbol; simplified variant P(G) = sum_E P(E) P(G|E) with one
Gaussian per plaintext letter (no channel). The cubed-LM correction
raises the LM term to lm_exponent in both training and decoding.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import lattice
from .channel import ChannelMatrix, DeciphermentResult
from .gmm import VARIANCE_FLOOR, check_monotone, gaussian_log_density
from .lm import NGramLM
from .metrics import ned
from .util import parallel_map

VARIANTS = ("full", "simplified")


@dataclass(frozen=True)
class InitSpec:
    """Starting point for LM-GMM EM."""

    means: np.ndarray  # (G, d): per letter (simplified) or per symbol (full)
    covariances: np.ndarray
    cov_mode: str
    channel: np.ndarray | None = None  # (A, K), full variant only


@dataclass
class LmGmmModel:
    lm: NGramLM
    variant: str
    lm_exponent: float
    means: np.ndarray
    covariances: np.ndarray
    cov_mode: str
    channel: np.ndarray | None = None
    floor: float = VARIANCE_FLOOR
    loglik: float = float("nan")
    iterations: int = 0

    def emission_log(self, X: np.ndarray) -> np.ndarray:
        """(T, A) log density of each vector under each plaintext letter."""
        dens = gaussian_log_density(X, self.means, self.cov_mode, self.covariances)
        if self.variant == "simplified":
            return dens
        with np.errstate(divide="ignore"):
            clog = np.log(np.maximum(self.channel, 1e-300))
        return logsumexp(clog[None] + dens[:, None, :], axis=2)

    def objective(self, X: np.ndarray) -> float:
        xlogp = lattice.scaled_logp(self.lm, self.lm_exponent)
        ll, _ = lattice.forward(self.emission_log(X), xlogp)
        return ll

    def decode(self, X: np.ndarray, seed: int | None = None) -> DeciphermentResult:
        xlogp = lattice.scaled_logp(self.lm, self.lm_exponent)
        letters, score = lattice.viterbi(self.emission_log(X), xlogp)
        plaintext = "".join(self.lm.alphabet[i] for i in letters)
        channel = None
        if self.channel is not None:
            channel = ChannelMatrix(self.lm.alphabet,
                                    self.channel / self.channel.sum(axis=1, keepdims=True))
        return DeciphermentResult(plaintext, channel, self.loglik, seed,
                                  self.iterations, {"viterbi_score": score})


def _update_gaussians(X, resp, means_old, covs_old, cov_mode, floor):
    """Weighted Gaussian re-estimation; groups with no mass keep their
    previous parameters."""
    nk = resp.sum(axis=0)  # (G,)
    nk_safe = np.maximum(nk, 1e-300)
    live = nk > 1e-12
    means = (resp.T @ X) / nk_safe[:, None]
    means[~live] = means_old[~live]
    d = X.shape[1]
    if cov_mode == "diag":
        sq = resp.T @ (X**2) / nk_safe[:, None] - means**2
        covs = np.maximum(sq, floor)
        covs[~live] = covs_old[~live]
    elif cov_mode == "spherical":
        sq = (resp * ((X[:, None, :] - means[None]) ** 2).sum(axis=2)).sum(axis=0)
        covs = np.maximum(sq / (nk_safe * d), floor)
        covs[~live] = covs_old[~live]
    else:  # fixed: never re-estimated
        covs = covs_old
    return means, covs


def lmgmm_em(features, lm: NGramLM, K: int, variant: str = "simplified",
             lm_exponent: float = 1.0, init: InitSpec | None = None,
             seed: int = 0, max_iters: int = 100, tol: float = 1e-6,
             cov_mode: str = "spherical", floor: float = VARIANCE_FLOOR) -> LmGmmModel:
    """EM training of LM-GMM. Without an InitSpec, means are random data
    points and the channel (full variant) starts uniform."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    X = np.asarray(getattr(features, "rows", features), dtype=float)
    if X.size == 0:
        raise ValueError("empty feature matrix")
    A = lm.A
    G = K if variant == "full" else A  # number of Gaussians
    rng = np.random.default_rng(seed)
    if init is not None:
        means = np.array(init.means, dtype=float)
        covs = np.array(init.covariances, dtype=float)
        cov_mode = init.cov_mode
        channel = None if init.channel is None else np.array(init.channel, dtype=float)
    else:
        means = X[rng.choice(len(X), size=G, replace=len(X) < G)]
        var = np.maximum(X.var(axis=0), floor)
        if cov_mode == "diag":
            covs = np.tile(var, (G, 1))
        elif cov_mode == "spherical":
            covs = np.full(G, max(float(var.mean()), floor))
        else:
            covs = np.asarray(0.01)
        channel = None
    if variant == "full" and channel is None:
        channel = np.full((A, K), 1.0 / K)
    if variant == "simplified":
        channel = None
    if means.shape[0] != G:
        raise ValueError(f"init has {means.shape[0]} Gaussians, expected {G}")

    xlogp = lattice.scaled_logp(lm, lm_exponent)
    model = LmGmmModel(lm, variant, lm_exponent, means, covs, cov_mode, channel, floor)
    prev_ll = None
    for it in range(max_iters):
        dens = gaussian_log_density(X, model.means, cov_mode, model.covariances)
        if variant == "simplified":
            emit = dens
        else:
            with np.errstate(divide="ignore"):
                clog = np.log(np.maximum(model.channel, 1e-300))
            emit = logsumexp(clog[None] + dens[:, None, :], axis=2)  # (T, A)
        gamma, ll = lattice.posteriors(emit, xlogp)  # (T, A)
        check_monotone(prev_ll, ll, "lmgmm")
        if variant == "simplified":
            means, covs = _update_gaussians(X, gamma, model.means,
                                            model.covariances, cov_mode, floor)
            model.means, model.covariances = means, covs
        else:
            # xi[t, e, c]: joint posterior of letter e and symbol c at t
            inner = clog[None] + dens[:, None, :] - emit[:, :, None]
            xi = gamma[:, :, None] * np.exp(np.minimum(inner, 0.0))
            comp_resp = xi.sum(axis=1)  # (T, K)
            means, covs = _update_gaussians(X, comp_resp, model.means,
                                            model.covariances, cov_mode, floor)
            counts = xi.sum(axis=0)  # (A, K)
            totals = counts.sum(axis=1, keepdims=True)
            model.channel = np.where(totals > 0, counts / np.maximum(totals, 1e-300),
                                     1.0 / K)
            model.means, model.covariances = means, covs
        model.iterations = it + 1
        if prev_ll is not None and ll - prev_ll < tol * max(1.0, abs(prev_ll)):
            prev_ll = ll
            break
        prev_ll = ll
    model.loglik = prev_ll if prev_ll is not None else model.objective(X)
    return model


def init_from_3stage(features, result3: DeciphermentResult, noise_scale: float = 0.1,
                     seed: int = 0, cov_mode: str = "spherical",
                     floor: float = VARIANCE_FLOOR, lm_alphabet: tuple | None = None) -> InitSpec:
    """Seed simplified LM-GMM from a 3-stage decipherment.

    Feature vectors are grouped by their decoded plaintext letter; each
    group's mean and covariance become that letter's Gaussian, with the
    mean perturbed by zero-mean Gaussian noise scaled to the group's
    per-dimension spread. Letters with no vectors get the global mean.
    """
    X = np.asarray(getattr(features, "rows", features), dtype=float)
    plaintext = result3.plaintext
    if len(plaintext) != len(X):
        raise ValueError(f"plaintext length {len(plaintext)} != {len(X)} vectors")
    alphabet = lm_alphabet or (result3.channel.letters if result3.channel else
                               tuple(sorted(set(plaintext))))
    rng = np.random.default_rng(seed)
    d = X.shape[1]
    g_mean = X.mean(axis=0)
    g_var = np.maximum(X.var(axis=0), floor)
    g_std = np.sqrt(g_var)
    means = np.empty((len(alphabet), d))
    if cov_mode == "diag":
        covs = np.empty((len(alphabet), d))
    else:
        covs = np.empty(len(alphabet))
    letters = np.array(list(plaintext))
    for i, ch in enumerate(alphabet):
        grp = X[letters == ch]
        if len(grp) == 0:
            mean, var = g_mean, g_var
        else:
            mean, var = grp.mean(axis=0), np.maximum(grp.var(axis=0), floor)
        std = np.sqrt(var)
        means[i] = mean + rng.standard_normal(d) * noise_scale * std
        if cov_mode == "diag":
            covs[i] = var
        else:
            covs[i] = max(float(var.mean()), floor)
    return InitSpec(means, covs, cov_mode)


@dataclass(frozen=True)
class RestartRecord:
    seed: int
    loglik: float
    ned: float | None = None


def decipher2(features, lm: NGramLM, result3: DeciphermentResult,
              lm_exponent: float = 3.0, restarts: int = 50,
              noise_scale: float = 0.1, seed: int = 0, max_iters: int = 100,
              tol: float = 1e-6, cov_mode: str = "spherical",
              floor: float = VARIANCE_FLOOR, variant: str = "simplified",
              K: int | None = None,
              gold: str | None = None) -> tuple[DeciphermentResult, list[RestartRecord]]:
    """Restarted LM-GMM training seeded from a 3-stage result.

    Returns the best-objective model's decoding plus one diagnostics
    record per restart (for likelihood-vs-NED scatter plots).
    """
    X = np.asarray(getattr(features, "rows", features), dtype=float)
    if K is None:
        K = X.shape[0]

    def run(job):
        ridx, child = job
        sub = int(child.generate_state(1)[0])
        init = init_from_3stage(X, result3, noise_scale=noise_scale, seed=child,
                                cov_mode=cov_mode, floor=floor, lm_alphabet=lm.alphabet)
        model = lmgmm_em(X, lm, K, variant=variant, lm_exponent=lm_exponent,
                         init=init, max_iters=max_iters, tol=tol,
                         cov_mode=cov_mode, floor=floor)
        return ridx, sub, model

    jobs = list(enumerate(np.random.SeedSequence(seed).spawn(restarts)))
    results = parallel_map(run, jobs)
    records = []
    best = None
    for ridx, sub, model in results:
        rec_ned = None
        if gold is not None:
            rec_ned = ned(model.decode(X).plaintext, gold)
        records.append(RestartRecord(sub, model.loglik, rec_ned))
        if best is None or model.loglik > best.loglik:
            best = model
    if not math.isfinite(best.loglik):
        raise ArithmeticError("non-finite LM-GMM objective")
    result = best.decode(X, seed=seed)
    result.extras["restarts"] = restarts
    return result, records


def scatter_dump(records: list[RestartRecord], path) -> None:
    """CSV of (seed, loglik, ned); the ned column is omitted when no
    gold text was supplied."""
    with_ned = any(r.ned is not None for r in records)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "loglik", "ned"] if with_ned else ["seed", "loglik"])
        for r in records:
            row = [r.seed, r.loglik] + ([r.ned] if with_ned else [])
            writer.writerow(row)
