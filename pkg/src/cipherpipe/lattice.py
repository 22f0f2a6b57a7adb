"""Forward-backward and Viterbi over a character-LM lattice.

States are boundary-padded histories of the last (order-1) letters, so
the same code serves bigram and trigram models. Emission scores arrive
as a dense (T, A) matrix of log densities/probabilities, which lets the
noisy-channel model and the LM-GMM share one lattice implementation.
All arithmetic is in log space via log-sum-exp.
"""

from __future__ import annotations

import numpy as np

from .lm import NGramLM

NEG = -np.inf


def logsumexp(x, axis=None):
    """Minimal log-sum-exp (the lattice inner loop is latency-bound, so
    this avoids scipy's per-call overhead)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.max(x, axis=axis, keepdims=True)
        m_safe = np.where(np.isfinite(m), m, 0.0)
        out = np.log(np.sum(np.exp(x - m_safe), axis=axis, keepdims=True)) + m_safe
        out = np.where(np.isfinite(m), out, NEG)
    if axis is None:
        return float(out.ravel()[0])
    return np.squeeze(out, axis=axis)


def scaled_logp(lm: NGramLM, lm_exponent: float) -> np.ndarray:
    """LM conditionals raised to lm_exponent (log-scaled)."""
    return lm_exponent * lm.logp


def _initial_state(A: int, H: int) -> np.ndarray:
    alpha = np.full((A + 1,) * H, NEG)
    alpha[(A,) * H] = 0.0
    return alpha


def forward(emit_log: np.ndarray, xlogp: np.ndarray, keep_alphas: bool = False):
    """Forward pass. Returns (loglik, [alpha_t] or None).

    emit_log: (T, A) log emission score per position and letter.
    xlogp: (A+1,)^(order-1) + (A,) scaled LM conditionals.
    """
    T, A = emit_log.shape
    H = xlogp.ndim - 1
    alpha = _initial_state(A, H)
    alphas = [] if keep_alphas else None
    with np.errstate(invalid="ignore"):
        for t in range(T):
            scores = alpha[..., None] + xlogp  # (A+1,)^H + (A,)
            partial = logsumexp(scores, axis=0) + emit_log[t]
            alpha = np.full((A + 1,) * H, NEG)
            alpha[..., :A] = partial
            if keep_alphas:
                alphas.append(alpha)
    return float(logsumexp(alpha)), alphas


def posteriors(emit_log: np.ndarray, xlogp: np.ndarray):
    """Letter posteriors gamma (T, A) and the data log-likelihood."""
    T, A = emit_log.shape
    H = xlogp.ndim - 1
    loglik, alphas = forward(emit_log, xlogp, keep_alphas=True)
    gamma = np.empty((T, A))
    beta = np.zeros((A + 1,) * H)
    with np.errstate(invalid="ignore"):
        for t in range(T - 1, -1, -1):
            post = alphas[t] + beta
            marg = logsumexp(post, axis=tuple(range(H - 1))) if H > 1 else post
            gamma[t] = np.exp(marg[:A] - loglik)
            if t > 0:
                nxt = beta[..., :A]
                tmp = xlogp + emit_log[t][None] + nxt[None]
                beta = logsumexp(tmp, axis=-1)
    return gamma, loglik


def viterbi(emit_log: np.ndarray, xlogp: np.ndarray) -> tuple[np.ndarray, float]:
    """Best letter sequence (indices, length T) and its lattice score.

    Ties break toward the lowest history/letter index, i.e. alphabet
    order (numpy argmax returns the first maximizer).
    """
    T, A = emit_log.shape
    H = xlogp.ndim - 1
    alpha = _initial_state(A, H)
    backs = []
    with np.errstate(invalid="ignore"):
        for t in range(T):
            scores = alpha[..., None] + xlogp
            backs.append(np.argmax(scores, axis=0))  # indexed by the new state
            partial = np.max(scores, axis=0) + emit_log[t]
            alpha = np.full((A + 1,) * H, NEG)
            alpha[..., :A] = partial
    score = float(alpha.max())
    state = np.unravel_index(int(np.argmax(alpha)), alpha.shape)
    letters = np.empty(T, dtype=int)
    for t in range(T - 1, -1, -1):
        letters[t] = state[-1]
        h1 = int(backs[t][state])
        state = (h1,) + state[:-1]
    return letters, score
