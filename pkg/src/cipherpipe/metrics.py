"""Decipherment and transcription accuracy metrics.

NED: Levenshtein distance divided by the reference length. NEDoA maps
cluster-ID types onto gold transcription symbols (many-to-one), picking
the mapping that minimizes NED; computed exactly by enumeration on
small alphabets, or approximately by an alternating EM-style search.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from itertools import product

import numpy as np

EXHAUSTIVE_TYPE_LIMIT = 6


@dataclass(frozen=True)
class SymbolMapping:
    """Many-to-one map from cluster IDs to gold transcription symbols."""

    map: dict

    def apply(self, ids) -> list:
        return [self.map[i] for i in ids]


def levenshtein(a, b) -> int:
    """Unit-cost edit distance between two sequences."""
    a, b = list(a), list(b)
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i]
        for j, y in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def ned(a, b) -> float:
    """Edit distance normalized by the reference (second argument)."""
    if len(b) == 0:
        raise ValueError("reference sequence must be non-empty")
    return levenshtein(a, b) / len(b)


def _edit_table(a, b) -> np.ndarray:
    n, m = len(a), len(b)
    D = np.zeros((n + 1, m + 1), dtype=int)
    D[:, 0] = np.arange(n + 1)
    D[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            D[i, j] = min(D[i - 1, j] + 1, D[i, j - 1] + 1,
                          D[i - 1, j - 1] + (a[i - 1] != b[j - 1]))
    return D


def align_pairs(a, b) -> list[tuple]:
    """Backtrace of an optimal alignment; yields (a_i, b_j) pairs for
    match/substitute steps only."""
    a, b = list(a), list(b)
    D = _edit_table(a, b)
    pairs = []
    i, j = len(a), len(b)
    while i > 0 and j > 0:
        if D[i, j] == D[i - 1, j - 1] + (a[i - 1] != b[j - 1]):
            pairs.append((a[i - 1], b[j - 1]))
            i, j = i - 1, j - 1
        elif D[i, j] == D[i - 1, j] + 1:
            i -= 1
        else:
            j -= 1
    pairs.reverse()
    return pairs


def _mapped_ned(auto_ids, gold, mapping: dict) -> float:
    return ned([mapping[i] for i in auto_ids], gold)


def _rank_mapping(auto_ids, gold) -> dict:
    """Initial mapping pairing cluster IDs and gold symbols by frequency
    rank (ties by first occurrence)."""
    def ranked(seq):
        counts = Counter(seq)
        first = {}
        for pos, s in enumerate(seq):
            first.setdefault(s, pos)
        return sorted(counts, key=lambda s: (-counts[s], first[s]))

    auto_types = ranked(auto_ids)
    gold_types = ranked(gold)
    mapping = {}
    for i, c in enumerate(auto_types):
        mapping[c] = gold_types[i] if i < len(gold_types) else gold_types[0]
    return mapping


def _aligned_cooc(auto_ids, mapped, gold) -> Counter:
    """Co-occurrence counts of (cluster ID, gold symbol) over the
    match/substitute steps of an optimal alignment."""
    D = _edit_table(mapped, gold)
    cooc = Counter()
    i, j = len(mapped), len(gold)
    while i > 0 and j > 0:
        if D[i, j] == D[i - 1, j - 1] + (mapped[i - 1] != gold[j - 1]):
            cooc[(auto_ids[i - 1], gold[j - 1])] += 1
            i, j = i - 1, j - 1
        elif D[i, j] == D[i - 1, j] + 1:
            i -= 1
        else:
            j -= 1
    return cooc


def _em_refine(auto_ids, gold, mapping: dict, max_iters: int = 50):
    """Alternate align/re-estimate; never accepts a worse mapping, so
    the score is non-increasing across iterations."""
    gold_freq = Counter(gold)
    best_score = _mapped_ned(auto_ids, gold, mapping)
    best_map = dict(mapping)
    for _ in range(max_iters):
        mapped = [best_map[i] for i in auto_ids]
        cooc = _aligned_cooc(auto_ids, mapped, gold)
        new_map = dict(best_map)
        for cid in set(auto_ids):
            cands = [(cnt, gold_freq[g], g) for (c, g), cnt in cooc.items() if c == cid]
            if cands:
                cands.sort(key=lambda t: (-t[0], -t[1], str(t[2])))
                new_map[cid] = cands[0][2]
        score = _mapped_ned(auto_ids, gold, new_map)
        if score < best_score:
            best_score, best_map = score, new_map
        else:
            break
    return best_score, best_map


def nedoa(auto_ids, gold, method: str = "em", restarts: int = 20,
          seed: int = 0) -> tuple[float, SymbolMapping]:
    """Minimum NED over many-to-one cluster-to-gold mappings.

    method "exhaustive" enumerates every mapping (allowed only when both
    alphabets have at most 6 types); method "em" alternates alignment
    and mapping re-estimation from several initial mappings.
    """
    auto_ids = list(auto_ids)
    gold = list(gold)
    if not auto_ids or not gold:
        raise ValueError("both sequences must be non-empty")
    auto_types = sorted(set(auto_ids), key=lambda x: (str(type(x)), x))
    gold_types = sorted(set(gold), key=lambda x: (str(type(x)), x))
    if method == "exhaustive":
        if len(auto_types) > EXHAUSTIVE_TYPE_LIMIT or len(gold_types) > EXHAUSTIVE_TYPE_LIMIT:
            raise ValueError("exhaustive NEDoA limited to <= 6 symbol types per side")
        best_score, best_map = np.inf, None
        for targets in product(gold_types, repeat=len(auto_types)):
            mapping = dict(zip(auto_types, targets))
            score = _mapped_ned(auto_ids, gold, mapping)
            if score < best_score:
                best_score, best_map = score, mapping
        return best_score, SymbolMapping(best_map)
    if method != "em":
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng(seed)
    inits = [_rank_mapping(auto_ids, gold)]
    for _ in range(max(0, restarts - 1)):
        inits.append({c: gold_types[rng.integers(len(gold_types))] for c in auto_types})
    best_score, best_map = np.inf, None
    for mapping in inits:
        score, refined = _em_refine(auto_ids, gold, mapping)
        if score < best_score:
            best_score, best_map = score, refined
    return best_score, SymbolMapping(best_map)
