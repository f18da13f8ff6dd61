"""BLEU against a reference set, pinned to one reproducible recipe.

Uniform weights over n-grams up to ``max_ngram`` (capped at the candidate
length so an exact copy of a short reference still scores 1.0), clipped
counts against the union of all references (per-n-gram max across
references), add-epsilon smoothing for zero clipped counts, and a brevity
penalty against the closest reference length (ties favour the shorter).
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

SMOOTH_EPS = 1e-9


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(
    candidate: Sequence[str],
    references: Sequence[Sequence[str]],
    max_ngram: int = 4,
) -> float:
    """BLEU of a token sequence against one or more token-sequence references."""
    if not candidate or not references:
        return 0.0
    c = len(candidate)
    n_max = min(max_ngram, c)
    log_sum = 0.0
    for n in range(1, n_max + 1):
        cand_counts = _ngrams(candidate, n)
        ref_union: Counter = Counter()
        for ref in references:
            ref_union |= _ngrams(ref, n)
        clipped = sum(min(count, ref_union[g]) for g, count in cand_counts.items())
        total = sum(cand_counts.values())
        p_n = clipped / total if clipped > 0 else SMOOTH_EPS / total
        log_sum += math.log(p_n) / n_max
    r = min((len(ref) for ref in references), key=lambda L: (abs(L - c), L))
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum)


def tokenize_for_bleu(text: str) -> list[str]:
    return text.split()
