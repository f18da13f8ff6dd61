"""Competing importance measures and ablation selectors.

Every segment-level method emits a SelectionResult-compatible important
set; the token-level ablations emit explicit token index sets. Ratio-
matched methods take their prefix by token budget rho * T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .analytics import decision_segment, normalize_math_text
from .errors import ConfigError
from .oracle import SamplingConfig
from .scoring import SegmentScore
from .segmenter import KeywordSet, segment_trace
from .selection import SelectionPolicy, SelectionResult, select_important
from .trace import ReasoningTrace, Token

METHOD_FIRST_CORRECT = "first-correct"
METHOD_CONFIDENCE_GAIN = "confidence-gain"
METHOD_PPL_REMOVAL = "ppl-removal"
METHOD_ENTROPY = "entropy"
METHOD_RANDOM_SEGMENTS = "random-segments"
METHOD_TOP_ABS_IG = "top-abs-ig-tokens"
METHOD_TOP_SIGNED_IG = "top-signed-ig-tokens"
METHOD_HIGH_STRENGTH = "high-strength-only"

SEGMENT_METHODS = (
    METHOD_FIRST_CORRECT, METHOD_CONFIDENCE_GAIN, METHOD_PPL_REMOVAL,
    METHOD_ENTROPY, METHOD_RANDOM_SEGMENTS, METHOD_HIGH_STRENGTH,
)
TOKEN_METHODS = (METHOD_TOP_ABS_IG, METHOD_TOP_SIGNED_IG)

RANDOM_SEGMENT_FRACTION = 0.33
TOKEN_SELECT_FRACTION = 0.45


@dataclass(frozen=True)
class BaselinePolicy:
    method: str
    token_ratio_target: float = 0.475
    k_samples: int = 32
    epsilon_gain: float = 0.0
    seed: int = 0
    tau: float = 0.7
    sampling: SamplingConfig = SamplingConfig(temperature=0.6, max_new_tokens=12)

    def __post_init__(self):
        if self.method not in SEGMENT_METHODS + TOKEN_METHODS:
            raise ConfigError(f"unknown baseline method '{self.method}'")
        if not 0 < self.token_ratio_target <= 1:
            raise ConfigError("token_ratio_target must lie in (0, 1]")
        if self.k_samples < 1:
            raise ConfigError("k_samples must be >= 1")


def _as_selection(important: set[int], m: int, method: str) -> SelectionResult:
    ranking = tuple(sorted(important) + [i for i in range(m) if i not in important])
    return SelectionResult(
        ranking=ranking,
        k_star=max(len(important), 1),
        important=frozenset(important),
        method=method,
    )


def first_correct_select(trace: ReasoningTrace) -> SelectionResult:
    """The first answer-deriving segment and everything before it."""
    decision = decision_segment(trace)
    return _as_selection(set(range(decision + 1)), len(trace.segments), METHOD_FIRST_CORRECT)


def confidence_gain_select(
    oracle, trace: ReasoningTrace, policy: BaselinePolicy
) -> tuple[SelectionResult, list[float]]:
    """Segments whose reveal raises the sampled correct-answer fraction.

    conf_m is estimated from k temperature samples forced after the
    prefix S_1..S_m (conf_0 from the query alone); segment m-1 is kept
    when delta_m = conf_m - conf_{m-1} exceeds epsilon_gain. Per-prefix
    sample seeds derive from (policy.seed, m) so runs are reproducible
    and prefixes are independent.
    """
    target = normalize_math_text(trace.answer)
    m_count = len(trace.segments)
    confidences = []
    for m in range(m_count + 1):
        context = oracle.trace_context_ids(trace, n_segments=m)
        cfg = replace(policy.sampling, seed=policy.seed * 1_000_003 + m)
        samples = oracle.sample_answers(context, cfg, policy.k_samples)
        hits = sum(
            1 for ids in samples if target and target in normalize_math_text(oracle.tokenizer.decode(ids))
        )
        confidences.append(hits / policy.k_samples)
    deltas = [confidences[m] - confidences[m - 1] for m in range(1, m_count + 1)]
    important = {m - 1 for m in range(1, m_count + 1) if deltas[m - 1] > policy.epsilon_gain}
    return _as_selection(important, m_count, METHOD_CONFIDENCE_GAIN), deltas


def _ratio_prefix(
    order: Sequence[int], segments, ratio: float, total_tokens: int
) -> set[int]:
    """Smallest prefix of `order` whose token count reaches ratio * total."""
    budget = ratio * total_tokens
    chosen: set[int] = set()
    covered = 0
    for seg_index in order:
        if covered >= budget and chosen:
            break
        chosen.add(seg_index)
        covered += segments[seg_index].n_tokens
    return chosen


def ppl_removal_select(
    oracle, trace: ReasoningTrace, policy: BaselinePolicy
) -> SelectionResult:
    """Rank segments by the mean-NLL increase their removal causes."""
    tok = oracle.tokenizer
    context = [tok.bos_id] + tok.encode(trace.query)
    cot_ids = tok.encode(trace.cot)
    base_nll = float(np.mean(oracle.token_nlls(context, cot_ids)))
    deltas = []
    for seg in trace.segments:
        start, end = seg.char_span  # byte positions under the byte tokenizer
        kept = cot_ids[:start] + cot_ids[end:]
        if not kept:
            deltas.append((0.0, seg.seg_index))
            continue
        nll = float(np.mean(oracle.token_nlls(context, kept)))
        deltas.append((nll - base_nll, seg.seg_index))
    order = [i for _, i in sorted(deltas, key=lambda p: (-p[0], p[1]))]
    important = _ratio_prefix(order, trace.segments, policy.token_ratio_target, len(cot_ids))
    return _as_selection(important, len(trace.segments), METHOD_PPL_REMOVAL)


def entropy_select(
    oracle, trace: ReasoningTrace, policy: BaselinePolicy
) -> SelectionResult:
    """Rank segments by mean next-token entropy, highest first."""
    tok = oracle.tokenizer
    context = [tok.bos_id] + tok.encode(trace.query)
    cot_ids = tok.encode(trace.cot)
    ents = oracle.token_entropies(context, cot_ids)
    means = []
    for seg in trace.segments:
        start, end = seg.char_span
        means.append((float(np.mean(ents[start:end])), seg.seg_index))
    order = [i for _, i in sorted(means, key=lambda p: (-p[0], p[1]))]
    important = _ratio_prefix(order, trace.segments, policy.token_ratio_target, len(cot_ids))
    return _as_selection(important, len(trace.segments), METHOD_ENTROPY)


def ablation_select(
    trace: ReasoningTrace,
    scores: Sequence[SegmentScore] | None,
    token_igs: Sequence[float] | None,
    policy: BaselinePolicy,
) -> SelectionResult | list[int]:
    """Ablation selectors; token-level methods return token indices."""
    m = len(trace.segments)
    if policy.method == METHOD_RANDOM_SEGMENTS:
        rng = np.random.default_rng(policy.seed)
        k = math.ceil(RANDOM_SEGMENT_FRACTION * m)
        chosen = set(int(i) for i in rng.choice(m, size=min(k, m), replace=False))
        return _as_selection(chosen, m, METHOD_RANDOM_SEGMENTS)
    if policy.method == METHOD_HIGH_STRENGTH:
        if scores is None:
            raise ConfigError("high-strength-only needs normalized scores")
        sel = select_important(
            scores,
            trace.segments,
            SelectionPolicy(tau=policy.tau, beta=1.0, include_boundaries=False),
        )
        prefix = set(sel.ranking[: sel.k_star])
        out = _as_selection(prefix, m, METHOD_HIGH_STRENGTH)
        return replace(out, ranking=sel.ranking, k_star=sel.k_star)
    if policy.method in TOKEN_METHODS:
        if token_igs is None:
            raise ConfigError(f"{policy.method} needs per-token attribution values")
        t = len(token_igs)
        k = math.ceil(TOKEN_SELECT_FRACTION * t)
        if policy.method == METHOD_TOP_ABS_IG:
            keyed = sorted(range(t), key=lambda i: (-abs(token_igs[i]), i))
        else:
            keyed = sorted(range(t), key=lambda i: (-token_igs[i], i))
        return sorted(keyed[:k])
    raise ConfigError(f"'{policy.method}' is not an ablation method")


@dataclass(frozen=True)
class PruneResult:
    trace: ReasoningTrace
    dropped_segments: tuple[int, ...]
    dropped_token_fraction: float
    shortfall: bool


def prune_trace(
    trace: ReasoningTrace,
    important: frozenset[int] | set[int],
    scores: Sequence[SegmentScore],
    prune_ratio_target: float = 0.30,
    keywords: KeywordSet | None = None,
) -> PruneResult:
    """Drop unimportant segments (weakest normalized strength first) until
    the dropped-token fraction reaches the target; boundary segments are
    never dropped. The surviving text is re-tokenized byte-wise and
    re-segmented so the pruned trace satisfies the usual invariants.
    """
    total = len(trace.tokens)
    droppable = [
        s for s in trace.segments
        if s.seg_index not in important and not s.is_first and not s.is_last
    ]
    by_weakness = sorted(droppable, key=lambda s: (scores[s.seg_index].normalized_strength, s.seg_index))
    dropped: list[int] = []
    dropped_tokens = 0
    for seg in by_weakness:
        if dropped_tokens >= prune_ratio_target * total:
            break
        dropped.append(seg.seg_index)
        dropped_tokens += seg.n_tokens
    shortfall = dropped_tokens < prune_ratio_target * total

    data = trace.cot_bytes()
    kept_parts = [
        data[s.char_span[0] : s.char_span[1]]
        for s in trace.segments
        if s.seg_index not in dropped
    ]
    new_cot = b"".join(kept_parts).decode("utf-8", errors="replace")
    pruned = ReasoningTrace(
        trace_id=trace.trace_id,
        query=trace.query,
        answer=trace.answer,
        cot=new_cot,
        answer_tokens=trace.answer_tokens,
    )
    new_tokens = [
        Token(index=i, text=chr(b) if b < 128 else f"<0x{b:02x}>", start=i, end=i + 1)
        for i, b in enumerate(new_cot.encode("utf-8"))
    ]
    pruned = pruned.with_tokens(new_tokens, trace.answer_tokens)
    if keywords is not None:
        pruned = segment_trace(pruned, keywords)
    return PruneResult(
        trace=pruned,
        dropped_segments=tuple(sorted(dropped)),
        dropped_token_fraction=dropped_tokens / total if total else 0.0,
        shortfall=shortfall,
    )
