"""Segment-level analysis: perplexity/entropy stats, repetition via BLEU
against preceding segments, strength CDF tables, decision-segment
positional statistics, and answer-text normalization."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .bleu import bleu, tokenize_for_bleu
from .errors import NoDecisionError
from .scoring import SegmentScore
from .selection import SelectionResult
from .trace import ReasoningTrace

REPETITION_BLEU_THRESHOLD = 0.8


@dataclass(frozen=True)
class SegmentStats:
    seg_index: int
    mean_nll: float
    mean_entropy: float
    bleu_vs_preceding: float
    is_truncated: bool | None = None


def segment_stats(oracle, trace: ReasoningTrace) -> list[SegmentStats]:
    """Mean token NLL and next-token entropy (nats) per segment, plus the
    BLEU similarity of each segment against all preceding ones."""
    tok = oracle.tokenizer
    context = [tok.bos_id] + tok.encode(trace.query)
    cot_ids = tok.encode(trace.cot)
    nlls = oracle.token_nlls(context, cot_ids)
    ents = oracle.token_entropies(context, cot_ids)
    stats = []
    for seg in trace.segments:
        # byte-level positions from the segment's char span, so stats stay
        # valid when trace tokens come from an external tokenizer
        sl = slice(seg.char_span[0], seg.char_span[1])
        stats.append(
            SegmentStats(
                seg_index=seg.seg_index,
                mean_nll=float(np.mean(nlls[sl])),
                mean_entropy=float(np.mean(ents[sl])),
                bleu_vs_preceding=bleu_vs_preceding(trace, seg.seg_index),
            )
        )
    return stats


def bleu_vs_preceding(trace: ReasoningTrace, seg_index: int, max_ngram: int = 4) -> float:
    """BLEU of one segment against all earlier segments in the same trace.

    Segment 0 has no predecessors and is defined as 0.0.
    """
    if seg_index == 0:
        return 0.0
    candidate = tokenize_for_bleu(trace.segment_text(seg_index))
    references = [
        tokenize_for_bleu(trace.segment_text(i)) for i in range(seg_index)
    ]
    references = [r for r in references if r]
    if not references:
        return 0.0
    return bleu(candidate, references, max_ngram=max_ngram)


def strength_cdf(
    per_trace_scores: Mapping[str, Sequence[SegmentScore]], bucket_count: int = 10
) -> list[tuple[float, float]]:
    """(rank percentile, mean cumulative normalized strength) table.

    Within each trace, segments are ordered by descending normalized
    strength; the cumulative sum at each percentile bucket is averaged
    across traces.
    """
    rows = []
    for b in range(1, bucket_count + 1):
        frac = b / bucket_count
        acc = []
        for scores in per_trace_scores.values():
            ns = sorted((s.normalized_strength for s in scores), reverse=True)
            k = max(1, math.ceil(frac * len(ns)))
            acc.append(math.fsum(ns[:k]))
        rows.append((frac, float(np.mean(acc)) if acc else 0.0))
    return rows


def write_cdf_csv(path: str | Path, rows: Sequence[tuple[float, float]]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank_percentile", "mean_cumulative_strength"])
        for frac, value in rows:
            writer.writerow([repr(frac), repr(value)])


_BOXED = re.compile(r"\\boxed\s*\{([^{}]*)\}")
_MATH_WRAPPERS = re.compile(r"(\$+|\\\(|\\\)|\\\[|\\\])")
_WS = re.compile(r"\s+")


def normalize_math_text(text: str) -> str:
    """Case-fold, unwrap math formatting, and collapse whitespace runs."""
    text = _BOXED.sub(r"\1", text)
    text = _MATH_WRAPPERS.sub("", text)
    text = _WS.sub(" ", text)
    return text.strip().casefold()


def decision_segment(trace: ReasoningTrace) -> int:
    """First segment whose normalized text contains the normalized answer."""
    if not trace.answer.strip():
        raise NoDecisionError(f"trace '{trace.trace_id}' has an empty answer")
    needle = normalize_math_text(trace.answer)
    for seg in trace.segments:
        if needle in normalize_math_text(trace.segment_text(seg.seg_index)):
            return seg.seg_index
    raise NoDecisionError(
        f"trace '{trace.trace_id}': answer never appears in any segment"
    )


@dataclass(frozen=True)
class PositionalReport:
    n_traces: int
    n_excluded: int
    important_after_decision: float
    unimportant_before_decision: float
    low_strength_unimportant_before: float
    high_consistency_unimportant_after: float

    def to_record(self) -> dict:
        return {
            "n_traces": self.n_traces,
            "n_excluded": self.n_excluded,
            "important_after_decision": self.important_after_decision,
            "unimportant_before_decision": self.unimportant_before_decision,
            "low_strength_unimportant_before": self.low_strength_unimportant_before,
            "high_consistency_unimportant_after": self.high_consistency_unimportant_after,
        }


def positional_stats(
    traces: Sequence[ReasoningTrace],
    selections: Mapping[str, SelectionResult],
) -> PositionalReport:
    """Corpus-level fractions of important/unimportant segments before and
    after each trace's decision segment.

    Unimportant segments split by cause: outside the top-k* prefix (low
    strength) versus inside the prefix but filtered by beta (high
    consistency). Traces without a decision segment are excluded and
    counted.
    """
    counts = {
        "imp": 0, "imp_after": 0,
        "unimp": 0, "unimp_before": 0,
        "low": 0, "low_before": 0,
        "high": 0, "high_after": 0,
    }
    n_used = 0
    n_excluded = 0
    for trace in traces:
        sel = selections.get(trace.trace_id)
        if sel is None:
            n_excluded += 1
            continue
        try:
            decision = decision_segment(trace)
        except NoDecisionError:
            n_excluded += 1
            continue
        n_used += 1
        prefix = set(sel.ranking[: sel.k_star])
        for seg in trace.segments:
            i = seg.seg_index
            if i in sel.important:
                counts["imp"] += 1
                if i > decision:
                    counts["imp_after"] += 1
            else:
                counts["unimp"] += 1
                if i < decision:
                    counts["unimp_before"] += 1
                if i in prefix:
                    counts["high"] += 1
                    if i > decision:
                        counts["high_after"] += 1
                else:
                    counts["low"] += 1
                    if i < decision:
                        counts["low_before"] += 1

    def frac(num: int, den: int) -> float:
        return num / den if den else 0.0

    return PositionalReport(
        n_traces=n_used,
        n_excluded=n_excluded,
        important_after_decision=frac(counts["imp_after"], counts["imp"]),
        unimportant_before_decision=frac(counts["unimp_before"], counts["unimp"]),
        low_strength_unimportant_before=frac(counts["low_before"], counts["low"]),
        high_consistency_unimportant_after=frac(counts["high_after"], counts["high"]),
    )


def write_segment_stats_csv(
    path: str | Path, per_trace: Mapping[str, Sequence[SegmentStats]]
) -> None:
    """Long-format table: one row per (trace, segment, metric)."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trace_id", "seg_index", "metric", "value"])
        for trace_id, stats in per_trace.items():
            for s in stats:
                writer.writerow([trace_id, s.seg_index, "mean_nll", repr(s.mean_nll)])
                writer.writerow([trace_id, s.seg_index, "mean_entropy", repr(s.mean_entropy)])
                writer.writerow(
                    [trace_id, s.seg_index, "bleu_vs_preceding", repr(s.bleu_vs_preceding)]
                )
