"""Segment-level aggregation of token attributions.

strength(S)   = sum(|ig|) / sqrt(N)          (default; alternates below)
consistency(S)= |sum(ig)| / sum(|ig|)        (0/0 defined as 1.0)

Normalized strengths divide by the within-trace total, so they sum to 1
per trace; the all-zero trace degenerates to the uniform 1/M. Summation
is index-ordered 64-bit throughout for determinism.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .errors import ConfigError
from .trace import Segment

MODE_SQRT = "sqrt-normalized-sum"
MODE_DIRECT = "direct-sum"
MODE_TOP20 = "top20-mean"
AGGREGATION_MODES = (MODE_SQRT, MODE_DIRECT, MODE_TOP20)


@dataclass(frozen=True)
class SegmentScore:
    seg_index: int
    strength: float
    consistency: float
    normalized_strength: float = float("nan")
    aggregation_mode: str = MODE_SQRT


def _aggregate(abs_vals: Sequence[float], mode: str) -> float:
    n = len(abs_vals)
    if mode == MODE_SQRT:
        return math.fsum(abs_vals) / math.sqrt(n)
    if mode == MODE_DIRECT:
        return math.fsum(abs_vals)
    if mode == MODE_TOP20:
        k = math.ceil(0.2 * n)
        top = sorted(abs_vals, reverse=True)[:k]
        return math.fsum(top) / k
    raise ConfigError(f"unknown aggregation mode '{mode}'")


def segment_scores(
    segments: Sequence[Segment],
    token_igs: Sequence[float],
    mode: str = MODE_SQRT,
) -> list[SegmentScore]:
    """Strength and direction consistency per segment."""
    if mode not in AGGREGATION_MODES:
        raise ConfigError(f"unknown aggregation mode '{mode}'")
    scores = []
    for seg in segments:
        first, last = seg.token_range
        if last >= len(token_igs):
            raise ConfigError(
                f"segment {seg.seg_index} needs token {last} but only "
                f"{len(token_igs)} attribution values are present"
            )
        vals = [float(token_igs[t]) for t in seg.token_indices()]
        abs_vals = [abs(v) for v in vals]
        abs_sum = math.fsum(abs_vals)
        signed_sum = math.fsum(vals)
        consistency = 1.0 if abs_sum == 0.0 else min(abs(signed_sum) / abs_sum, 1.0)
        scores.append(
            SegmentScore(
                seg_index=seg.seg_index,
                strength=_aggregate(abs_vals, mode),
                consistency=consistency,
                aggregation_mode=mode,
            )
        )
    return scores


def normalize_strengths(scores: Sequence[SegmentScore]) -> list[SegmentScore]:
    """Within-trace normalization; all-zero strengths become uniform."""
    total = math.fsum(s.strength for s in scores)
    m = len(scores)
    if m == 0:
        raise ConfigError("no scores to normalize")
    if total == 0.0:
        return [replace(s, normalized_strength=1.0 / m) for s in scores]
    return [replace(s, normalized_strength=s.strength / total) for s in scores]


def score_trace(segments, token_igs, mode: str = MODE_SQRT) -> list[SegmentScore]:
    return normalize_strengths(segment_scores(segments, token_igs, mode))


# -- CSV interchange ---------------------------------------------------------

SCORE_CSV_FIELDS = ("trace_id", "seg_index", "strength", "normalized_strength", "consistency")


def write_scores_csv(path: str | Path, per_trace: dict[str, Sequence[SegmentScore]]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCORE_CSV_FIELDS)
        for trace_id, scores in per_trace.items():
            for s in scores:
                writer.writerow(
                    [trace_id, s.seg_index, repr(s.strength), repr(s.normalized_strength), repr(s.consistency)]
                )


def read_scores_csv(path: str | Path) -> dict[str, list[SegmentScore]]:
    out: dict[str, list[SegmentScore]] = {}
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out.setdefault(row["trace_id"], []).append(
                SegmentScore(
                    seg_index=int(row["seg_index"]),
                    strength=float(row["strength"]),
                    normalized_strength=float(row["normalized_strength"]),
                    consistency=float(row["consistency"]),
                )
            )
    return out
