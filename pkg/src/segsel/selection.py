"""Segment ranking, the cumulative-strength cut k*, and the important set.

Ranking sorts by normalized strength descending with ties broken by the
earlier segment index. k* is the smallest prefix whose cumulative
normalized strength reaches tau (inclusive); the important set keeps the
prefix members whose consistency is <= beta, plus the first and last
segments when boundary inclusion is on (boundary segments bypass the
consistency filter).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, FormatError
from .scoring import SegmentScore
from .trace import Segment

DEFAULT_TAU = 0.7
DEFAULT_BETA = 0.8


@dataclass(frozen=True)
class SelectionPolicy:
    tau: float = DEFAULT_TAU
    beta: float = DEFAULT_BETA
    include_boundaries: bool = True
    tie_break: str = "earlier-index"

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ConfigError("tau must lie in (0, 1]")
        if not 0 <= self.beta <= 1:
            raise ConfigError("beta must lie in [0, 1]")
        if self.tie_break != "earlier-index":
            raise ConfigError(f"unknown tie_break '{self.tie_break}'")

    def to_record(self) -> dict:
        return {
            "tau": self.tau,
            "beta": self.beta,
            "include_boundaries": self.include_boundaries,
            "tie_break": self.tie_break,
        }


@dataclass(frozen=True)
class SelectionResult:
    ranking: tuple[int, ...]
    k_star: int
    important: frozenset[int]
    policy: SelectionPolicy = field(default_factory=SelectionPolicy)
    method: str = "ig-segments"

    def important_sorted(self) -> list[int]:
        return sorted(self.important)


def select_important(
    scores: Sequence[SegmentScore],
    segments: Sequence[Segment],
    policy: SelectionPolicy = SelectionPolicy(),
) -> SelectionResult:
    """Apply ranking, the tau cut, the beta filter, and boundary forcing."""
    m = len(scores)
    if m == 0:
        raise ConfigError("cannot select from an empty score list")
    if segments and len(segments) != m:
        raise ConfigError(f"{len(segments)} segments but {m} scores")
    ns = [s.normalized_strength for s in scores]
    ranking = sorted(range(m), key=lambda i: (-ns[i], i))

    k_star = m
    acc = 0.0
    for pos, seg in enumerate(ranking, start=1):
        acc += ns[seg]
        if acc >= policy.tau:
            k_star = pos
            break

    important = {
        seg for seg in ranking[:k_star] if scores[seg].consistency <= policy.beta
    }
    if policy.include_boundaries and segments:
        for seg in segments:
            if seg.is_first or seg.is_last:
                important.add(seg.seg_index)
    return SelectionResult(
        ranking=tuple(ranking),
        k_star=k_star,
        important=frozenset(important),
        policy=policy,
    )


# -- NDJSON interchange -------------------------------------------------------


def selection_to_record(trace_id: str, sel: SelectionResult) -> dict:
    return {
        "trace_id": trace_id,
        "method": sel.method,
        "ranking": list(sel.ranking),
        "k_star": sel.k_star,
        "important": sel.important_sorted(),
        "policy": sel.policy.to_record(),
    }


def write_selections(path: str | Path, selections: Iterable[tuple[str, SelectionResult]]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for trace_id, sel in selections:
            fh.write(json.dumps(selection_to_record(trace_id, sel), ensure_ascii=False) + "\n")


def read_selections(path: str | Path) -> dict[str, SelectionResult]:
    out: dict[str, SelectionResult] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            try:
                policy = SelectionPolicy(
                    tau=rec["policy"]["tau"],
                    beta=rec["policy"]["beta"],
                    include_boundaries=rec["policy"]["include_boundaries"],
                )
                out[rec["trace_id"]] = SelectionResult(
                    ranking=tuple(rec["ranking"]),
                    k_star=int(rec["k_star"]),
                    important=frozenset(rec["important"]),
                    policy=policy,
                    method=rec.get("method", "ig-segments"),
                )
            except KeyError as exc:
                raise FormatError(f"{path}:{lineno}: selection record missing {exc}") from exc
    return out
