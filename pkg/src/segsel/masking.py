"""Loss masks over the training-target token sequence, and the masked /
unmasked cross-entropy losses used to verify them.

The mask domain is the CoT token sequence, extended by the appended
answer-region tokens when ``answer_always_on`` (the default: the final
answer is always trained). Masks are stored as maximal runs of ones;
query tokens are never part of the domain.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptySupportError, FormatError, JoinError, SchemaError
from .selection import SelectionResult
from .trace import ReasoningTrace


@dataclass(frozen=True)
class LossMask:
    trace_id: str
    length: int
    ones: tuple[tuple[int, int], ...]

    def __post_init__(self):
        prev_end = 0
        for start, end in self.ones:
            if start < prev_end or end <= start or end > self.length:
                raise FormatError(
                    f"mask '{self.trace_id}': ranges must be sorted, disjoint, "
                    f"non-empty, and within [0, {self.length})"
                )
            prev_end = end

    @property
    def coverage_ratio(self) -> float:
        if self.length == 0:
            return 0.0
        return sum(e - s for s, e in self.ones) / self.length

    def indicator(self) -> np.ndarray:
        ind = np.zeros(self.length, dtype=bool)
        for s, e in self.ones:
            ind[s:e] = True
        return ind


def _runs_from_indicator(ind: Sequence[bool]) -> tuple[tuple[int, int], ...]:
    runs = []
    start = None
    for i, v in enumerate(ind):
        if v and start is None:
            start = i
        elif not v and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(ind)))
    return tuple(runs)


def build_loss_mask(
    trace: ReasoningTrace,
    sel: SelectionResult,
    answer_always_on: bool = True,
) -> LossMask:
    """Per-token indicator from an important-segment set."""
    if not trace.segments:
        raise JoinError(f"trace '{trace.trace_id}' has no segments")
    n_segments = len(trace.segments)
    for seg_index in sel.important:
        if not 0 <= seg_index < n_segments:
            raise JoinError(
                f"selection for '{trace.trace_id}' names segment {seg_index} "
                f"but the trace has {n_segments}"
            )
    t = len(trace.tokens)
    ind = [False] * t
    for seg in trace.segments:
        if seg.seg_index in sel.important:
            for tok in seg.token_indices():
                ind[tok] = True
    length = t
    if answer_always_on:
        if trace.answer_tokens is None:
            raise SchemaError(
                f"trace '{trace.trace_id}' lacks answer_tokens; tokenize the answer "
                "or build the mask with answer_always_on=False"
            )
        a = len(trace.answer_tokens)
        ind.extend([True] * a)
        length = t + a
    return LossMask(trace_id=trace.trace_id, length=length, ones=_runs_from_indicator(ind))


def mask_from_token_indices(
    trace: ReasoningTrace,
    token_indices: Iterable[int],
    answer_always_on: bool = True,
) -> LossMask:
    """Mask from an explicit CoT token index set (token-level selectors)."""
    t = len(trace.tokens)
    ind = [False] * t
    for idx in token_indices:
        if not 0 <= idx < t:
            raise JoinError(f"token index {idx} out of range for '{trace.trace_id}'")
        ind[idx] = True
    length = t
    if answer_always_on:
        if trace.answer_tokens is None:
            raise SchemaError(f"trace '{trace.trace_id}' lacks answer_tokens")
        ind.extend([True] * len(trace.answer_tokens))
        length += len(trace.answer_tokens)
    return LossMask(trace_id=trace.trace_id, length=length, ones=_runs_from_indicator(ind))


def compute_loss(oracle, trace: ReasoningTrace, mask: LossMask | None = None) -> float:
    """Mean next-token NLL over the mask domain (all domain tokens when
    no mask is given; the masked mean otherwise)."""
    tok = oracle.tokenizer
    cot_ids = tok.encode(trace.cot)
    ans_ids = tok.encode(trace.answer)
    domain = cot_ids + ans_ids
    if mask is not None:
        if mask.trace_id != trace.trace_id:
            raise JoinError(
                f"mask is for '{mask.trace_id}', trace is '{trace.trace_id}'"
            )
        if mask.length > len(domain):
            raise JoinError(
                f"mask length {mask.length} exceeds target length {len(domain)} "
                f"for '{trace.trace_id}'"
            )
        domain = domain[: mask.length]
    context = [tok.bos_id] + tok.encode(trace.query)
    nlls = oracle.token_nlls(context, domain)
    if mask is None:
        return float(np.mean(nlls))
    ind = mask.indicator()
    if not ind.any():
        raise EmptySupportError(
            f"mask for '{trace.trace_id}' selects no tokens; selective loss undefined"
        )
    return float(np.mean(nlls[ind]))


# -- NDJSON interchange -------------------------------------------------------


def write_masks(path: str | Path, masks: Iterable[LossMask]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for mask in masks:
            rec = {
                "trace_id": mask.trace_id,
                "length": mask.length,
                "ones": [[s, e] for s, e in mask.ones],
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def read_masks(path: str | Path) -> list[LossMask]:
    masks = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                mask = LossMask(
                    trace_id=rec["trace_id"],
                    length=int(rec["length"]),
                    ones=tuple((int(s), int(e)) for s, e in rec["ones"]),
                )
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
            except KeyError as exc:
                raise FormatError(f"{path}:{lineno}: mask record missing {exc}") from exc
            masks.append(mask)
    return masks
