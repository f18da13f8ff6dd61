"""Domain types for reasoning traces plus NDJSON corpus loading/saving.

A corpus is newline-delimited JSON, one record per line, UTF-8. Required
keys: ``trace_id``, ``query``, ``answer``, ``cot``. Optional keys:
``tokens`` (list of ``{text, start, end}``) and ``answer_tokens`` (same
shape, offsets into the answer text) for corpora pre-tokenized by an
external model's tokenizer. All spans are byte offsets, which keeps the
alignment stable for byte-level tokenizers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConflictError, ParseError, SchemaError

CORPUS_SCHEMA_V1 = "trace-ndjson-v1"

REQUIRED_KEYS = ("trace_id", "query", "answer", "cot")


@dataclass(frozen=True)
class Token:
    """One token of the CoT with its [start, end) byte span."""

    index: int
    text: str
    start: int
    end: int

    def __post_init__(self):
        if self.end <= self.start:
            raise SchemaError(
                f"token {self.index}: empty span [{self.start}, {self.end})"
            )


@dataclass(frozen=True)
class Segment:
    """A contiguous run of tokens opened by a transition keyword.

    ``token_range`` is [first, last] inclusive; ``char_span`` is the
    [start, end) byte span of the segment text within the CoT.
    """

    seg_index: int
    token_range: tuple[int, int]
    n_tokens: int
    is_first: bool
    is_last: bool
    char_span: tuple[int, int] = (0, 0)

    def token_indices(self) -> range:
        first, last = self.token_range
        return range(first, last + 1)


@dataclass
class ReasoningTrace:
    """One query, its ground-truth answer, and the full CoT trajectory."""

    trace_id: str
    query: str
    answer: str
    cot: str
    tokens: list[Token] = field(default_factory=list)
    segments: list[Segment] = field(default_factory=list)
    answer_tokens: list[Token] | None = None

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    def cot_bytes(self) -> bytes:
        return self.cot.encode("utf-8")

    def segment_text(self, seg_index: int) -> str:
        start, end = self.segments[seg_index].char_span
        return self.cot_bytes()[start:end].decode("utf-8", errors="replace")

    def segment_of_token(self) -> list[int]:
        """Per-token segment index; requires segments to be populated."""
        owner = [-1] * len(self.tokens)
        for seg in self.segments:
            for t in seg.token_indices():
                owner[t] = seg.seg_index
        return owner

    def with_tokens(
        self, tokens: list[Token], answer_tokens: list[Token] | None = None
    ) -> "ReasoningTrace":
        return replace(self, tokens=tokens, answer_tokens=answer_tokens)

    def with_segments(self, segments: list[Segment]) -> "ReasoningTrace":
        return replace(self, segments=segments)


def _tokens_from_record(raw, cot_len: int, where: str) -> list[Token]:
    tokens: list[Token] = []
    prev_end = 0
    for i, item in enumerate(raw):
        try:
            tok = Token(index=i, text=item["text"], start=int(item["start"]), end=int(item["end"]))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"{where}: token {i} malformed: {exc}") from exc
        if tok.start < prev_end:
            raise SchemaError(f"{where}: token {i} overlaps or is out of order")
        if tok.end > cot_len:
            raise SchemaError(
                f"{where}: token {i} span [{tok.start}, {tok.end}) exceeds text length {cot_len}"
            )
        prev_end = tok.end
        tokens.append(tok)
    return tokens


def trace_from_record(rec: dict, where: str = "record") -> ReasoningTrace:
    for key in REQUIRED_KEYS:
        if key not in rec:
            raise SchemaError(f"{where}: missing required field '{key}'")
        if not isinstance(rec[key], str):
            raise SchemaError(f"{where}: field '{key}' must be a string")
    trace = ReasoningTrace(
        trace_id=rec["trace_id"],
        query=rec["query"],
        answer=rec["answer"],
        cot=rec["cot"],
    )
    cot_len = len(trace.cot_bytes())
    if "tokens" in rec and rec["tokens"] is not None:
        trace.tokens = _tokens_from_record(rec["tokens"], cot_len, where)
    if "answer_tokens" in rec and rec["answer_tokens"] is not None:
        ans_len = len(trace.answer.encode("utf-8"))
        trace.answer_tokens = _tokens_from_record(rec["answer_tokens"], ans_len, where)
    return trace


def trace_to_record(trace: ReasoningTrace) -> dict:
    rec: dict = {
        "trace_id": trace.trace_id,
        "query": trace.query,
        "answer": trace.answer,
        "cot": trace.cot,
    }
    if trace.tokens:
        rec["tokens"] = [
            {"text": t.text, "start": t.start, "end": t.end} for t in trace.tokens
        ]
    if trace.answer_tokens is not None:
        rec["answer_tokens"] = [
            {"text": t.text, "start": t.start, "end": t.end} for t in trace.answer_tokens
        ]
    return rec


def load_traces(path: str | Path, schema: str = CORPUS_SCHEMA_V1) -> list[ReasoningTrace]:
    """Load an NDJSON corpus, validating records and rejecting duplicate ids."""
    if schema != CORPUS_SCHEMA_V1:
        raise SchemaError(f"unknown corpus schema '{schema}'")
    path = Path(path)
    traces: list[ReasoningTrace] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
            if not isinstance(rec, dict):
                raise ParseError(f"{path}:{lineno}: record is not an object")
            trace = trace_from_record(rec, where=f"{path}:{lineno}")
            if trace.trace_id in seen:
                raise ConflictError(
                    f"{path}:{lineno}: duplicate trace_id '{trace.trace_id}'"
                )
            seen.add(trace.trace_id)
            traces.append(trace)
    return traces


def save_traces(path: str | Path, traces: Iterable[ReasoningTrace]) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for trace in traces:
            fh.write(json.dumps(trace_to_record(trace), ensure_ascii=False) + "\n")


def validate_partition(trace: ReasoningTrace) -> None:
    """Check that segments partition token indices {0..T-1} exactly."""
    if not trace.segments:
        raise SchemaError(f"trace '{trace.trace_id}': no segments")
    covered: list[int] = []
    for seg in trace.segments:
        covered.extend(seg.token_indices())
    expected = list(range(len(trace.tokens)))
    if covered != expected:
        raise SchemaError(
            f"trace '{trace.trace_id}': segments do not partition token indices"
        )
    firsts = [s.seg_index for s in trace.segments if s.is_first]
    lasts = [s.seg_index for s in trace.segments if s.is_last]
    if firsts != [0] or lasts != [trace.segments[-1].seg_index]:
        raise SchemaError(f"trace '{trace.trace_id}': boundary flags inconsistent")


def index_by_id(traces: Sequence[ReasoningTrace]) -> dict[str, ReasoningTrace]:
    return {t.trace_id: t for t in traces}
