"""Attribution dump interchange (NDJSON).

Line 1 is the run header; every following line is one trace's per-token
attribution values. Floats are serialized with Python's shortest
round-trip repr, so `read_dump(write_dump(x)) == x` bit-exactly. This
file format is the contract between any attribution producer (the
built-in reference model or an external trainer-side exporter) and the
rest of the toolkit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import FormatError, IncompatibleDumpError, SchemaError

DUMP_FORMAT_VERSION = 1


@dataclass(frozen=True)
class DumpHeader:
    model_id: str
    baseline: str = "pad"
    steps: int = 50
    keyword_profile: str = "paper-main"
    score_fn: str = "sum-answer-logprob"
    attributed_region: str = "cot-only"
    format_version: int = DUMP_FORMAT_VERSION
    extra: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        rec = {
            "format_version": self.format_version,
            "model_id": self.model_id,
            "baseline": self.baseline,
            "steps": self.steps,
            "keyword_profile": self.keyword_profile,
            "score_fn": self.score_fn,
            "attributed_region": self.attributed_region,
        }
        rec.update(self.extra)
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "DumpHeader":
        version = rec.get("format_version")
        if version != DUMP_FORMAT_VERSION:
            raise IncompatibleDumpError(
                f"dump format_version {version!r} unsupported (expected {DUMP_FORMAT_VERSION})"
            )
        known = {
            "format_version", "model_id", "baseline", "steps",
            "keyword_profile", "score_fn", "attributed_region",
        }
        missing = {"model_id", "baseline", "steps", "keyword_profile"} - set(rec)
        if missing:
            raise SchemaError(f"dump header missing fields: {sorted(missing)}")
        return cls(
            model_id=rec["model_id"],
            baseline=rec["baseline"],
            steps=int(rec["steps"]),
            keyword_profile=rec["keyword_profile"],
            score_fn=rec.get("score_fn", "sum-answer-logprob"),
            attributed_region=rec.get("attributed_region", "cot-only"),
            format_version=version,
            extra={k: v for k, v in rec.items() if k not in known},
        )


@dataclass(frozen=True)
class DumpRecord:
    """Per-token attribution values for one trace.

    ``token_spans`` ([start, end) byte offsets into the CoT) is present in
    dumps produced by external tokenizers so segments can be realigned.
    """

    trace_id: str
    token_igs: tuple[float, ...]
    completeness_gap: float | None = None
    token_spans: tuple[tuple[int, int], ...] | None = None

    def to_record(self) -> dict:
        rec: dict = {"trace_id": self.trace_id, "token_igs": list(self.token_igs)}
        if self.completeness_gap is not None:
            rec["completeness_gap"] = self.completeness_gap
        if self.token_spans is not None:
            rec["token_spans"] = [[s, e] for s, e in self.token_spans]
        return rec

    @classmethod
    def from_record(cls, rec: dict, where: str) -> "DumpRecord":
        if "trace_id" not in rec or "token_igs" not in rec:
            raise SchemaError(f"{where}: dump record needs trace_id and token_igs")
        spans = rec.get("token_spans")
        if spans is not None:
            spans = tuple((int(s), int(e)) for s, e in spans)
        gap = rec.get("completeness_gap")
        return cls(
            trace_id=rec["trace_id"],
            token_igs=tuple(float(v) for v in rec["token_igs"]),
            completeness_gap=None if gap is None else float(gap),
            token_spans=spans,
        )


def write_dump(path: str | Path, header: DumpHeader, records: Iterable[DumpRecord]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header.to_record(), ensure_ascii=False) + "\n")
        for rec in records:
            fh.write(json.dumps(rec.to_record(), ensure_ascii=False) + "\n")


def read_dump(path: str | Path) -> tuple[DumpHeader, list[DumpRecord]]:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.strip():
            raise FormatError(f"{path}: empty dump (no header line)")
        try:
            header = DumpHeader.from_record(json.loads(first))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:1: invalid header JSON: {exc.msg}") from exc
        records = []
        seen: set[str] = set()
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = DumpRecord.from_record(json.loads(line), where=f"{path}:{lineno}")
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
            if rec.trace_id in seen:
                raise FormatError(f"{path}:{lineno}: duplicate trace_id '{rec.trace_id}'")
            seen.add(rec.trace_id)
            records.append(rec)
    return header, records
