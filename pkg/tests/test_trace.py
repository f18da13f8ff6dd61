import json

import pytest

from segsel.errors import ConflictError, ParseError, SchemaError
from segsel.segmenter import default_keywords, segment_trace
from segsel.oracle import ByteTokenizer
from segsel.trace import ReasoningTrace, Token, load_traces, save_traces, validate_partition


def write_ndjson(path, records):
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def test_load_single_record(tmp_path):
    path = tmp_path / "corpus.ndjson"
    write_ndjson(path, [{"trace_id": "t1", "query": "1+1?", "answer": "2", "cot": "So 1+1=2."}])
    traces = load_traces(path)
    assert len(traces) == 1
    assert traces[0].answer == "2"
    assert traces[0].trace_id == "t1"


def test_load_empty_file(tmp_path):
    path = tmp_path / "empty.ndjson"
    path.write_text("")
    assert load_traces(path) == []


def test_duplicate_trace_id_rejected(tmp_path):
    path = tmp_path / "dup.ndjson"
    rec = {"trace_id": "a", "query": "q", "answer": "x", "cot": "c"}
    write_ndjson(path, [rec, rec])
    with pytest.raises(ConflictError, match="'a'"):
        load_traces(path)


def test_malformed_line_names_line_number(tmp_path):
    path = tmp_path / "bad.ndjson"
    path.write_text('{"trace_id": "a", "query": "q", "answer": "x", "cot": "c"}\n{oops\n')
    with pytest.raises(ParseError, match=":2"):
        load_traces(path)


def test_missing_field_is_schema_error(tmp_path):
    path = tmp_path / "miss.ndjson"
    write_ndjson(path, [{"trace_id": "a", "query": "q", "cot": "c"}])
    with pytest.raises(SchemaError, match="answer"):
        load_traces(path)


def test_pretokenized_records_roundtrip(tmp_path):
    rec = {
        "trace_id": "t",
        "query": "q",
        "answer": "42",
        "cot": "ab cd",
        "tokens": [
            {"text": "ab", "start": 0, "end": 2},
            {"text": " cd", "start": 2, "end": 5},
        ],
    }
    path = tmp_path / "tok.ndjson"
    write_ndjson(path, [rec])
    traces = load_traces(path)
    assert [t.text for t in traces[0].tokens] == ["ab", " cd"]

    out = tmp_path / "out.ndjson"
    save_traces(out, traces)
    again = load_traces(out)
    assert again == traces


def test_overlapping_token_spans_rejected(tmp_path):
    rec = {
        "trace_id": "t", "query": "q", "answer": "a", "cot": "abcd",
        "tokens": [{"text": "ab", "start": 0, "end": 2}, {"text": "bc", "start": 1, "end": 3}],
    }
    path = tmp_path / "bad.ndjson"
    write_ndjson(path, [rec])
    with pytest.raises(SchemaError, match="overlap"):
        load_traces(path)


def test_token_span_beyond_text_rejected(tmp_path):
    rec = {
        "trace_id": "t", "query": "q", "answer": "a", "cot": "ab",
        "tokens": [{"text": "abx", "start": 0, "end": 3}],
    }
    path = tmp_path / "bad.ndjson"
    write_ndjson(path, [rec])
    with pytest.raises(SchemaError, match="exceeds"):
        load_traces(path)


def test_roundtrip_identity(tmp_path):
    records = [
        {"trace_id": f"t{i}", "query": f"q{i}", "answer": str(i), "cot": f"body {i}\n\nWait, more {i}"}
        for i in range(5)
    ]
    path = tmp_path / "in.ndjson"
    write_ndjson(path, records)
    traces = load_traces(path)
    out = tmp_path / "out.ndjson"
    save_traces(out, traces)
    assert load_traces(out) == traces
    assert [t.trace_id for t in traces] == [f"t{i}" for i in range(5)]  # order kept


def test_partition_property_after_segmentation():
    tok = ByteTokenizer()
    trace = ReasoningTrace(
        trace_id="p", query="q", answer="7",
        cot="start here\n\nWait, reconsider\n\nHowever, 7 it is",
    )
    trace = trace.with_tokens(tok.tokens(trace.cot))
    trace = segment_trace(trace, default_keywords())
    validate_partition(trace)
    covered = sorted(i for seg in trace.segments for i in seg.token_indices())
    assert covered == list(range(len(trace.tokens)))
