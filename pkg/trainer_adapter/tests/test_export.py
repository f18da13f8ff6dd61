import json
from pathlib import Path

import pytest

from trainer_adapter.export import ExportJob, export_igs
from trainer_adapter.tokenizers import ByteVocabTokenizer, load_tokenizer


def read_lines(path):
    return [json.loads(l) for l in Path(path).read_text().splitlines() if l.strip()]


def test_export_writes_header_and_records(tiny_model_dir, toy_corpus, tmp_path):
    out = tmp_path / "dump.ndjson"
    summary = export_igs(ExportJob(model=tiny_model_dir, corpus=toy_corpus, out=out, steps=8))
    assert summary["exported"] == 3
    lines = read_lines(out)
    header, records = lines[0], lines[1:]
    assert header["format_version"] == 1
    assert header["baseline"] == "pad"
    assert header["steps"] == 8
    assert header["tokenizer"] == "byte-v1"
    assert [r["trace_id"] for r in records] == ["t0", "t1", "t2"]


def test_default_steps_is_50():
    assert ExportJob(model="x", corpus="c", out="o").steps == 50


def test_spans_reslice_source_text(tiny_model_dir, toy_corpus, tmp_path):
    out = tmp_path / "dump.ndjson"
    export_igs(ExportJob(model=tiny_model_dir, corpus=toy_corpus, out=out, steps=4))
    corpus = {json.loads(l)["trace_id"]: json.loads(l) for l in toy_corpus.read_text().splitlines()}
    for rec in read_lines(out)[1:]:
        cot_bytes = corpus[rec["trace_id"]]["cot"].encode("utf-8")
        assert len(rec["token_igs"]) == len(rec["token_spans"])
        rebuilt = b"".join(cot_bytes[s:e] for s, e in rec["token_spans"])
        assert rebuilt == cot_bytes


def test_resume_equals_uninterrupted(tiny_model_dir, toy_corpus, tmp_path):
    full = tmp_path / "full.ndjson"
    export_igs(ExportJob(model=tiny_model_dir, corpus=toy_corpus, out=full, steps=4))

    partial = tmp_path / "partial.ndjson"
    export_igs(ExportJob(model=tiny_model_dir, corpus=toy_corpus, out=partial, steps=4, max_traces=1))
    summary = export_igs(ExportJob(model=tiny_model_dir, corpus=toy_corpus, out=partial, steps=4))
    assert summary["resumed"] == 1
    assert partial.read_bytes() == full.read_bytes()


def test_resume_truncates_torn_line(tiny_model_dir, toy_corpus, tmp_path):
    full = tmp_path / "full.ndjson"
    export_igs(ExportJob(model=tiny_model_dir, corpus=toy_corpus, out=full, steps=4))
    torn = tmp_path / "torn.ndjson"
    export_igs(ExportJob(model=tiny_model_dir, corpus=toy_corpus, out=torn, steps=4, max_traces=2))
    with torn.open("a", encoding="utf-8") as fh:
        fh.write('{"trace_id": "t2", "token_igs": [0.')  # interrupted write
    export_igs(ExportJob(model=tiny_model_dir, corpus=toy_corpus, out=torn, steps=4))
    assert torn.read_bytes() == full.read_bytes()


def test_overlength_trace_recorded_as_skip(tiny_model_dir, tmp_path):
    corpus = tmp_path / "corpus.ndjson"
    long_cot = "x" * 2000
    corpus.write_text(
        json.dumps({"trace_id": "big", "query": "q", "answer": "a", "cot": long_cot}) + "\n"
        + json.dumps({"trace_id": "ok", "query": "q", "answer": "a", "cot": "short one"}) + "\n"
    )
    out = tmp_path / "dump.ndjson"
    summary = export_igs(ExportJob(model=tiny_model_dir, corpus=corpus, out=out, steps=2))
    assert summary["skipped"] == ["big"]
    assert summary["exported"] == 1
    assert json.loads((tmp_path / "dump.ndjson.skipped.json").read_text()) == ["big"]


def test_completeness_gap_small_on_double_precision(tiny_model_dir, toy_corpus, tmp_path):
    out = tmp_path / "dump.ndjson"
    export_igs(ExportJob(model=tiny_model_dir, corpus=toy_corpus, out=out, steps=64))
    for rec in read_lines(out)[1:]:
        assert rec["completeness_gap"] < 0.5  # untrained model, sane quadrature


def test_byte_tokenizer_spans():
    tok = ByteVocabTokenizer()
    spans = tok.encode_with_spans("abé")
    assert [(s.start, s.end) for s in spans] == [(0, 1), (1, 2), (2, 3), (3, 4)]
    assert load_tokenizer("byte-v1").name == "byte-v1"
