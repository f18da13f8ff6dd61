import json

import pytest

from trainer_adapter.dataset import emit_masked_dataset, verify_masked_dataset
from trainer_adapter.tokenizers import ByteVocabTokenizer
from conftest import write_ndjson


def masks_for(corpus_path, ones_fn, answer_region=True):
    tok = ByteVocabTokenizer()
    masks = []
    for line in open(corpus_path, encoding="utf-8"):
        rec = json.loads(line)
        t = len(tok.encode(rec["cot"]))
        a = len(tok.encode(rec["answer"]))
        length = t + a if answer_region else t
        ones = ones_fn(rec["trace_id"], t, a)
        masks.append({"trace_id": rec["trace_id"], "length": length, "ones": ones})
    return masks


def test_all_ones_mask_full_weights(toy_corpus, tmp_path):
    masks_path = tmp_path / "masks.ndjson"
    write_ndjson(masks_path, masks_for(toy_corpus, lambda tid, t, a: [[0, t + a]]))
    out = tmp_path / "dataset.jsonl"
    report = emit_masked_dataset(toy_corpus, out, masks=masks_path)
    assert report["mismatches"] == []
    tok = ByteVocabTokenizer()
    for line in out.read_text().splitlines():
        row = json.loads(line)
        corpus_rec = [json.loads(l) for l in open(toy_corpus) if json.loads(l)["trace_id"] == row["trace_id"]][0]
        t = len(tok.encode(corpus_rec["cot"]))
        prompt_len = 1 + len(tok.encode(corpus_rec["query"]))
        assert all(w == 1 for w in row["loss_weights"][prompt_len : prompt_len + t])
        assert all(w == 0 for w in row["loss_weights"][:prompt_len])  # prompt masked


def test_partial_mask_weights_match(toy_corpus, tmp_path):
    masks_path = tmp_path / "masks.ndjson"
    write_ndjson(masks_path, masks_for(toy_corpus, lambda tid, t, a: [[0, 4]], answer_region=False))
    out = tmp_path / "dataset.jsonl"
    report = emit_masked_dataset(toy_corpus, out, masks=masks_path)
    assert report["mismatches"] == []
    row = json.loads(out.read_text().splitlines()[0])
    tok = ByteVocabTokenizer()
    corpus_rec = json.loads(open(toy_corpus).readline())
    prompt_len = 1 + len(tok.encode(corpus_rec["query"]))
    t = len(tok.encode(corpus_rec["cot"]))
    weights = row["loss_weights"][prompt_len : prompt_len + t]
    assert weights == [1, 1, 1, 1] + [0] * (t - 4)


def test_empty_coverage_mask(toy_corpus, tmp_path):
    masks_path = tmp_path / "masks.ndjson"
    write_ndjson(masks_path, masks_for(toy_corpus, lambda tid, t, a: [], answer_region=False))
    out = tmp_path / "dataset.jsonl"
    report = emit_masked_dataset(toy_corpus, out, masks=masks_path)
    assert report["mismatches"] == []
    for line in out.read_text().splitlines():
        row = json.loads(line)
        assert all(w == 0 for w in row["loss_weights"])


def test_labels_follow_causal_convention(toy_corpus, tmp_path):
    masks_path = tmp_path / "masks.ndjson"
    write_ndjson(masks_path, masks_for(toy_corpus, lambda tid, t, a: [[0, t + a]]))
    out = tmp_path / "dataset.jsonl"
    emit_masked_dataset(toy_corpus, out, masks=masks_path)
    tok = ByteVocabTokenizer()
    row = json.loads(out.read_text().splitlines()[0])
    assert len(row["labels"]) == len(row["input_ids"]) == len(row["loss_weights"])
    corpus_rec = json.loads(open(toy_corpus).readline())
    prompt_len = 1 + len(tok.encode(corpus_rec["query"]))
    assert all(l == -100 for l in row["labels"][:prompt_len])
    t = len(tok.encode(corpus_rec["cot"]))
    assert row["labels"][prompt_len : prompt_len + t] == tok.encode(corpus_rec["cot"])


def test_unjoined_trace_rejected(toy_corpus, tmp_path):
    masks_path = tmp_path / "masks.ndjson"
    masks = masks_for(toy_corpus, lambda tid, t, a: [[0, t + a]])[:-1]  # drop one
    write_ndjson(masks_path, masks)
    with pytest.raises(ValueError, match="t2"):
        emit_masked_dataset(toy_corpus, tmp_path / "d.jsonl", masks=masks_path)


def test_pruned_mode(toy_corpus, tmp_path):
    out = tmp_path / "pruned.jsonl"
    report = emit_masked_dataset(toy_corpus, out, mode="pruned")
    assert report["examples"] == 3
    rows = [json.loads(l) for l in out.read_text().splitlines()]
    assert all({"trace_id", "prompt", "text"} <= set(r) for r in rows)
    assert (tmp_path / "pruned.jsonl.txt").exists()


def test_verify_detects_corruption(toy_corpus, tmp_path):
    masks_path = tmp_path / "masks.ndjson"
    write_ndjson(masks_path, masks_for(toy_corpus, lambda tid, t, a: [[0, t + a]]))
    out = tmp_path / "dataset.jsonl"
    emit_masked_dataset(toy_corpus, out, masks=masks_path)
    rows = [json.loads(l) for l in out.read_text().splitlines()]
    tok = ByteVocabTokenizer()
    rec0 = json.loads(open(toy_corpus).readline())
    inside_cot = 1 + len(tok.encode(rec0["query"])) + 2
    rows[0]["loss_weights"][inside_cot] = 1 - rows[0]["loss_weights"][inside_cot]
    write_ndjson(out, rows)
    report = verify_masked_dataset(out, masks_path, toy_corpus)
    assert report["mismatches"]
