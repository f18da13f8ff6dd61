"""Masked SFT dataset emission.

Selective mode: one JSONL record per trace with

    {trace_id, input_ids, labels, loss_weights}

where input_ids = [bos] + query + cot + marker + answer + [eos], labels
follow the usual causal-LM convention (-100 on the prompt/marker region,
token ids elsewhere), and loss_weights carry the mask indicator per
target token (prompt weight 0; batch-level normalization is left to the
trainer). Pruned mode consumes an already-pruned corpus and emits
{trace_id, prompt, text} JSONL plus a plain-text variant with examples
separated by blank lines.

`verify_masked_dataset` re-reads an emitted file and checks the weight
vectors against the masks bit-for-bit.
"""

from __future__ import annotations

import json
from pathlib import Path

from .export import DEFAULT_MARKER, _read_corpus
from .tokenizers import load_tokenizer

IGNORE_INDEX = -100


def _read_masks(path: str | Path) -> dict[str, dict]:
    masks = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            masks[rec["trace_id"]] = rec
    return masks


def _indicator(mask: dict) -> list[int]:
    ind = [0] * mask["length"]
    for start, end in mask["ones"]:
        for i in range(start, end):
            ind[i] = 1
    return ind


def _selective_record(rec: dict, mask: dict, tok, marker: str) -> dict:
    q_ids = tok.encode(rec["query"])
    cot_ids = tok.encode(rec["cot"])
    ans_ids = tok.encode(rec["answer"])
    marker_ids = tok.encode(marker)
    bos = [tok.bos_id] if tok.bos_id is not None else []
    eos = [tok.eos_id] if tok.eos_id is not None else []

    ind = _indicator(mask)
    t_cot = len(cot_ids)
    if len(ind) not in (t_cot, t_cot + len(ans_ids)):
        raise ValueError(
            f"mask for '{rec['trace_id']}' has length {len(ind)}, expected "
            f"{t_cot} or {t_cot + len(ans_ids)} under tokenizer '{tok.name}'"
        )
    cot_w = ind[:t_cot]
    ans_w = ind[t_cot:] if len(ind) > t_cot else [0] * len(ans_ids)

    input_ids = bos + q_ids + cot_ids + marker_ids + ans_ids + eos
    prompt_len = len(bos) + len(q_ids)
    labels = (
        [IGNORE_INDEX] * prompt_len
        + cot_ids
        + [IGNORE_INDEX] * len(marker_ids)
        + ans_ids
        + [IGNORE_INDEX] * len(eos)
    )
    weights = (
        [0] * prompt_len + cot_w + [0] * len(marker_ids) + ans_w + [0] * len(eos)
    )
    return {
        "trace_id": rec["trace_id"],
        "input_ids": input_ids,
        "labels": labels,
        "loss_weights": weights,
    }


def emit_masked_dataset(
    corpus: str | Path,
    out: str | Path,
    masks: str | Path | None = None,
    mode: str = "selective",
    tokenizer: str = "byte-v1",
    answer_marker: str = DEFAULT_MARKER,
) -> dict:
    """Write the dataset and run the verification pass; returns its report."""
    records = _read_corpus(corpus)
    out = Path(out)
    if mode == "selective":
        if masks is None:
            raise ValueError("selective mode needs a mask file")
        tok = load_tokenizer(tokenizer)
        mask_by_id = _read_masks(masks)
        missing = [r["trace_id"] for r in records if r["trace_id"] not in mask_by_id]
        if missing:
            raise ValueError(f"masks missing for trace_ids: {missing[:10]}")
        with out.open("w", encoding="utf-8") as fh:
            for rec in records:
                row = _selective_record(rec, mask_by_id[rec["trace_id"]], tok, answer_marker)
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
        report = verify_masked_dataset(out, masks, corpus, tokenizer=tokenizer)
        if report["mismatches"]:
            raise AssertionError(f"verification failed: {report['mismatches'][:5]}")
        return report
    if mode == "pruned":
        txt = out.with_suffix(out.suffix + ".txt")
        with out.open("w", encoding="utf-8") as fh, txt.open("w", encoding="utf-8") as tf:
            for rec in records:
                fh.write(
                    json.dumps(
                        {"trace_id": rec["trace_id"], "prompt": rec["query"],
                         "text": rec["cot"] + "\n" + answer_marker + " " + rec["answer"]},
                        ensure_ascii=False,
                    )
                    + "\n"
                )
                tf.write(rec["query"] + "\n" + rec["cot"] + "\n" + answer_marker + " " + rec["answer"] + "\n\n")
        return {"examples": len(records), "mismatches": []}
    raise ValueError(f"unknown mode '{mode}'")


def verify_masked_dataset(
    dataset: str | Path,
    masks: str | Path,
    corpus: str | Path,
    tokenizer: str = "byte-v1",
) -> dict:
    """Check emitted weight vectors equal the masks exactly."""
    tok = load_tokenizer(tokenizer)
    mask_by_id = _read_masks(masks)
    corpus_by_id = {r["trace_id"]: r for r in _read_corpus(corpus)}
    mismatches = []
    n = 0
    with Path(dataset).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            n += 1
            trace_id = row["trace_id"]
            mask = mask_by_id.get(trace_id)
            rec = corpus_by_id.get(trace_id)
            if mask is None or rec is None:
                mismatches.append((trace_id, "unjoined"))
                continue
            bos = 1 if tok.bos_id is not None else 0
            prompt_len = bos + len(tok.encode(rec["query"]))
            t_cot = len(tok.encode(rec["cot"]))
            ind = _indicator(mask)
            got_cot = row["loss_weights"][prompt_len : prompt_len + t_cot]
            if got_cot != ind[:t_cot]:
                mismatches.append((trace_id, "cot weights differ"))
            if len(ind) > t_cot:
                marker_len = len(tok.encode(DEFAULT_MARKER))
                lo = prompt_len + t_cot + marker_len
                got_ans = row["loss_weights"][lo : lo + (len(ind) - t_cot)]
                if got_ans != ind[t_cot:]:
                    mismatches.append((trace_id, "answer weights differ"))
    return {"examples": n, "mismatches": mismatches}
