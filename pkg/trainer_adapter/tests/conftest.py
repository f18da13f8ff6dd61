import json

import pytest
import torch


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A locally-constructed tiny GPT-2 over the byte vocabulary."""
    from transformers import GPT2Config, GPT2LMHeadModel

    torch.manual_seed(0)
    cfg = GPT2Config(
        vocab_size=260, n_positions=512, n_embd=32, n_layer=2, n_head=2,
        bos_token_id=257, eos_token_id=258, pad_token_id=256,
    )
    model = GPT2LMHeadModel(cfg)
    path = tmp_path_factory.mktemp("model") / "tiny-gpt2"
    model.save_pretrained(path)
    return str(path)


def write_ndjson(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


@pytest.fixture
def toy_corpus(tmp_path):
    records = [
        {
            "trace_id": "t0",
            "query": "What is 2+3?",
            "answer": "5",
            "cot": "We add them.\n\nWait, 2+3 equals 5.\n\nHowever, the total is 5.",
        },
        {
            "trace_id": "t1",
            "query": "What is 7+1?",
            "answer": "8",
            "cot": "Counting on.\n\nAnother view: 7+1 equals 8.",
        },
        {
            "trace_id": "t2",
            "query": "Name the color.",
            "answer": "blue",
            "cot": "Sky tone.\n\nNot sure, but it is blue.",
        },
    ]
    path = tmp_path / "corpus.ndjson"
    write_ndjson(path, records)
    return path
