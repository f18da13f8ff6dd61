"""Tokenizers with byte-offset span tracking.

The built-in byte vocabulary (256 bytes + pad/bos/eos/marker specials)
matches the toolkit's reference convention, so dumps exported here align
with corpora tokenized on the other side without a shared dependency.
Hugging Face fast tokenizers are supported via char-to-byte offset
conversion.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SpannedToken:
    id: int
    start: int  # byte offset
    end: int


class ByteVocabTokenizer:
    name = "byte-v1"
    pad_id = 256
    bos_id = 257
    eos_id = 258
    vocab_size = 260

    def encode(self, text: str) -> list[int]:
        return list(text.encode("utf-8"))

    def encode_with_spans(self, text: str) -> list[SpannedToken]:
        return [
            SpannedToken(id=b, start=i, end=i + 1)
            for i, b in enumerate(text.encode("utf-8"))
        ]

    def decode(self, ids) -> str:
        return bytes(i for i in ids if i < 256).decode("utf-8", errors="replace")


class HFTokenizer:
    """Thin wrapper producing byte spans from a fast tokenizer's char offsets."""

    def __init__(self, path_or_id: str):
        from transformers import AutoTokenizer

        self.inner = AutoTokenizer.from_pretrained(path_or_id)
        self.name = f"hf:{path_or_id}"
        self.pad_id = self.inner.pad_token_id
        self.bos_id = self.inner.bos_token_id
        self.eos_id = self.inner.eos_token_id
        self.vocab_size = len(self.inner)

    def encode(self, text: str) -> list[int]:
        return self.inner(text, add_special_tokens=False)["input_ids"]

    def encode_with_spans(self, text: str) -> list[SpannedToken]:
        enc = self.inner(text, add_special_tokens=False, return_offsets_mapping=True)
        # prefix byte lengths convert char offsets to byte offsets
        byte_at = [0]
        for ch in text:
            byte_at.append(byte_at[-1] + len(ch.encode("utf-8")))
        return [
            SpannedToken(id=i, start=byte_at[s], end=byte_at[e])
            for i, (s, e) in zip(enc["input_ids"], enc["offset_mapping"])
        ]

    def decode(self, ids) -> str:
        return self.inner.decode(ids, skip_special_tokens=True)


def load_tokenizer(spec: str):
    """`byte-v1` for the built-in byte vocabulary, anything else is treated
    as a Hugging Face tokenizer path or id."""
    if spec == ByteVocabTokenizer.name:
        return ByteVocabTokenizer()
    return HFTokenizer(spec)
