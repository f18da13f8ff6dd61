"""Integrated-gradients export from a torch causal LM.

For each trace, CoT token embeddings are interpolated from the pad-token
embedding to their actual values over J right-endpoint steps; the model
output is the summed log-probability of the answer tokens. The result is
written in the toolkit's attribution-dump NDJSON format (header line,
then one record per trace) with token byte spans so the consumer can
align segments.

The job is resumable: records append one complete JSON line at a time,
and a restart skips trace_ids already present (an interrupted trailing
line is truncated away). Over-length traces are recorded as skips, never
aborts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .tokenizers import load_tokenizer

DUMP_FORMAT_VERSION = 1
DEFAULT_STEPS = 50
DEFAULT_MARKER = "final answer:"


@dataclass
class ExportJob:
    model: str
    corpus: str | Path
    out: str | Path
    steps: int = DEFAULT_STEPS
    tokenizer: str = "byte-v1"
    device: str = "cpu"
    batch_steps: int = 10
    keyword_profile: str = "paper-main"
    answer_marker: str = DEFAULT_MARKER
    float64: bool = True
    max_traces: int | None = None  # mainly for interruption tests
    extra_header: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")


def _load_model(job: ExportJob):
    from transformers import AutoModelForCausalLM

    model = AutoModelForCausalLM.from_pretrained(job.model)
    model.eval()
    if job.float64 and job.device == "cpu":
        model = model.double()
    return model.to(job.device)


def _read_corpus(path: str | Path) -> list[dict]:
    records = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            for key in ("trace_id", "query", "answer", "cot"):
                if key not in rec:
                    raise ValueError(f"{path}:{lineno}: missing '{key}'")
            records.append(rec)
    return records


def _existing_trace_ids(path: Path) -> set[str]:
    """Completed records in a partial dump; truncates a torn last line."""
    if not path.exists():
        return set()
    raw = path.read_bytes()
    if not raw:
        return set()
    keep = raw
    if not raw.endswith(b"\n"):
        keep = raw[: raw.rfind(b"\n") + 1] if b"\n" in raw else b""
        path.write_bytes(keep)
    done = set()
    for i, line in enumerate(keep.decode("utf-8").splitlines()):
        if i == 0 or not line.strip():
            continue
        done.add(json.loads(line)["trace_id"])
    return done


def _context_positions(model) -> int:
    cfg = model.config
    for name in ("n_positions", "max_position_embeddings"):
        if hasattr(cfg, name):
            return getattr(cfg, name)
    return 10**9


@torch.no_grad()
def _embedding_rows(model, ids: list[int]) -> torch.Tensor:
    wte = model.get_input_embeddings()
    return wte(torch.tensor(ids, device=model.device)).detach()


def _answer_logprob(model, inputs_embeds: torch.Tensor, target: list[int], ctx_len: int):
    """Summed log P of target tokens for a batch of input embeddings."""
    out = model(inputs_embeds=inputs_embeds)
    positions = torch.arange(ctx_len - 1, ctx_len - 1 + len(target), device=inputs_embeds.device)
    rows = out.logits[:, positions, :]
    logprobs = torch.log_softmax(rows, dim=-1)
    tgt = torch.tensor(target, device=inputs_embeds.device)
    picked = logprobs[:, torch.arange(len(target)), tgt]
    return picked.sum(dim=-1)


def _attribute_trace(model, tok, rec: dict, job: ExportJob):
    marker_ids = tok.encode(job.answer_marker)
    q_ids = tok.encode(rec["query"])
    spanned = tok.encode_with_spans(rec["cot"])
    cot_ids = [t.id for t in spanned]
    ans_ids = tok.encode(rec["answer"])
    bos = [tok.bos_id] if tok.bos_id is not None else []
    context = bos + q_ids + cot_ids + marker_ids
    if len(context) + len(ans_ids) > _context_positions(model):
        return None, spanned
    input_ids = context + ans_ids[:-1]
    base = _embedding_rows(model, input_ids)
    cot_lo = len(bos) + len(q_ids)
    cot_hi = cot_lo + len(cot_ids)
    pad_vec = _embedding_rows(model, [tok.pad_id])[0]
    delta = base[cot_lo:cot_hi] - pad_vec

    total = torch.zeros_like(delta)
    j = 1
    while j <= job.steps:
        block = min(job.batch_steps, job.steps - j + 1)
        alphas = torch.tensor(
            [(j + i) / job.steps for i in range(block)],
            device=base.device, dtype=base.dtype,
        )
        x = base.unsqueeze(0).repeat(block, 1, 1)
        x[:, cot_lo:cot_hi] = pad_vec + alphas[:, None, None] * delta.unsqueeze(0)
        x.requires_grad_(True)
        f = _answer_logprob(model, x, ans_ids, len(context))
        (grad,) = torch.autograd.grad(f.sum(), x)
        for i in range(block):
            total += grad[i, cot_lo:cot_hi]
        j += block

    ig_matrix = delta * (total / job.steps)
    igs = ig_matrix.sum(dim=-1)

    with torch.no_grad():
        x_full = base.unsqueeze(0)
        f_x = _answer_logprob(model, x_full, ans_ids, len(context))[0]
        x0 = base.clone()
        x0[cot_lo:cot_hi] = pad_vec
        f_x0 = _answer_logprob(model, x0.unsqueeze(0), ans_ids, len(context))[0]
    gap = abs(float(igs.sum()) - (float(f_x) - float(f_x0)))
    return (igs.detach().cpu().numpy().tolist(), gap), spanned


def export_igs(job: ExportJob) -> dict:
    """Run (or resume) the export; returns a small summary dict."""
    model = _load_model(job)
    tok = load_tokenizer(job.tokenizer)
    records = _read_corpus(job.corpus)
    out_path = Path(job.out)
    done = _existing_trace_ids(out_path)

    if not out_path.exists() or out_path.stat().st_size == 0:
        header = {
            "format_version": DUMP_FORMAT_VERSION,
            "model_id": job.model,
            "baseline": "pad",
            "steps": job.steps,
            "keyword_profile": job.keyword_profile,
            "score_fn": "sum-answer-logprob",
            "attributed_region": "cot-only",
            "tokenizer": tok.name,
        }
        header.update(job.extra_header)
        with out_path.open("w", encoding="utf-8") as fh:
            fh.write(json.dumps(header, ensure_ascii=False) + "\n")

    skipped: list[str] = []
    exported = 0
    with out_path.open("a", encoding="utf-8") as fh:
        for rec in records:
            if rec["trace_id"] in done:
                continue
            if job.max_traces is not None and exported >= job.max_traces:
                break
            result, spanned = _attribute_trace(model, tok, rec, job)
            if result is None:
                skipped.append(rec["trace_id"])
                continue
            igs, gap = result
            line = {
                "trace_id": rec["trace_id"],
                "token_igs": igs,
                "completeness_gap": gap,
                "token_spans": [[t.start, t.end] for t in spanned],
            }
            fh.write(json.dumps(line, ensure_ascii=False) + "\n")
            fh.flush()
            exported += 1
    if skipped:
        skip_path = out_path.with_suffix(out_path.suffix + ".skipped.json")
        skip_path.write_text(json.dumps(skipped, indent=2) + "\n", encoding="utf-8")
    return {"exported": exported, "resumed": len(done), "skipped": skipped}
