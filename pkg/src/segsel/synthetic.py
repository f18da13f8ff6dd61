"""Toy arithmetic corpora with injected redundancy, and a minimal Adam
trainer for the reference model.

The generator emits short addition CoTs built from fixed templates whose
numbers vary. Redundant variants inject, between the verification and
the closing segment: verbatim repeats of the verification, mid-thought
truncations, and content-free filler clarifications, each marked at
generation time so selectors can be evaluated against ground truth.

Training here exists solely to give the reference model enough structure
for attribution experiments; it is not a pipeline stage.
"""

from __future__ import annotations

import argparse
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .oracle import TinyCausalLM, _PARAM_NAMES
from .trace import ReasoningTrace, save_traces

KIND_REPEAT = "repeat"
KIND_TRUNCATION = "truncation"
KIND_FILLER = "filler"


@dataclass(frozen=True)
class InjectionMark:
    trace_id: str
    seg_index: int
    kind: str


# Digits appear only in the computation and closing segments; the neutral
# segments (and every injected redundancy) stay digit-free so attribution
# contrast is measurable.
_VERIFICATION = "\n\nWait, re-check the sum once more. It holds."
_NEUTRAL_EXTRAS = (
    "\n\nNot sure yet, so add tens first, ones after.",
    "\n\nGoing back over the carry once more.",
    "\n\nAnother check of the grouping, same pattern.",
)


def _base_segments(a: int, b: int, s: int) -> list[str]:
    return [
        "We must add the two given numbers.",
        f"\n\nAnother view: {a}+{b} equals {s}.",
        _VERIFICATION,
    ]


def _closing_segment(s: int) -> str:
    return f"\n\nHowever, the total is {s}."


def _injections(rng: np.random.Generator) -> list[tuple[str, str]]:
    picks: list[tuple[str, str]] = [(KIND_REPEAT, _VERIFICATION)]
    if rng.random() < 0.5:
        picks.append((KIND_TRUNCATION, "\n\nAlternatively, regroup the parts as"))
    if rng.random() < 0.5:
        picks.append((KIND_FILLER, "\n\nBut just to note, this is plain addition."))
    order = rng.permutation(len(picks))
    return [picks[i] for i in order]


def generate_corpus(
    n: int, seed: int, redundant: bool = False, id_prefix: str = "synth"
) -> tuple[list[ReasoningTrace], list[InjectionMark]]:
    """Deterministic toy corpus; marks are empty for clean corpora.

    Clean traces vary in length (0-3 neutral extra segments) so a model
    trained on them sees the same positional range the redundant variants
    occupy.
    """
    rng = np.random.default_rng(seed)
    traces = []
    marks: list[InjectionMark] = []
    for i in range(n):
        a = int(rng.integers(10, 90))
        b = int(rng.integers(10, 90))
        s = a + b
        trace_id = f"{id_prefix}-{i:04d}"
        parts = _base_segments(a, b, s)
        if redundant:
            for kind, text in _injections(rng):
                marks.append(InjectionMark(trace_id, len(parts), kind))
                parts.append(text)
        else:
            n_extra = int(rng.integers(0, 4))
            extras = rng.permutation(len(_NEUTRAL_EXTRAS))[:n_extra]
            parts.extend(_NEUTRAL_EXTRAS[j] for j in extras)
        parts.append(_closing_segment(s))
        traces.append(
            ReasoningTrace(
                trace_id=trace_id,
                query=f"What is {a}+{b}?",
                answer=str(s),
                cot="".join(parts),
            )
        )
    return traces, marks


def marks_by_trace(marks: list[InjectionMark]) -> dict[str, dict[int, str]]:
    out: dict[str, dict[int, str]] = {}
    for mark in marks:
        out.setdefault(mark.trace_id, {})[mark.seg_index] = mark.kind
    return out


# -- brief reference-model training ------------------------------------------


def _training_sequence(
    oracle: TinyCausalLM, trace: ReasoningTrace
) -> tuple[list[int], int]:
    """Token ids plus the position where the answer region begins."""
    tok = oracle.tokenizer
    prefix = (
        [tok.bos_id]
        + tok.encode(trace.query)
        + tok.encode(trace.cot)
        + oracle.marker_ids()
    )
    return prefix + tok.encode(trace.answer) + [tok.eos_id], len(prefix)


def _batch_loss_and_grads(
    oracle: TinyCausalLM, batch: list[tuple[list[int], int]], answer_weight: float
):
    tok = oracle.tokenizer
    b = len(batch)
    t = max(len(seq) for seq, _ in batch)
    ids = np.full((b, t), tok.pad_id, dtype=np.intp)
    weights = np.zeros((b, t))
    for row, (seq, answer_start) in enumerate(batch):
        ids[row, : len(seq)] = seq
        weights[row, 1 : len(seq)] = 1.0  # predict positions 1..len-1
        weights[row, answer_start : len(seq)] = answer_weight
    x = oracle.params["tok_emb"][ids]
    cache = oracle._forward(x)
    logits = cache["logits"][:, :-1, :]
    targets = ids[:, 1:]
    w = weights[:, 1:]
    shifted = logits - logits.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1))
    tgt_logit = np.take_along_axis(shifted, targets[:, :, None], axis=-1)[:, :, 0]
    nll = (log_z - tgt_logit) * w
    n_tokens = w.sum()
    loss = nll.sum() / n_tokens

    probs = np.exp(shifted - log_z[:, :, None])
    dlogits = probs * w[:, :, None]
    np.add.at(dlogits, (np.arange(b)[:, None], np.arange(t - 1)[None, :], targets), -w)
    dlogits /= n_tokens
    dlogits_full = np.zeros_like(cache["logits"])
    dlogits_full[:, :-1, :] = dlogits
    dx, grads = oracle._backward(cache, dlogits_full, want_param_grads=True)

    g_tok = np.zeros_like(oracle.params["tok_emb"])
    np.add.at(g_tok, ids.reshape(-1), dx.reshape(-1, dx.shape[-1]))
    grads["tok_emb"] = g_tok
    g_pos = np.zeros_like(oracle.params["pos_emb"])
    g_pos[:t] = grads.pop("pos_emb_rows")
    grads["pos_emb"] = g_pos
    return float(loss), grads


def train_reference_model(
    oracle: TinyCausalLM,
    traces: list[ReasoningTrace],
    epochs: int = 20,
    batch_size: int = 16,
    lr: float = 3e-3,
    seed: int = 0,
    answer_weight: float = 4.0,
    verbose: bool = False,
) -> TinyCausalLM:
    """Adam on the full-sequence LM loss (answer region upweighted);
    returns a newly-parameterized model."""
    params = {k: np.array(v) for k, v in oracle.params.items()}
    model = oracle.with_params(params, model_id=oracle.model_id + "+sft")
    seqs = [_training_sequence(model, tr) for tr in traces]
    rng = np.random.default_rng(seed)
    m_state = {k: np.zeros_like(v) for k, v in params.items()}
    v_state = {k: np.zeros_like(v) for k, v in params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    n_batches = math.ceil(len(seqs) / batch_size)
    total_steps = max(1, epochs * n_batches)
    step = 0
    order = np.arange(len(seqs))
    for _ in range(epochs):
        rng.shuffle(order)
        for start in range(0, len(seqs), batch_size):
            batch = [seqs[i] for i in order[start : start + batch_size]]
            loss, grads = _batch_loss_and_grads(model, batch, answer_weight)
            # cosine decay to a tenth of the base rate
            step_lr = lr * (0.55 + 0.45 * math.cos(math.pi * step / total_steps))
            step += 1
            new_params = {}
            for name in _PARAM_NAMES:
                g = grads[name]
                m_state[name] = beta1 * m_state[name] + (1 - beta1) * g
                v_state[name] = beta2 * v_state[name] + (1 - beta2) * g * g
                m_hat = m_state[name] / (1 - beta1**step)
                v_hat = v_state[name] / (1 - beta2**step)
                new_params[name] = model.params[name] - step_lr * m_hat / (np.sqrt(v_hat) + eps)
            model = model.with_params(new_params, model_id=model.model_id)
            if verbose and step % 20 == 0:
                print(f"step {step}: lm loss {loss:.4f}")
    return model


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="write a toy arithmetic trace corpus (NDJSON)"
    )
    parser.add_argument("out", type=Path)
    parser.add_argument("--n", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--redundant", action="store_true")
    parser.add_argument("--marks-out", type=Path, default=None)
    args = parser.parse_args(argv)
    traces, marks = generate_corpus(args.n, args.seed, redundant=args.redundant)
    save_traces(args.out, traces)
    if args.marks_out:
        with args.marks_out.open("w", encoding="utf-8") as fh:
            for mark in marks:
                fh.write(
                    json.dumps(
                        {"trace_id": mark.trace_id, "seg_index": mark.seg_index, "kind": mark.kind}
                    )
                    + "\n"
                )
    print(f"wrote {len(traces)} traces to {args.out} ({len(marks)} injections)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
