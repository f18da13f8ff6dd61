"""Command-line pipeline: segment -> attribute -> score -> select -> mask,
plus baseline selectors, analysis, and report aggregation.

Stages hand off through artifact files in the run directory, so any stage
can be replaced by an external producer (for example a trainer-side
attribution dump). A manifest records the effective config, input hashes,
and output hashes; identical config + inputs reproduce byte-identical
artifacts.

Exit codes: 0 success, 2 usage, 3 pipeline order, 4 data, 5 external
service.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import (
    REPETITION_BLEU_THRESHOLD,
    positional_stats,
    segment_stats,
    strength_cdf,
    write_cdf_csv,
    write_segment_stats_csv,
)
from .attribution import AttributionConfig, integrated_gradients
from .baselines import (
    BaselinePolicy,
    SEGMENT_METHODS,
    TOKEN_METHODS,
    ablation_select,
    confidence_gain_select,
    entropy_select,
    first_correct_select,
    ppl_removal_select,
    prune_trace,
)
from .dump import DumpHeader, DumpRecord, read_dump, write_dump
from .errors import (
    ConfigError,
    JoinError,
    PipelineOrderError,
    SegselError,
    TransportError,
    JudgeUndecidedError,
)
from .judge import JudgeConfig, judge_truncation
from .masking import build_loss_mask, mask_from_token_indices, write_masks
from .oracle import TinyCausalLM, init_reference_model
from .scoring import read_scores_csv, score_trace, write_scores_csv
from .segmenter import default_keywords, load_keywords, segment_trace
from .selection import (
    SelectionPolicy,
    read_selections,
    select_important,
    selection_to_record,
    write_selections,
)
from .trace import ReasoningTrace, Token, load_traces, save_traces

STAGES = ("segment", "attribute", "score", "select", "mask", "baseline", "analyze", "report")

ART_SEGMENTS = "segments.ndjson"
ART_DUMP = "attribution.ndjson"
ART_SCORES = "scores.csv"
ART_SELECTION = "selection.ndjson"
ART_MASKS = "masks.ndjson"
ART_PRUNED = "pruned.ndjson"
MANIFEST = "manifest.json"

_EXIT_BY_ERROR = (
    (PipelineOrderError, 3),
    (TransportError, 5),
    (JudgeUndecidedError, 5),
    (ConfigError, 2),
    (SegselError, 4),
)


@dataclasses.dataclass
class RunConfig:
    corpus: str = ""
    out_dir: str = "run"
    keyword_profile: str = "paper-main"
    steps: int = 50
    aggregation: str = "sqrt-normalized-sum"
    tau: float = 0.7
    beta: float = 0.8
    include_boundaries: bool = True
    ratio: float = 0.475
    k_samples: int = 32
    epsilon_gain: float = 0.0
    seed: int = 0
    workers: int = 1
    answer_always_on: bool = True
    prune_ratio: float = 0.30
    attributed_region: str = "cot-only"
    model_seed: int | None = None
    model_vocab: int = 260
    model_dim: int = 32
    model_context: int = 512
    model_state: str | None = None
    method: str = "first-correct"
    emit_pruned: bool = False
    cdf_buckets: int = 10

    def to_record(self) -> dict:
        return dataclasses.asdict(self)



def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segsel",
        description="segment-level attribution, selection, and loss-mask pipeline",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="stage", required=True)
    for stage in STAGES:
        p = sub.add_parser(stage)
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--corpus", type=Path)
        p.add_argument("--out", type=Path, help="run directory for artifacts")
        p.add_argument("--profile", help="keyword profile id or file:PATH")
        p.add_argument("--steps", type=int, help="IG interpolation steps J")
        p.add_argument("--aggregation", choices=(
            "sqrt-normalized-sum", "direct-sum", "top20-mean"))
        p.add_argument("--tau", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument(
            "--include-boundaries", action=argparse.BooleanOptionalAction, default=None
        )
        p.add_argument("--ratio", type=float, help="token ratio target rho")
        p.add_argument("--k-samples", type=int, dest="k_samples")
        p.add_argument("--epsilon-gain", type=float, dest="epsilon_gain")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--model-state", dest="model_state", help="trained model .npz")
        if stage == "mask":
            p.add_argument(
                "--answer-always-on", action=argparse.BooleanOptionalAction, default=None
            )
            p.add_argument("--emit-pruned", action="store_true", default=None)
            p.add_argument("--prune-ratio", type=float, dest="prune_ratio")
        if stage == "baseline":
            p.add_argument("--method", choices=SEGMENT_METHODS + TOKEN_METHODS)
        if stage in ("analyze", "report"):
            p.add_argument("--cdf-buckets", type=int, dest="cdf_buckets")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        for key, value in raw.items():
            if not hasattr(cfg, key):
                raise ConfigError(f"unknown config key '{key}'")
            setattr(cfg, key, value)
    overrides = {
        "corpus": args.corpus, "out_dir": args.out, "profile": getattr(args, "profile", None),
        "steps": args.steps, "aggregation": args.aggregation, "tau": args.tau,
        "beta": args.beta, "include_boundaries": args.include_boundaries,
        "ratio": args.ratio, "k_samples": args.k_samples,
        "epsilon_gain": args.epsilon_gain, "seed": args.seed,
        "workers": args.workers, "model_state": args.model_state,
        "answer_always_on": getattr(args, "answer_always_on", None),
        "emit_pruned": getattr(args, "emit_pruned", None),
        "prune_ratio": getattr(args, "prune_ratio", None),
        "method": getattr(args, "method", None),
        "cdf_buckets": getattr(args, "cdf_buckets", None),
    }
    if overrides.pop("profile") is not None:
        cfg.keyword_profile = args.profile
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, str(value) if isinstance(value, Path) else value)
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    # eager validation so bad flag values are usage errors regardless of
    # which artifacts exist yet
    SelectionPolicy(tau=cfg.tau, beta=cfg.beta, include_boundaries=cfg.include_boundaries)
    AttributionConfig(steps=cfg.steps, attributed_region=cfg.attributed_region)
    BaselinePolicy(
        method=cfg.method, token_ratio_target=cfg.ratio,
        k_samples=cfg.k_samples, epsilon_gain=cfg.epsilon_gain, seed=cfg.seed,
    )
    if cfg.aggregation not in ("sqrt-normalized-sum", "direct-sum", "top20-mean"):
        raise ConfigError(f"unknown aggregation mode '{cfg.aggregation}'")
    return cfg


# -- manifest ------------------------------------------------------------------


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(cfg.to_record(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def update_manifest(
    out_dir: Path, stage: str, cfg: RunConfig, inputs: list[Path], outputs: list[Path]
) -> None:
    path = out_dir / MANIFEST
    manifest = {"tool_version": __version__, "stages": {}}
    if path.exists():
        manifest = json.loads(path.read_text(encoding="utf-8"))
        manifest["tool_version"] = __version__
    manifest["stages"][stage] = {
        "config": cfg.to_record(),
        "config_hash": _config_hash(cfg),
        "inputs": {
            (p.name if p.parent == out_dir else str(p)): _sha256(p) for p in inputs
        },
        "outputs": {str(p.relative_to(out_dir)): _sha256(p) for p in outputs},
    }
    path.write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


# -- shared stage plumbing -----------------------------------------------------


def _keywords(cfg: RunConfig):
    if cfg.keyword_profile.startswith("file:"):
        return load_keywords(cfg.keyword_profile[5:], profile=cfg.keyword_profile)
    return default_keywords(cfg.keyword_profile)


def _oracle(cfg: RunConfig) -> TinyCausalLM:
    if cfg.model_state:
        return TinyCausalLM.load(cfg.model_state)
    seed = cfg.model_seed if cfg.model_seed is not None else cfg.seed
    return init_reference_model(
        seed,
        vocab_size=cfg.model_vocab,
        embed_dim=cfg.model_dim,
        context_len=cfg.model_context,
    )


def _require(out_dir: Path, artifact: str, producer: str) -> Path:
    path = out_dir / artifact
    if not path.exists():
        raise PipelineOrderError(producer, f"expected {path}")
    return path


def _load_corpus(cfg: RunConfig) -> list[ReasoningTrace]:
    if not cfg.corpus:
        raise ConfigError("no corpus given (use --corpus or the config file)")
    return load_traces(cfg.corpus)


def _tokenized_segmented(cfg: RunConfig, oracle: TinyCausalLM) -> list[ReasoningTrace]:
    """Corpus with tokens (own or byte-level) and segments populated.

    Pre-tokenized records keep their tokens; the byte tokenizer never
    fills in an answer region for them (mixing tokenizers would misalign
    the mask domain).
    """
    keywords = _keywords(cfg)
    tok = oracle.tokenizer
    out = []
    for trace in _load_corpus(cfg):
        if not trace.tokens:
            trace = trace.with_tokens(tok.tokens(trace.cot), tok.tokens(trace.answer))
        out.append(segment_trace(trace, keywords))
    return out


def _parallel_map(fn, items, workers: int):
    if workers <= 1:
        return [fn(item) for item in items]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _adopt_dump_spans(traces, out_dir: Path, cfg: RunConfig):
    """When the attribution dump carries token spans (external tokenizer),
    realign trace tokens and segments to them so downstream masks live in
    the producer's token space."""
    dump_path = out_dir / ART_DUMP
    if not dump_path.exists():
        return traces
    _, records = read_dump(dump_path)
    spans_by_id = {r.trace_id: r.token_spans for r in records if r.token_spans}
    if not spans_by_id:
        return traces
    keywords = _keywords(cfg)
    out = []
    for trace in traces:
        spans = spans_by_id.get(trace.trace_id)
        if spans is None:
            out.append(trace)
            continue
        data = trace.cot_bytes()
        tokens = [
            Token(index=i, text=data[s:e].decode("utf-8", "replace"), start=s, end=e)
            for i, (s, e) in enumerate(spans)
        ]
        out.append(segment_trace(trace.with_tokens(tokens, trace.answer_tokens), keywords))
    return out


# -- stages --------------------------------------------------------------------


def stage_segment(cfg: RunConfig, out_dir: Path) -> list[Path]:
    oracle = _oracle(cfg)
    traces = _tokenized_segmented(cfg, oracle)
    path = out_dir / ART_SEGMENTS
    with path.open("w", encoding="utf-8") as fh:
        for trace in traces:
            rec = {
                "trace_id": trace.trace_id,
                "profile": cfg.keyword_profile,
                "spans": [[s.char_span[0], s.char_span[1]] for s in trace.segments],
                "token_ranges": [[s.token_range[0], s.token_range[1]] for s in trace.segments],
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return [path]


def stage_attribute(cfg: RunConfig, out_dir: Path) -> list[Path]:
    oracle = _oracle(cfg)
    traces = _tokenized_segmented(cfg, oracle)
    attr_cfg = AttributionConfig(steps=cfg.steps, attributed_region=cfg.attributed_region)

    def one(trace: ReasoningTrace) -> DumpRecord:
        attr = integrated_gradients(oracle, trace, attr_cfg)
        return DumpRecord(
            trace_id=trace.trace_id,
            token_igs=attr.cot_igs(len(trace.tokens)),
            completeness_gap=attr.completeness_gap,
        )

    records = _parallel_map(one, traces, cfg.workers)
    header = DumpHeader(
        model_id=oracle.model_id,
        baseline="pad",
        steps=cfg.steps,
        keyword_profile=cfg.keyword_profile,
        attributed_region=cfg.attributed_region,
    )
    path = out_dir / ART_DUMP
    write_dump(path, header, records)
    return [path]


def _segments_and_igs(cfg: RunConfig, out_dir: Path):
    """Join corpus traces with segment artifact and attribution dump."""
    _require(out_dir, ART_SEGMENTS, "segment")
    dump_path = _require(out_dir, ART_DUMP, "attribute")
    oracle = _oracle(cfg)
    traces = _adopt_dump_spans(_tokenized_segmented(cfg, oracle), out_dir, cfg)
    _, records = read_dump(dump_path)
    by_id = {rec.trace_id: rec for rec in records}
    joined = []
    for trace in traces:
        rec = by_id.get(trace.trace_id)
        if rec is None:
            raise JoinError(f"dump has no record for trace '{trace.trace_id}'")
        if len(rec.token_igs) != len(trace.tokens):
            raise JoinError(
                f"dump for '{trace.trace_id}' carries {len(rec.token_igs)} values "
                f"but the trace has {len(trace.tokens)} tokens"
            )
        joined.append((trace, rec))
    unknown = set(by_id) - {t.trace_id for t in traces}
    if unknown:
        raise JoinError(f"dump records for unknown trace_ids: {sorted(unknown)[:5]}")
    return oracle, joined


def stage_score(cfg: RunConfig, out_dir: Path) -> list[Path]:
    _, joined = _segments_and_igs(cfg, out_dir)
    per_trace = {}
    for trace, rec in joined:
        per_trace[trace.trace_id] = score_trace(
            trace.segments, rec.token_igs, mode=cfg.aggregation
        )
    path = out_dir / ART_SCORES
    write_scores_csv(path, per_trace)
    return [path]


def stage_select(cfg: RunConfig, out_dir: Path) -> list[Path]:
    scores_path = _require(out_dir, ART_SCORES, "score")
    _require(out_dir, ART_SEGMENTS, "segment")
    oracle = _oracle(cfg)
    traces = _tokenized_segmented(cfg, oracle)
    per_trace = read_scores_csv(scores_path)
    policy = SelectionPolicy(
        tau=cfg.tau, beta=cfg.beta, include_boundaries=cfg.include_boundaries
    )
    rows = []
    for trace in traces:
        scores = per_trace.get(trace.trace_id)
        if scores is None:
            raise JoinError(f"scores.csv has no rows for trace '{trace.trace_id}'")
        rows.append((trace.trace_id, select_important(scores, trace.segments, policy)))
    path = out_dir / ART_SELECTION
    write_selections(path, rows)
    return [path]


def stage_mask(cfg: RunConfig, out_dir: Path) -> list[Path]:
    sel_path = _require(out_dir, ART_SELECTION, "select")
    _require(out_dir, ART_SEGMENTS, "segment")
    oracle = _oracle(cfg)
    traces = _adopt_dump_spans(_tokenized_segmented(cfg, oracle), out_dir, cfg)
    selections = read_selections(sel_path)
    masks = []
    for trace in traces:
        sel = selections.get(trace.trace_id)
        if sel is None:
            raise JoinError(f"selection has no record for trace '{trace.trace_id}'")
        masks.append(build_loss_mask(trace, sel, answer_always_on=cfg.answer_always_on))
    mask_path = out_dir / ART_MASKS
    write_masks(mask_path, masks)
    outputs = [mask_path]
    if cfg.emit_pruned:
        scores_path = _require(out_dir, ART_SCORES, "score")
        per_trace = read_scores_csv(scores_path)
        keywords = _keywords(cfg)
        pruned = []
        for trace in traces:
            result = prune_trace(
                trace,
                selections[trace.trace_id].important,
                per_trace[trace.trace_id],
                prune_ratio_target=cfg.prune_ratio,
                keywords=keywords,
            )
            pruned.append(result.trace)
        pruned_path = out_dir / ART_PRUNED
        save_traces(pruned_path, pruned)
        outputs.append(pruned_path)
    return outputs


def stage_baseline(cfg: RunConfig, out_dir: Path) -> list[Path]:
    _require(out_dir, ART_SEGMENTS, "segment")
    oracle = _oracle(cfg)
    traces = _adopt_dump_spans(_tokenized_segmented(cfg, oracle), out_dir, cfg)
    policy = BaselinePolicy(
        method=cfg.method,
        token_ratio_target=cfg.ratio,
        k_samples=cfg.k_samples,
        epsilon_gain=cfg.epsilon_gain,
        seed=cfg.seed,
        tau=cfg.tau,
    )
    igs_by_id = scores_by_id = None
    if cfg.method in TOKEN_METHODS or cfg.method == "high-strength-only":
        if cfg.method in TOKEN_METHODS:
            dump_path = _require(out_dir, ART_DUMP, "attribute")
            _, records = read_dump(dump_path)
            igs_by_id = {r.trace_id: r.token_igs for r in records}
        else:
            scores_path = _require(out_dir, ART_SCORES, "score")
            scores_by_id = read_scores_csv(scores_path)

    if cfg.method in TOKEN_METHODS:
        path = out_dir / f"baseline_{cfg.method}_mask.ndjson"
        masks = []
        for trace in traces:
            token_idx = ablation_select(trace, None, igs_by_id[trace.trace_id], policy)
            masks.append(
                mask_from_token_indices(trace, token_idx, answer_always_on=cfg.answer_always_on)
            )
        write_masks(path, masks)
        return [path]

    def one(trace: ReasoningTrace):
        if cfg.method == "first-correct":
            sel = first_correct_select(trace)
        elif cfg.method == "confidence-gain":
            sel, _ = confidence_gain_select(oracle, trace, policy)
        elif cfg.method == "ppl-removal":
            sel = ppl_removal_select(oracle, trace, policy)
        elif cfg.method == "entropy":
            sel = entropy_select(oracle, trace, policy)
        elif cfg.method == "random-segments":
            sel = ablation_select(trace, None, None, policy)
        else:
            sel = ablation_select(trace, scores_by_id[trace.trace_id], None, policy)
        if cfg.include_boundaries and trace.segments:
            forced = set(sel.important) | {0, trace.segments[-1].seg_index}
            sel = dataclasses.replace(sel, important=frozenset(forced))
        return trace.trace_id, sel

    rows = _parallel_map(one, traces, cfg.workers)
    path = out_dir / f"baseline_{cfg.method}.ndjson"
    write_selections(path, rows)
    return [path]


def stage_analyze(cfg: RunConfig, out_dir: Path) -> list[Path]:
    scores_path = _require(out_dir, ART_SCORES, "score")
    sel_path = _require(out_dir, ART_SELECTION, "select")
    oracle = _oracle(cfg)
    traces = _adopt_dump_spans(_tokenized_segmented(cfg, oracle), out_dir, cfg)
    per_trace_scores = read_scores_csv(scores_path)
    selections = read_selections(sel_path)
    analysis_dir = out_dir / "analysis"
    analysis_dir.mkdir(exist_ok=True)

    stats = _parallel_map(lambda tr: (tr.trace_id, segment_stats(oracle, tr)), traces, cfg.workers)
    stats_path = analysis_dir / "segment_stats.csv"
    write_segment_stats_csv(stats_path, dict(stats))

    cdf_path = analysis_dir / "strength_cdf.csv"
    write_cdf_csv(cdf_path, strength_cdf(per_trace_scores, cfg.cdf_buckets))

    report = positional_stats(traces, selections)
    pos_path = analysis_dir / "positional.json"
    pos_path.write_text(
        json.dumps(report.to_record(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    outputs = [stats_path, cdf_path, pos_path]

    judge_cfg = JudgeConfig.from_env(os.environ)
    if judge_cfg is not None:
        triples = []
        for trace in traces:
            for seg in trace.segments[1:-1]:
                i = seg.seg_index
                triples.append(
                    (trace.trace_id, i,
                     trace.segment_text(i - 1), trace.segment_text(i), trace.segment_text(i + 1))
                )

        def ask(item):
            trace_id, i, prev, mid, nxt = item
            return trace_id, i, judge_truncation(judge_cfg, prev, mid, nxt)

        verdicts = _parallel_map(ask, triples, cfg.workers)
        judge_path = analysis_dir / "truncation.csv"
        with judge_path.open("w", encoding="utf-8", newline="") as fh:
            fh.write("trace_id,seg_index,is_truncated\n")
            for trace_id, i, truncated in verdicts:
                fh.write(f"{trace_id},{i},{int(truncated)}\n")
        outputs.append(judge_path)
    return outputs


def stage_report(cfg: RunConfig, out_dir: Path) -> list[Path]:
    analysis_dir = out_dir / "analysis"
    if not (analysis_dir / "strength_cdf.csv").exists():
        raise PipelineOrderError("analyze")
    sel_path = _require(out_dir, ART_SELECTION, "select")
    selections = read_selections(sel_path)
    oracle = _oracle(cfg)
    traces = _tokenized_segmented(cfg, oracle)
    positional = json.loads((analysis_dir / "positional.json").read_text(encoding="utf-8"))

    import csv as _csv

    n_bleu = n_repetitive = 0
    with (analysis_dir / "segment_stats.csv").open("r", encoding="utf-8", newline="") as fh:
        for row in _csv.DictReader(fh):
            if row["metric"] == "bleu_vs_preceding":
                n_bleu += 1
                if float(row["value"]) > REPETITION_BLEU_THRESHOLD:
                    n_repetitive += 1

    n_segments = sum(len(t.segments) for t in traces)
    n_important = 0
    covered_tokens = 0
    total_tokens = 0
    for trace in traces:
        sel = selections.get(trace.trace_id)
        if sel is None:
            continue
        n_important += len(sel.important)
        total_tokens += len(trace.tokens)
        for seg in trace.segments:
            if seg.seg_index in sel.important:
                covered_tokens += seg.n_tokens
    report_dir = out_dir / "report"
    report_dir.mkdir(exist_ok=True)
    path = report_dir / "summary.csv"
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write("metric,value\n")
        fh.write(f"n_traces,{len(traces)}\n")
        fh.write(f"mean_segments_per_trace,{repr(n_segments / len(traces)) if traces else 0}\n")
        fh.write(f"important_segment_fraction,{repr(n_important / n_segments) if n_segments else 0}\n")
        fh.write(f"important_token_fraction,{repr(covered_tokens / total_tokens) if total_tokens else 0}\n")
        fh.write(f"highly_repetitive_segment_fraction,{repr(n_repetitive / n_bleu) if n_bleu else 0}\n")
        for key in sorted(positional):
            fh.write(f"positional.{key},{positional[key]}\n")
    return [path]


_STAGE_FNS = {
    "segment": stage_segment,
    "attribute": stage_attribute,
    "score": stage_score,
    "select": stage_select,
    "mask": stage_mask,
    "baseline": stage_baseline,
    "analyze": stage_analyze,
    "report": stage_report,
}


def run_stage(stage: str, cfg: RunConfig) -> list[Path]:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = _STAGE_FNS[stage](cfg, out_dir)
    inputs = []
    if cfg.corpus and Path(cfg.corpus).exists():
        inputs.append(Path(cfg.corpus))
    update_manifest(out_dir, stage, cfg, inputs, outputs)
    return outputs


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        outputs = run_stage(args.stage, cfg)
    except SegselError as exc:
        for err_type, code in _EXIT_BY_ERROR:
            if isinstance(exc, err_type):
                print(f"error: {exc}", file=sys.stderr)
                return code
        raise
    for path in outputs:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
