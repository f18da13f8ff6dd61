"""Segment-level attribution, selection, and loss-mask tooling for long
reasoning traces."""

__version__ = "0.1.0"

from .attribution import AttributionConfig, TokenAttribution, convergence_probe, integrated_gradients
from .dump import DumpHeader, DumpRecord, read_dump, write_dump
from .masking import LossMask, build_loss_mask, compute_loss, read_masks, write_masks
from .oracle import (
    ByteTokenizer,
    GradOracle,
    SamplingConfig,
    TinyCausalLM,
    fd_check,
    init_reference_model,
)
from .scoring import SegmentScore, normalize_strengths, score_trace, segment_scores
from .segmenter import KeywordSet, align_to_tokens, default_keywords, segment_text, segment_trace
from .selection import SelectionPolicy, SelectionResult, select_important
from .trace import ReasoningTrace, Segment, Token, load_traces, save_traces

__all__ = [
    "AttributionConfig", "TokenAttribution", "convergence_probe", "integrated_gradients",
    "DumpHeader", "DumpRecord", "read_dump", "write_dump",
    "LossMask", "build_loss_mask", "compute_loss", "read_masks", "write_masks",
    "ByteTokenizer", "GradOracle", "SamplingConfig", "TinyCausalLM", "fd_check",
    "init_reference_model",
    "SegmentScore", "normalize_strengths", "score_trace", "segment_scores",
    "KeywordSet", "align_to_tokens", "default_keywords", "segment_text", "segment_trace",
    "SelectionPolicy", "SelectionResult", "select_important",
    "ReasoningTrace", "Segment", "Token", "load_traces", "save_traces",
    "__version__",
]
