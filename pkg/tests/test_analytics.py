import math

import numpy as np
import pytest

from segsel.analytics import (
    bleu_vs_preceding,
    decision_segment,
    normalize_math_text,
    positional_stats,
    segment_stats,
    strength_cdf,
)
from segsel.bleu import bleu, tokenize_for_bleu
from segsel.errors import NoDecisionError
from segsel.oracle import ByteTokenizer, init_reference_model
from segsel.scoring import SegmentScore
from segsel.segmenter import default_keywords, segment_trace
from segsel.selection import SelectionPolicy, SelectionResult
from segsel.trace import ReasoningTrace


def build_trace(cot, answer="42", trace_id="t"):
    tok = ByteTokenizer()
    trace = ReasoningTrace(trace_id=trace_id, query="q?", answer=answer, cot=cot)
    trace = trace.with_tokens(tok.tokens(cot), tok.tokens(answer))
    return segment_trace(trace, default_keywords())


class TestBleu:
    def test_identical_copy_scores_one(self):
        cand = tokenize_for_bleu("check the sum once more now")
        assert bleu(cand, [cand]) == pytest.approx(1.0, abs=1e-12)

    def test_short_identical_copy_scores_one(self):
        cand = ["so", "done"]
        assert bleu(cand, [["so", "done"], ["other", "ref"]]) == pytest.approx(1.0)

    def test_disjoint_vocab_near_zero(self):
        got = bleu(["aa", "bb", "cc", "dd"], [["xx", "yy", "zz", "ww"]])
        assert got <= 0.01

    def test_permutation_invariant_over_references(self):
        cand = ["a", "b", "c", "d"]
        refs = [["a", "b", "c", "d"], ["q", "w", "e", "r"]]
        assert bleu(cand, refs) == bleu(cand, list(reversed(refs)))

    def test_brevity_penalty(self):
        # candidate shorter than closest reference gets penalized
        short = bleu(["a", "b"], [["a", "b", "c", "d"]])
        full = bleu(["a", "b", "c", "d"], [["a", "b", "c", "d"]])
        assert short < full


class TestBleuVsPreceding:
    def test_segment_zero_defined_zero(self):
        trace = build_trace("alpha beta\n\nWait gamma")
        assert bleu_vs_preceding(trace, 0) == 0.0

    def test_verbatim_repeat_scores_one(self):
        seg = "\n\nWait, let me re-check the sum carefully."
        trace = build_trace("start here" + seg + seg)
        assert bleu_vs_preceding(trace, 2) == pytest.approx(1.0, abs=1e-12)

    def test_disjoint_segment_below_floor(self):
        trace = build_trace("alpha beta gamma delta\n\nWait epsilon zeta eta theta")
        assert bleu_vs_preceding(trace, 1) <= 0.01


class TestSegmentStats:
    def test_zeroed_model_stats(self):
        zeroed = init_reference_model(0, embed_dim=16, context_len=128, zeroed=True)
        trace = build_trace("abc def\n\nWait ghi")
        stats = segment_stats(zeroed, trace)
        for s in stats:
            assert s.mean_nll == pytest.approx(np.log(zeroed.vocab_size), abs=1e-12)
            assert s.mean_entropy == pytest.approx(np.log(zeroed.vocab_size), abs=1e-10)

    def test_one_token_segment(self):
        model = init_reference_model(2, embed_dim=16, context_len=128)
        tok = model.tokenizer
        trace = ReasoningTrace(trace_id="t", query="q", answer="1", cot="ab")
        trace = trace.with_tokens(tok.tokens("ab"), tok.tokens("1"))
        trace = segment_trace(trace, default_keywords())
        stats = segment_stats(model, trace)
        context = [tok.bos_id] + tok.encode("q")
        nlls = model.token_nlls(context, tok.encode("ab"))
        assert stats[0].mean_nll == pytest.approx(float(np.mean(nlls)), abs=1e-15)


class TestStrengthCdf:
    def scores(self, values):
        return [
            SegmentScore(i, v, 0.5, normalized_strength=v) for i, v in enumerate(values)
        ]

    def test_single_trace_cumulative(self):
        rows = strength_cdf({"t": self.scores([0.5, 0.3, 0.2])}, bucket_count=3)
        assert [v for _, v in rows] == pytest.approx([0.5, 0.8, 1.0], abs=1e-12)

    def test_uniform_is_diagonal(self):
        rows = strength_cdf({"t": self.scores([0.1] * 10)}, bucket_count=10)
        assert [v for _, v in rows] == pytest.approx([k / 10 for k in range(1, 11)], abs=1e-9)

    def test_monotone_and_terminates_at_one(self):
        rng = np.random.default_rng(0)
        per_trace = {}
        for t in range(5):
            raw = rng.random(int(rng.integers(2, 9)))
            ns = raw / raw.sum()
            per_trace[f"t{t}"] = self.scores(list(ns))
        rows = strength_cdf(per_trace, bucket_count=7)
        values = [v for _, v in rows]
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))
        assert values[-1] == pytest.approx(1.0, abs=1e-9)


class TestDecisionSegment:
    def test_first_containing_segment(self):
        trace = build_trace("intro\n\nWait so we get 42\n\nHowever check")
        assert decision_segment(trace) == 1

    def test_boxed_form_matches(self):
        trace = build_trace("intro\n\nWait the result \\boxed{42} holds\n\nHowever done")
        assert decision_segment(trace) == 1

    def test_absent_answer_raises(self):
        trace = build_trace("intro\n\nWait nothing here", answer="777")
        with pytest.raises(NoDecisionError):
            decision_segment(trace)

    def test_minimal_index_returned(self):
        trace = build_trace("has 42 already\n\nWait 42 again\n\nHowever 42")
        assert decision_segment(trace) == 0


def test_normalize_math_text():
    assert normalize_math_text("  The\tAnswer ") == "the answer"
    assert normalize_math_text("\\boxed{42}") == "42"
    assert normalize_math_text("$x = 3$") == "x = 3"


class TestPositionalStats:
    def selection(self, important, m):
        return SelectionResult(
            ranking=tuple(range(m)), k_star=m, important=frozenset(important),
            policy=SelectionPolicy(include_boundaries=False),
        )

    def test_all_important_before_decision(self):
        trace = build_trace("the 42 intro\n\nWait more\n\nHowever end")
        sels = {"t": self.selection({0}, 3)}
        report = positional_stats([trace], sels)
        assert report.important_after_decision == 0.0
        assert report.n_traces == 1

    def test_single_important_after_decision(self):
        trace = build_trace("intro\n\nWait decision 42\n\nHowever post")
        sels = {"t": self.selection({2}, 3)}
        report = positional_stats([trace], sels)
        assert report.important_after_decision == 1.0

    def test_excluded_traces_counted(self):
        trace = build_trace("intro\n\nWait nothing", answer="900")
        report = positional_stats([trace], {"t": self.selection({0}, 2)})
        assert report.n_excluded == 1
        assert report.n_traces == 0
