import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segsel.errors import EmptySupportError, FormatError, JoinError, SchemaError
from segsel.masking import (
    LossMask,
    build_loss_mask,
    compute_loss,
    mask_from_token_indices,
    read_masks,
    write_masks,
)
from segsel.oracle import ByteTokenizer, init_reference_model
from segsel.scoring import SegmentScore
from segsel.segmenter import default_keywords, segment_trace
from segsel.selection import SelectionPolicy, SelectionResult
from segsel.trace import ReasoningTrace


def make_trace(cot="alpha\n\nWait beta\n\nHowever gamma", answer="42"):
    tok = ByteTokenizer()
    trace = ReasoningTrace(trace_id="t", query="q?", answer=answer, cot=cot)
    trace = trace.with_tokens(tok.tokens(cot), tok.tokens(answer))
    return segment_trace(trace, default_keywords())


def selection(important, m):
    return SelectionResult(
        ranking=tuple(range(m)), k_star=max(1, len(important)),
        important=frozenset(important), policy=SelectionPolicy(include_boundaries=False),
    )


class TestBuildLossMask:
    def test_all_segments_full_coverage(self):
        trace = make_trace()
        m = len(trace.segments)
        mask = build_loss_mask(trace, selection(set(range(m)), m), answer_always_on=False)
        assert mask.ones == ((0, len(trace.tokens)),)
        assert mask.coverage_ratio == 1.0

    def test_empty_selection_empty_mask(self):
        trace = make_trace()
        mask = build_loss_mask(trace, selection(set(), 3), answer_always_on=False)
        assert mask.ones == ()
        assert mask.coverage_ratio == 0.0

    def test_ranges_are_maximal_runs(self):
        trace = make_trace()
        segs = trace.segments
        mask = build_loss_mask(trace, selection({0, 2}, 3), answer_always_on=False)
        expected = (
            (segs[0].token_range[0], segs[0].token_range[1] + 1),
            (segs[2].token_range[0], segs[2].token_range[1] + 1),
        )
        assert mask.ones == expected

    def test_answer_region_appended(self):
        trace = make_trace(answer="404")
        t = len(trace.tokens)
        mask = build_loss_mask(trace, selection(set(), 3), answer_always_on=True)
        assert mask.length == t + 3
        assert mask.ones == ((t, t + 3),)

    def test_answer_region_merges_with_last_segment(self):
        trace = make_trace()
        m = len(trace.segments)
        mask = build_loss_mask(trace, selection(set(range(m)), m), answer_always_on=True)
        assert mask.ones == ((0, mask.length),)

    def test_missing_answer_tokens_rejected(self):
        tok = ByteTokenizer()
        trace = ReasoningTrace(trace_id="t", query="q", answer="1", cot="abc")
        trace = trace.with_tokens(tok.tokens("abc"))
        trace = segment_trace(trace, default_keywords())
        with pytest.raises(SchemaError):
            build_loss_mask(trace, selection({0}, 1), answer_always_on=True)

    def test_selection_trace_mismatch(self):
        trace = make_trace()
        with pytest.raises(JoinError):
            build_loss_mask(trace, selection({7}, 8), answer_always_on=False)

    def test_mask_boundaries_align_with_segments(self):
        trace = make_trace()
        seg_starts = {s.token_range[0] for s in trace.segments}
        seg_ends = {s.token_range[1] + 1 for s in trace.segments}
        mask = build_loss_mask(trace, selection({1}, 3), answer_always_on=False)
        for s, e in mask.ones:
            assert s in seg_starts
            assert e in seg_ends


@pytest.fixture(scope="module")
def model():
    return init_reference_model(5, embed_dim=16, context_len=160)


class TestComputeLoss:
    def test_full_mask_equals_unmasked_bitwise(self, model):
        trace = make_trace()
        m = len(trace.segments)
        mask = build_loss_mask(trace, selection(set(range(m)), m), answer_always_on=True)
        assert compute_loss(model, trace, mask) == compute_loss(model, trace, None)

    def test_zeroed_model_loss_is_log_v(self):
        zeroed = init_reference_model(0, embed_dim=16, context_len=160, zeroed=True)
        trace = make_trace()
        loss = compute_loss(zeroed, trace, None)
        assert loss == pytest.approx(np.log(zeroed.vocab_size), abs=1e-12)

    def test_subset_mask_is_mean_of_selected(self, model):
        trace = make_trace()
        tok = model.tokenizer
        context = [tok.bos_id] + tok.encode(trace.query)
        domain = tok.encode(trace.cot) + tok.encode(trace.answer)
        nlls = model.token_nlls(context, domain)
        mask = LossMask(trace_id="t", length=len(trace.tokens), ones=((2, 4),))
        got = compute_loss(model, trace, mask)
        assert got == pytest.approx(float(np.mean(nlls[2:4])), abs=1e-15)

    def test_empty_mask_is_error_not_nan(self, model):
        trace = make_trace()
        mask = build_loss_mask(trace, selection(set(), 3), answer_always_on=False)
        with pytest.raises(EmptySupportError):
            compute_loss(model, trace, mask)

    def test_split_range_invariance(self, model):
        trace = make_trace()
        joined = LossMask("t", len(trace.tokens), ((2, 6),))
        split = LossMask("t", len(trace.tokens), ((2, 4), (4, 6)))
        assert compute_loss(model, trace, joined) == compute_loss(model, trace, split)


class TestMaskIO:
    def test_roundtrip(self, tmp_path):
        masks = [
            LossMask("a", 10, ((0, 4),)),
            LossMask("b", 5, ()),
            LossMask("c", 8, ((0, 2), (5, 8))),
        ]
        path = tmp_path / "masks.ndjson"
        write_masks(path, masks)
        assert read_masks(path) == masks

    def test_overlapping_ranges_rejected_on_read(self, tmp_path):
        path = tmp_path / "masks.ndjson"
        path.write_text('{"trace_id": "x", "length": 10, "ones": [[0, 4], [3, 6]]}\n')
        with pytest.raises(FormatError):
            read_masks(path)

    def test_out_of_bounds_rejected(self):
        with pytest.raises(FormatError):
            LossMask("x", 4, ((0, 5),))

    def test_empty_ones_valid(self):
        mask = LossMask("x", 4, ())
        assert mask.coverage_ratio == 0.0


def test_mask_from_token_indices():
    trace = make_trace()
    mask = mask_from_token_indices(trace, [0, 1, 2, 5], answer_always_on=False)
    assert mask.ones == ((0, 3), (5, 6))
    with pytest.raises(JoinError):
        mask_from_token_indices(trace, [999], answer_always_on=False)


@given(st.sets(st.integers(0, 2)), st.booleans())
@settings(max_examples=60)
def test_property_mask_ranges_well_formed(important, answer_on):
    trace = make_trace()
    mask = build_loss_mask(trace, selection(important, 3), answer_always_on=answer_on)
    prev_end = 0
    for s, e in mask.ones:
        assert 0 <= s < e <= mask.length
        assert s >= prev_end
        # maximal runs: adjacent ranges would have been merged
        assert s > prev_end or prev_end == 0
        prev_end = e
    expected_cover = sum(
        seg.n_tokens for seg in trace.segments if seg.seg_index in important
    ) + (len(trace.answer_tokens) if answer_on else 0)
    assert sum(e - s for s, e in mask.ones) == expected_cover
