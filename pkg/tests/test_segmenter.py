import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segsel.errors import AlignmentError, ConfigError
from segsel.segmenter import (
    KeywordSet,
    align_to_tokens,
    default_keywords,
    load_keywords,
    segment_text,
)
from segsel.trace import Token


def spans_text(cot, ks):
    data = cot.encode("utf-8")
    return [data[s:e].decode("utf-8") for s, e in segment_text(cot, ks)]


class TestDefaultKeywords:
    def test_paper_main_has_eleven(self):
        ks = default_keywords("paper-main")
        assert len(ks.keywords) == 11
        assert "\n\nBut wait" in ks.keywords

    def test_paper_main_excludes_bare_but(self):
        ks = default_keywords("paper-main")
        assert "\n\nBut" not in ks.keywords

    def test_retro_style_includes_hmm(self):
        ks = default_keywords("retro-style")
        assert "\n\nHmm" in ks.keywords
        assert "\n\nBut" in ks.keywords

    def test_unknown_profile(self):
        with pytest.raises(ConfigError):
            default_keywords("nope")

    def test_longest_match_order_enforced(self):
        with pytest.raises(ConfigError):
            KeywordSet(("\n\nHmm", "\n\nHmmm"))
        KeywordSet(("\n\nHmmm", "\n\nHmm"))  # longer first is fine

    def test_keywords_need_paragraph_break(self):
        with pytest.raises(ConfigError):
            KeywordSet(("Wait",))


class TestSegmentText:
    def test_basic_split(self):
        ks = default_keywords()
        assert spans_text("A\n\nWait, B\n\nAlternatively C", ks) == [
            "A", "\n\nWait, B", "\n\nAlternatively C",
        ]

    def test_no_keywords_single_span(self):
        ks = default_keywords()
        assert spans_text("no keywords here", ks) == ["no keywords here"]

    def test_leading_keyword_no_empty_span(self):
        ks = default_keywords()
        assert spans_text("\n\nWait X", ks) == ["\n\nWait X"]

    def test_longest_match_wins(self):
        ks = default_keywords("retro-style")
        # "\n\nHmmm," must not be split as "\n\nHmm" + "m,"
        spans = spans_text("A\n\nHmmm, tricky", ks)
        assert spans == ["A", "\n\nHmmm, tricky"]

    def test_concatenation_reproduces_input(self):
        ks = default_keywords()
        cot = "A\n\nWait B\n\nBut wait C\n\nHowever D"
        assert "".join(spans_text(cot, ks)) == cot

    def test_idempotent_on_own_spans(self):
        ks = default_keywords()
        cot = "A\n\nWait B\n\nAnother thing\n\nNot sure now"
        spans = segment_text(cot, ks)
        for s, e in spans:
            part = cot.encode()[s:e].decode()
            assert spans_text(part, ks) == [part]

    def test_empty_text_rejected(self):
        with pytest.raises(ConfigError):
            segment_text("", default_keywords())


@st.composite
def cot_texts(draw):
    ks = default_keywords("paper-main")
    n = draw(st.integers(1, 6))
    chunks = [draw(st.text(alphabet="abc XY.,", min_size=1, max_size=12))]
    for _ in range(n):
        kw = draw(st.sampled_from(ks.keywords))
        chunks.append(kw + draw(st.text(alphabet="abc XY.,", min_size=0, max_size=12)))
    return "".join(chunks)


@given(cot_texts())
@settings(max_examples=60)
def test_property_cover_and_idempotence(cot):
    ks = default_keywords()
    spans = segment_text(cot, ks)
    data = cot.encode()
    assert b"".join(data[s:e] for s, e in spans) == data
    assert all(e > s for s, e in spans)
    # re-segmenting the concatenation yields identical spans
    assert segment_text(cot, ks) == spans


@given(cot_texts())
@settings(max_examples=60)
def test_property_retro_refines_paper_main(cot):
    main_spans = segment_text(cot, default_keywords("paper-main"))
    retro_spans = segment_text(cot, default_keywords("retro-style"))
    assert len(retro_spans) >= len(main_spans)


class TestAlignToTokens:
    def tokens(self, spans):
        return [Token(i, "t", s, e) for i, (s, e) in enumerate(spans)]

    def test_basic_alignment(self):
        spans = [(0, 5), (5, 12)]
        toks = self.tokens([(0, 2), (2, 5), (5, 12)])
        segs = align_to_tokens(spans, toks)
        assert [s.token_range for s in segs] == [(0, 1), (2, 2)]
        assert segs[0].is_first and segs[-1].is_last

    def test_single_span(self):
        segs = align_to_tokens([(0, 8)], self.tokens([(0, 2), (2, 4), (4, 6), (6, 8)]))
        assert len(segs) == 1
        assert segs[0].n_tokens == 4
        assert segs[0].is_first and segs[0].is_last

    def test_straddling_token_goes_to_earlier_span(self):
        spans = [(0, 5), (5, 9)]
        toks = self.tokens([(0, 3), (3, 7), (7, 9)])
        segs = align_to_tokens(spans, toks)
        assert segs[0].token_range == (0, 1)  # token [3,7) starts in span 0

    def test_token_beyond_text_end(self):
        with pytest.raises(AlignmentError):
            align_to_tokens([(0, 4)], self.tokens([(5, 6)]))


def test_load_keywords_file(tmp_path):
    path = tmp_path / "kw.txt"
    path.write_text("\\n\\nWait\n\\n\\nOn the other hand\n")
    ks = load_keywords(path)
    assert "\n\nWait" in ks.keywords
    assert "\n\nOn the other hand" in ks.keywords
    assert spans_text("A\n\nOn the other hand B", ks) == ["A", "\n\nOn the other hand B"]
