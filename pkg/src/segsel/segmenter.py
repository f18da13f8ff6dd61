"""Split CoT text into segments at transition keywords.

Matching is literal and case-sensitive on the UTF-8 byte level. A keyword
occurrence opens a new segment and belongs to the segment it opens; a
match at byte 0 never creates an empty leading span. Spans always cover
the text exactly, so concatenating span texts reproduces the input
byte-for-byte.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import AlignmentError, ConfigError
from .trace import ReasoningTrace, Segment, Token

PROFILE_PAPER_MAIN = "paper-main"
PROFILE_RETRO_STYLE = "retro-style"

# Curated transition keywords, each anchored at a paragraph break. The
# main profile drops bare "But" and the "Hmm" fillers in favour of more
# specific variants; the retro profile keeps the broader originals.
_PAPER_MAIN_KEYWORDS = [
    "\n\nWait",
    "\n\nAlternatively",
    "\n\nHowever",
    "\n\nNot sure",
    "\n\nGoing back",
    "\n\nBacktrack",
    "\n\nTrace back",
    "\n\nAnother",
    "\n\nBut wait",
    "\n\nBut alternatively",
    "\n\nBut just to",
]

_RETRO_STYLE_KEYWORDS = [
    "\n\nBut",
    "\n\nWait",
    "\n\nAlternatively",
    "\n\nHowever",
    "\n\nHmmm",
    "\n\nHmm",
    "\n\nNot sure",
    "\n\nGoing back",
    "\n\nBacktrack",
    "\n\nTrace back",
    "\n\nAnother",
]


@dataclass(frozen=True)
class KeywordSet:
    """Ordered literal keywords; longest-match order is enforced on init."""

    keywords: tuple[str, ...]
    profile: str = "custom"

    def __post_init__(self):
        if not self.keywords:
            raise ConfigError("keyword set must be non-empty")
        for i, kw in enumerate(self.keywords):
            if not kw.startswith("\n\n"):
                raise ConfigError(
                    f"keyword {kw!r} must begin with a paragraph break"
                )
            for j in range(i + 1, len(self.keywords)):
                if self.keywords[j].startswith(kw) and len(self.keywords[j]) > len(kw):
                    raise ConfigError(
                        f"keyword '{kw!r}' precedes its extension '{self.keywords[j]!r}';"
                        " longer keywords must come first"
                    )

    def encoded(self) -> list[bytes]:
        return [kw.encode("utf-8") for kw in self.keywords]


def _longest_match_order(keywords: list[str]) -> tuple[str, ...]:
    # Stable: only reorders true prefix pairs.
    return tuple(sorted(keywords, key=lambda k: -len(k)))


def default_keywords(profile: str = PROFILE_PAPER_MAIN) -> KeywordSet:
    """Return the built-in keyword set for a profile."""
    if profile == PROFILE_PAPER_MAIN:
        return KeywordSet(_longest_match_order(_PAPER_MAIN_KEYWORDS), profile)
    if profile == PROFILE_RETRO_STYLE:
        return KeywordSet(_longest_match_order(_RETRO_STYLE_KEYWORDS), profile)
    raise ConfigError(f"unknown keyword profile '{profile}'")


def load_keywords(path: str | Path, profile: str = "file") -> KeywordSet:
    """Load a keyword profile from a plain-text file, one keyword per line.

    Lines use ``\\n`` / ``\\t`` / ``\\\\`` escapes for control characters.
    """
    keywords = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        kw = (
            line.replace("\\\\", "\x00")
            .replace("\\n", "\n")
            .replace("\\t", "\t")
            .replace("\x00", "\\")
        )
        keywords.append(kw)
    return KeywordSet(_longest_match_order(keywords), profile)


def segment_text(cot: str, ks: KeywordSet) -> list[tuple[int, int]]:
    """Return [start, end) byte spans covering ``cot``, split at keywords."""
    data = cot.encode("utf-8")
    if not data:
        raise ConfigError("cannot segment empty text")
    patterns = ks.encoded()
    boundaries: list[int] = []
    pos = 0
    n = len(data)
    while pos < n:
        nxt = data.find(b"\n\n", pos)
        if nxt < 0:
            break
        matched = None
        for pat in patterns:
            if data.startswith(pat, nxt):
                matched = pat
                break
        if matched is None:
            pos = nxt + 1
            continue
        if nxt > 0:
            boundaries.append(nxt)
        pos = nxt + len(matched)
    spans = []
    starts = [0] + boundaries
    ends = boundaries + [n]
    for s, e in zip(starts, ends):
        spans.append((s, e))
    return spans


def align_to_tokens(
    spans: list[tuple[int, int]], tokens: list[Token]
) -> list[Segment]:
    """Assign each token to the span containing its first byte."""
    if not spans:
        raise AlignmentError("no spans to align to")
    text_end = spans[-1][1]
    owner_of_token: list[int] = []
    si = 0
    for tok in tokens:
        if tok.start >= text_end:
            raise AlignmentError(
                f"token {tok.index} starts at byte {tok.start}, beyond text end {text_end}"
            )
        while tok.start >= spans[si][1]:
            si += 1
        owner_of_token.append(si)

    segments: list[Segment] = []
    if not tokens:
        raise AlignmentError("cannot build segments from an empty token list")
    # Group consecutive tokens by owning span; spans with no tokens collapse
    # into their neighbour automatically (the partition stays exact).
    run_start = 0
    for t in range(1, len(tokens) + 1):
        if t == len(tokens) or owner_of_token[t] != owner_of_token[run_start]:
            seg_index = len(segments)
            first, last = run_start, t - 1
            span = spans[owner_of_token[run_start]]
            segments.append(
                Segment(
                    seg_index=seg_index,
                    token_range=(first, last),
                    n_tokens=last - first + 1,
                    is_first=False,
                    is_last=False,
                    char_span=span,
                )
            )
            run_start = t
    # Rebuild with boundary flags and char spans widened to cover the text
    # exactly (first segment starts at 0, each segment ends where the next
    # one's tokens begin).
    out: list[Segment] = []
    for i, seg in enumerate(segments):
        start = 0 if i == 0 else segments[i].char_span[0]
        end = text_end if i == len(segments) - 1 else segments[i + 1].char_span[0]
        out.append(
            Segment(
                seg_index=i,
                token_range=seg.token_range,
                n_tokens=seg.n_tokens,
                is_first=(i == 0),
                is_last=(i == len(segments) - 1),
                char_span=(start, end),
            )
        )
    return out


def segment_trace(trace: ReasoningTrace, ks: KeywordSet) -> ReasoningTrace:
    """Segment a tokenized trace; returns a copy with segments populated."""
    spans = segment_text(trace.cot, ks)
    segments = align_to_tokens(spans, trace.tokens)
    return trace.with_segments(segments)
