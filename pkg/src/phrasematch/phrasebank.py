"""Tokenization, the rotated-sentence layout, and exhaustive phrase spans.

A sentence of n tokens yields every contiguous span of length <= l_max,
ordered by (end position, length): for "A B C D E" that is
(A)(B)(AB)(C)(BC)(ABC)(D)(CD)(BCD)(ABCD)(E)(DE)(CDE)(BCDE)(ABCDE).
The same spans live on a rotation layout where row r holds the sentence
rotated left by r and the state at (row=start, col=len) represents the span.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .numcore import ContractError

DEFAULT_MAX_PHRASE_LEN = 7

_TRAILING_PUNCT = '.,?!;:"'


def tokenize(text: str, lowercase: bool = True) -> list[str]:
    """Whitespace split; trailing punctuation is peeled into its own tokens."""
    if lowercase:
        text = text.lower()
    out: list[str] = []
    for raw in text.split():
        tail: list[str] = []
        while len(raw) > 1 and raw[-1] in _TRAILING_PUNCT:
            tail.append(raw[-1])
            raw = raw[:-1]
        out.append(raw)
        out.extend(reversed(tail))
    return out


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]
    token_ids: tuple[int, ...]

    def __post_init__(self):
        if len(self.tokens) == 0:
            raise ContractError("empty sentence")
        if len(self.tokens) != len(self.token_ids):
            raise ContractError("tokens and token_ids must have equal length")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True, order=True)
class PhraseSpan:
    """A contiguous token span: start index (0-based) and length in tokens."""
    start: int
    len: int

    def __post_init__(self):
        if self.start < 0 or self.len < 1:
            raise ContractError(f"invalid span ({self.start}, {self.len})")

    @property
    def end(self) -> int:
        """Index of the last token covered (inclusive)."""
        return self.start + self.len - 1

    def tokens_of(self, s: Sentence) -> tuple[str, ...]:
        return s.tokens[self.start:self.start + self.len]

    def text_of(self, s: Sentence) -> str:
        return " ".join(self.tokens_of(s))


@dataclass(frozen=True)
class PhraseSequence:
    """All spans of length <= l_max in reformatted order (end asc, len asc)."""
    sentence: Sentence
    l_max: int
    spans: tuple[PhraseSpan, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.spans)

    def surface_texts(self) -> list[str]:
        return [sp.text_of(self.sentence) for sp in self.spans]


def enumerate_phrases(s: Sentence, l_max: int = DEFAULT_MAX_PHRASE_LEN) -> PhraseSequence:
    """Every contiguous span of length <= l_max, ordered by (end, len)."""
    if l_max < 1:
        raise ContractError(f"l_max must be >= 1, got {l_max}")
    n = len(s)
    spans = []
    for end in range(n):
        for length in range(1, min(end + 1, l_max) + 1):
            spans.append(PhraseSpan(end - length + 1, length))
    return PhraseSequence(sentence=s, l_max=l_max, spans=tuple(spans))


def rotation_rows(s: Sentence) -> list[list[int]]:
    """Token positions of each left rotation; row 0 is the sentence itself."""
    n = len(s)
    return [[(r + i) % n for i in range(n)] for r in range(n)]


def span_to_cell(span: PhraseSpan, sentence_len: int) -> tuple[int, int]:
    """Map a span to its (row, col) cell on the rotation layout.

    Row r of the layout encodes, at column c, the phrase of c tokens
    starting at position r. Cells with row + col > n would wrap around the
    sentence boundary and are never addressed.
    """
    if span.start + span.len > sentence_len:
        raise ContractError(
            f"span ({span.start}, {span.len}) wraps around sentence of "
            f"length {sentence_len}")
    return span.start, span.len


def cell_to_span(row: int, col: int) -> PhraseSpan:
    """Inverse of span_to_cell."""
    return PhraseSpan(start=row, len=col)


def phrase_count(n: int, l_max: int) -> int:
    """Closed form for len(enumerate_phrases): sum over t of min(t, l_max)."""
    return sum(min(t, l_max) for t in range(1, n + 1))
