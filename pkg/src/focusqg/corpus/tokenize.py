"""Rule-based tokenizer and sentence splitter with character offsets.

Rules, applied left to right at each non-space position:

* letter abbreviations with internal periods (``U.S.``) stay whole;
* numbers with decimal or thousands separators (``1,000`` ``3.5``) stay whole;
* words may contain internal hyphens (``on-screen``) and apostrophes, but the
  clitics ``'s 're 've 'll 'd 'm n't`` are split off;
* ``--`` and ``...`` are single tokens;
* any other non-space character (``$ , . ( ) [ ] " '``) is its own token.

Offsets are Python string indices (code points), matching the character
offsets used by SQuAD-style ``answer_start`` fields.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

_TOKEN_RE = re.compile(
    r"""
    (?:[A-Za-z]\.){2,}                    # U.S.  e.g.
  | \d+(?:[.,]\d+)+                       # 1,000  3.5
  | \w+(?:-\w+)*(?:['’]\w+)*         # words, hyphenated, with apostrophes
  | --+ | \.\.\.
  | \S
    """,
    re.VERBOSE | re.UNICODE,
)
_CLITIC_RE = re.compile(r"(?i)(n't|['’](?:s|re|ve|ll|d|m))$")

ABBREVIATIONS = frozenset({
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "vs", "etc",
    "inc", "ltd", "co", "corp", "no", "gen", "gov", "sen", "rep", "lt", "col",
    "capt", "sgt", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep",
    "sept", "oct", "nov", "dec", "fig", "approx", "ca",
})


@dataclass(frozen=True)
class RawToken:
    text: str
    start: int
    end: int


def tokenize(text: str) -> list[RawToken]:
    out = []
    for m in _TOKEN_RE.finditer(text):
        word, start = m.group(), m.start()
        cm = _CLITIC_RE.search(word)
        if cm and cm.start() > 0:
            cut = cm.start()
            out.append(RawToken(word[:cut], start, start + cut))
            out.append(RawToken(word[cut:], start + cut, m.end()))
        else:
            out.append(RawToken(word, start, m.end()))
    return out


def split_sentences(text: str, tokens: list[RawToken] | None = None) -> list[tuple[int, int]]:
    """Partition ``text`` into sentence character ranges.

    A boundary follows ``.``, ``?`` or ``!`` when whitespace comes next and
    the next token starts with a capital letter, a digit or a quote.  A
    period after a known abbreviation or a single capital initial is not a
    boundary.  Ranges are contiguous and cover the whole text; inter-sentence
    whitespace belongs to the preceding sentence.
    """
    if tokens is None:
        tokens = tokenize(text)
    if not text:
        return []
    starts = [0]
    for i in range(len(tokens) - 1):
        tok, nxt = tokens[i], tokens[i + 1]
        if tok.text not in (".", "?", "!") or nxt.start == tok.end:
            continue
        first = nxt.text[0]
        if not (first.isupper() or first.isdigit() or first in "\"'“‘"):
            continue
        if tok.text == "." and i > 0:
            prev = tokens[i - 1]
            if prev.end == tok.start and (
                    prev.text.lower() in ABBREVIATIONS
                    or (len(prev.text) == 1 and prev.text.isupper())):
                continue
        starts.append(nxt.start)
    bounds = starts + [len(text)]
    return [(bounds[k], bounds[k + 1]) for k in range(len(starts))]
