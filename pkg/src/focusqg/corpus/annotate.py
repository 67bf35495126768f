"""Token feature annotation: case bit, NER label, coreference insertion.

NER labels come from an external JSON sidecar when one is supplied and
from a small deterministic rule-based annotator otherwise.

Sidecar layout (``version`` 1)::

    {
      "format": "focusqg-annotations",
      "version": 1,
      "documents": {
        "<doc_id>": {
          "sentences": {
            "<sent_index>": {
              "tokens": ["As", "of", ...],            # optional, checked if present
              "ner": ["NONE", "NONE", "DATE", ...],   # one label per token
              "coref": [
                {"mention": [5, 6],
                 "representative": [{"surface": "Beyoncé", "ner": "PERSON"}]}
              ]
            }
          }
        }
      }
    }

Token indices refer to the tokenizer's output for the sentence before any
coreference insertion.  Unknown NER labels are mapped to ``MISC``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

from .tokenize import RawToken

log = logging.getLogger(__name__)

NER_LABELS = ("NONE", "PERSON", "LOCATION", "ORGANIZATION", "DATE", "MONEY",
              "NUMBER", "NATIONALITY", "TITLE", "MISC")
NER_ID = {label: i for i, label in enumerate(NER_LABELS)}
SIDECAR_FORMAT = "focusqg-annotations"
SIDECAR_VERSION = 1


class AnnotationError(ValueError):
    pass


@dataclass(frozen=True)
class Token:
    surface: str
    char_span: tuple[int, int]
    case_bit: int = 0
    ner_label: str = "NONE"
    answer_bit: int = 0
    inserted_bit: int = 0

    @property
    def lower(self):
        return self.surface.lower()

    @property
    def ner_id(self):
        return NER_ID[self.ner_label]


@dataclass(frozen=True)
class CorefChain:
    mention: tuple[int, int]
    representative: tuple[tuple[str, str], ...]  # (surface, ner label)

    def to_json(self):
        return {"mention": list(self.mention),
                "representative": [{"surface": s, "ner": n} for s, n in self.representative]}

    @classmethod
    def from_json(cls, obj):
        rep = tuple((r["surface"], _norm_label(r.get("ner", "NONE"))) for r in obj["representative"])
        return cls(tuple(obj["mention"]), rep)


@dataclass(frozen=True)
class AnnotatedSentence:
    tokens: tuple[Token, ...]
    doc_id: str = ""
    sent_index: int = 0
    text: str = ""
    coref: tuple[CorefChain, ...] = field(default=())

    def original_positions(self):
        """Positions of non-inserted tokens, in order."""
        return [i for i, t in enumerate(self.tokens) if not t.inserted_bit]

    def render(self):
        return " ".join(t.lower for t in self.tokens)


def case_bit(surface):
    return int(any(ch.isupper() for ch in surface))


# ---------------------------------------------------------------------------
# fallback annotator

MONTHS = frozenset("january february march april may june july august september "
                   "october november december".split())
CURRENCY = frozenset("$ € £ ¥".split())
SCALE = frozenset("hundred thousand million billion trillion".split())
NUMBER_WORDS = frozenset("one two three four five six seven eight nine ten eleven twelve "
                         "twenty thirty forty fifty hundred thousand dozen".split())
CURRENCY_WORDS = frozenset("dollars dollar euros euro pounds yen".split())
TITLES = frozenset(
    "mr mrs ms dr president king queen prince princess actress actor singer "
    "director professor sir lady lord senator governor general captain pope "
    "emperor empress rapper producer ceo chairman composer author writer "
    "songwriter dancer".split())
NATIONALITIES = frozenset(
    "american british english french german japanese chinese italian spanish "
    "russian canadian australian indian mexican korean irish scottish dutch "
    "swedish greek polish portuguese brazilian egyptian african european asian "
    "nigerian swiss austrian belgian norwegian danish finnish turkish persian "
    "arab arabic israeli roman latin hispanic cuban".split())
LOCATIONS = frozenset(
    "america england france germany japan china italy spain russia canada "
    "australia india mexico korea ireland scotland wales egypt africa europe "
    "asia brazil texas houston london paris tokyo berlin rome chicago atlanta "
    "nanjing beijing california york boston seattle detroit kyoto osaka "
    "hyrule".split())
ORG_SUFFIXES = frozenset(
    "university records inc corporation company media college institute "
    "association league party council foundation group bank entertainment "
    "studios studio school academy club museum".split())
FUNCTION_WORDS = frozenset(
    "the a an as in on at of for by with from to and but or it he she they we "
    "i this that these those his her their its after before during when while "
    "both although however there what who which where why how is was".split())


def _is_number(s):
    t = s.replace(",", "").replace(".", "", 1)
    return t.isdigit()


def _is_year(s):
    return s.isdigit() and len(s) == 4 and 1000 <= int(s) <= 2099


def fallback_ner(surfaces):
    """Deterministic rule-based NER over a list of token surfaces."""
    n = len(surfaces)
    low = [s.lower() for s in surfaces]
    labels = ["NONE"] * n

    def free(i):
        return 0 <= i < n and labels[i] == "NONE"

    for i in range(n):
        # $ 250 million
        if surfaces[i] in CURRENCY and i + 1 < n and _is_number(surfaces[i + 1]):
            labels[i] = labels[i + 1] = "MONEY"
            if i + 2 < n and low[i + 2] in SCALE:
                labels[i + 2] = "MONEY"
        elif _is_number(surfaces[i]) and i + 1 < n and low[i + 1] in CURRENCY_WORDS:
            labels[i] = labels[i + 1] = "MONEY"
    for i in range(n):
        if low[i] not in MONTHS:
            continue
        nxt = i + 1 < n and _is_number(surfaces[i + 1])
        prv = i > 0 and surfaces[i - 1].isdigit() and int(surfaces[i - 1]) <= 31
        if not (nxt or prv):
            continue
        labels[i] = "DATE"
        if prv and free(i - 1):
            labels[i - 1] = "DATE"
        if nxt and free(i + 1):
            labels[i + 1] = "DATE"
            # November 19 , 2006
            if i + 3 < n and surfaces[i + 2] == "," and _is_year(surfaces[i + 3]):
                labels[i + 3] = "DATE"
    for i in range(n):
        if not free(i):
            continue
        if _is_year(surfaces[i]):
            labels[i] = "DATE"
        elif _is_number(surfaces[i]) or low[i] in NUMBER_WORDS:
            labels[i] = "NUMBER"
        elif low[i] in NATIONALITIES:
            labels[i] = "NATIONALITY"
        elif low[i] in TITLES:
            labels[i] = "TITLE"
    # capitalised runs
    i = 0
    while i < n:
        if not (case_bit(surfaces[i]) and surfaces[i][0].isalpha() and free(i)
                and low[i] not in FUNCTION_WORDS):
            i += 1
            continue
        j = i
        while j < n and free(j) and surfaces[j][:1].isupper() and low[j] not in FUNCTION_WORDS:
            j += 1
        run = range(i, j)
        if i > 0 and labels[i - 1] == "TITLE":
            label = "PERSON"
        elif low[j - 1] in ORG_SUFFIXES:
            label = "ORGANIZATION"
        elif j - i == 1 and low[i] in LOCATIONS:
            label = "LOCATION"
        else:
            label = "MISC"
        for k in run:
            labels[k] = label
        i = j
    return labels


def _norm_label(label, counter=None):
    label = str(label).upper()
    if label in ("O", ""):
        return "NONE"
    if label not in NER_ID:
        if counter is not None:
            counter["unknown_label"] = counter.get("unknown_label", 0) + 1
        log.warning("unknown NER label %r mapped to MISC", label)
        return "MISC"
    return label


def annotate(raw_tokens, external=None, doc_id="", sent_index=0, text="", counters=None):
    """Build an :class:`AnnotatedSentence` from tokenizer output.

    ``external`` is one sentence entry of a sidecar (``ner`` / ``coref``
    keys).  Coreference insertion is applied when chains are present.
    """
    surfaces = [t.text if isinstance(t, RawToken) else t.surface for t in raw_tokens]
    spans = [(t.start, t.end) if isinstance(t, RawToken) else tuple(t.char_span)
             for t in raw_tokens]
    chains = []
    if external is not None:
        ner = external.get("ner")
        where = f"doc {doc_id!r} sentence {sent_index}"
        if ner is None:
            labels = fallback_ner(surfaces)
        else:
            if len(ner) != len(surfaces):
                raise AnnotationError(
                    f"{where}: {len(ner)} NER labels for {len(surfaces)} tokens")
            labels = [_norm_label(x, counters) for x in ner]
        given = external.get("tokens")
        if given is not None and list(given) != surfaces:
            raise AnnotationError(f"{where}: sidecar tokens do not match tokenizer output")
        for obj in external.get("coref", ()):
            chain = CorefChain.from_json(obj)
            i, j = chain.mention
            if not 0 <= i < j <= len(surfaces):
                raise AnnotationError(f"{where}: coref mention {[i, j]} out of range")
            chains.append(chain)
    else:
        labels = fallback_ner(surfaces)
    tokens = tuple(Token(s, sp, case_bit(s), lab) for s, sp, lab in zip(surfaces, spans, labels))
    sent = AnnotatedSentence(tokens, doc_id, sent_index, text)
    if chains:
        sent = insert_coreferents(sent, chains, counters)
    return sent


POSSESSIVES = frozenset({"his", "its", "their", "her"})
_NOT_AFTER_POSSESSIVE_HER = frozenset(
    "to and or but . , ; : ! ? ) the a an in on at for with from by as was is".split())


def _is_possessive(tokens, end):
    word = tokens[end - 1].lower
    if word not in POSSESSIVES:
        return False
    if word != "her":
        return True
    # "her" is possessive only when a content word follows it
    nxt = tokens[end].lower if end < len(tokens) else None
    return nxt is not None and nxt not in _NOT_AFTER_POSSESSIVE_HER and nxt[0].isalnum()


def insert_coreferents(sentence, chains, counters=None):
    """Insert each chain's representative mention right after its mention.

    A single-token possessive pronoun mention gets a ``'s`` marker appended
    to the inserted mention.  When two chains claim overlapping mentions
    the first one wins.
    """
    if not chains:
        return sentence
    base = [t for t in sentence.tokens if not t.inserted_bit]
    accepted, taken = [], set()
    for ch in chains:
        cover = set(range(*ch.mention))
        if cover & taken:
            if counters is not None:
                counters["coref_overlap"] = counters.get("coref_overlap", 0) + 1
            log.warning("overlapping coref mention %s ignored", ch.mention)
            continue
        taken |= cover
        accepted.append(ch)
    after = {ch.mention[1]: ch for ch in accepted}
    out = []
    for pos, tok in enumerate(base):
        out.append(tok)
        ch = after.get(pos + 1)
        if ch is None:
            continue
        at = tok.char_span[1]
        for surface, label in ch.representative:
            out.append(Token(surface, (at, at), case_bit(surface), label, 0, 1))
        if ch.mention[1] - ch.mention[0] == 1 and _is_possessive(base, ch.mention[1]):
            out.append(Token("'s", (at, at), 0, "NONE", 0, 1))
    return replace(sentence, tokens=tuple(out), coref=tuple(accepted))


def with_answer(sentence, span):
    """Copy of ``sentence`` with answer bits set for original-token range ``span``.

    Inserted tokens strictly inside the span inherit the bit so the answer
    stays one contiguous run.
    """
    i, j = span
    orig = sentence.original_positions()
    if not 0 <= i < j <= len(orig):
        raise AnnotationError(f"answer span {span} outside {len(orig)} tokens")
    lo, hi = orig[i], orig[j - 1] + 1
    toks = tuple(replace(t, answer_bit=int(lo <= k < hi)) for k, t in enumerate(sentence.tokens))
    return replace(sentence, tokens=toks)


# ---------------------------------------------------------------------------
# sidecar I/O

def emit_annotations(sentences):
    """Sidecar dict describing the NER labels and coref chains of ``sentences``."""
    docs = {}
    for s in sentences:
        base = [t for t in s.tokens if not t.inserted_bit]
        entry = {"tokens": [t.surface for t in base], "ner": [t.ner_label for t in base]}
        if s.coref:
            entry["coref"] = [c.to_json() for c in s.coref]
        docs.setdefault(s.doc_id, {"sentences": {}})["sentences"][str(s.sent_index)] = entry
    return {"format": SIDECAR_FORMAT, "version": SIDECAR_VERSION, "documents": docs}


def ingest_annotations(obj):
    """Validate a sidecar dict (or path) and index it as ``{(doc_id, sent_index): entry}``."""
    if isinstance(obj, (str, Path)):
        with open(obj, encoding="utf-8") as fh:
            obj = json.load(fh)
    if obj.get("format") != SIDECAR_FORMAT:
        raise AnnotationError(f"not an annotation sidecar (format={obj.get('format')!r})")
    if obj.get("version") != SIDECAR_VERSION:
        raise AnnotationError(f"unsupported sidecar version {obj.get('version')!r}")
    out = {}
    for doc_id, doc in obj.get("documents", {}).items():
        for idx, entry in doc.get("sentences", {}).items():
            out[(doc_id, int(idx))] = entry
    return out


def dump_tokens(sentence):
    """Rendered sentence followed by a per-token TSV of surfaces and feature flags."""
    lines = [sentence.render(), "idx\tsurface\tinserted\tanswer\tcase\tner\tchar_span"]
    for i, t in enumerate(sentence.tokens):
        lines.append(f"{i}\t{t.lower}\t{t.inserted_bit}\t{t.answer_bit}\t{t.case_bit}\t"
                     f"{t.ner_label}\t{t.char_span[0]}-{t.char_span[1]}")
    return "\n".join(lines) + "\n"
