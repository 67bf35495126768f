"""SQuAD-style dataset ingestion, answer alignment and example construction."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass

from .annotate import AnnotatedSentence, annotate, fallback_ner, case_bit, Token, with_answer
from .tokenize import RawToken, split_sentences, tokenize

log = logging.getLogger(__name__)

MAX_SOURCE_TOKENS = 100
MAX_QUESTION_TOKENS = 50


class DatasetError(ValueError):
    pass


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class QARecord:
    doc_id: str
    context: str
    question: str
    answer_text: str
    answer_start: int
    qa_id: str


@dataclass(frozen=True)
class QGExample:
    sentence: AnnotatedSentence      # answer bits already set
    answer_span: tuple[int, int]     # over non-inserted tokens
    question: tuple[str, ...]        # lowercased tokens
    answer_text: str
    qa_id: str = ""
    question_tokens: tuple[Token, ...] = ()

    @property
    def source_length(self):
        return sum(1 for t in self.sentence.tokens if not t.inserted_bit)


def load_dataset(path, stats=None):
    """Flatten a SQuAD-layout JSON file into one :class:`QARecord` per answer.

    Only the first answer of each question is used.  Questions without an
    ``answer_start`` are skipped and counted in ``stats["missing_offset"]``.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    text = raw.decode("utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        byte_pos = len(text[:exc.pos].encode("utf-8"))
        raise DatasetError(f"{path}: malformed JSON at byte {byte_pos}: {exc.msg}") from None
    stats = stats if stats is not None else {}
    stats.setdefault("missing_offset", 0)
    records = []
    for a_idx, article in enumerate(obj.get("data", [])):
        title = article.get("title", f"article{a_idx}")
        for p_idx, para in enumerate(article.get("paragraphs", [])):
            doc_id = f"{title}:{p_idx}"
            context = para["context"]
            for q_idx, qa in enumerate(para.get("qas", [])):
                answers = qa.get("answers") or []
                if not answers or "answer_start" not in answers[0]:
                    stats["missing_offset"] += 1
                    continue
                ans = answers[0]
                records.append(QARecord(doc_id, context, qa["question"], ans["text"],
                                        int(ans["answer_start"]),
                                        str(qa.get("id", f"{doc_id}:{q_idx}"))))
    if stats["missing_offset"]:
        log.warning("%s: skipped %d questions without answer offsets",
                    path, stats["missing_offset"])
    return records


def align_answer(tokens, answer_text, answer_offset):
    """Minimal token range covering ``[offset, offset + len(answer_text))``.

    ``tokens`` carry sentence-relative character spans and
    ``answer_offset`` is relative to the same origin.  Tokens that only
    partly overlap the answer are included; an offset on whitespace snaps to
    the next token.
    """
    if not tokens:
        raise AlignmentError("empty sentence")
    spans = [(t.start, t.end) if isinstance(t, RawToken) else t.char_span for t in tokens]
    start, end = answer_offset, answer_offset + len(answer_text)
    sent_start, sent_end = spans[0][0], spans[-1][1]
    if start < sent_start or start >= sent_end:
        raise AlignmentError(f"answer offset {start} outside sentence [{sent_start}, {sent_end})")
    if end > sent_end:
        raise AlignmentError("answer crosses the sentence boundary")
    i = next(k for k, (s, e) in enumerate(spans) if e > start)
    j = i + 1
    while j < len(spans) and spans[j][0] < end:
        j += 1
    return i, j


def _question_tokens(question):
    raw = tokenize(question)
    labels = fallback_ner([t.text for t in raw])
    return tuple(Token(t.text, (t.start, t.end), case_bit(t.text), lab)
                 for t, lab in zip(raw, labels))


def build_examples(records, annotations=None, stats=None):
    """Annotate every context once and turn records into :class:`QGExample` objects.

    ``annotations`` is the indexed sidecar from ``ingest_annotations``.
    Answers spanning a sentence boundary are dropped and counted.
    """
    stats = stats if stats is not None else {}
    stats.setdefault("cross_sentence", 0)
    annotations = annotations or {}
    cache = {}
    examples = []
    for rec in records:
        if rec.doc_id not in cache:
            cache[rec.doc_id] = _annotate_context(rec.doc_id, rec.context, annotations, stats)
        sentences = cache[rec.doc_id]
        hit = next(((r, s) for r, s in sentences if r[0] <= rec.answer_start < r[1]), None)
        if hit is None:
            stats["cross_sentence"] += 1
            continue
        (lo, _), sent = hit
        base = [t for t in sent.tokens if not t.inserted_bit]
        try:
            span = align_answer(base, rec.answer_text, rec.answer_start - lo)
        except AlignmentError:
            stats["cross_sentence"] += 1
            continue
        q_tokens = _question_tokens(rec.question)
        examples.append(QGExample(with_answer(sent, span), span,
                                  tuple(t.lower for t in q_tokens), rec.answer_text,
                                  rec.qa_id, q_tokens))
    return examples


def _annotate_context(doc_id, context, annotations, stats):
    tokens = tokenize(context)
    out = []
    for idx, (lo, hi) in enumerate(split_sentences(context, tokens)):
        text = context[lo:hi]
        rel = [RawToken(t.text, t.start - lo, t.end - lo) for t in tokens if lo <= t.start < hi]
        if not rel:
            continue
        sent = annotate(rel, annotations.get((doc_id, idx)), doc_id, idx, text.rstrip(), stats)
        out.append(((lo, hi), sent))
    return out


def filter_lengths(examples, max_source=MAX_SOURCE_TOKENS, max_question=MAX_QUESTION_TOKENS):
    """Drop over-long examples.  Source length excludes inserted coref tokens."""
    kept, drops = [], Counter(source=0, question=0)
    for ex in examples:
        if ex.source_length > max_source:
            drops["source"] += 1
        elif len(ex.question) > max_question:
            drops["question"] += 1
        else:
            kept.append(ex)
    return kept, dict(drops)
