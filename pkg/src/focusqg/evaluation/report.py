"""Reference grouping for the two evaluation setups and the JSON metric report."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .metrics import (MetricError, bleu, count_unique, meteor_sentence, meteor_simplified,
                      rouge_l, rouge_l_sentence, sentence_bleu)

SETUPS = ("multi_ref", "single_ref")
_SPECIAL = {"<s>", "</s>"}


def gold_tokens(example):
    return [t for t in example.tgt_tokens if t not in _SPECIAL]


def _span_key(doc_id, sent_index, span):
    return (doc_id, int(sent_index), tuple(int(x) for x in span))


@dataclass
class ReferenceSet:
    """``refs[i]`` lists the reference token sequences for hypothesis ``ids[i]``.

    ``multi_ref`` gathers every gold question written for the hypothesis'
    sentence; ``single_ref`` keeps the one gold question for the same
    sentence and answer span (the first in corpus order if several share it).
    """
    mode: str
    ids: list
    refs: list

    @classmethod
    def build(cls, examples, generations, mode):
        if mode not in SETUPS:
            raise MetricError(f"unknown setup {mode!r}; expected one of {SETUPS}")
        by_sentence, by_span = {}, {}
        for ex in examples:
            gold = gold_tokens(ex)
            by_sentence.setdefault((ex.doc_id, ex.sent_index), []).append(gold)
            by_span.setdefault(_span_key(ex.doc_id, ex.sent_index, ex.answer_span), gold)
        ids, refs = [], []
        for g in generations:
            key = _span_key(g["doc_id"], g["sent_index"], g["answer_span"])
            if mode == "multi_ref":
                group = by_sentence.get(key[:2])
            else:
                group = [by_span[key]] if key in by_span else None
            if not group:
                raise MetricError(f"no reference for generation {key}")
            ids.append(g.get("qa_id") or "{}:{}:{}-{}".format(key[0], key[1], *key[2]))
            refs.append(group)
        return cls(mode, ids, refs)


@dataclass
class MetricReport:
    setup: str
    bleu4: float
    meteor: float
    rougeL: float
    unique_count: int
    n_hypotheses: int
    diagnostics: list = field(default_factory=list)

    def to_json(self):
        return asdict(self)

    def summary(self):
        return {k: v for k, v in asdict(self).items() if k != "diagnostics"}


def evaluate(generations, examples, setup="multi_ref"):
    """Score generation records against the preprocessed gold questions."""
    refset = ReferenceSet.build(examples, generations, setup)
    hyps = [g["question"].split() for g in generations]
    diags = []
    for g, hid, hyp, refs in zip(generations, refset.ids, hyps, refset.refs):
        diags.append({"id": hid, "doc_id": g["doc_id"], "sent_index": g["sent_index"],
                      "answer_span": list(g["answer_span"]), "n_refs": len(refs),
                      "bleu4": sentence_bleu(hyp, refs), "rougeL": rouge_l_sentence(hyp, refs),
                      "meteor": meteor_sentence(hyp, refs)})
    return MetricReport(setup, bleu(hyps, refset.refs), meteor_simplified(hyps, refset.refs),
                        rouge_l(hyps, refset.refs),
                        count_unique(g["question"] for g in generations), len(hyps), diags)


def write_report(path, report):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, ensure_ascii=False, indent=1, sort_keys=True)
