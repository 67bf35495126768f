"""End-to-end preprocessing helpers and the bundled fixtures."""

from __future__ import annotations

import copy
import json
from importlib import resources

import numpy as np

from .annotate import AnnotatedSentence, CorefChain, Token, ingest_annotations
from .squad import QGExample, build_examples, filter_lengths, load_dataset
from .vocab import build_vocab, encode_example, vocab_hash

FIXTURE = "qg50.json"
FIXTURE_ANNOTATIONS = "qg50.annotations.json"


def data_path(name):
    return resources.files("focusqg").joinpath("data", name)


def preprocess(dataset_path, annotations=None, stats=None):
    """Load, annotate, align and length-filter a SQuAD-layout file.

    ``annotations`` is a sidecar path, an already parsed object, or None.
    Returns ``(examples, stats)``.
    """
    stats = stats if stats is not None else {}
    records = load_dataset(dataset_path, stats)
    index = ingest_annotations(annotations) if annotations is not None else None
    examples = build_examples(records, index, stats)
    kept, drops = filter_lengths(examples)
    stats["too_long_source"] = drops.get("source", 0)
    stats["too_long_question"] = drops.get("question", 0)
    stats["examples"] = len(kept)
    return kept, stats


def _token_json(t):
    return [t.surface, list(t.char_span), t.case_bit, t.ner_label, t.answer_bit, t.inserted_bit]


def _token_from(row):
    surface, span, case, ner, answer, inserted = row
    return Token(surface, tuple(span), case, ner, answer, inserted)


def example_to_json(ex):
    """One annotated example as a JSON object (tokens as compact 6-field rows)."""
    s = ex.sentence
    return {"doc_id": s.doc_id, "sent_index": s.sent_index, "text": s.text, "qa_id": ex.qa_id,
            "tokens": [_token_json(t) for t in s.tokens],
            "coref": [c.to_json() for c in s.coref],
            "answer_span": list(ex.answer_span), "answer_text": ex.answer_text,
            "question": list(ex.question),
            "question_tokens": [_token_json(t) for t in ex.question_tokens]}


def example_from_json(d):
    sent = AnnotatedSentence(tuple(_token_from(r) for r in d["tokens"]), d["doc_id"],
                             d["sent_index"], d["text"],
                             tuple(CorefChain.from_json(c) for c in d.get("coref", ())))
    return QGExample(sent, tuple(d["answer_span"]), tuple(d["question"]), d["answer_text"],
                     d.get("qa_id", ""), tuple(_token_from(r) for r in d["question_tokens"]))


def write_annotated(path, examples):
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(example_to_json(ex), ensure_ascii=False, sort_keys=True) + "\n")


def read_annotated(path):
    with open(path, encoding="utf-8") as fh:
        return [example_from_json(json.loads(line)) for line in fh if line.strip()]


def index_all(examples, src_vocab, tgt_vocab):
    return [encode_example(ex, src_vocab, tgt_vocab) for ex in examples]


def load_fixture(src_max=45000, tgt_max=28000):
    """The bundled 50-example corpus, indexed: ``(indexed, src_vocab, tgt_vocab, vhash)``."""
    with resources.as_file(data_path(FIXTURE)) as ds, \
            resources.as_file(data_path(FIXTURE_ANNOTATIONS)) as ann:
        examples, _ = preprocess(ds, ann)
    src, tgt = build_vocab(examples, src_max, tgt_max)
    return index_all(examples, src, tgt), src, tgt, vocab_hash(src, tgt)


def digit_tables(copies, seed=0):
    """Per-copy digit permutations; copy 0 is the identity."""
    rng = np.random.default_rng(seed)
    tables = [str.maketrans("", "")]
    for _ in range(1, copies):
        perm = rng.permutation(10)
        tables.append(str.maketrans("0123456789", "".join(str(d) for d in perm)))
    return tables


def perturbed_corpus(squad_obj, copies, seed=0):
    """Duplicate a SQuAD-layout object ``copies`` times with per-copy digit scrambles.

    Each copy applies one random digit permutation to contexts, questions
    and answers alike, so character offsets stay valid.  Titles get a
    ``#k`` suffix and question ids a ``-k`` suffix.
    """
    out = {"version": squad_obj.get("version", "1.1"), "data": []}
    for k, table in enumerate(digit_tables(copies, seed)):
        for article in squad_obj["data"]:
            art = copy.deepcopy(article)
            art["title"] = f"{article['title']}#{k}"
            for para in art["paragraphs"]:
                para["context"] = para["context"].translate(table)
                for qa in para["qas"]:
                    qa["question"] = qa["question"].translate(table)
                    qa["id"] = f"{qa['id']}-{k}"
                    for ans in qa["answers"]:
                        ans["text"] = ans["text"].translate(table)
            out["data"].append(art)
    return out


def _translate_strings(obj, table):
    # only string leaves; mention indices must keep their digits
    if isinstance(obj, str):
        return obj.translate(table)
    if isinstance(obj, list):
        return [_translate_strings(x, table) for x in obj]
    if isinstance(obj, dict):
        return {k: _translate_strings(v, table) for k, v in obj.items()}
    return obj


def perturbed_annotations(sidecar, copies, seed=0):
    """Replicate sidecar entries to match :func:`perturbed_corpus` doc ids."""
    docs = {}
    for k, table in enumerate(digit_tables(copies, seed)):
        for doc_id, entry in sidecar["documents"].items():
            title, _, para = doc_id.rpartition(":")
            entry = _translate_strings(entry, table) if k else entry
            docs[f"{title}#{k}:{para}"] = entry
    return {**sidecar, "documents": docs}


def write_perturbed_fixture(out_dir, copies=10, seed=0):
    """Write the scaled fixture (``copies`` x 50 examples) and its sidecar; return both paths."""
    squad = json.loads(data_path(FIXTURE).read_text(encoding="utf-8"))
    side = json.loads(data_path(FIXTURE_ANNOTATIONS).read_text(encoding="utf-8"))
    ds_path = f"{out_dir}/qg{50 * copies}.json"
    ann_path = f"{out_dir}/qg{50 * copies}.annotations.json"
    with open(ds_path, "w", encoding="utf-8") as fh:
        json.dump(perturbed_corpus(squad, copies, seed), fh, ensure_ascii=False)
    with open(ann_path, "w", encoding="utf-8") as fh:
        json.dump(perturbed_annotations(side, copies, seed), fh, ensure_ascii=False)
    return ds_path, ann_path
