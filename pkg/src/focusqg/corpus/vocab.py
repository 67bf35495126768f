"""Vocabularies, extended-vocabulary indexing and the preprocessed JSONL format."""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field, asdict, replace

PAD, UNK, BOS, EOS = 0, 1, 2, 3
SPECIALS = ("<pad>", "<unk>", "<s>", "</s>")
SRC_VOCAB_SIZE = 45000
TGT_VOCAB_SIZE = 28000


class IntegrityError(ValueError):
    pass


class Vocab:
    def __init__(self, tokens):
        tokens = list(tokens)
        if tuple(tokens[:4]) != SPECIALS:
            tokens = list(SPECIALS) + [t for t in tokens if t not in SPECIALS]
        self.token_of = tokens
        self.id_of = {t: i for i, t in enumerate(tokens)}
        if len(self.id_of) != len(tokens):
            raise ValueError("duplicate vocabulary entries")

    def __len__(self):
        return len(self.token_of)

    @property
    def size(self):
        return len(self.token_of)

    def __contains__(self, token):
        return token in self.id_of

    def get(self, token):
        return self.id_of.get(token, UNK)

    def encode(self, tokens):
        return [self.id_of.get(t, UNK) for t in tokens]

    def to_json(self):
        return list(self.token_of)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.token_of == other.token_of

    @classmethod
    def from_counts(cls, counts, max_size):
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        keep = max(0, max_size - len(SPECIALS))
        return cls(list(SPECIALS) + [w for w, _ in ranked[:keep] if w not in SPECIALS])


def build_vocab(examples, src_max=SRC_VOCAB_SIZE, tgt_max=TGT_VOCAB_SIZE):
    """Frequency-ranked source and target vocabularies (ties broken lexicographically).

    ``src_max`` and ``tgt_max`` bound the total size, specials included.
    """
    src, tgt = Counter(), Counter()
    for ex in examples:
        src.update(t.lower for t in ex.sentence.tokens)
        tgt.update(ex.question)
    return Vocab.from_counts(src, src_max), Vocab.from_counts(tgt, tgt_max)


def vocab_hash(src_vocab, tgt_vocab):
    blob = json.dumps([src_vocab.to_json(), tgt_vocab.to_json()], ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass
class IndexedExample:
    src_tokens: list
    src_ids: list
    src_ext_ids: list
    oov_list: list
    tgt_tokens: list
    tgt_ids: list
    tgt_ext_ids: list
    answer: list
    case: list
    ner: list
    inserted: list
    q_ids: list = field(default_factory=list)
    q_case: list = field(default_factory=list)
    q_ner: list = field(default_factory=list)
    doc_id: str = ""
    sent_index: int = 0
    answer_span: list = field(default_factory=list)
    qa_id: str = ""

    def __len__(self):
        return len(self.src_ids)

    def to_json(self, vhash):
        d = asdict(self)
        d["vocab_hash"] = vhash
        return d

    @classmethod
    def from_json(cls, d):
        d = dict(d)
        d.pop("vocab_hash", None)
        return cls(**d)

    def without_inserted(self, tgt_vocab):
        """Drop coreference-inserted positions and re-derive copy ids."""
        keep = [i for i, b in enumerate(self.inserted) if not b]
        if len(keep) == len(self.inserted):
            return self
        src_tokens = [self.src_tokens[i] for i in keep]
        ext, oov = extend_source(src_tokens, tgt_vocab)
        return replace(
            self, src_tokens=src_tokens, src_ids=[self.src_ids[i] for i in keep],
            src_ext_ids=ext, oov_list=oov,
            tgt_ext_ids=extend_target(self.tgt_tokens, tgt_vocab, oov),
            answer=[self.answer[i] for i in keep], case=[self.case[i] for i in keep],
            ner=[self.ner[i] for i in keep], inserted=[0] * len(keep))

    def with_answer_bits(self, bits):
        return replace(self, answer=list(bits))


def extend_source(src_tokens, tgt_vocab):
    """Source ids over the target vocabulary plus per-example OOV slots."""
    oov, ext = [], []
    base = len(tgt_vocab)
    for w in src_tokens:
        if w in tgt_vocab.id_of:
            ext.append(tgt_vocab.id_of[w])
        else:
            if w not in oov:
                oov.append(w)
            ext.append(base + oov.index(w))
    return ext, oov


def extend_target(tgt_tokens, tgt_vocab, oov):
    """``tgt_tokens`` already carries BOS/EOS markers as strings."""
    base = len(tgt_vocab)
    out = []
    for w in tgt_tokens:
        if w in tgt_vocab.id_of:
            out.append(tgt_vocab.id_of[w])
        elif w in oov:
            out.append(base + oov.index(w))
        else:
            out.append(UNK)
    return out


def encode_example(example, src_vocab, tgt_vocab):
    toks = example.sentence.tokens
    src_tokens = [t.lower for t in toks]
    ext, oov = extend_source(src_tokens, tgt_vocab)
    tgt_tokens = [SPECIALS[BOS]] + list(example.question) + [SPECIALS[EOS]]
    return IndexedExample(
        src_tokens=src_tokens,
        src_ids=src_vocab.encode(src_tokens),
        src_ext_ids=ext,
        oov_list=oov,
        tgt_tokens=tgt_tokens,
        tgt_ids=tgt_vocab.encode(tgt_tokens),
        tgt_ext_ids=extend_target(tgt_tokens, tgt_vocab, oov),
        answer=[t.answer_bit for t in toks],
        case=[t.case_bit for t in toks],
        ner=[t.ner_id for t in toks],
        inserted=[t.inserted_bit for t in toks],
        q_ids=tgt_vocab.encode(example.question),
        q_case=[t.case_bit for t in example.question_tokens],
        q_ner=[t.ner_id for t in example.question_tokens],
        doc_id=example.sentence.doc_id,
        sent_index=example.sentence.sent_index,
        answer_span=list(example.answer_span),
        qa_id=example.qa_id,
    )


# ---------------------------------------------------------------------------
# files

def save_vocab(path, src_vocab, tgt_vocab):
    obj = {"version": 1, "hash": vocab_hash(src_vocab, tgt_vocab),
           "source": src_vocab.to_json(), "target": tgt_vocab.to_json()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, ensure_ascii=False)
    return obj["hash"]


def load_vocab(path):
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    src, tgt = Vocab(obj["source"]), Vocab(obj["target"])
    if vocab_hash(src, tgt) != obj.get("hash"):
        raise IntegrityError(f"{path}: stored vocab hash does not match contents")
    return src, tgt


def write_indexed(path, examples, vhash):
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_json(vhash), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def read_indexed(path, expected_hash=None):
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            d = json.loads(line)
            if expected_hash is not None and d.get("vocab_hash") != expected_hash:
                raise IntegrityError(
                    f"{path}:{lineno}: vocab hash {d.get('vocab_hash')!r} != {expected_hash!r}")
            out.append(IndexedExample.from_json(d))
    return out
