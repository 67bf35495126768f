"""Beam search, attention-based UNK replacement and per-answer generation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ConfigError
from .corpus.vocab import BOS, EOS, PAD, UNK
from .decoder import DecoderState
from .encoder import EncodedSource
from .model import make_batch

MAX_LEN = 50


@dataclass
class Hypothesis:
    tokens: tuple                 # extended-vocab ids, EOS included when finished
    logprob: float
    attn: list = field(default_factory=list)   # per step, source attention weights
    finished: bool = False

    @property
    def score(self):
        """Length-normalized log-probability."""
        return self.logprob / max(len(self.tokens), 1)


class SearchModel:
    """Interface consumed by :func:`beam_search`.

    ``start()`` returns the decoder state for a single hypothesis;
    ``step(prev_ids, state)`` returns ``(logprobs K x V, attn K x T or None,
    new_state)``; ``select(state, rows)`` gathers rows of a batched state.
    """

    def start(self):
        raise NotImplementedError

    def step(self, prev_ids, state):
        raise NotImplementedError

    def select(self, state, rows):
        raise NotImplementedError


def _better(a, b):
    """True when finished hypothesis ``a`` beats ``b`` (score, then lexicographic ids)."""
    if a.score != b.score:
        return a.score > b.score
    return a.tokens < b.tokens


def beam_search(model, beam=5, max_len=MAX_LEN, bos=BOS, eos=EOS):
    """Beam search with a finished pool and length-normalized final selection.

    Every step expands all active hypotheses and keeps the ``beam`` best
    candidates by cumulative log-probability (ties: parent rank, then token
    id).  Candidates ending in ``eos`` or reaching ``max_len`` move to the
    finished pool and shrink the active beam.  The search stops once no
    active hypothesis can still overtake the best finished one.  The greedy
    decode joins the pool too, since pruning can otherwise drop its path.
    """
    if beam < 1:
        raise ConfigError("beam must be >= 1")
    if max_len < 1:
        raise ConfigError("max_len must be >= 1")
    active = [Hypothesis((), 0.0)]
    state = model.start()
    finished = []
    for _ in range(max_len):
        prev = np.array([h.tokens[-1] if h.tokens else bos for h in active], dtype=np.int64)
        logp, attn, state = model.step(prev, state)
        logp = np.asarray(logp, dtype=np.float64)
        K, V = logp.shape
        scores = np.array([h.logprob for h in active])[:, None] + logp
        flat = scores.ravel()
        cand = _top_candidates(flat, beam)
        parents = []
        next_active = []
        for c in cand:
            k, v = divmod(int(c), V)
            if not np.isfinite(flat[c]):
                continue
            parent = active[k]
            hyp = Hypothesis(parent.tokens + (v,), float(flat[c]),
                             parent.attn + ([attn[k]] if attn is not None else []))
            if v == eos or len(hyp.tokens) >= max_len:
                hyp.finished = True
                finished.append(hyp)
            else:
                next_active.append(hyp)
                parents.append(k)
        if not next_active:
            break
        if finished:
            best = max(h.score for h in finished)
            # logprobs are <= 0, so an active hypothesis can reach at most logprob / max_len
            if best > max(h.logprob for h in next_active) / max_len:
                break
        active = next_active
        state = model.select(state, np.array(parents, dtype=np.int64))
    if beam > 1:
        finished.append(greedy(model, max_len, bos, eos))
    if not finished:
        raise RuntimeError("beam search produced no finished hypothesis")
    best = finished[0]
    for h in finished[1:]:
        if _better(h, best):
            best = h
    return best


def _top_candidates(flat, beam):
    n = flat.size
    if n > beam:
        kth = np.partition(-flat, beam - 1)[beam - 1]
        pool = np.nonzero(-flat <= kth)[0]
    else:
        pool = np.arange(n)
    order = np.lexsort((pool, -flat[pool]))   # flat index = parent rank * V + token id
    return pool[order[:beam]]


def greedy(model, max_len=MAX_LEN, bos=BOS, eos=EOS):
    """Argmax decoding (lowest id on ties)."""
    state = model.start()
    tokens, logprob, attns = (), 0.0, []
    prev = np.array([bos])
    for _ in range(max_len):
        logp, attn, state = model.step(prev, state)
        row = np.asarray(logp, dtype=np.float64)[0]
        v = int(np.argmax(row))
        tokens += (v,)
        logprob += float(row[v])
        if attn is not None:
            attns.append(attn[0])
        if v == eos:
            break
        prev = np.array([v])
    return Hypothesis(tokens, logprob, attns, True)


class QGSearch(SearchModel):
    """Adapts a :class:`QGModel` and a single-example batch to :class:`SearchModel`."""

    def __init__(self, model, batch):
        if batch.size != 1:
            raise ConfigError("QGSearch decodes one example at a time")
        self.model = model
        with ad.no_grad():
            self.enc = model.encode(batch)
            self.init = model.initial_state(self.enc)
        self._cache = {}

    def _enc_rows(self, k):
        if k not in self._cache:
            e = self.enc
            rep = np.zeros(k, dtype=np.int64)

            def tile(t):
                return None if t is None else ad.constant(t.data[rep])

            self._cache[k] = EncodedSource(tile(e.token_states), tile(e.sentence_embedding),
                                           tile(e.fused_states), e.mask[rep], e.finals,
                                           tile(e.keys), tile(e.copy_onehot))
        return self._cache[k]

    def start(self):
        return self.init

    def step(self, prev_ids, state):
        with ad.no_grad():
            out = self.model.step(prev_ids, state, self._enc_rows(len(prev_ids)))
        dist = out.final_dist.data
        with np.errstate(divide="ignore"):
            logp = np.log(dist)
        logp[:, PAD] = -np.inf
        logp[:, BOS] = -np.inf
        return logp, out.attn_weights.data, out.state

    def select(self, state, rows):
        def g(t):
            return ad.constant(t.data[rows])
        return DecoderState([g(h) for h in state.h], [g(c) for c in state.c], g(state.input_feed))


def replace_unk(tokens, attn, src_tokens, oov_list, tgt_vocab, eos=EOS):
    """Map ids to strings; UNK takes the source token with the highest attention.

    ``attn`` holds one weight vector per output step.  Extended ids map to
    their source OOV strings.  A trailing EOS is dropped.
    """
    tokens = list(tokens)
    if tokens and tokens[-1] == eos:
        tokens = tokens[:-1]
    if len(attn) < len(tokens):
        raise ValueError("attention history shorter than the output")
    V = len(tgt_vocab)
    out = []
    for t, tok in enumerate(tokens):
        if tok >= V:
            out.append(oov_list[tok - V])
        elif tok == UNK:
            out.append(src_tokens[int(np.argmax(attn[t]))])
        else:
            out.append(tgt_vocab.token_of[tok])
    return out


def span_bits(example, span):
    """Answer bits for ``span`` (over non-inserted tokens) on the example's full token list.

    Inserted tokens strictly inside the span inherit the bit.
    """
    lo, hi = span
    base = [i for i, b in enumerate(example.inserted) if not b]
    if not 0 <= lo < hi <= len(base):
        raise ValueError(f"answer span {span} out of range for {len(base)} tokens")
    first, last = base[lo], base[hi - 1]
    return [1 if first <= i <= last else 0 for i in range(len(example.inserted))]


def decode_example(model, example, tgt_vocab, beam=5, max_len=MAX_LEN):
    """Decode one indexed example into a question token list."""
    batch = make_batch([example], model.cfg, model.tgt_size, tgt_vocab)
    shown = batch.examples[0]
    search = QGSearch(model, batch)
    hyp = beam_search(search, beam, max_len) if beam > 1 else greedy(search, max_len)
    return replace_unk(hyp.tokens, hyp.attn, shown.src_tokens, shown.oov_list, tgt_vocab), hyp


def generate_all(model, example, spans, tgt_vocab, beam=5, max_len=MAX_LEN):
    """One independent decode per answer span; returns ``[(span, question string)]``."""
    out = []
    for span in spans:
        ex = example.with_answer_bits(span_bits(example, span))
        tokens, _ = decode_example(model, ex, tgt_vocab, beam, max_len)
        out.append((tuple(span), " ".join(tokens)))
    return out


def generation_record(example, question):
    return {"doc_id": example.doc_id, "sent_index": example.sent_index,
            "answer_span": list(example.answer_span), "question": question,
            "qa_id": example.qa_id}


def generate_corpus(model, examples, tgt_vocab, beam=5, max_len=MAX_LEN):
    """Decode every example with its own answer span; returns generation records."""
    return [generation_record(ex, " ".join(decode_example(model, ex, tgt_vocab, beam, max_len)[0]))
            for ex in examples]


def write_generations(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")


def read_generations(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
