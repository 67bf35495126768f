"""Parameter layout, batching and the teacher-forced forward pass."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import autodiff as ad
from .autodiff import ConfigError
from .corpus.annotate import NER_LABELS
from .corpus.vocab import BOS, PAD, UNK
from .decoder import DecoderState, copy_matrix, decode_step, project_keys, step_nll
from .encoder import EncodedSource, EncoderConfig, bilstm_encode, encode_sentence, feature_embed, fuse

log = logging.getLogger(__name__)

SENTENCE_MODES = ("off", "scratch", "pretrained")


@dataclass
class ModelConfig(EncoderConfig):
    dec_hidden: int = 0          # 0 means "same as hidden"
    copy: bool = True
    sentence_encoder: str = "scratch"
    precision: str = "float64"

    def __post_init__(self):
        super().__post_init__()
        if self.sentence_encoder not in SENTENCE_MODES:
            raise ConfigError(f"sentence_encoder must be one of {SENTENCE_MODES}")
        if self.precision not in ("float64", "float32"):
            raise ConfigError("precision must be float64 or float32")
        if self.dec_hidden < 0:
            raise ConfigError("dec_hidden must be non-negative")

    @property
    def decoder_hidden(self):
        return self.dec_hidden or self.hidden

    @property
    def dtype(self):
        return np.float64 if self.precision == "float64" else np.float32

    @property
    def uses_sentence(self):
        return self.sentence_encoder != "off"

    @property
    def fused_dim(self):
        return 2 * self.hidden * (2 if self.uses_sentence else 1)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def digest(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def _lstm_params(prefix, d_in, hidden, rng, dtype):
    out = {}
    for direction in ("fw", "bw"):
        out[f"{prefix}_{direction}_ih"] = ad.glorot_init((d_in, 4 * hidden), rng, dtype)
        out[f"{prefix}_{direction}_hh"] = ad.glorot_init((hidden, 4 * hidden), rng, dtype)
        out[f"{prefix}_{direction}_b"] = np.zeros(4 * hidden, dtype=dtype)
    return out


def init_params(cfg, src_size, tgt_size, rng):
    """Glorot-initialised parameter arrays keyed by name (biases start at zero)."""
    dt = cfg.dtype
    H, Hd, D, wd = cfg.hidden, cfg.decoder_hidden, cfg.fused_dim, cfg.word_dim
    p = {
        "src_emb": ad.glorot_init((src_size, wd), rng, dt),
        "tgt_emb": ad.glorot_init((tgt_size, wd), rng, dt),
        "ner_emb": ad.glorot_init((len(NER_LABELS), cfg.ner_dim), rng, dt),
    }
    for l in range(cfg.layers):
        p.update(_lstm_params(f"enc{l}", cfg.input_dim if l == 0 else 2 * H, H, rng, dt))
    for l in range(cfg.layers):
        p.update(_lstm_params(f"sent{l}", cfg.input_dim if l == 0 else 2 * H, H, rng, dt))
    for l in range(cfg.layers):
        for kind in ("h", "c"):
            p[f"bridge{l}_{kind}_w"] = ad.glorot_init((2 * H, Hd), rng, dt)
            p[f"bridge{l}_{kind}_b"] = np.zeros(Hd, dtype=dt)
        d_in = wd + Hd if l == 0 else Hd
        p[f"dec{l}_ih"] = ad.glorot_init((d_in, 4 * Hd), rng, dt)
        p[f"dec{l}_hh"] = ad.glorot_init((Hd, 4 * Hd), rng, dt)
        p[f"dec{l}_b"] = np.zeros(4 * Hd, dtype=dt)
    p["attn_w"] = ad.glorot_init((D, Hd), rng, dt)
    p["out_wc"] = ad.glorot_init((D + Hd, Hd), rng, dt)
    p["out_wo"] = ad.glorot_init((Hd, tgt_size), rng, dt)
    p["out_bo"] = np.zeros(tgt_size, dtype=dt)
    p["gen_wc"] = ad.glorot_init((D, 1), rng, dt)
    p["gen_wh"] = ad.glorot_init((Hd, 1), rng, dt)
    p["gen_wx"] = ad.glorot_init((wd + Hd, 1), rng, dt)
    p["gen_b"] = np.zeros(1, dtype=dt)
    return p


@dataclass
class Batch:
    size: int
    src_ids: np.ndarray
    src_ext_ids: np.ndarray
    answer: np.ndarray
    case: np.ndarray
    ner: np.ndarray
    inserted: np.ndarray
    mask: np.ndarray
    n_ext: int
    tgt_in: np.ndarray = None       # B x S decoder inputs (UNK for OOV)
    tgt_out: np.ndarray = None      # B x S gold ids (extended when copy)
    tgt_mask: np.ndarray = None
    q_ids: np.ndarray = None
    q_case: np.ndarray = None
    q_ner: np.ndarray = None
    q_mask: np.ndarray = None
    examples: list = field(default_factory=list)


def _pad(rows, fill=0):
    width = max(1, max(len(r) for r in rows))
    out = np.full((len(rows), width), fill, dtype=np.int64)
    for i, r in enumerate(rows):
        out[i, :len(r)] = r
    return out


def make_batch(examples, cfg, tgt_size, tgt_vocab=None):
    """Pad a list of :class:`IndexedExample` into arrays.

    Without the coref feature, inserted tokens are dropped (needs
    ``tgt_vocab`` to recompute copy ids).
    """
    if not cfg.use_coref:
        examples = [ex.without_inserted(tgt_vocab) if any(ex.inserted) else ex for ex in examples]
    src = _pad([ex.src_ids for ex in examples])
    mask = _pad([[1] * len(ex.src_ids) for ex in examples]).astype(bool)
    n_oov = max(len(ex.oov_list) for ex in examples)
    b = Batch(
        size=len(examples),
        src_ids=src,
        src_ext_ids=_pad([ex.src_ext_ids for ex in examples]),
        answer=_pad([ex.answer for ex in examples]),
        case=_pad([ex.case for ex in examples]),
        ner=_pad([ex.ner for ex in examples]),
        inserted=_pad([ex.inserted for ex in examples]),
        mask=mask,
        n_ext=tgt_size + n_oov,
        examples=examples,
    )
    if examples[0].tgt_ids:
        tgt = _pad([ex.tgt_ids for ex in examples], PAD)
        gold = _pad([ex.tgt_ext_ids if cfg.copy else ex.tgt_ids for ex in examples], PAD)
        b.tgt_in = tgt[:, :-1]
        b.tgt_out = gold[:, 1:]
        b.tgt_mask = _pad([[1] * (len(ex.tgt_ids) - 1) for ex in examples]).astype(bool)
    if examples[0].q_ids:
        b.q_ids = _pad([ex.q_ids for ex in examples])
        b.q_case = _pad([ex.q_case for ex in examples])
        b.q_ner = _pad([ex.q_ner for ex in examples])
        b.q_mask = _pad([[1] * len(ex.q_ids) for ex in examples]).astype(bool)
    return b


class QGModel:
    """Question-generation encoder-decoder over named parameter tensors."""

    def __init__(self, cfg, src_size, tgt_size, seed=0, arrays=None, frozen=(),
                 word_vectors=None):
        """``word_vectors`` maps ``src_emb``/``tgt_emb`` to pretrained tables, which stay frozen."""
        self.cfg = cfg
        self.src_size = src_size
        self.tgt_size = tgt_size
        rng = np.random.default_rng(seed)
        init = init_params(cfg, src_size, tgt_size, rng)
        if arrays is not None:
            missing = set(init) - set(arrays)
            if missing:
                raise ConfigError(f"checkpoint is missing parameters {sorted(missing)}")
            init = {k: np.array(arrays[k], dtype=cfg.dtype) for k in init}
        frozen = set(frozen)
        for name, table in (word_vectors or {}).items():
            if name not in ("src_emb", "tgt_emb"):
                raise ConfigError(f"word vectors only apply to src_emb/tgt_emb, not {name!r}")
            if table.shape != init[name].shape:
                raise ConfigError(f"{name}: word vectors {table.shape} != {init[name].shape}")
            init[name] = np.array(table, dtype=cfg.dtype)
            frozen.add(name)
        self.frozen = frozen
        self.params = {k: ad.parameter(v, name=k, trainable=k not in self.frozen)
                       for k, v in init.items()}
        self.sentence_source = "sentence"   # or "question" for the first pre-training step

    # -- parameter bookkeeping -----------------------------------------
    def parameters(self, prefix=None):
        """Trainable parameters, optionally restricted to names starting with ``prefix``."""
        return [p for k, p in self.params.items()
                if p.requires_grad and (prefix is None or k.startswith(prefix))]

    def state_dict(self):
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_arrays(self, arrays, prefix=None):
        for k, v in arrays.items():
            if prefix is not None and not k.startswith(prefix):
                continue
            if k not in self.params:
                raise ConfigError(f"unknown parameter {k!r}")
            if self.params[k].shape != v.shape:
                raise ConfigError(f"{k}: shape {v.shape} != {self.params[k].shape}")
            self.params[k].data[...] = v

    def set_frozen(self, names):
        self.frozen = set(names)
        for k, p in self.params.items():
            p.requires_grad = k not in self.frozen

    def _layers(self, prefix):
        P = self.params
        return [{k: P[f"{prefix}{l}_{k}"] for k in ("fw_ih", "fw_hh", "fw_b", "bw_ih", "bw_hh", "bw_b")}
                for l in range(self.cfg.layers)]

    # -- forward pieces ------------------------------------------------
    def embed_source(self, batch):
        P = self.params
        return feature_embed(batch.src_ids, batch.answer, batch.case, batch.ner, batch.inserted,
                             P["src_emb"], P["ner_emb"], self.cfg)

    def embed_question(self, batch):
        P = self.params
        zeros = np.zeros_like(batch.q_ids)
        return feature_embed(batch.q_ids, zeros, batch.q_case, batch.q_ner, zeros,
                             P["tgt_emb"], P["ner_emb"], self.cfg)

    def encode(self, batch, training=False, rng=None):
        cfg = self.cfg
        inputs = self.embed_source(batch)
        states, finals = bilstm_encode(inputs, batch.mask, self._layers("enc"),
                                       cfg.dropout, training, rng)
        sent = None
        if cfg.uses_sentence:
            sent = self.sentence_embedding(batch, training, rng, inputs=inputs)
        fused = fuse(states, sent)
        onehot = (copy_matrix(batch.src_ext_ids, batch.mask, batch.n_ext, cfg.dtype)
                  if cfg.copy else None)
        return EncodedSource(states, sent, fused, batch.mask, finals,
                             project_keys(fused, self.params["attn_w"]), onehot)

    def sentence_embedding(self, batch, training=False, rng=None, inputs=None):
        cfg = self.cfg
        if self.sentence_source == "question":
            inputs, mask = self.embed_question(batch), batch.q_mask
        else:
            inputs = inputs if inputs is not None else self.embed_source(batch)
            mask = batch.mask
        return encode_sentence(inputs, mask, self._layers("sent"), cfg.dropout, training, rng)

    def initial_state(self, enc):
        P = self.params
        hs, cs = [], []
        for l, (h_fw, c_fw, h_bw, c_bw) in enumerate(enc.finals):
            for src, out, kind in (((h_fw, h_bw), hs, "h"), ((c_fw, c_bw), cs, "c")):
                z = ad.matmul(ad.concat(list(src), axis=-1), P[f"bridge{l}_{kind}_w"])
                out.append(z + ad.expand(P[f"bridge{l}_{kind}_b"], z.shape))
        B = hs[0].shape[0]
        feed = ad.constant(np.zeros((B, self.cfg.decoder_hidden), dtype=self.cfg.dtype))
        return DecoderState(hs, cs, feed)

    def embed_target(self, ids):
        ids = np.where(np.asarray(ids) >= self.tgt_size, UNK, ids)
        return ad.embedding_lookup(self.params["tgt_emb"], ids)

    def step(self, prev_ids, state, enc, training=False, rng=None):
        return decode_step(self.embed_target(prev_ids), state, enc, self.params,
                           copy=self.cfg.copy, dropout=self.cfg.dropout,
                           training=training, rng=rng)

    # -- teacher-forced loss -------------------------------------------
    def forward(self, batch, training=False, rng=None):
        """Mean token NLL tensor plus float statistics (sum NLL, tokens, correct)."""
        enc = self.encode(batch, training, rng)
        state = self.initial_state(enc)
        mask = batch.tgt_mask
        dt = self.cfg.dtype
        terms, correct = [], 0
        for t in range(batch.tgt_in.shape[1]):
            out = self.step(batch.tgt_in[:, t], state, enc, training, rng)
            state = out.state
            m = mask[:, t]
            if not m.any():
                continue
            gold = batch.tgt_out[:, t]
            nll = step_nll(out.final_dist, gold)
            terms.append(ad.tsum(nll * ad.constant(m.astype(dt))))
            pred = np.argmax(out.final_dist.data, axis=-1)
            correct += int(((pred == gold) & m).sum())
        count = int(mask.sum())
        loss = ad.stack(terms).sum() * (1.0 / count)
        total = float(loss.data) * count
        return loss, {"nll": total, "tokens": count, "correct": correct}


def parameter_count(model):
    return sum(p.size for p in model.params.values())


def bos_ids(n):
    return np.full(n, BOS, dtype=np.int64)
