"""Feature-rich token embedding, bidirectional LSTM encoders and state fusion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ConfigError, Tensor


@dataclass
class EncoderConfig:
    word_dim: int = 32
    hidden: int = 64
    layers: int = 2
    ner_dim: int = 16
    dropout: float = 0.3
    use_answer: bool = True
    use_ner: bool = True
    use_case: bool = True
    use_coref: bool = True

    def __post_init__(self):
        for name in ("word_dim", "hidden", "layers", "ner_dim"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")

    @property
    def input_dim(self):
        return (self.word_dim + int(self.use_answer) + int(self.use_case)
                + (self.ner_dim if self.use_ner else 0) + int(self.use_coref))


@dataclass
class EncodedSource:
    token_states: Tensor           # B x T x 2h
    sentence_embedding: Tensor     # B x 2h, or None when disabled
    fused_states: Tensor           # B x T x (2h [+ 2h])
    mask: np.ndarray               # B x T bool
    finals: list                   # per layer (h_fw, c_fw, h_bw, c_bw)
    keys: Tensor = None            # fused @ W_a, reused by every decoder step
    copy_onehot: Tensor = None     # B x T x n_ext, only with copy


def feature_embed(word_ids, answer, case, ner, inserted, word_table, ner_table, config):
    """Concatenate word embedding, answer bit, case bit, NER embedding, inserted bit.

    All id/bit arrays are ``B x T``; disabled features are left out.
    """
    parts = [ad.embedding_lookup(word_table, word_ids)]
    if parts[0].shape[-1] != config.word_dim:
        raise ConfigError(f"word table width {parts[0].shape[-1]} != word_dim {config.word_dim}")
    dtype = word_table.dtype

    def bit(a):
        return ad.constant(np.asarray(a, dtype=dtype)[..., None])

    if config.use_answer:
        parts.append(bit(answer))
    if config.use_case:
        parts.append(bit(case))
    if config.use_ner:
        if ner_table.shape[1] != config.ner_dim:
            raise ConfigError(f"NER table width {ner_table.shape[1]} != ner_dim {config.ner_dim}")
        parts.append(ad.embedding_lookup(ner_table, ner))
    if config.use_coref:
        parts.append(bit(inserted))
    return ad.concat(parts, axis=-1)


def lstm_cell(x_proj, h, c, w_hh):
    """One LSTM step.  ``x_proj`` already holds ``x @ W_ih + b``; gate order i, f, o, g."""
    hidden = h.shape[-1]
    z = x_proj + ad.matmul(h, w_hh)
    gates = ad.sigmoid(z[:, :3 * hidden])
    g = ad.tanh(z[:, 3 * hidden:])
    i = gates[:, :hidden]
    f = gates[:, hidden:2 * hidden]
    o = gates[:, 2 * hidden:]
    c_new = f * c + i * g
    h_new = o * ad.tanh(c_new)
    return h_new, c_new


def _run_direction(x, mask, w_ih, w_hh, b, reverse):
    B, T, d = x.shape
    hidden = w_hh.shape[0]
    proj = ad.matmul(x.reshape(B * T, d), w_ih).reshape(B, T, 4 * hidden)
    proj = proj + ad.expand(b, proj.shape)
    zeros = ad.constant(np.zeros((B, hidden), dtype=x.dtype))
    h, c = zeros, zeros
    outs = [None] * T
    for t in (range(T - 1, -1, -1) if reverse else range(T)):
        h_new, c_new = lstm_cell(proj[:, t, :], h, c, w_hh)
        m = mask[:, t]
        if m.all():
            h, c = h_new, c_new
        else:
            keep = np.broadcast_to(m[:, None], (B, hidden)).astype(x.dtype)
            hold = ad.constant(1.0 - keep)
            keep = ad.constant(keep)
            h = h_new * keep + h * hold
            c = c_new * keep + c * hold
        outs[t] = h
    return ad.stack(outs, axis=1), h, c


def bilstm_encode(inputs, mask, layer_params, dropout=0.0, training=False, rng=None):
    """Multi-layer bidirectional LSTM over ``inputs`` (``B x T x d``).

    ``layer_params`` is a list of dicts with keys ``fw_ih fw_hh fw_b bw_ih
    bw_hh bw_b``.  Returns the top layer's ``B x T x 2h`` states and the
    final (h_fw, c_fw, h_bw, c_bw) of every layer.  Padding must sit at the
    end of each row; padded steps carry the previous state unchanged.
    """
    x = inputs
    finals = []
    for k, p in enumerate(layer_params):
        if k > 0:
            x = ad.dropout(x, dropout, training, rng)
        fw, h_fw, c_fw = _run_direction(x, mask, p["fw_ih"], p["fw_hh"], p["fw_b"], False)
        bw, h_bw, c_bw = _run_direction(x, mask, p["bw_ih"], p["bw_hh"], p["bw_b"], True)
        x = ad.concat([fw, bw], axis=-1)
        finals.append((h_fw, c_fw, h_bw, c_bw))
    return x, finals


def encode_sentence(inputs, mask, layer_params, dropout=0.0, training=False, rng=None):
    """Answer-focused sentence embedding: top-layer final forward and backward hidden states."""
    _, finals = bilstm_encode(inputs, mask, layer_params, dropout, training, rng)
    h_fw, _, h_bw, _ = finals[-1]
    return ad.concat([h_fw, h_bw], axis=-1)


def fuse(token_states, sentence_embedding):
    """Append the sentence embedding to every time step's token state."""
    if sentence_embedding is None:
        return token_states
    B, T, _ = token_states.shape
    S = sentence_embedding.shape[-1]
    tiled = ad.expand(sentence_embedding.reshape(B, 1, S), (B, T, S))
    return ad.concat([token_states, tiled], axis=-1)


def read_word_vectors(path, vocab, dim, rng, dtype=np.float64):
    """Embedding table for ``vocab`` from a ``token v1 ... vd`` text file.

    Tokens absent from the file keep glorot rows.  Returns ``(table,
    n_missing)``; specials count as missing.  A line with the wrong number of
    values is a config error.
    """
    table = ad.glorot_init((len(vocab), dim), rng, dtype)
    found = np.zeros(len(vocab), dtype=bool)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            word, vals = parts[0], parts[1:]
            if len(vals) != dim:
                raise ConfigError(f"{path}:{lineno}: expected {dim} values, got {len(vals)}")
            idx = vocab.id_of.get(word)
            if idx is not None and not found[idx]:
                table[idx] = np.asarray(vals, dtype=dtype)
                found[idx] = True
    return table, int((~found).sum())
