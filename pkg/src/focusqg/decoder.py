"""Attentional LSTM decoder with input feeding and a pointer-generator output."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, Tensor
from .encoder import lstm_cell

NLL_EPS = 1e-12


@dataclass
class DecoderState:
    h: list            # per layer, B x H
    c: list
    input_feed: Tensor  # B x H, attentional hidden of the previous step


@dataclass
class StepOutput:
    attn_weights: Tensor   # B x T
    p_gen: Tensor          # B x 1, or None without copy
    gen_dist: Tensor       # B x V
    final_dist: Tensor     # B x (V + n_oov)
    state: DecoderState


def attention(query, fused, mask, w_a, keys=None):
    """Bilinear global attention: ``score_t = query . (W_a^T fused_t)``.

    ``keys`` may carry a precomputed ``fused @ w_a`` (it does not depend on
    the decoding step).  Returns ``(context B x D, weights B x T)``.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any(axis=1).all():
        raise ContractError("attention over an all-masked source row")
    B, T, D = fused.shape
    if keys is None:
        keys = project_keys(fused, w_a)
    H = keys.shape[-1]
    scores = ad.matmul(keys, query.reshape(B, H, 1)).reshape(B, T)
    weights = ad.softmax(scores, axis=-1, mask=mask)
    context = ad.matmul(weights.reshape(B, 1, T), fused).reshape(B, D)
    return context, weights


def project_keys(fused, w_a):
    B, T, D = fused.shape
    return ad.matmul(fused.reshape(B * T, D), w_a).reshape(B, T, w_a.shape[1])


def copy_matrix(src_ext_ids, mask, n_ext, dtype=np.float64):
    """Constant ``B x T x n_ext`` one-hot map from source positions to extended ids."""
    src = np.asarray(src_ext_ids)
    B, T = src.shape
    onehot = np.zeros((B, T, n_ext), dtype=dtype)
    b, t = np.nonzero(np.asarray(mask, dtype=bool))
    onehot[b, t, src[b, t]] = 1.0
    return ad.constant(onehot)


def mix(gen_dist, attn_weights, p_gen, copy_onehot):
    """``p_gen * gen (zero-padded to the extended vocab) + (1 - p_gen) * copied attention``."""
    B, V = gen_dist.shape
    n_ext = copy_onehot.shape[-1]
    T = attn_weights.shape[1]
    if n_ext > V:
        pad = ad.constant(np.zeros((B, n_ext - V), dtype=gen_dist.dtype))
        gen_ext = ad.concat([gen_dist, pad], axis=-1)
    else:
        gen_ext = gen_dist
    copied = ad.matmul(attn_weights.reshape(B, 1, T), copy_onehot).reshape(B, n_ext)
    gate = ad.expand(p_gen, (B, n_ext))
    return gate * gen_ext + (1.0 - gate) * copied


def decode_step(prev_emb, state, enc, params, copy=True, dropout=0.0, training=False, rng=None):
    """One decoder step.

    ``enc`` needs ``fused_states``, ``keys``, ``mask`` and (with copy)
    ``copy_onehot``.  ``params`` maps names to tensors: ``dec{l}_ih``,
    ``dec{l}_hh``, ``dec{l}_b`` per layer, ``attn_w``, ``out_wc``,
    ``out_wo``, ``out_bo`` and the generation gate ``gen_wc gen_wh gen_wx
    gen_b``.
    """
    x = ad.concat([prev_emb, state.input_feed], axis=-1)
    lstm_in = x
    hs, cs = [], []
    layers = len(state.h)
    for l in range(layers):
        if l > 0:
            x = ad.dropout(x, dropout, training, rng)
        w_ih, w_hh, b = params[f"dec{l}_ih"], params[f"dec{l}_hh"], params[f"dec{l}_b"]
        proj = ad.matmul(x, w_ih)
        proj = proj + ad.expand(b, proj.shape)
        h, c = lstm_cell(proj, state.h[l], state.c[l], w_hh)
        hs.append(h)
        cs.append(c)
        x = h
    top = hs[-1]
    context, weights = attention(top, enc.fused_states, enc.mask, params["attn_w"], enc.keys)
    attn_h = ad.tanh(ad.matmul(ad.concat([context, top], axis=-1), params["out_wc"]))
    logits = ad.matmul(attn_h, params["out_wo"])
    logits = logits + ad.expand(params["out_bo"], logits.shape)
    gen = ad.softmax(logits, axis=-1)
    if copy:
        gate_logit = (ad.matmul(context, params["gen_wc"]) + ad.matmul(top, params["gen_wh"])
                      + ad.matmul(lstm_in, params["gen_wx"]))
        gate_logit = gate_logit + ad.expand(params["gen_b"], gate_logit.shape)
        p_gen = ad.sigmoid(gate_logit)
        final = mix(gen, weights, p_gen, enc.copy_onehot)
    else:
        p_gen, final = None, gen
    return StepOutput(weights, p_gen, gen, final, DecoderState(hs, cs, attn_h))


def step_nll(final_dist, targets):
    """Per-row ``-log(final_dist[target] + eps)``."""
    return -ad.log(ad.pick(final_dist, targets) + NLL_EPS)


def nll_loss(final_dists, targets, pad_mask):
    """Mean negative log-likelihood over non-pad steps.

    ``final_dists`` is a list over steps of ``B x V'`` tensors; ``targets``
    and ``pad_mask`` are ``B x steps`` arrays.
    """
    targets = np.asarray(targets)
    pad_mask = np.asarray(pad_mask, dtype=bool)
    count = int(pad_mask.sum())
    if count == 0:
        raise ContractError("nll_loss over zero target tokens")
    per_step = [step_nll(d, targets[:, t]) for t, d in enumerate(final_dists)]
    nll = ad.stack(per_step, axis=1)
    masked = nll * ad.constant(pad_mask.astype(nll.dtype))
    return ad.tsum(masked) * (1.0 / count)
