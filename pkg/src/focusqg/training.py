"""SGD training, perplexity, sentence-encoder pre-training and the ablation ladder."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import autodiff as ad
from .autodiff import ConfigError, NonFiniteError
from .model import ModelConfig, QGModel, make_batch

log = logging.getLogger(__name__)

COS_EPS = 1e-8


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 64
    lr: float = 1.0
    lr_decay: float = 0.5
    patience: int = 1
    clip_norm: float = 5.0
    max_epochs: int = 20
    seed: int = 0
    early_stop_ppl: float = 0.0      # stop once dev perplexity drops below this (0 disables)
    cheat_patience: int = 2          # pre-training step 1 plateau length
    cheat_max_epochs: int = 30
    pretrain_epochs: int = 20        # pre-training step 2
    loss_norm: str = "sentence"      # divide summed token NLL by "sentence" count or "token" count

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError("lr_decay must lie in (0, 1]")
        if self.lr < 0:
            raise ConfigError("lr must be non-negative")
        if self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive")
        if self.loss_norm not in ("sentence", "token"):
            raise ConfigError("loss_norm must be 'sentence' or 'token'")
        if self.patience < 1 or self.max_epochs < 0:
            raise ConfigError("patience must be >= 1 and max_epochs >= 0")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


# Small-corpus preset: at lr 1.0 the clipped per-sentence steps bounce the loss
# around on a handful of examples; 0.2 descends steadily.
DESK_TRAIN = TrainConfig(batch_size=8, lr=0.2, patience=10, max_epochs=200)


@dataclass
class TrainResult:
    best_state: dict
    best_ppl: float
    best_epoch: int
    log: list
    rng_state: dict


def config_hash(model_cfg, train_cfg):
    blob = json.dumps({"model": model_cfg.to_dict(), "train": train_cfg.to_dict()}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def bucket_batches(n_items, lengths, batch_size, rng):
    """Length-bucketed batches: shuffle, stable-sort by length, chunk, shuffle chunk order."""
    perm = rng.permutation(n_items)
    order = perm[np.argsort(np.asarray(lengths)[perm], kind="stable")]
    chunks = [order[i:i + batch_size] for i in range(0, n_items, batch_size)]
    return [chunks[i] for i in rng.permutation(len(chunks))]


def _batches_in_order(data, batch_size):
    order = np.argsort([len(ex) for ex in data], kind="stable")
    return [order[i:i + batch_size] for i in range(0, len(data), batch_size)]


def evaluate_teacher_forced(model, data, tgt_vocab=None, batch_size=64):
    """Teacher-forced perplexity and token accuracy in evaluation mode."""
    nll = tokens = correct = 0
    with ad.no_grad():
        for idx in _batches_in_order(data, batch_size):
            batch = make_batch([data[i] for i in idx], model.cfg, model.tgt_size, tgt_vocab)
            _, stats = model.forward(batch, training=False)
            nll += stats["nll"]
            tokens += stats["tokens"]
            correct += stats["correct"]
    return {"ppl": math.exp(nll / tokens), "accuracy": correct / tokens,
            "nll": nll, "tokens": tokens}


def perplexity(model, data, tgt_vocab=None, batch_size=64):
    """``exp(total NLL / target tokens)``, teacher-forced, no dropout."""
    return evaluate_teacher_forced(model, data, tgt_vocab, batch_size)["ppl"]


def _snapshot(params):
    return [p.data.copy() for p in params]


def _restore(params, snap):
    for p, s in zip(params, snap):
        p.data[...] = s


def train(model, train_data, dev_data, cfg, tgt_vocab=None, log_fn=None, params=None,
          loss_fn=None, dev_fn=None, stop_after=0, stop_fn=None):
    """Mini-batch SGD with gradient clipping and dev-driven lr decay.

    ``params`` restricts the updated parameters.  ``loss_fn(model, batch,
    rng, rows)`` and ``dev_fn(model)`` override the QG objective and dev
    perplexity.  ``stop_after`` > 0 ends training after that many
    consecutive evaluations without improvement; ``stop_fn(entry)`` returning
    true ends it after that epoch.  Returns the parameter state with the
    lowest dev score.
    """
    rng = np.random.default_rng(cfg.seed)
    params = params if params is not None else model.parameters()
    loss_fn = loss_fn or (_qg_loss_per_sentence if cfg.loss_norm == "sentence" else _qg_loss)
    dev_fn = dev_fn or (lambda m: perplexity(m, dev_data, tgt_vocab, cfg.batch_size))
    lr = cfg.lr
    best, best_state, best_epoch, bad, stalled = math.inf, model.state_dict(), 0, 0, 0
    history = []
    lengths = [len(ex) for ex in train_data]
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        total, count = 0.0, 0
        for b_id, idx in enumerate(bucket_batches(len(train_data), lengths, cfg.batch_size, rng)):
            batch = make_batch([train_data[i] for i in idx], model.cfg, model.tgt_size, tgt_vocab)
            snap = _snapshot(params)
            try:
                loss = _sgd_update(model, batch, idx, params, lr, cfg.clip_norm, rng, loss_fn)
            except NonFiniteError:
                lr *= 0.5
                log.warning("non-finite loss at epoch %d batch %d; retrying at lr %g",
                            epoch, b_id, lr)
                _restore(params, snap)
                try:
                    loss = _sgd_update(model, batch, idx, params, lr, cfg.clip_norm, rng, loss_fn)
                except NonFiniteError:
                    _restore(params, snap)
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch} batch {b_id}") from None
            total += loss * len(idx)
            count += len(idx)
        dev = dev_fn(model)
        entry = {"epoch": epoch, "train_loss": total / max(count, 1), "dev_ppl": dev,
                 "lr": lr, "seconds": time.perf_counter() - t0}
        history.append(entry)
        if log_fn is not None:
            log_fn(entry)
        if dev < best:
            best, best_state, best_epoch, bad, stalled = dev, model.state_dict(), epoch, 0, 0
        else:
            bad += 1
            stalled += 1
            if bad >= cfg.patience:
                lr *= cfg.lr_decay
                bad = 0
        if cfg.early_stop_ppl and dev < cfg.early_stop_ppl:
            break
        if stop_after and stalled >= stop_after:
            break
        if stop_fn is not None and stop_fn(entry):
            break
    if not history:
        best = dev_fn(model)
    return TrainResult(best_state, best, best_epoch, history, rng.bit_generator.state)


def _qg_loss(model, batch, rng, rows):
    loss, _ = model.forward(batch, training=True, rng=rng)
    return loss


def _qg_loss_per_sentence(model, batch, rng, rows):
    loss, stats = model.forward(batch, training=True, rng=rng)
    return loss * (stats["tokens"] / batch.size)


def _sgd_update(model, batch, rows, params, lr, clip_norm, rng, loss_fn):
    ad.zero_grads(params)
    loss = loss_fn(model, batch, rng, rows)
    loss.backward()
    grads = [p.grad for p in params]
    if not all(np.isfinite(g).all() for g in grads):
        raise NonFiniteError("non-finite gradient")
    ad.clip_gradients(grads, clip_norm)
    ad.sgd_step(params, grads, lr)
    return float(loss.data)


# ---------------------------------------------------------------------------
# sentence-encoder pre-training

def cosine_embedding_loss(s, q):
    """Mean over rows of ``1 - cos(s, q)``; ``q`` is a fixed target array or tensor.

    Norms are ``sqrt(|x|^2 + eps^2)``: a zero vector gets cosine 0 and any
    other vector is off by at most ``eps^2 / |x|^2`` relative.
    """
    if not isinstance(q, ad.Tensor):
        q = ad.constant(np.asarray(q, dtype=s.dtype))
    dot = ad.tsum(s * q, axis=-1)
    ns = ad.sqrt(ad.tsum(s * s, axis=-1) + COS_EPS ** 2)
    nq = ad.sqrt(ad.tsum(q * q, axis=-1) + COS_EPS ** 2)
    cos = dot / (ns * nq)
    return ad.mean(1.0 - cos)


@dataclass
class PretrainResult:
    sentence_state: dict
    cheat_log: list
    align_log: list
    batch_losses: list


def pretrain_sentence_encoder(train_data, dev_data, model_cfg, cfg, src_size, tgt_size,
                              tgt_vocab=None, log_fn=None):
    """Two-step pre-training of the answer-focused sentence encoder.

    Step 1 trains a full model whose sentence encoder reads the gold
    question, until dev perplexity stops improving for ``cheat_patience``
    epochs.  Step 2 trains a fresh sentence encoder on the declarative
    sentence to minimise ``1 - cos(s, q)`` against the frozen step-1
    question embeddings.  Returns the step-2 ``sent*`` parameters.
    """
    cheat_cfg = replace(model_cfg, sentence_encoder="scratch")
    cheat = QGModel(cheat_cfg, src_size, tgt_size, seed=cfg.seed + 1)
    cheat.sentence_source = "question"
    cheat_log = []

    def on_cheat(entry):
        cheat_log.append(entry)
        if log_fn:
            log_fn({"step": 1, **entry})

    # step 1 runs at a constant rate until the plateau
    step1 = replace(cfg, max_epochs=cfg.cheat_max_epochs, patience=cfg.cheat_max_epochs + 1,
                    early_stop_ppl=0.0)
    res = train(cheat, train_data, dev_data, step1, tgt_vocab, on_cheat,
                stop_after=cfg.cheat_patience)
    cheat.load_arrays(res.best_state)

    targets_train = _question_embeddings(cheat, train_data, tgt_vocab, cfg.batch_size)
    targets_dev = _question_embeddings(cheat, dev_data, tgt_vocab, cfg.batch_size)

    student = QGModel(cheat_cfg, src_size, tgt_size, seed=cfg.seed)
    student.set_frozen([k for k in student.params if not k.startswith("sent")])
    batch_losses = []

    def align_loss(model, batch, rng, rows):
        s = model.sentence_embedding(batch, training=True, rng=rng)
        loss = cosine_embedding_loss(s, targets_train[rows])
        batch_losses.append(float(loss.data))
        return loss

    def align_dev(model):
        return _cosine_dev(model, dev_data, targets_dev, tgt_vocab, cfg.batch_size)

    align_log = []

    def on_align(entry):
        entry = dict(entry)
        entry["dev_cos_loss"] = entry.pop("dev_ppl")
        align_log.append(entry)
        if log_fn:
            log_fn({"step": 2, **entry})

    step2 = replace(cfg, max_epochs=cfg.pretrain_epochs, early_stop_ppl=0.0)
    res2 = train(student, train_data, dev_data, step2, tgt_vocab, on_align,
                 params=student.parameters("sent"), loss_fn=align_loss, dev_fn=align_dev)
    state = {k: v for k, v in res2.best_state.items() if k.startswith("sent")}
    return PretrainResult(state, cheat_log, align_log, batch_losses)


def _question_embeddings(model, data, tgt_vocab, batch_size):
    out = np.zeros((len(data), 2 * model.cfg.hidden), dtype=model.cfg.dtype)
    with ad.no_grad():
        for idx in _batches_in_order(data, batch_size):
            batch = make_batch([data[i] for i in idx], model.cfg, model.tgt_size, tgt_vocab)
            out[idx] = model.sentence_embedding(batch).data
    return out


def _cosine_dev(model, data, targets, tgt_vocab, batch_size):
    total = 0.0
    with ad.no_grad():
        for idx in _batches_in_order(data, batch_size):
            batch = make_batch([data[i] for i in idx], model.cfg, model.tgt_size, tgt_vocab)
            s = model.sentence_embedding(batch)
            total += float(cosine_embedding_loss(s, targets[idx]).data) * len(idx)
    return total / len(data)


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(path, model, vhash, epoch=0, dev_ppl=None, train_cfg=None, rng_state=None,
                    arrays=None):
    """Parameters plus a JSON header: model config, epoch, dev perplexity, rng and vocab hash."""
    meta = {"kind": "qg-model", "model": model.cfg.to_dict(), "src_size": model.src_size,
            "tgt_size": model.tgt_size, "epoch": epoch, "dev_ppl": dev_ppl,
            "train": train_cfg.to_dict() if train_cfg else None,
            "rng_state": rng_state, "vocab_hash": vhash,
            "config_hash": model.cfg.digest()}
    ad.save_tensors(path, arrays if arrays is not None else model.state_dict(), meta)
    return meta


def load_checkpoint(path, expected_vocab_hash=None):
    from .corpus.vocab import IntegrityError
    arrays, meta = ad.load_tensors(path)
    if meta.get("kind") != "qg-model":
        raise IntegrityError(f"{path}: not a model checkpoint")
    if expected_vocab_hash is not None and meta.get("vocab_hash") != expected_vocab_hash:
        raise IntegrityError(f"{path}: checkpoint vocab hash {meta.get('vocab_hash')!r} "
                             f"!= {expected_vocab_hash!r}")
    cfg = ModelConfig.from_dict(meta["model"])
    if cfg.digest() != meta.get("config_hash"):
        raise IntegrityError(f"{path}: config hash does not match the stored config")
    return QGModel(cfg, meta["src_size"], meta["tgt_size"], arrays=arrays), meta


# ---------------------------------------------------------------------------
# ablation ladder

LADDER = ("baseline", "+Answer", "+NER", "+Case", "+CoRef", "+Copy",
          "FocusCR-npt", "FocusCR", "Focus")


def ladder_config(name, base):
    """Model config for one rung; every rung includes the features of the rungs before it."""
    if name not in LADDER:
        raise ConfigError(f"unknown ablation rung {name!r}")
    rank = LADDER.index(name)
    return replace(base,
                   use_answer=rank >= 1, use_ner=rank >= 2, use_case=rank >= 3,
                   use_coref=rank >= 4 and name != "Focus", copy=rank >= 5,
                   sentence_encoder=("off" if rank < 6 else
                                     "scratch" if name == "FocusCR-npt" else "pretrained"))


def data_hash(*splits):
    h = hashlib.sha256()
    for split in splits:
        for ex in split:
            h.update(json.dumps(ex.to_json(""), sort_keys=True, ensure_ascii=False).encode())
        h.update(b"\x00")
    return h.hexdigest()[:16]


def fit(model_cfg, train_cfg, train_data, dev_data, src_size, tgt_size, tgt_vocab=None,
        log_fn=None):
    """Build, optionally pre-train, and train one model; returns ``(model, TrainResult)``."""
    model = QGModel(model_cfg, src_size, tgt_size, seed=train_cfg.seed)
    if model_cfg.sentence_encoder == "pretrained":
        pre = pretrain_sentence_encoder(train_data, dev_data, model_cfg, train_cfg,
                                        src_size, tgt_size, tgt_vocab, log_fn)
        model.load_arrays(pre.sentence_state, prefix="sent")
    res = train(model, train_data, dev_data, train_cfg, tgt_vocab, log_fn)
    model.load_arrays(res.best_state)
    return model, res


def run_ablation(train_data, dev_data, eval_data, base_cfg, train_cfg, src_size, tgt_size,
                 tgt_vocab, ladder=LADDER, setup="multi_ref", beam=5, log_fn=None):
    """Train and score each rung of ``ladder``; returns one report row per rung."""
    from .evaluation import evaluate
    from .inference import generate_corpus

    dhash = data_hash(train_data, dev_data, eval_data)
    rows = []
    for name in ladder:
        cfg = ladder_config(name, base_cfg)

        def tagged(entry, name=name):
            if log_fn:
                log_fn({"model_name": name, **entry})

        model, res = fit(cfg, train_cfg, train_data, dev_data, src_size, tgt_size, tgt_vocab,
                         tagged)
        gens = generate_corpus(model, eval_data, tgt_vocab, beam)
        report = evaluate(gens, eval_data, setup)
        rows.append({"model_name": name, "bleu4": report.bleu4, "meteor": report.meteor,
                     "rougeL": report.rougeL, "config_hash": config_hash(cfg, train_cfg),
                     "data_hash": dhash, "seed": train_cfg.seed, "dev_ppl": res.best_ppl,
                     "unique_count": report.unique_count})
    return rows
