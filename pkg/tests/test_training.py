import math
from dataclasses import replace

import numpy as np
import pytest

from focusqg import autodiff as ad
from focusqg.autodiff import ConfigError, NonFiniteError
from focusqg.corpus.vocab import IntegrityError
from focusqg.model import ModelConfig, QGModel
from focusqg.training import (DESK_TRAIN, LADDER, TrainConfig, TrainingDiverged, bucket_batches,
                              config_hash, cosine_embedding_loss, data_hash,
                              evaluate_teacher_forced, ladder_config, load_checkpoint, perplexity,
                              pretrain_sentence_encoder, run_ablation, save_checkpoint, train)

TINY = ModelConfig(word_dim=8, hidden=8, layers=1, ner_dim=3, dropout=0.0)


@pytest.fixture(scope="module")
def corpus(fixture_indexed):
    data, src, tgt, vh = fixture_indexed
    return data, src, tgt, vh


def _model(corpus, cfg=TINY, seed=0):
    _, src, tgt, _ = corpus
    return QGModel(cfg, len(src), len(tgt), seed=seed)


# -- config ---------------------------------------------------------------

def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(lr_decay=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(lr_decay=1.5)
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"batch": 3})
    cfg = TrainConfig(batch_size=3, seed=7)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    assert config_hash(TINY, cfg) != config_hash(TINY, replace(cfg, seed=8))


def test_bucket_batches_partition(rng):
    lengths = rng.integers(1, 30, 23)
    batches = bucket_batches(23, lengths, 5, rng)
    flat = np.concatenate(batches)
    assert sorted(flat.tolist()) == list(range(23))
    assert all(len(b) <= 5 for b in batches)
    for b in batches:
        # each chunk is a contiguous run of the length-sorted order
        assert max(lengths[b]) - min(lengths[b]) <= np.ptp(lengths)


# -- perplexity -----------------------------------------------------------

class _StubModel:
    """Stands in for a QG model: per-example gold-token probabilities are fixed."""

    def __init__(self, probs):
        self.probs = probs
        self.cfg = TINY
        self.tgt_size = 10

    def forward(self, batch, training=False):
        nll = tokens = 0
        for ex in batch.examples:
            p = self.probs[ex.qa_id]
            nll += -sum(math.log(x) for x in p)
            tokens += len(p)
        return None, {"nll": nll, "tokens": tokens, "correct": 0}


def _stub_data(corpus, n):
    data = corpus[0][:n]
    return data


def test_perplexity_examples(corpus):
    data = _stub_data(corpus, 3)
    assert perplexity(_StubModel({e.qa_id: [1.0, 1.0] for e in data}), data) == 1.0
    V = 7
    uniform = _StubModel({e.qa_id: [1 / V] * 4 for e in data})
    assert perplexity(uniform, data) == pytest.approx(V)
    hand = {data[0].qa_id: [0.5], data[1].qa_id: [0.25], data[2].qa_id: [0.8]}
    expect = math.exp((math.log(2) + math.log(4) - math.log(0.8)) / 3)
    assert perplexity(_StubModel(hand), data, batch_size=2) == pytest.approx(expect, rel=1e-12)


# -- cosine loss ----------------------------------------------------------

def test_cosine_loss_examples(rng):
    v = rng.normal(size=(1, 5))
    assert cosine_embedding_loss(ad.constant(v), v).item() == pytest.approx(0.0, abs=1e-12)
    assert cosine_embedding_loss(ad.constant(v), -v).item() == pytest.approx(2.0, abs=1e-12)
    e = np.eye(4)
    assert cosine_embedding_loss(ad.constant(e[:1]), e[1:2]).item() == pytest.approx(1.0)
    zero = cosine_embedding_loss(ad.constant(np.zeros((1, 4))), v[:, :4]).item()
    assert zero == pytest.approx(1.0)


def test_cosine_loss_gradient(rng):
    s = ad.parameter(rng.normal(size=(3, 4)))
    q = rng.normal(size=(3, 4))
    assert ad.grad_check(lambda s: cosine_embedding_loss(s, q), [s]) < 1e-6


# -- training loop --------------------------------------------------------

def test_zero_lr_keeps_parameters(corpus):
    data, _, tgt, _ = corpus
    model = _model(corpus)
    before = model.state_dict()
    cfg = TrainConfig(batch_size=4, lr=0.0, max_epochs=3)
    res = train(model, data[:8], data[8:12], cfg, tgt)
    after = model.state_dict()
    assert all(np.array_equal(before[k], after[k]) for k in before)
    ppls = [e["dev_ppl"] for e in res.log]
    assert ppls[0] == ppls[1] == ppls[2]


def test_toy_loss_decreases_for_five_epochs(corpus):
    data, _, tgt, _ = corpus
    cfg = ModelConfig()          # desk defaults
    model = _model(corpus, cfg)
    res = train(model, data[:8], data[8:10], replace(DESK_TRAIN, max_epochs=5), tgt)
    losses = [e["train_loss"] for e in res.log]
    assert all(b < a for a, b in zip(losses, losses[1:])), losses
    assert set(res.log[0]) == {"epoch", "train_loss", "dev_ppl", "lr", "seconds"}


def test_best_checkpoint_and_determinism(corpus, tmp_path):
    data, _, tgt, vh = corpus
    cfg = TrainConfig(batch_size=4, max_epochs=4, seed=3)
    mcfg = replace(TINY, dropout=0.3)
    a = train(_model(corpus, mcfg), data[:12], data[12:16], cfg, tgt)
    b = train(_model(corpus, mcfg), data[:12], data[12:16], cfg, tgt)
    assert [e["train_loss"] for e in a.log] == [e["train_loss"] for e in b.log]
    assert all(a.best_ppl <= e["dev_ppl"] for e in a.log)
    assert a.best_ppl == min(e["dev_ppl"] for e in a.log)

    model = _model(corpus, mcfg)
    model.load_arrays(a.best_state)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model, vh, a.best_epoch, a.best_ppl, cfg, a.rng_state)
    again, meta = load_checkpoint(path, vh)
    assert perplexity(again, data[12:16], tgt, cfg.batch_size) == meta["dev_ppl"] == a.best_ppl
    with pytest.raises(IntegrityError):
        load_checkpoint(path, "f" * 16)


def test_lr_decays_after_patience(corpus):
    data, _, tgt, _ = corpus
    ppl = iter([5.0, 6.0, 7.0, 4.0, 4.5])
    cfg = TrainConfig(batch_size=8, lr=0.5, lr_decay=0.5, patience=2, max_epochs=5)
    res = train(_model(corpus), data[:4], data[4:6], cfg, tgt, dev_fn=lambda m: next(ppl))
    assert [e["lr"] for e in res.log] == [0.5, 0.5, 0.5, 0.25, 0.25]
    assert res.best_epoch == 4 and res.best_ppl == 4.0


def test_clipping_bounds_the_update(corpus):
    data, _, tgt, _ = corpus
    model = _model(corpus)
    before = model.state_dict()
    clip = 1e-3
    train(model, data[:4], data[4:6], TrainConfig(batch_size=4, lr=1.0, clip_norm=clip, max_epochs=1), tgt)
    after = model.state_dict()
    step = math.sqrt(sum(float(((after[k] - before[k]) ** 2).sum()) for k in before))
    assert step <= clip + 1e-9


def test_non_finite_loss_retries_then_aborts(corpus):
    data, _, tgt, _ = corpus
    calls = []

    def flaky(model, batch, rng, rows):
        calls.append(1)
        if len(calls) == 1:
            raise NonFiniteError("boom")
        loss, _ = model.forward(batch)
        return loss

    cfg = TrainConfig(batch_size=4, lr=1.0, max_epochs=1)
    res = train(_model(corpus), data[:4], data[4:6], cfg, tgt, loss_fn=flaky)
    assert res.log[0]["lr"] == 0.5 and len(calls) == 2

    model = _model(corpus)
    before = model.state_dict()

    def broken(model, batch, rng, rows):
        raise NonFiniteError("boom")

    with pytest.raises(TrainingDiverged, match="batch 0"):
        train(model, data[:4], data[4:6], cfg, tgt, loss_fn=broken)
    assert all(np.array_equal(before[k], v) for k, v in model.state_dict().items())


# -- pre-training ---------------------------------------------------------

def test_pretraining_steps(corpus):
    data, src, tgt, _ = corpus
    cfg = TrainConfig(batch_size=8, max_epochs=2, cheat_max_epochs=3, cheat_patience=1,
                      pretrain_epochs=3, seed=1)
    res = pretrain_sentence_encoder(data[:16], data[16:20], TINY, cfg, len(src), len(tgt), tgt)
    assert set(res.sentence_state) and all(k.startswith("sent") for k in res.sentence_state)
    assert 1 <= len(res.cheat_log) <= 3 and len(res.align_log) == 3
    assert all(0.0 <= x <= 2.0 for x in res.batch_losses)
    assert all("dev_cos_loss" in e for e in res.align_log)


def test_cheat_model_beats_student_at_first_epoch(corpus):
    data, src, tgt, _ = corpus
    cfg = TrainConfig(batch_size=8, cheat_max_epochs=2, cheat_patience=5, pretrain_epochs=1)
    res = pretrain_sentence_encoder(data[:16], data[16:20], TINY, cfg, len(src), len(tgt), tgt)
    assert res.cheat_log[-1]["dev_ppl"] < res.cheat_log[0]["dev_ppl"] or len(res.cheat_log) == 2


# -- ablation -------------------------------------------------------------

def test_ladder_is_cumulative():
    base = TINY
    flags = [ladder_config(n, base) for n in LADDER]
    assert not any((flags[0].use_answer, flags[0].use_ner, flags[0].use_case,
                    flags[0].use_coref, flags[0].copy)) and flags[0].sentence_encoder == "off"
    assert flags[5].copy and flags[5].use_coref and flags[5].sentence_encoder == "off"
    assert flags[6].sentence_encoder == "scratch" and flags[7].sentence_encoder == "pretrained"
    focus, focuscr = flags[8], flags[7]
    assert focus == replace(focuscr, use_coref=False)
    with pytest.raises(ConfigError):
        ladder_config("+Everything", base)


def test_single_rung_ablation(corpus):
    data, src, tgt, _ = corpus
    rows = run_ablation(data[:8], data[8:10], data[10:12], TINY,
                        TrainConfig(batch_size=8, max_epochs=1), len(src), len(tgt), tgt,
                        ladder=("baseline",), beam=2)
    assert len(rows) == 1 and rows[0]["model_name"] == "baseline"
    assert set(rows[0]) >= {"model_name", "bleu4", "meteor", "rougeL", "config_hash",
                            "data_hash", "seed"}


def test_full_ladder_smoke(corpus):
    data, src, tgt, _ = corpus
    tc = TrainConfig(batch_size=8, max_epochs=1, cheat_max_epochs=1, pretrain_epochs=1)
    cfg = ModelConfig(word_dim=4, hidden=4, layers=1, ner_dim=2, dropout=0.0)
    rows = run_ablation(data[:8], data[8:10], data[10:14], cfg, tc, len(src), len(tgt), tgt,
                        beam=2)
    assert [r["model_name"] for r in rows] == list(LADDER)
    assert len({r["data_hash"] for r in rows}) == 1 and {r["seed"] for r in rows} == {0}
    assert len({r["config_hash"] for r in rows}) == 9
    assert rows[0]["data_hash"] == data_hash(data[:8], data[8:10], data[10:14])
