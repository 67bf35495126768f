"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import functools
import math
import time
from pathlib import Path

import mpmath
import numpy as np
import pytest

from focusqg import autodiff as ad
from focusqg.corpus.annotate import dump_tokens
from focusqg.corpus.pipeline import (FIXTURE, FIXTURE_ANNOTATIONS, data_path, index_all,
                                     preprocess, write_perturbed_fixture)
from focusqg.corpus.vocab import build_vocab, encode_example
from focusqg.decoder import DecoderState, attention, copy_matrix, decode_step, mix
from focusqg.encoder import EncodedSource, lstm_cell
from focusqg.evaluation import bleu, evaluate, meteor_simplified, pearson_agreement, rouge_l
from focusqg.inference import Hypothesis, SearchModel, beam_search, generate_all, greedy
from focusqg.model import ModelConfig, QGModel, make_batch
from focusqg.training import (DESK_TRAIN, TrainConfig, cosine_embedding_loss, evaluate_teacher_forced,
                              ladder_config, load_checkpoint, pretrain_sentence_encoder,
                              save_checkpoint, train)

GOLDEN = Path(__file__).parent / "golden" / "coref_beyonce_s2.txt"


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail=""):
        with capsys.disabled():
            print(f"\ncriterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}  {detail}")
        assert ok, f"criterion {number} failed: {detail}"
    return emit


# -- 1 --------------------------------------------------------------------

def test_criterion_1_gradient_correctness(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst = {}

    H, d = 3, 4
    x = ad.parameter(rng.normal(size=(2, d)))
    w_ih = ad.parameter(rng.normal(0, 0.5, (d, 4 * H)))
    w_hh = ad.parameter(rng.normal(0, 0.5, (H, 4 * H)))
    h0 = ad.parameter(rng.normal(size=(2, H)))
    c0 = ad.parameter(rng.normal(size=(2, H)))
    probe_h, probe_c = rng.normal(size=(2, H)), rng.normal(size=(2, H))

    def cell(x, w_ih, w_hh, h0, c0):
        h, c = lstm_cell(ad.matmul(x, w_ih), h0, c0, w_hh)
        return ad.tsum(h * ad.constant(probe_h)) + ad.tsum(c * ad.constant(probe_c))

    worst["lstm_cell"] = ad.grad_check(cell, [x, w_ih, w_hh, h0, c0])

    q = ad.parameter(rng.normal(0, 0.5, (2, 3)))
    w_a = ad.parameter(rng.normal(0, 0.5, (4, 3)))
    states = ad.parameter(rng.normal(0, 0.5, (2, 5, 4)))
    mask = np.array([[1, 1, 1, 1, 1], [1, 1, 1, 0, 0]], bool)
    probe = rng.normal(size=(2, 4))

    def attn(q, w_a, states):
        ctx, w = attention(q, states, mask, w_a)
        return ad.tsum(ctx * ad.constant(probe)) + ad.tsum(w * w)

    worst["attention"] = ad.grad_check(attn, [q, w_a, states])

    # full graph: feature embedding -> token and sentence biLSTMs -> bridge ->
    # one decoder step with attention and copy -> NLL, on a vocabulary built
    # from two short fixture examples (one with an inserted coreferent)
    examples, _ = preprocess(str(data_path(FIXTURE)), str(data_path(FIXTURE_ANNOTATIONS)))
    pair = [e for e in examples if e.qa_id in ("qg50-022", "qg50-047")]
    src, tgt = build_vocab(pair[:1], src_max=12, tgt_max=8)
    indexed = [encode_example(e, src, tgt) for e in pair]
    cfg = ModelConfig(word_dim=2, hidden=2, layers=2, ner_dim=2, dropout=0.0)
    model = QGModel(cfg, len(src), len(tgt), seed=1)
    batch = make_batch(indexed, cfg, len(tgt), tgt)
    batch.tgt_in, batch.tgt_out, batch.tgt_mask = (batch.tgt_in[:, :1], batch.tgt_out[:, :1],
                                                   batch.tgt_mask[:, :1])

    def full(*_):
        loss, _ = model.forward(batch)
        return loss

    params = list(model.params.values())
    worst["encoder_decoder_nll"] = ad.grad_check(full, params)
    elapsed = time.perf_counter() - t0
    ok = all(v < 1e-4 for v in worst.values()) and elapsed < 60
    detail = ", ".join(f"{k} {v:.2e}" for k, v in worst.items()) + f"; {elapsed:.1f}s"
    verdict(1, "gradient correctness", ok, detail)


# -- 2 --------------------------------------------------------------------

def test_criterion_2_distribution_invariants(verdict):
    rng = np.random.default_rng(2)
    worst_attn = worst_final = 0.0
    endpoints_exact = True
    for trial in range(1000):
        B, T, D, H, E, V = 2, int(rng.integers(1, 7)), 4, 3, 2, int(rng.integers(3, 9))
        n_oov = int(rng.integers(0, 4))
        scale = float(rng.choice([0.1, 1.0, 3.0]))
        params = {
            "dec0_ih": ad.constant(rng.normal(0, scale, (E + H, 4 * H))),
            "dec0_hh": ad.constant(rng.normal(0, scale, (H, 4 * H))),
            "dec0_b": ad.constant(rng.normal(0, scale, 4 * H)),
            "attn_w": ad.constant(rng.normal(0, scale, (D, H))),
            "out_wc": ad.constant(rng.normal(0, scale, (D + H, H))),
            "out_wo": ad.constant(rng.normal(0, scale, (H, V))),
            "out_bo": ad.constant(rng.normal(0, scale, V)),
            "gen_wc": ad.constant(rng.normal(0, scale, (D, 1))),
            "gen_wh": ad.constant(rng.normal(0, scale, (H, 1))),
            "gen_wx": ad.constant(rng.normal(0, scale, (E + H, 1))),
            "gen_b": ad.constant(rng.normal(0, scale, 1)),
        }
        lengths = rng.integers(1, T + 1, B)
        mask = np.arange(T)[None, :] < lengths[:, None]
        ids = rng.integers(0, V + n_oov, (B, T))
        onehot = copy_matrix(ids, mask, V + n_oov)
        enc = EncodedSource(None, None, ad.constant(rng.normal(size=(B, T, D))), mask, None,
                            None, onehot)
        state = DecoderState([ad.constant(rng.normal(size=(B, H)))],
                             [ad.constant(rng.normal(size=(B, H)))],
                             ad.constant(rng.normal(size=(B, H))))
        with ad.no_grad():
            out = decode_step(ad.constant(rng.normal(size=(B, E))), state, enc, params)
        worst_attn = max(worst_attn, np.abs(out.attn_weights.data.sum(1) - 1).max())
        worst_final = max(worst_final, np.abs(out.final_dist.data.sum(1) - 1).max())
        if np.any(out.attn_weights.data[~mask] != 0):
            worst_attn = math.inf

        gen, attn = out.gen_dist, out.attn_weights
        pure_gen = mix(gen, attn, ad.constant(np.ones((B, 1))), onehot).data
        expect_gen = np.concatenate([gen.data, np.zeros((B, n_oov))], axis=1)
        pure_copy = mix(gen, attn, ad.constant(np.zeros((B, 1))), onehot).data
        expect_copy = np.zeros((B, V + n_oov))
        for b in range(B):
            for t in range(T):
                if mask[b, t]:
                    expect_copy[b, ids[b, t]] += attn.data[b, t]
        endpoints_exact &= np.array_equal(pure_gen, expect_gen)
        endpoints_exact &= bool(np.allclose(pure_copy, expect_copy, rtol=0, atol=4e-16))
    ok = worst_attn <= 1e-6 and worst_final <= 1e-6 and endpoints_exact
    verdict(2, "distribution invariants", ok,
            f"max |sum-1| attn {worst_attn:.1e} final {worst_final:.1e}; "
            f"endpoints {'exact' if endpoints_exact else 'MISMATCH'}")


# -- 3 --------------------------------------------------------------------

class _ToyModel(SearchModel):
    def __init__(self, V, seed, temperature):
        self.V, self.temperature = V, temperature
        self.rng_seed = seed

    @functools.lru_cache(maxsize=None)
    def dist(self, prefix):
        r = np.random.default_rng([self.rng_seed, len(prefix)] + list(prefix))
        logits = r.normal(size=self.V) * self.temperature
        return logits - np.logaddexp.reduce(logits)

    def start(self):
        return [None]

    def step(self, prev_ids, state):
        prefixes = [() if p is None else p + (int(t),) for p, t in zip(state, prev_ids)]
        return np.stack([self.dist(p) for p in prefixes]), None, prefixes

    def select(self, state, rows):
        return [state[r] for r in rows]


def _exhaustive(model, max_len, eos):
    best = None

    def visit(prefix, lp):
        nonlocal best
        dist = model.dist(prefix)
        for v in range(model.V):
            seq, total = prefix + (v,), lp + dist[v]
            if v == eos or len(seq) == max_len:
                h = Hypothesis(seq, float(total))
                if best is None or h.score > best.score or (h.score == best.score and seq < best.tokens):
                    best = h
            else:
                visit(seq, total)

    visit((), 0.0)
    return best


def test_criterion_3_beam_oracle(verdict):
    rng = np.random.default_rng(3)
    mismatches, greedy_mismatches = 0, 0
    for trial in range(200):
        V, L = int(rng.integers(2, 9)), int(rng.integers(1, 6))
        model = _ToyModel(V, trial, float(rng.choice([0.5, 1.0, 3.0])))
        eos = int(rng.integers(0, V))
        bos = (eos + 1) % V
        oracle = _exhaustive(model, L, eos)
        found = beam_search(model, beam=V ** L, max_len=L, bos=bos, eos=eos)
        mismatches += found.score != oracle.score
        one = beam_search(model, beam=1, max_len=L, bos=bos, eos=eos)
        g = greedy(model, max_len=L, bos=bos, eos=eos)
        greedy_mismatches += (one.tokens, one.logprob) != (g.tokens, g.logprob)
    ok = mismatches == 0 and greedy_mismatches == 0
    verdict(3, "beam-search oracle", ok,
            f"200 toy models: full-width mismatches {mismatches}, beam-1 vs greedy {greedy_mismatches}")


# -- 4 and 9 share one desk-scale training run ----------------------------

@pytest.fixture(scope="module")
def overfit(fixture_indexed):
    data, src, tgt, vh = fixture_indexed
    model = QGModel(ModelConfig(), len(src), len(tgt), seed=DESK_TRAIN.seed)
    last = {}

    def dev_fn(m):
        last.update(evaluate_teacher_forced(m, data, tgt, 64))
        return last["ppl"]

    def done(entry):
        return last["ppl"] < 1.3 and last["accuracy"] >= 0.95

    t0 = time.perf_counter()
    res = train(model, data, data, DESK_TRAIN, tgt, dev_fn=dev_fn, stop_fn=done)
    seconds = time.perf_counter() - t0
    model.load_arrays(res.best_state)
    final = evaluate_teacher_forced(model, data, tgt, 64)
    return model, res, final, seconds


def test_criterion_4_overfit(verdict, overfit):
    model, res, final, seconds = overfit
    epochs = len(res.log)
    ok = final["accuracy"] >= 0.95 and final["ppl"] < 1.3 and epochs <= 200 and seconds < 600
    verdict(4, "overfit capability", ok,
            f"hidden {model.cfg.hidden}: accuracy {100 * final['accuracy']:.1f}%, "
            f"ppl {final['ppl']:.3f} after {epochs} epochs in {seconds:.0f}s")


# -- 5 --------------------------------------------------------------------

def test_criterion_5_cosine_loss(verdict, fixture_indexed):
    rng = np.random.default_rng(5)
    errs = []
    for _ in range(100):
        dim = int(rng.integers(2, 50))
        v = rng.normal(size=(1, dim)) * 10 ** rng.uniform(-3, 3)
        basis = np.eye(dim)
        i, j = rng.choice(dim, 2, replace=False)
        errs.append(abs(cosine_embedding_loss(ad.constant(v), v).item() - 0.0))
        errs.append(abs(cosine_embedding_loss(ad.constant(v), -v).item() - 2.0))
        errs.append(abs(cosine_embedding_loss(ad.constant(basis[i:i + 1]), basis[j:j + 1]).item() - 1.0))
        u = rng.normal(size=dim)
        u -= (u @ v[0]) / (v[0] @ v[0]) * v[0]
        errs.append(abs(cosine_embedding_loss(ad.constant(v), u[None]).item() - 1.0))
    data, src, tgt, _ = fixture_indexed
    cfg = TrainConfig(batch_size=8, cheat_max_epochs=2, cheat_patience=1, pretrain_epochs=4)
    small = ModelConfig(word_dim=8, hidden=8, layers=1, ner_dim=3, dropout=0.3)
    res = pretrain_sentence_encoder(data[:40], data[40:], small, cfg, len(src), len(tgt), tgt)
    in_range = all(0.0 <= x <= 2.0 for x in res.batch_losses)
    ok = max(errs) <= 1e-9 and in_range
    verdict(5, "cosine loss properties", ok,
            f"max error {max(errs):.1e} over 400 pairs; {len(res.batch_losses)} step-2 batch "
            f"losses in [{min(res.batch_losses):.3f}, {max(res.batch_losses):.3f}]")


# -- 6 --------------------------------------------------------------------

ABLATION_MODEL = ModelConfig(word_dim=32, hidden=32, layers=1, ner_dim=4, dropout=0.0)
ABLATION_EPOCHS = 60


def test_criterion_6_answer_feature_lowers_perplexity(verdict, tmp_path):
    ds, ann = write_perturbed_fixture(tmp_path, copies=10, seed=0)
    examples, _ = preprocess(ds, ann)
    copy_of = [int(e.sentence.doc_id.split("#")[1].split(":")[0]) for e in examples]
    train_ex = [e for e, k in zip(examples, copy_of) if k < 8]
    dev_ex = [e for e, k in zip(examples, copy_of) if k >= 8]
    src, tgt = build_vocab(train_ex)
    train_ix, dev_ix = index_all(train_ex, src, tgt), index_all(dev_ex, src, tgt)
    wins, pairs = 0, []
    for seed in (0, 1, 2):
        tc = TrainConfig(batch_size=32, lr=0.5, max_epochs=ABLATION_EPOCHS, patience=10, seed=seed)
        ppl = {}
        for rung in ("baseline", "+Answer"):
            cfg = ladder_config(rung, ABLATION_MODEL)
            model = QGModel(cfg, len(src), len(tgt), seed=seed)
            ppl[rung] = train(model, train_ix, dev_ix, tc, tgt).best_ppl
        pairs.append((ppl["baseline"], ppl["+Answer"]))
        wins += ppl["+Answer"] < ppl["baseline"]
    ok = wins >= 2
    verdict(6, "+Answer beats baseline", ok,
            f"{wins}/3 seeds; dev ppl (baseline, +Answer) = "
            + ", ".join(f"({a:.2f}, {b:.2f})" for a, b in pairs))



# -- 7 --------------------------------------------------------------------

def test_criterion_7_metric_oracles(verdict):
    T = str.split
    checks = {}
    # BLEU: clipped matches counted by hand (see the evaluation tests)
    hyps = [T("the cat sat on the mat"), T("a dog runs")]
    refs = [[T("the cat is on the mat"), T("there is a cat on the mat")], [T("the dog runs fast")]]
    p = [7 / 9, 5 / 8, 2 / 6, 1 / 4]
    hand = 100 * math.exp(1 - 10 / 9) * math.exp(sum(map(math.log, p)) / 4)
    checks["bleu"] = (bleu(hyps, refs), hand)
    checks["rouge"] = (rouge_l([T("a b c d")], [[T("a c d e")]]), 75.0)
    P, R = 2 / 3, 2 / 5
    checks["rouge2"] = (rouge_l([T("the cat sat")], [[T("the cat on the mat")]]),
                        100 * 2.44 * P * R / (R + 1.44 * P))
    P, R = 1.0, 5 / 6
    checks["meteor"] = (meteor_simplified([T("the cats sat on mat")], [[T("the cat sat on the mat")]]),
                        100 * P * R / (0.9 * P + 0.1 * R) * (1 - 0.5 * (2 / 5) ** 3))
    expert = [4, 3, 5, 2, 4, 1, 3, 5, 2, 4]
    turkers = [3.2, 3.8, 4.0, 3.4, 2.6, 2.8, 2.0, 4.6, 3.0, 3.6]
    mpmath.mp.dps = 50
    x, y = [mpmath.mpf(v) for v in expert], [mpmath.mpf(v) for v in turkers]
    mx, my = sum(x) / 10, sum(y) / 10
    r_ref = sum((a - mx) * (b - my) for a, b in zip(x, y)) / mpmath.sqrt(
        sum((a - mx) ** 2 for a in x) * sum((b - my) ** 2 for b in y))
    t2 = r_ref ** 2 * 8 / (1 - r_ref ** 2)
    p_ref = mpmath.betainc(4, mpmath.mpf(1) / 2, 0, 8 / (8 + t2), regularized=True)
    r, pval = pearson_agreement(expert, turkers)
    checks["pearson_r"] = (r, float(r_ref))
    checks["pearson_p"] = (pval, float(p_ref))
    close = {k: round(a, 4) == round(b, 4) for k, (a, b) in checks.items()}
    ident = (bleu([T("who voiced midna ?")], [[T("who voiced midna ?")]]) == 100.0
             and rouge_l([T("who voiced midna ?")], [[T("who voiced midna ?")]]) == 100.0
             and pearson_agreement([1, 2, 3, 5], [1, 2, 3, 5])[0] == 1.0)
    ok = all(close.values()) and ident
    verdict(7, "metric oracles", ok,
            "; ".join(f"{k} {a:.4f}" for k, (a, _) in checks.items())
            + f"; identity {'exact' if ident else 'WRONG'}")


# -- 8 --------------------------------------------------------------------

def test_criterion_8_reference_setups(verdict, fixture_indexed):
    data, _, _, _ = fixture_indexed
    key = (data[0].doc_id, data[0].sent_index)
    group = [e for e in data if (e.doc_id, e.sent_index) == key]
    gens = [{"doc_id": e.doc_id, "sent_index": e.sent_index, "answer_span": list(e.answer_span),
             "question": "what is the name ?", "qa_id": e.qa_id} for e in group]
    multi = evaluate(gens, data, "multi_ref").diagnostics
    single = evaluate(gens, data, "single_ref").diagnostics
    ok = (len(group) == 3 and [d["n_refs"] for d in multi] == [3, 3, 3]
          and [d["n_refs"] for d in single] == [1, 1, 1])
    verdict(8, "two reference setups", ok,
            f"sentence {key}: multi n_refs {[d['n_refs'] for d in multi]}, "
            f"single n_refs {[d['n_refs'] for d in single]}")


# -- 9 --------------------------------------------------------------------

def test_criterion_9_multi_question_generation(verdict, overfit, fixture_indexed, tmp_path):
    model, _, _, _ = overfit
    data, _, tgt, vh = fixture_indexed
    s1 = next(e for e in data if e.qa_id == "qg50-006")
    spans = [tuple(e.answer_span) for e in data if e.qa_id in ("qg50-005", "qg50-006", "qg50-007")]
    first = generate_all(model, s1, spans, tgt, beam=5)
    path = tmp_path / "model.npz"
    save_checkpoint(path, model, vh)
    reloaded, _ = load_checkpoint(path, vh)
    second = generate_all(reloaded, s1, spans, tgt, beam=5)
    ok = (len(first) == 3 and [s for s, _ in first] == spans and first == second
          and all(q for _, q in first))
    verdict(9, "multi-question generation", ok,
            " | ".join(f"{s}: {q}" for s, q in first))


# -- 10 -------------------------------------------------------------------

def test_criterion_10_coref_markup(verdict, fixture_examples):
    ex = next(e for e in fixture_examples if e.qa_id == "qg50-003")
    produced = dump_tokens(ex.sentence).encode("utf-8")
    golden = GOLDEN.read_bytes()
    tokens = ex.sentence.tokens
    i = next(k for k, t in enumerate(tokens) if t.lower == "her")
    flags = [(t.lower, t.inserted_bit) for t in tokens[i:i + 3]]
    ok = produced == golden and flags == [("her", 0), ("beyoncé", 1), ("'s", 1)]
    verdict(10, "coreference markup", ok,
            f"{ex.sentence.render()[:40]}... flags {flags}; golden {'identical' if produced == golden else 'DIFFERS'}")
